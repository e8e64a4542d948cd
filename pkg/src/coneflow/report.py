"""Trajectory-level diagnostics: time series, rate fits, report files.

Collects per-snapshot singularity diagnostics from a trajectory (curvature
sup norms by region, distances to the collapse profile and to the cone,
convexity and barrier margins), fits the blow-up exponents, and writes the
delimited outputs and figures for the report path.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import plots
from .errors import PreconditionError
from .flow import Trajectory, cached_profile
from .io import Manifest, write_csv
from .params import Parameters
from .profile import ProfileSolution, make_lower_barrier, make_upper_barrier, scale_profile
from .rescale import (RateFit, cone_distance, convexity_report, curvature, fit_rate,
                      profile_distance, time_derivative_ratio, to_type1, to_type2,
                      verify_barrier)
from .spectral import SpectralBasis, make_basis, mode_coefficient


@dataclass
class Diagnostics:
    """Per-snapshot series plus fitted rates for one trajectory."""

    series: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    k_estimate: float = math.nan
    skip: int = 0

    def post_transient(self, name: str) -> np.ndarray:
        return np.asarray(self.series[name])[self.skip:]


def estimate_k(traj: Trajectory, basis: SpectralBasis) -> float:
    """Tracked profile scale from the last snapshot's mode-2 projection."""
    cfg = traj.config
    state = traj.snapshots[-1]
    view = to_type1(state, cfg.rho, cfg.beta, cfg.params)
    s = -math.log(state.neg_t)
    return mode_coefficient(basis, view, cfg.rho, cfg.beta, 2) \
        * math.exp(cfg.params.lam2 * s)


def trajectory_diagnostics(traj: Trajectory, basis: SpectralBasis | None = None,
                           profile: ProfileSolution | None = None,
                           k_estimate: float | None = None,
                           skip_fraction: float = 0.25) -> Diagnostics:
    """Compute the full diagnostic series for a trajectory.

    The first ``skip_fraction`` of snapshots is tagged as transient (the
    seam relaxation from the blended initial data) and excluded from rate
    fits.  Distances are measured against the profile at the projected
    scale ``k_estimate`` (estimated from the final snapshot if not given).
    """
    cfg = traj.config
    p = cfg.params
    if len(traj.snapshots) < 4:
        raise PreconditionError("trajectory too short for diagnostics")
    if basis is None:
        basis = make_basis(p)
    if profile is None:
        profile = cached_profile(p.n)
    if k_estimate is None:
        k_estimate = estimate_k(traj, basis)
    prof_k = scale_profile(profile, k_estimate) if k_estimate != 1.0 else profile
    tau0 = p.tau_of_t(-cfg.t0)
    lower = make_lower_barrier(prof_k, cfg.beta, tau0)
    upper = make_upper_barrier(prof_k, cfg.beta, tau0)

    names = ("neg_t", "tau", "sup_a_tip", "sup_a_mid", "sup_a_out",
             "sup_h_tip", "sup_h_mid", "h_axis", "profile_dist", "cone_dist",
             "cone_slope", "convex_min", "lower_margin", "upper_margin",
             "hA_ratio", "lhopital_z0", "lhopital_z1")
    series = {name: [] for name in names}
    snaps = traj.snapshots[1:]
    for state in snaps:
        fld = curvature(state, p, cfg.beta)
        view2 = to_type2(state, cfg.beta, p)
        view1 = to_type1(state, cfg.rho, cfg.beta, p)
        dist, _ = profile_distance(view2, prof_k, 2.0 * cfg.beta)
        try:
            cdist, cslope = cone_distance(view1, (0.5, 1.0))
        except PreconditionError:
            cdist = cslope = math.nan
        cmin, _ = convexity_report(view2, 5.0 * cfg.beta)
        bar = verify_barrier(view2, lower, upper)
        sup_a_tip = fld.sup("A", 0)
        sup_h_tip = fld.sup("H", 0)
        series["neg_t"].append(state.neg_t)
        series["tau"].append(view2.tau)
        series["sup_a_tip"].append(sup_a_tip)
        series["sup_a_mid"].append(fld.sup("A", 1))
        series["sup_a_out"].append(fld.sup("A", 2))
        series["sup_h_tip"].append(sup_h_tip)
        series["sup_h_mid"].append(fld.sup("H", 1))
        series["h_axis"].append(abs(fld.h[0]))
        series["profile_dist"].append(dist)
        series["cone_dist"].append(cdist)
        series["cone_slope"].append(cslope)
        series["convex_min"].append(cmin)
        series["lower_margin"].append(bar.lower_margin)
        series["upper_margin"].append(bar.upper_margin)
        series["hA_ratio"].append(sup_h_tip / sup_a_tip if sup_a_tip else math.nan)
        series["lhopital_z0"].append(time_derivative_ratio(state, p, 0.0))
        series["lhopital_z1"].append(time_derivative_ratio(state, p, 1.0))

    diag = Diagnostics(series={k: np.array(v) for k, v in series.items()},
                       k_estimate=k_estimate,
                       skip=int(skip_fraction * len(snaps)))
    neg_t = diag.post_transient("neg_t")
    for name, target in (("sup_a_tip", -(0.5 + p.sigma)),
                         ("h_axis", -(0.5 - p.sigma)),
                         ("cone_dist", None)):
        vals = diag.post_transient(name)
        mask = np.isfinite(vals) & (vals > 0)
        if mask.sum() >= 8 and neg_t[mask].max() / neg_t[mask].min() >= 10.0 ** 1.5:
            fit = fit_rate(neg_t[mask], vals[mask])
            diag.fits[name] = fit
    return diag


def fits_to_dict(diag: Diagnostics, params: Parameters) -> dict:
    out = {"k_estimate": diag.k_estimate,
           "targets": {"sup_a_tip": -(0.5 + params.sigma),
                       "h_axis": -(0.5 - params.sigma),
                       "cone_dist_s_rate": -params.lam2}}
    for name, fit in diag.fits.items():
        out[name] = {"exponent": fit.exponent, "intercept": fit.intercept,
                     "residual": fit.residual, "window": list(fit.window),
                     "n_samples": fit.n_samples}
    return out


def write_trajectory(traj: Trajectory, outdir, manifest: Manifest) -> None:
    """Snapshot CSVs plus a JSON index with times and termination record."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    index = {"times": [], "files": [], "termination": traj.termination,
             "n_steps": traj.n_steps, "grid_revisions": traj.grid_revisions,
             "config": traj.config.to_dict()}
    for j, state in enumerate(traj.snapshots):
        name = f"snapshot_{j:04d}.csv"
        write_csv(outdir / name,
                  {**manifest.header(), "t": state.t, "index": j},
                  {"x": state.x, "u_hat": state.u_hat})
        manifest.add(outdir / name)
        index["times"].append(state.t)
        index["files"].append(name)
    path = outdir / "trajectory.json"
    with open(path, "w") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
        fh.write("\n")
    manifest.add(path)


def load_trajectory(outdir) -> Trajectory:
    """Rebuild a trajectory from the files written by ``write_trajectory``."""
    from .flow import FlowConfig, FlowState
    from .io import read_csv

    outdir = Path(outdir)
    with open(outdir / "trajectory.json") as fh:
        index = json.load(fh)
    config = FlowConfig.from_dict(index["config"])
    snaps = []
    for t, name in zip(index["times"], index["files"]):
        _, cols = read_csv(outdir / name)
        snaps.append(FlowState(t=float(t), x=cols["x"], u_hat=cols["u_hat"]))
    return Trajectory(config=config, snapshots=snaps,
                      termination=index["termination"],
                      n_steps=index["n_steps"],
                      grid_revisions=index["grid_revisions"])


def write_report(diag: Diagnostics, params: Parameters, outdir,
                 manifest: Manifest, render: bool = True) -> None:
    """Delimited diagnostic series, fitted rates, and figures."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / "diagnostics.csv"
    write_csv(csv_path, {**manifest.header(), "k_estimate": diag.k_estimate},
              diag.series)
    manifest.add(csv_path)
    fits_path = outdir / "rate_fits.json"
    with open(fits_path, "w") as fh:
        json.dump(fits_to_dict(diag, params), fh, indent=2, sort_keys=True)
        fh.write("\n")
    manifest.add(fits_path)
    if render:
        neg_t = diag.series["neg_t"]
        manifest.add(plots.rate_fit_figure(
            outdir / "blowup_rates.png", neg_t,
            {"sup_a_tip": diag.series["sup_a_tip"], "h_axis": diag.series["h_axis"]},
            diag.fits))
        manifest.add(plots.distance_figure(
            outdir / "convergence.png", diag.series["tau"],
            diag.series["profile_dist"], diag.series["cone_dist"]))
        manifest.add(plots.ratio_figure(
            outdir / "h_over_a.png", neg_t, diag.series["hA_ratio"]))
