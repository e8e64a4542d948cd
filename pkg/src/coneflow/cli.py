"""Command-line workflows.

Subcommands: params, minimal, spectrum, flow, shoot, rates.  Every command
writes a manifest listing its outputs; CSV bodies are byte-reproducible.
Exit codes: 0 success, 2 precondition failure, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import plots
from .errors import NumericError, PreconditionError
from .flow import FlowConfig, run
from .io import Manifest, write_csv
from .params import derive_parameters
from .profile import decay_report, solve_profile, scale_profile, to_cone_graph
from .report import (load_trajectory, trajectory_diagnostics, write_report,
                     write_trajectory)
from .rescale import derivative
from .shooting import tune, tune_staged
from .spectral import (apply_L, eigenfunction, gram_matrix, grid_quadrature,
                       make_basis, weighted_inner)


def _outdir(args) -> Path:
    path = Path(getattr(args, "outdir", None) or Path(args.out).parent or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_params(args) -> int:
    p = derive_parameters(args.n, m=args.m)
    manifest = Manifest("params", {"n": args.n, "m": args.m}, seed=args.seed)
    out = Path(args.out or "parameters.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        fh.write(p.to_json())
        fh.write("\n")
    manifest.add(out)
    manifest.write(out.parent)
    print(p.to_json())
    return 0


def cmd_minimal(args) -> int:
    if args.k <= 0.0:
        raise PreconditionError(f"scale k must be positive, got {args.k}")
    p = derive_parameters(args.n)
    prof = solve_profile(p, r_max=args.r_max, tol=args.tol)
    prof_k = scale_profile(prof, args.k)
    manifest = Manifest("minimal", {"n": args.n, "k": args.k, "r_max": args.r_max,
                                    "tol": args.tol}, seed=args.seed)
    outdir = _outdir(args)
    csv_path = outdir / "profile.csv"
    write_csv(csv_path,
              {**manifest.header(), "n": p.n, "k": args.k, "alpha": p.alpha,
               "asym_coeff": prof_k.asym_coeff},
              {"r": prof_k.r, "psi_hat": prof_k.psi_hat,
               "dpsi_hat": prof_k.dpsi_hat, "ddpsi_hat": prof_k.ddpsi_hat})
    manifest.add(csv_path)
    cone = to_cone_graph(prof_k)
    rows = decay_report(cone, m_max=2)
    report = {
        "tip_height": prof_k.tip_height,
        "asym_coeff": prof_k.asym_coeff,
        "asym_target": args.k * p.tail_coeff,
        "asym_rel_err": prof_k.asym_coeff / (args.k * p.tail_coeff) - 1.0,
        "decay": rows,
    }
    rep_path = outdir / "asymptotics.json"
    with open(rep_path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    manifest.add(rep_path)
    manifest.add(plots.profile_figure(outdir / "profile.png", prof_k.r,
                                      prof_k.psi_hat, f"k = {args.k}"))
    manifest.write(outdir)
    print(json.dumps(report, indent=2))
    return 0


def cmd_spectrum(args) -> int:
    p = derive_parameters(args.n, m=max(args.m, 3))
    basis = make_basis(p, m=args.m if args.m >= 0 else None)
    manifest = Manifest("spectrum", {"n": args.n, "m": args.m}, seed=args.seed)
    outdir = _outdir(args)

    eig_path = outdir / "eigentable.csv"
    idx = np.arange(basis.m + 1)
    write_csv(eig_path, {**manifest.header(), "n": p.n, "alpha": p.alpha},
              {"i": idx, "lambda": np.array(p.lam[: basis.m + 1]), "c": basis.c})
    manifest.add(eig_path)

    gram = gram_matrix(basis)
    gram_path = outdir / "gram.csv"
    write_csv(gram_path, {**manifest.header(), "max_offdiag_error":
                          float(np.abs(gram - np.eye(basis.m + 1)).max())},
              {f"g{j}": gram[:, j] for j in range(basis.m + 1)})
    manifest.add(gram_path)

    y_ref = np.geomspace(0.05, 12.0, 400)
    phi_path = outdir / "eigenfunctions.csv"
    cols = {"y": y_ref}
    for i in range(basis.m + 1):
        cols[f"phi{i}"] = eigenfunction(basis, i, y_ref)
    write_csv(phi_path, manifest.header(), cols)
    manifest.add(phi_path)

    basis_path = outdir / "basis.json"
    with open(basis_path, "w") as fh:
        fh.write(basis.to_json())
        fh.write("\n")
    manifest.add(basis_path)

    summary = {"gram_error": float(np.abs(gram - np.eye(basis.m + 1)).max())}
    if args.coercivity_samples > 0:
        summary["coercivity"] = _coercivity_check(basis, args.coercivity_samples,
                                                  args.seed or 0)
    manifest.write(outdir)
    print(json.dumps(summary, indent=2))
    return 0


def _coercivity_check(basis, n_samples: int, seed: int) -> dict:
    """Quadratic-form lower bound sampled over random smooth bump sums."""
    from .spectral import cutoff_zeta

    p = basis.params
    n = p.n
    rng = np.random.default_rng(seed)
    h = 1e-3
    y = np.arange(0.4, 10.0 + h / 2, h)
    quad = grid_quadrature(y[2:-2], n)
    lhs_min = math.inf
    margin_min = math.inf
    for _ in range(n_samples):
        f = np.zeros_like(y)
        for _ in range(3):
            amp = rng.uniform(-1.0, 1.0)
            mu = rng.uniform(1.0, 8.0)
            width = rng.uniform(0.3, 1.5)
            f += amp * np.exp(-((y - mu) / width) ** 2)
        f *= cutoff_zeta((y - 0.5) / 0.8) * cutoff_zeta((9.8 - y) / 0.8)
        yi, lf = apply_L(basis, f, y)
        fi = f[2:-2]
        df = derivative(yi, fi, 1)
        lhs = weighted_inner(lf, fi, quad)
        norm2 = weighted_inner(fi, fi, quad)
        dnorm2 = weighted_inner(df, df, quad)
        bound = ((4 * n * n - 20 * n + 17) / (2 * n - 3) ** 2 * dnorm2
                 - (6 * n - 7) / (2 * (2 * n - 3)) * norm2)
        lhs_min = min(lhs_min, lhs)
        margin_min = min(margin_min, lhs - bound)
    return {"samples": n_samples, "min_quadratic_form": lhs_min,
            "min_margin": margin_min, "holds": bool(margin_min >= 0.0)}


def cmd_flow(args) -> int:
    config = FlowConfig.from_file(args.config)
    manifest = Manifest("flow", config.to_dict(), seed=args.seed)
    traj = run(config)
    outdir = _outdir(args)
    write_trajectory(traj, outdir, manifest)
    manifest.write(outdir)
    print(json.dumps({"termination": traj.termination,
                      "snapshots": len(traj.snapshots),
                      "steps": traj.n_steps,
                      "grid_revisions": traj.grid_revisions}, indent=2))
    if traj.termination != "completed":
        return 3
    return 0


def cmd_shoot(args) -> int:
    config = FlowConfig.from_file(args.config)
    manifest = Manifest("shoot", {**config.to_dict(), "t1": args.t1,
                                  "staged": args.staged}, seed=args.seed)
    outdir = _outdir(args)
    if args.staged:
        staged = tune_staged(config, t_final=args.t1,
                             search_radius=args.search_radius,
                             threads=args.threads)
        result = staged.result
        write_trajectory(staged.trajectory, outdir / "trajectory", manifest)
        stage_path = outdir / "stages.json"
        with open(stage_path, "w") as fh:
            json.dump(staged.stages, fh, indent=2)
            fh.write("\n")
        manifest.add(stage_path)
    else:
        result = tune(config, args.t1, search_radius=args.search_radius,
                      threads=args.threads)
    res_path = outdir / "shooting_result.json"
    with open(res_path, "w") as fh:
        fh.write(result.to_json())
        fh.write("\n")
    manifest.add(res_path)
    manifest.write(outdir)
    print(json.dumps({"a0": result.a0, "a1": result.a1,
                      "phi_norm_scaled": result.phi_norm_scaled,
                      "k_estimate": result.k_estimate,
                      "converged": result.converged}, indent=2))
    return 0 if result.converged else 3


def cmd_rates(args) -> int:
    traj = load_trajectory(args.trajdir)
    manifest = Manifest("rates", {"trajdir": str(args.trajdir)}, seed=args.seed)
    diag = trajectory_diagnostics(traj)
    outdir = _outdir(args)
    write_report(diag, traj.config.params, outdir, manifest,
                 render=not args.no_figures)
    manifest.write(outdir)
    out = {"k_estimate": diag.k_estimate,
           "fits": {k: v.exponent for k, v in diag.fits.items()}}
    print(json.dumps(out, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coneflow",
                                 description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=None,
                    help="seed for randomized test-function sampling")
    ap.add_argument("--threads", type=int, default=1,
                    help="worker threads for independent flow runs")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("params", help="derived constants for a dimension")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--m", type=int, default=6)
    sp.add_argument("--out", default="parameters.json")
    sp.set_defaults(func=cmd_params)

    sp = sub.add_parser("minimal", help="solve the minimal profile")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--k", type=float, default=1.0)
    sp.add_argument("--r-max", type=float, default=60.0)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--outdir", default="minimal_out")
    sp.set_defaults(func=cmd_minimal)

    sp = sub.add_parser("spectrum", help="eigenbasis of the linearized operator")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--m", type=int, default=6)
    sp.add_argument("--coercivity-samples", type=int, default=0)
    sp.add_argument("--outdir", default="spectrum_out")
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("flow", help="integrate a flow configuration")
    sp.add_argument("--config", required=True)
    sp.add_argument("--outdir", default="flow_out")
    sp.set_defaults(func=cmd_flow)

    sp = sub.add_parser("shoot", help="tune the unstable-mode amplitudes")
    sp.add_argument("--config", required=True)
    sp.add_argument("--t1", type=float, required=True,
                    help="matching time (negative)")
    sp.add_argument("--staged", action="store_true",
                    help="advance the horizon in stages down to t1")
    sp.add_argument("--search-radius", type=float, default=0.3)
    sp.add_argument("--outdir", default="shoot_out")
    sp.set_defaults(func=cmd_shoot)

    sp = sub.add_parser("rates", help="diagnostics and blow-up rate fits")
    sp.add_argument("--trajdir", required=True)
    sp.add_argument("--out", default=None)
    sp.add_argument("--outdir", default="rates_out")
    sp.add_argument("--no-figures", action="store_true")
    sp.set_defaults(func=cmd_rates)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PreconditionError as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
