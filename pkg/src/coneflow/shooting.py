"""Two-parameter tuning of the unstable modes by projection shooting.

The flow from the two-parameter initial family tracks the collapse profile
only if the projections of the type I deviation onto the two growing modes
vanish at the matching time.  A damped Newton iteration with a
finite-difference Jacobian drives them to zero; because the projection
window [beta e^(-sigma s), rho e^(s/2)] is narrow at early horizons the two
mode shapes are nearly collinear there, so steps use a truncated-SVD
pseudo-inverse (the unmeasurable direction is left for later stages, where
the widening window restores rank two).  The matching time advances in
geometric stages with re-tuning, since a single deep horizon is hopelessly
ill-conditioned against the e^(|lambda_0| s) mode growth.

A winding-number sweep over the search-box boundary backs up the Newton
iteration: winding one certifies a root inside (and bisects toward it),
winding zero aborts with diagnostics.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericError, PreconditionError
from .flow import FlowConfig, Trajectory, run
from .profile import ProfileSolution
from .rescale import to_type1
from .spectral import ProjectionResult, SpectralBasis, make_basis, mode_coefficient, project_phi

_STEP_CAP_FRACTION = 0.5  # max Newton step, as a fraction of the search radius


@dataclass(frozen=True)
class ShootingResult:
    a0: float
    a1: float
    t1: float
    phi_norm: float
    phi_norm_scaled: float
    iterations: int
    k_estimate: float
    converged: bool
    in_box: bool
    history: list

    def to_json(self) -> str:
        d = {k: getattr(self, k) for k in
             ("a0", "a1", "t1", "phi_norm", "phi_norm_scaled", "iterations",
              "k_estimate", "converged", "in_box")}
        d["history"] = self.history
        return json.dumps(d, indent=2)


def evaluate_phi(config: FlowConfig, t1: float, basis: SpectralBasis,
                 profile: ProfileSolution | None = None,
                 snapshot_count: int = 12):
    """Run the flow to t1 and project the type I view onto the two modes.

    Returns (ProjectionResult, trajectory) on success and (None, trajectory)
    when the point is infeasible: the flow terminated before t1 or the
    surviving state does not reach the projection window.  Genuine numeric
    failures still raise.
    """
    if not config.t0 < t1 < 0.0:
        raise PreconditionError(f"matching time t1 = {t1} outside ({config.t0}, 0)")
    cfg = replace(config, t_min=-t1, snapshot_count=snapshot_count)
    traj = run(cfg, profile)
    if traj.termination != "completed":
        return None, traj
    state = traj.snapshots[-1]
    try:
        view = to_type1(state, config.rho, config.beta, config.params)
        pr = project_phi(basis, view, config.rho, config.beta)
    except PreconditionError:
        return None, traj
    return pr, traj


class _PhiMap:
    """Scaled projection map a -> Phi(t1, a) / e^(-lambda2 s1), with memo."""

    def __init__(self, config, t1, basis, profile, threads=1):
        self.config = config
        self.t1 = t1
        self.basis = basis
        self.profile = profile
        self.scale = math.exp(-config.params.lam2 * (-math.log(-t1)))
        self.threads = threads
        self.cache: dict[tuple[float, float], object] = {}
        self.n_evals = 0

    def __call__(self, a):
        key = (float(a[0]), float(a[1]))
        if key not in self.cache:
            try:
                cfg = replace(self.config, a0=key[0], a1=key[1])
                pr, _ = evaluate_phi(cfg, self.t1, self.basis, self.profile)
            except PreconditionError:
                pr = None
            self.n_evals += 1
            self.cache[key] = pr
        pr = self.cache[key]
        if pr is None:
            return None
        return np.array([pr.phi0, pr.phi1]) / self.scale

    def batch(self, points):
        todo = [tuple(map(float, a)) for a in points]
        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                list(pool.map(self.__call__, todo))
        return [self(a) for a in todo]


def boundary_winding(phi: _PhiMap, center, radius: float, n_points: int = 16):
    """Winding number of the scaled projection around the box boundary.

    Infeasible boundary points poison the sweep; they are reported as None.
    """
    angles = np.linspace(0.0, 2.0 * math.pi, n_points, endpoint=False)
    pts = [center + radius * np.array([math.cos(t), math.sin(t)]) for t in angles]
    vals = phi.batch(pts)
    if any(v is None for v in vals):
        return None, sum(v is None for v in vals)
    args = np.unwrap([math.atan2(v[1], v[0]) for v in vals + [vals[0]]])
    return int(round((args[-1] - args[0]) / (2.0 * math.pi))), 0


def tune(config: FlowConfig, t1: float, tol: float = 1e-3, max_iter: int = 12,
         basis: SpectralBasis | None = None, profile: ProfileSolution | None = None,
         search_radius: float = 0.3, rcond: float = 0.02,
         fd_step: float = 3e-4, threads: int = 1) -> ShootingResult:
    """Find (a0, a1) with the scaled projection norm below tol at t1.

    ``tol`` is measured in units of e^(-lambda2 s1), matching the natural
    size of the mode amplitudes; ``search_radius`` bounds the Newton steps
    (the strict admissible box beta^(2(alpha-1)) is recorded in ``in_box``
    but is far below the reachable root at coarse start times).  When the
    Jacobian pseudo-inverse stalls, a boundary winding sweep either bisects
    the box toward the root or aborts.
    """
    if basis is None:
        basis = make_basis(config.params)
    if search_radius <= 0.0:
        pr, _ = evaluate_phi(config, t1, basis, profile)
        if pr is None:
            raise NumericError("zero search radius at an infeasible point")
        nrm = pr.norm()
        scale = math.exp(-config.params.lam2 * (-math.log(-t1)))
        return ShootingResult(
            a0=config.a0, a1=config.a1, t1=t1, phi_norm=nrm,
            phi_norm_scaled=nrm / scale, iterations=0,
            k_estimate=_k_estimate(config, t1, basis, profile),
            converged=nrm / scale <= tol, in_box=True, history=[])

    phi = _PhiMap(config, t1, basis, profile, threads=threads)
    a = np.array([config.a0, config.a1])
    history = []
    step_cap = _STEP_CAP_FRACTION * search_radius
    radius = search_radius
    F = phi(a)
    if F is None:
        raise NumericError(
            f"infeasible tuning point (a0, a1) = ({a[0]:.6g}, {a[1]:.6g}): "
            "flow dies before the matching time")

    def fd_jacobian(at, Fat):
        cols = phi.batch([at + [fd_step, 0.0], at + [0.0, fd_step]])
        if cols[0] is None or cols[1] is None:
            raise NumericError("Jacobian stencil left the feasible set")
        return np.column_stack([(cols[0] - Fat) / fd_step, (cols[1] - Fat) / fd_step])

    J = None
    j_fresh = False
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        nrm = float(np.hypot(*F))
        history.append({"a0": float(a[0]), "a1": float(a[1]),
                        "phi0": float(F[0]), "phi1": float(F[1]),
                        "feasible": True, "horizon": t1})
        if nrm <= tol:
            converged = True
            break
        if J is None:
            J = fd_jacobian(a, F)
            j_fresh = True
        step = -np.linalg.pinv(J, rcond=rcond) @ F
        nn = float(np.hypot(*step))
        if nn > step_cap:
            step *= step_cap / nn
        lam = 1.0
        accepted = False
        for _ in range(4):
            cand = a + lam * step
            if float(np.hypot(*cand)) > search_radius:
                cand *= search_radius / float(np.hypot(*cand))
            Fn = phi(cand)
            if Fn is not None and float(np.hypot(*Fn)) < nrm * (1.0 - 1e-3):
                da_vec = cand - a
                dF = Fn - F
                # rank-one secant update keeps the Jacobian fresh cheaply
                J = J + np.outer(dF - J @ da_vec, da_vec) / float(da_vec @ da_vec)
                a, F = cand, Fn
                j_fresh = False
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            if not j_fresh:
                J = None  # retry with a fresh finite-difference Jacobian
                continue
            if len(history) > 1:
                # progress was made earlier; the residual floor is the
                # direction the narrow window cannot measure yet
                break
            # no progress at all: fall back on the degree argument
            wind, bad = boundary_winding(phi, a, radius)
            if wind is None:
                raise NumericError(
                    f"degree sweep infeasible at {bad} boundary points; "
                    "box too large for this grid resolution")
            if wind == 0:
                break
            radius *= 0.5
            if radius < max(1e-6, 10 * fd_step):
                break

    nrm = float(np.hypot(*F))
    cfg = replace(config, a0=float(a[0]), a1=float(a[1]))
    paper_box = config.box_radius
    return ShootingResult(
        a0=float(a[0]), a1=float(a[1]), t1=t1,
        phi_norm=nrm * phi.scale, phi_norm_scaled=nrm,
        iterations=it, k_estimate=_k_estimate(cfg, t1, basis, profile),
        converged=converged, in_box=float(np.hypot(*a)) <= paper_box,
        history=history)


def _k_estimate(config: FlowConfig, t1: float, basis: SpectralBasis,
                profile: ProfileSolution | None) -> float:
    """Tracked profile scale: e^(lambda2 s) <zeta zeta v, c2 phi2> at t1."""
    cfg = replace(config, t_min=-t1, snapshot_count=12)
    traj = run(cfg, profile)
    if traj.termination != "completed":
        return math.nan
    view = to_type1(traj.snapshots[-1], config.rho, config.beta, config.params)
    s1 = -math.log(-t1)
    return mode_coefficient(basis, view, config.rho, config.beta, 2) \
        * math.exp(config.params.lam2 * s1)


@dataclass(frozen=True)
class StagedResult:
    result: ShootingResult
    trajectory: Trajectory
    stages: list


def tune_staged(config: FlowConfig, t_final: float | None = None,
                stage_ds: float = 0.5, first_ds: float = 0.5,
                tol: float = 1e-3, basis: SpectralBasis | None = None,
                profile: ProfileSolution | None = None,
                search_radius: float = 0.3, threads: int = 1) -> StagedResult:
    """Re-tune at geometrically advancing horizons down to t_final.

    Each stage starts from the previous root and must only undo the drift
    accumulated over one stage spacing, which keeps the Newton iteration in
    its basin despite the exponential mode growth.  Returns the final tuned
    result plus the full trajectory of the tuned flow.
    """
    if basis is None:
        basis = make_basis(config.params)
    if t_final is None:
        t_final = -config.t_min
    if not config.t0 < t_final < 0.0:
        raise PreconditionError(f"t_final = {t_final} outside ({config.t0}, 0)")
    s0 = -math.log(-config.t0)
    s_end = -math.log(-t_final)
    s_list = list(np.arange(s0 + first_ds, s_end, stage_ds)) + [s_end]
    stages = []
    cfg = config
    result = None
    for s1 in s_list:
        t1 = -math.exp(-s1)
        result = tune(cfg, t1, tol=tol, basis=basis, profile=profile,
                      search_radius=search_radius, threads=threads)
        cfg = replace(cfg, a0=result.a0, a1=result.a1)
        stages.append({"s1": float(s1), "t1": float(t1), "a0": result.a0,
                       "a1": result.a1, "phi_norm_scaled": result.phi_norm_scaled,
                       "converged": result.converged,
                       "iterations": result.iterations,
                       "k_estimate": result.k_estimate})
    final_cfg = replace(cfg, t_min=-t_final)
    trajectory = run(final_cfg, profile)
    return StagedResult(result=result, trajectory=trajectory, stages=stages)
