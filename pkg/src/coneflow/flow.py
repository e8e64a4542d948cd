"""Radial mean-curvature flow integrator.

Evolves the rotationally symmetric graph radius u_hat(x, t) by

    du/dt = u_xx / (1 + u_x^2) + (n-1) (u_x / x - 1/u),

with u_x(0, t) = 0 enforced through a mirror node, and the axis limit
u_x/x -> u_xx giving the regularized update n u_xx - (n-1)/u at x = 0.

Time stepping is a Strang split: explicit midpoint halves for the stiffness
free -(n-1)/u reaction, backward Euler for the quasilinear diffusion plus
the (n-1) u_x / x advection (a scalar tridiagonal solve; the diffusion
coefficient 1/(1+u_x^2) <= 1 is frozen over the step).  The reaction halves
carry the dt <= 0.2 u_min^2/(n-1) cap, which is proportional to the
intrinsic collapse time scale, so the step count stays bounded per decade
of (-t).

The grid is uniform at the collapse scale (-t)^(1/2+sigma) near the axis
and geometric outside; when the collapse scale falls under 8 cells the
state is regridded by monotone cubic interpolation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.linalg import solve_banded

from .errors import NumericError, PreconditionError
from .params import Parameters, derive_parameters
from .profile import ProfileSolution, scale_profile, solve_profile
from .spectral import cutoff_zeta

_SQRT2 = math.sqrt(2.0)

_CONFIG_FIELDS = {
    "n": int,
    "a0": float,
    "a1": float,
    "t0": float,
    "t_min": float,
    "rho": float,
    "beta": float,
    "lambda_cap": float,
    "nx": int,
    "x_max": float,
    "cfl": float,
    "snapshot_count": int,
    "bc": str,
    "grid_growth": float,
    "dt_time_frac": float,
    "monitors": str,
}


@dataclass(frozen=True)
class FlowConfig:
    """Run settings; ``nx`` is the number of cells under the collapse scale."""

    params: Parameters
    a0: float = 0.0
    a1: float = 0.0
    t0: float = -0.01
    t_min: float = 1e-5
    rho: float = 0.2
    beta: float = 10.0
    lambda_cap: float = 1e3
    nx: int = 16
    x_max: float = 4.0
    cfl: float = 0.12
    snapshot_count: int = 40
    bc: str = "dirichlet"
    grid_growth: float = 1.05
    dt_time_frac: float = 0.05
    monitors: str = "full"

    def __post_init__(self):
        if self.params.n < 5:
            raise PreconditionError("flow experiments need n >= 5")
        if not (self.t0 < 0.0 and self.t_min > 0.0):
            raise PreconditionError(f"need t0 < 0 < t_min, got t0={self.t0}, t_min={self.t_min}")
        if self.beta < 10.0 or self.rho > 0.2:
            raise PreconditionError("region constants out of range: need beta >= 10, rho <= 0.2")
        if self.bc not in ("dirichlet", "neumann"):
            raise PreconditionError(f"unknown boundary condition {self.bc!r}")
        if self.monitors not in ("full", "basic"):
            raise PreconditionError(f"unknown monitor set {self.monitors!r}")
        if math.hypot(self.a0, self.a1) > 0.5:
            raise PreconditionError(
                f"(a0, a1) = ({self.a0}, {self.a1}) too large; the tip scale "
                f"1 + a1 + a0 must stay near 1")

    @property
    def box_radius(self) -> float:
        return self.beta ** (2.0 * (self.params.alpha - 1.0))

    @property
    def k_hat(self) -> float:
        return 1.0 + self.a1 + self.a0

    def to_dict(self) -> dict:
        d = {name: getattr(self, name) for name in _CONFIG_FIELDS if name != "n"}
        d["n"] = self.params.n
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FlowConfig":
        unknown = set(d) - set(_CONFIG_FIELDS)
        if unknown:
            raise PreconditionError(f"unknown config keys: {sorted(unknown)}")
        if "n" not in d:
            raise PreconditionError("config needs the dimension key n")
        kw = {}
        for key, value in d.items():
            if key == "n":
                continue
            kw[key] = _CONFIG_FIELDS[key](value)
        return cls(params=derive_parameters(int(d["n"])), **kw)

    @classmethod
    def from_file(cls, path) -> "FlowConfig":
        d = {}
        with open(path) as fh:
            for line_no, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise PreconditionError(f"{path}:{line_no}: expected key=value, got {raw!r}")
                key, value = (part.strip() for part in line.split("=", 1))
                if key in ("bc", "monitors"):
                    d[key] = value
                elif key in ("n", "nx", "snapshot_count"):
                    d[key] = int(value)
                else:
                    d[key] = float(value)
        return cls.from_dict(d)


@dataclass(frozen=True)
class FlowState:
    """One time slice: radial grid and graph radius."""

    t: float
    x: np.ndarray
    u_hat: np.ndarray

    @property
    def neg_t(self) -> float:
        return -self.t


@dataclass(frozen=True)
class Trajectory:
    config: FlowConfig
    snapshots: list
    termination: str
    n_steps: int
    grid_revisions: int

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])


_profile_cache: dict[int, ProfileSolution] = {}


def cached_profile(n: int) -> ProfileSolution:
    """Canonical minimal profile for dimension n, solved once per process."""
    if n not in _profile_cache:
        _profile_cache[n] = solve_profile(derive_parameters(n))
    return _profile_cache[n]


def _make_grid(x_max: float, tip_scale: float, tip_cells: int, growth: float) -> np.ndarray:
    dx = tip_scale / tip_cells
    uni_hi = min(8.0 * tip_scale, 0.5 * x_max)
    head = np.arange(0.0, uni_hi + 0.5 * dx, dx)
    x = head[-1]
    dx_cap = x_max / 60.0
    tail = []
    while x < x_max:
        dx = min(dx * growth, dx_cap)
        x += dx
        tail.append(x)
    grid = np.concatenate([head, np.array(tail)]) if tail else head
    grid[-1] = x_max
    return grid


def build_initial_data(config: FlowConfig, profile: ProfileSolution | None = None) -> FlowState:
    """Assemble the initial surface at t0.

    Inside the collapse ball (z <= beta/2 in collapse variables) the surface
    is the minimal profile at scale 1 + a1 + a0.  Outside it is the
    two-unstable-mode perturbation of the slowest decaying cone mode, as a
    graph over the diagonal; the quartic mode growth is capped by the
    rational factor x^4/(1+x^4) so the far field obeys the admissibility
    bounds while the formula is untouched where x << 1.  The single seam is
    blended over z in [beta/2, beta] with the smooth cutoff.
    """
    p = config.params
    if profile is None:
        profile = cached_profile(p.n)
    prof_k = scale_profile(profile, config.k_hat)
    neg_t0 = -config.t0
    tip = p.tip_scale(neg_t0)
    x = _make_grid(config.x_max, tip, config.nx, config.grid_growth)

    u_tip = tip * prof_k.value(x / tip)

    # modal piece on a dense diagonal grid, then rotated to radial
    xd = np.geomspace(0.05 * config.beta * tip, 1.05 * _SQRT2 * config.x_max, 4000)
    u_diag = (xd ** p.alpha * (config.k_hat * neg_t0 ** 2
                               + (2.0 + config.a1) * p.upsilon1 * neg_t0 * xd ** 2)
              + p.upsilon2 * xd ** (p.alpha + 4.0) / (1.0 + xd ** 4))
    x_of = (xd - u_diag) / _SQRT2
    u_hat_of = (xd + u_diag) / _SQRT2
    if np.any(np.diff(x_of) <= 0.0):
        raise PreconditionError("initial data rejected: intermediate piece is not a graph")
    mid_interp = PchipInterpolator(x_of, u_hat_of, extrapolate=False)

    z = x / tip
    blend_tip = cutoff_zeta((z - 0.5 * config.beta) / (0.5 * config.beta))
    u_mid_radial = mid_interp(x)
    u_mid_radial = np.where(np.isfinite(u_mid_radial), u_mid_radial, u_tip)
    u0 = (1.0 - blend_tip) * u_tip + blend_tip * u_mid_radial

    if np.any(u0 <= 0.0):
        bad = x[np.argmax(u0 <= 0.0)]
        region = "tip" if bad < config.beta * tip else (
            "intermediate" if bad < config.rho else "outer")
        raise PreconditionError(f"initial data rejected: u_hat <= 0 in the {region} region")
    slopes = np.diff(u0) / np.diff(x)
    if np.any(1.0 + slopes <= 0.0):
        bad = x[np.argmax(1.0 + slopes <= 0.0)]
        region = "tip" if bad < config.beta * tip else (
            "intermediate" if bad < config.rho else "outer")
        raise PreconditionError(
            f"initial data rejected: projected curve not a graph in the {region} region")
    return FlowState(t=config.t0, x=x, u_hat=u0)


class _Workspace:
    """Per-grid scratch for the stepping loop.

    ``u_ref`` picks the splitting: the reaction substeps evolve the
    deviation -(n-1)(1/u - 1/u_ref), which vanishes on any node still at the
    reference value (in particular at the pinned Dirichlet wall, so the
    split never injects a boundary kink), while the static part
    -(n-1)/u_ref(x) rides along implicitly in the tridiagonal solve.  The
    discrete steady state therefore satisfies the unsplit balance.
    """

    def __init__(self, x: np.ndarray, n: int, bc: str, u_ref: np.ndarray | None = None):
        self.x = x
        self.n = n
        self.bc = bc
        hm = x[1:-1] - x[:-2]
        hp = x[2:] - x[1:-1]
        denom = hm * hp * (hm + hp)
        self.c2m = 2.0 * hp / denom
        self.c2p = 2.0 * hm / denom
        self.c2z = -(self.c2m + self.c2p)
        self.c1m = -hp ** 2 / denom
        self.c1p = hm ** 2 / denom
        self.c1z = (hp ** 2 - hm ** 2) / denom
        self.adv = (n - 1.0) / x[1:-1]
        self.h1 = x[1] - x[0]
        self.hN = x[-1] - x[-2]
        self.ab = np.zeros((3, x.size))
        self.rhs = np.empty(x.size)
        if u_ref is None:
            self.inv_ref = None
            self.source = np.zeros(x.size)
        else:
            self.inv_ref = 1.0 / np.asarray(u_ref, dtype=float)
            self.source = -(n - 1.0) * self.inv_ref

    def slope(self, u: np.ndarray) -> np.ndarray:
        p = np.empty_like(u)
        p[1:-1] = self.c1m * u[:-2] + self.c1z * u[1:-1] + self.c1p * u[2:]
        p[0] = 0.0
        p[-1] = (u[-1] - u[-2]) / self.hN if self.bc == "dirichlet" else 0.0
        return p

    def reaction_half(self, u: np.ndarray, dt_half: float):
        """Explicit midpoint for the deviation reaction over dt_half."""
        c = self.n - 1.0
        q = self.inv_ref if self.inv_ref is not None else 1.0 / u
        um = u - (0.5 * dt_half) * (c / u - c * q)
        if um.min() <= 0.0:
            return None
        out = u - dt_half * (c / um - c * q)
        if out.min() <= 0.0:
            return None
        return out

    def diffusion_step(self, u: np.ndarray, dt: float) -> np.ndarray:
        p = self.slope(u)
        d = 1.0 / (1.0 + p * p)
        sub = d[1:-1] * self.c2m + self.adv * self.c1m
        dia = d[1:-1] * self.c2z + self.adv * self.c1z
        sup = d[1:-1] * self.c2p + self.adv * self.c1p
        ab = self.ab
        rhs = self.rhs
        ab[1, 1:-1] = 1.0 - dt * dia
        ab[0, 2:] = -dt * sup
        ab[2, :-2] = -dt * sub
        rhs[:] = u + dt * self.source
        # axis: n * u'' with the mirror node, diffusion coefficient 1
        a0 = 2.0 * self.n / (self.h1 * self.h1)
        ab[1, 0] = 1.0 + dt * a0
        ab[0, 1] = -dt * a0
        if self.bc == "dirichlet":
            ab[1, -1] = 1.0
            ab[2, -2] = 0.0
            rhs[-1] = u[-1]
        else:
            aN = 2.0 * d[-1] / (self.hN * self.hN)
            ab[1, -1] = 1.0 + dt * aN
            ab[2, -2] = -dt * aN
        return solve_banded((1, 1), ab, rhs, overwrite_b=False, check_finite=False)


def make_workspace(state: FlowState, config: FlowConfig) -> _Workspace:
    """Stepping workspace with the state's own values as the split reference.

    Reuse one workspace across a stepping loop; rebuilding it every step
    degrades the reaction splitting to first order in time.
    """
    return _Workspace(state.x, config.params.n, config.bc, state.u_hat)


def step(state: FlowState, dt: float, config: FlowConfig,
         workspace: _Workspace | None = None) -> FlowState:
    """One Strang-split step of size dt.  Raises on loss of positivity."""
    n = config.params.n
    u_min = float(state.u_hat.min())
    if dt > 0.2001 * u_min * u_min / (n - 1.0):
        raise PreconditionError(
            f"dt = {dt:.3e} violates the reaction cap 0.2 u_min^2/(n-1) = "
            f"{0.2 * u_min * u_min / (n - 1.0):.3e}")
    ws = workspace or make_workspace(state, config)
    u = ws.reaction_half(state.u_hat, 0.5 * dt)
    if u is None:
        raise NumericError("u_hat crossed zero in the reaction substep")
    u = ws.diffusion_step(u, dt)
    if u.min() <= 0.0:
        raise NumericError("u_hat crossed zero in the diffusion substep")
    u = ws.reaction_half(u, 0.5 * dt)
    if u is None:
        raise NumericError("u_hat crossed zero in the reaction substep")
    return FlowState(t=state.t + dt, x=state.x, u_hat=u)


def to_diagonal_graph(state: FlowState, x_lo: float = 0.0, x_hi: float | None = None):
    """Rotate the projected curve into diagonal-graph samples (x_d, u).

    Valid where the arclength coordinate is monotone, i.e. 1 + u_x > 0; the
    first offending node is named otherwise.
    """
    x, u = state.x, state.u_hat
    if x_hi is None:
        x_hi = x[-1]
    mask = (x >= x_lo) & (x <= x_hi)
    lo = max(int(np.argmax(mask)) - 1, 0)
    hi = min(x.size, int(x.size - np.argmax(mask[::-1])) + 1)
    xs, us = x[lo:hi], u[lo:hi]
    xd = (xs + us) / _SQRT2
    if np.any(np.diff(xd) <= 0.0):
        bad = int(np.argmax(np.diff(xd) <= 0.0))
        raise NumericError(
            f"graph condition fails at node x = {xs[bad]:.6g} (1 + u_x <= 0)")
    ud = (us - xs) / _SQRT2
    return xd, ud


def _check_apriori(state: FlowState, config: FlowConfig):
    """Weighted derivative bound on the diagonal graph over the matching window."""
    p = config.params
    neg_t = state.neg_t
    x_lo = config.beta * p.tip_scale(neg_t)
    if x_lo >= config.rho:
        return None
    try:
        xd, ud = to_diagonal_graph(state, 0.8 * x_lo, min(1.2 * config.rho, state.x[-1]))
    except NumericError as exc:
        return f"graph condition lost: {exc}"
    if xd.size < 7:
        return None
    d1 = np.gradient(ud, xd)
    d2 = np.gradient(d1, xd)
    window = (xd >= x_lo) & (xd <= config.rho)
    if not window.any():
        return None
    bound = config.lambda_cap * (neg_t ** 2 * xd ** p.alpha + xd ** (2.0 * p.lam2 + 1.0))
    for i, deriv in enumerate((ud, d1, d2)):
        ratio = np.abs(xd ** i * deriv)[window] / bound[window]
        if ratio.max() >= 1.0:
            j = int(np.argmax(ratio))
            return (f"a-priori bound violated: order {i} at x = {xd[window][j]:.4g}, "
                    f"t = {state.t:.6g} (ratio {ratio.max():.3g})")
    return None


def run(config: FlowConfig, profile: ProfileSolution | None = None) -> Trajectory:
    """Integrate from t0 until (-t) < t_min or a monitored invariant fails.

    Snapshots are recorded at geometrically spaced (-t).  Invariant
    violations terminate the run and are reported in the trajectory, not
    raised.
    """
    p = config.params
    state = build_initial_data(config, profile)
    snaps = [state]
    if config.t_min >= -config.t0:
        return Trajectory(config=config, snapshots=snaps, termination="completed",
                          n_steps=0, grid_revisions=0)
    targets = np.geomspace(-config.t0, config.t_min, config.snapshot_count)[1:]
    ref_interp = PchipInterpolator(state.x, state.u_hat)
    ws = _Workspace(state.x, p.n, config.bc, state.u_hat)
    n_steps = 0
    revisions = 0
    termination = "completed"
    cap = 0.2 * config.cfl / (p.n - 1.0)
    t = state.t
    u = state.u_hat
    x = state.x
    dx_tip = x[1] - x[0]
    j = 0
    while j < targets.size:
        neg_t = -t
        u_min = u.min()
        dt = min(cap * u_min * u_min, config.dt_time_frac * neg_t, neg_t - targets[j])
        un = ws.reaction_half(u, 0.5 * dt)
        if un is not None:
            un = ws.diffusion_step(un, dt)
            if un.min() <= 0.0:
                un = None
            else:
                un = ws.reaction_half(un, 0.5 * dt)
        if un is None:
            termination = f"pinched at t = {t:.6g}"
            break
        u = un
        t += dt
        n_steps += 1
        if -t <= targets[j] * (1.0 + 1e-12):
            state = FlowState(t=t, x=x, u_hat=u.copy())
            snaps.append(state)
            j += 1
            if config.monitors == "full":
                msg = _check_apriori(state, config)
                if msg is not None:
                    termination = msg
                    break
            # regrid when the collapse scale drops under 8 leading cells
            tip = p.tip_scale(-t)
            if tip < 8.0 * dx_tip and j < targets.size:
                x_new = _make_grid(config.x_max, tip, config.nx, config.grid_growth)
                u = PchipInterpolator(x, u)(x_new)
                x = x_new
                ws = _Workspace(x, p.n, config.bc, ref_interp(x))
                dx_tip = x[1] - x[0]
                revisions += 1
    return Trajectory(config=config, snapshots=snaps, termination=termination,
                      n_steps=n_steps, grid_revisions=revisions)
