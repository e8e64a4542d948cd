"""Rescaled views of flow states and singularity diagnostics.

The two zooms adapted to the collapse are

    type I  : y = x / sqrt(-t),        s   = -ln(-t),
    type II : z = x / (-t)^(1/2+sigma), tau = 1 / (2 sigma (-t)^(2 sigma)),

applied to the diagonal-graph deviation u (type I, diagnostics against the
cone) and to the graph radius u_hat (type II, diagnostics against the
minimal profile).  Curvature fields, power-law rate fits, barrier ordering
checks and convexity reports all live here; everything is a pure function
of immutable snapshots.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, PreconditionError
from .flow import FlowState, Trajectory, to_diagonal_graph
from .params import Parameters
from .profile import BarrierProfile, ProfileSolution

_SQRT2 = math.sqrt(2.0)


def fd_weights(x: np.ndarray, x0: float, order: int) -> np.ndarray:
    """Fornberg weights for the ``order``-th derivative at x0 on nodes x."""
    n = x.size
    w = np.zeros((order + 1, n))
    w[0, 0] = 1.0
    c1 = 1.0
    c4 = x[0] - x0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    w[k, i] = c1 * (k * w[k - 1, i - 1] - c5 * w[k, i - 1]) / c2
                w[0, i] = -c1 * c5 * w[0, i - 1] / c2
            for k in range(mn, 0, -1):
                w[k, j] = ((c4 * w[k, j] - k * w[k - 1, j]) / c3)
            w[0, j] = c4 * w[0, j] / c3
        c1 = c2
    return w[order]


def derivative(x: np.ndarray, f: np.ndarray, order: int, stencil: int = 5) -> np.ndarray:
    """Derivative on an arbitrary grid with sliding Fornberg stencils.

    ``stencil = 5`` gives 4th-order interior accuracy on smooth grids,
    degrading gracefully near the ends where the stencil is one-sided.
    """
    n = x.size
    if n < stencil:
        raise PreconditionError(f"need at least {stencil} nodes, got {n}")
    half = stencil // 2
    out = np.empty_like(f)
    for i in range(n):
        lo = min(max(i - half, 0), n - stencil)
        sl = slice(lo, lo + stencil)
        out[i] = np.dot(fd_weights(x[sl], x[i], order), f[sl])
    return out


@dataclass(frozen=True)
class TypeIView:
    """Diagonal-graph deviation in parabolic variables at one instant."""

    s: float
    y: np.ndarray
    v: np.ndarray
    y_lo: float
    y_hi: float


@dataclass(frozen=True)
class TypeIIView:
    """Collapse-scale view: radial w_hat everywhere, diagonal w where a graph."""

    tau: float
    z: np.ndarray
    w_hat: np.ndarray
    zd: np.ndarray
    w: np.ndarray


@dataclass(frozen=True)
class CurvatureField:
    """Pointwise norm of the second fundamental form and mean curvature.

    ``region`` is 0 in the collapse core, 1 in the matching annulus and 2
    outside the parabolic ball.
    """

    x: np.ndarray
    a_norm: np.ndarray
    h: np.ndarray
    region: np.ndarray

    def sup(self, which: str, region: int) -> float:
        vals = self.a_norm if which == "A" else np.abs(self.h)
        mask = self.region == region
        return float(vals[mask].max()) if mask.any() else math.nan


@dataclass(frozen=True)
class RateFit:
    exponent: float
    intercept: float
    residual: float
    window: tuple[float, float]
    n_samples: int


def to_type1(state: FlowState, rho: float, beta: float, params: Parameters) -> TypeIView:
    """Parabolic rescaling of the diagonal-graph deviation; pure relabeling."""
    neg_t = state.neg_t
    s = -math.log(neg_t)
    y_lo = beta * math.exp(-params.sigma * s)
    y_hi = rho * math.exp(s / 2.0)
    xd, ud = to_diagonal_graph(state, 0.0)
    sq = math.sqrt(neg_t)
    return TypeIView(s=s, y=xd / sq, v=ud / sq, y_lo=y_lo, y_hi=min(y_hi, xd[-1] / sq))


def to_type2(state: FlowState, beta: float, params: Parameters) -> TypeIIView:
    """Collapse rescaling; exact at shared nodes, no interpolation."""
    neg_t = state.neg_t
    scale = params.tip_scale(neg_t)
    tau = params.tau_of_t(neg_t)
    z = state.x / scale
    w_hat = state.u_hat / scale
    xd, ud = to_diagonal_graph(state, beta * scale * 0.8)
    return TypeIIView(tau=tau, z=z, w_hat=w_hat, zd=xd / scale, w=ud / scale)


def curvature(state: FlowState, params: Parameters, beta: float = 10.0) -> CurvatureField:
    """Second-fundamental-form norm and mean curvature of a snapshot.

    Centered 4th-order differences away from the ends, the mirror-symmetric
    limit u_x/x -> u_xx at the axis.  Region tags follow the collapse-core
    radius beta (-t)^(1/2+sigma) and the parabolic radius sqrt(-t).
    """
    x, u = state.x, state.u_hat
    if np.any(u <= 0.0):
        raise PreconditionError("curvature undefined where u_hat <= 0")
    n = params.n
    ux = derivative(x, u, 1)
    uxx = derivative(x, u, 2)
    ux[0] = 0.0
    with np.errstate(divide="ignore"):
        slope_term = np.where(x > 0.0, ux / np.where(x > 0.0, x, 1.0), uxx)
    slope_term[0] = uxx[0]
    g = 1.0 + ux * ux
    kap1 = uxx / g
    a2 = (kap1 ** 2 + (n - 1) * slope_term ** 2 + (n - 1) / u ** 2) / g
    h = (kap1 + (n - 1) * (slope_term - 1.0 / u)) / np.sqrt(g)
    neg_t = state.neg_t
    region = np.full(x.size, 2, dtype=np.int8)
    region[x < math.sqrt(neg_t)] = 1
    region[x <= beta * params.tip_scale(neg_t)] = 0
    return CurvatureField(x=x, a_norm=np.sqrt(a2), h=h, region=region)


def fit_rate(neg_t: np.ndarray, values: np.ndarray) -> RateFit:
    """Least-squares power-law exponent of values against (-t), in log-log."""
    neg_t = np.asarray(neg_t, dtype=float)
    values = np.asarray(values, dtype=float)
    if neg_t.size < 8:
        raise PreconditionError(f"rate fit needs >= 8 samples, got {neg_t.size}")
    if np.any(values <= 0.0) or np.any(neg_t <= 0.0):
        raise PreconditionError("rate fit needs positive samples")
    span = neg_t.max() / neg_t.min()
    if span < 10.0 ** 1.5:
        raise PreconditionError(
            f"rate-fit window spans only {math.log10(span):.2f} decades (< 1.5)")
    lx = np.log(neg_t)
    ly = np.log(values)
    coef, res = np.polyfit(lx, ly, 1, full=True)[:2]
    rms = math.sqrt(float(res[0]) / lx.size) if res.size else 0.0
    return RateFit(exponent=float(coef[0]), intercept=float(coef[1]), residual=rms,
                   window=(float(neg_t.min()), float(neg_t.max())), n_samples=neg_t.size)


def profile_distance(view: TypeIIView, profile: ProfileSolution,
                     z_max: float) -> tuple[float, float]:
    """Sup norm of w_hat - psi_k on [0, z_max], with the maximizer."""
    mask = view.z <= z_max
    if not mask.any():
        raise PreconditionError("view does not reach the requested window")
    diff = np.abs(view.w_hat[mask] - profile.value(view.z[mask]))
    j = int(np.argmax(diff))
    return float(diff[j]), float(view.z[mask][j])


def cone_distance(view: TypeIView, annulus: tuple[float, float]) -> tuple[float, float]:
    """Sup of |v| and |v'| over the annulus (zero is the cone itself)."""
    lo, hi = annulus
    mask = (view.y >= lo) & (view.y <= hi)
    if mask.sum() < 5:
        raise PreconditionError(f"annulus [{lo}, {hi}] has too few samples")
    dv = derivative(view.y[mask], view.v[mask], 1)
    return float(np.abs(view.v[mask]).max()), float(np.abs(dv).max())


@dataclass(frozen=True)
class BarrierReport:
    lower_margin: float
    lower_argmin: float
    upper_margin: float
    upper_argmin: float
    window: float


def verify_barrier(view: TypeIIView, lower: BarrierProfile, upper: BarrierProfile,
                   tau: float | None = None) -> BarrierReport:
    """Ordering margins min(w_hat - lower) and min(upper - w_hat).

    Negative margins are data, not failures; the window is the comparison
    region [0, (2 sigma tau)^((1-vartheta)/2)] of the trapping argument.
    """
    if tau is None:
        tau = view.tau
    p = lower.base.params
    window = (2.0 * p.sigma * tau) ** (0.5 * (1.0 - p.vartheta))
    mask = view.z <= window
    z = view.z[mask]
    wh = view.w_hat[mask]
    lo = wh - lower.value(z, tau)
    hi = upper.value(z, tau) - wh
    jl, jh = int(np.argmin(lo)), int(np.argmin(hi))
    return BarrierReport(lower_margin=float(lo[jl]), lower_argmin=float(z[jl]),
                         upper_margin=float(hi[jh]), upper_argmin=float(z[jh]),
                         window=float(window))


def convexity_report(view: TypeIIView, z_max: float) -> tuple[float, float]:
    """Minimum second difference of w_hat on [0, z_max] and its location."""
    mask = view.z <= z_max
    if mask.sum() < 7:
        raise PreconditionError("too few nodes for a convexity check")
    d2 = derivative(view.z[mask], view.w_hat[mask], 2)
    j = int(np.argmin(d2))
    return float(d2[j]), float(view.z[mask][j])


def time_derivative_ratio(state: FlowState, params: Parameters, z: float) -> float:
    """Measured d u_hat/dt at x = z (-t)^(1/2+sigma) over -(1/2+sigma)(-t)^(sigma-1/2).

    The time derivative is evaluated through the flow's own spatial operator
    (they agree by the equation of motion); along the collapse track the
    ratio tends to psi_k(z) - z psi_k'(z).
    """
    neg_t = state.neg_t
    x0 = z * params.tip_scale(neg_t)
    x, u = state.x, state.u_hat
    n = params.n
    j = int(np.searchsorted(x, x0))
    lo = min(max(j - 3, 0), x.size - 7)
    sl = slice(lo, lo + 7)
    ux = float(np.dot(fd_weights(x[sl], x0, 1), u[sl]))
    uxx = float(np.dot(fd_weights(x[sl], x0, 2), u[sl]))
    uval = float(np.dot(fd_weights(x[sl], x0, 0), u[sl]))
    if x0 < x[1]:
        ux_over_x = uxx
        ux = 0.0
    else:
        ux_over_x = ux / x0
    dudt = uxx / (1.0 + ux * ux) + (n - 1) * (ux_over_x - 1.0 / uval)
    denom = -(0.5 + params.sigma) * neg_t ** (params.sigma - 0.5)
    return dudt / denom


def mean_curvature_identity_error(s0: FlowState, s1: FlowState, params: Parameters) -> float:
    """Relative mismatch between H and the two-snapshot time derivative.

    Checks du/dt = H sqrt(1 + u_x^2) between consecutive snapshots on the
    shared interior; returns the median relative error.
    """
    if s1.t <= s0.t:
        raise PreconditionError("snapshots must be time-ordered")
    x = s0.x
    u1 = np.interp(x, s1.x, s1.u_hat)
    dudt = (u1 - s0.u_hat) / (s1.t - s0.t)
    mid = FlowState(t=0.5 * (s0.t + s1.t), x=x,
                    u_hat=0.5 * (s0.u_hat + u1))
    fld = curvature(mid, params)
    ux = derivative(x, mid.u_hat, 1)
    pred = fld.h * np.sqrt(1.0 + ux * ux)
    mask = (np.abs(pred) > 1e-12) & (x < x[-1] * 0.5) & (x > 0)
    rel = np.abs(dudt[mask] - pred[mask]) / np.abs(pred[mask])
    return float(np.median(rel))
