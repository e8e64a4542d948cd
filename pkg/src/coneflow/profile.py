"""Rotationally symmetric minimal profile asymptotic to the diagonal cone.

The radial profile solves

    psi'' / (1 + psi'^2) + (n-1) (psi'/r - 1/psi) = 0,
    psi'(0) = 0,  psi(r) > r,  (psi(r) - r) / r^alpha -> 2^((alpha+1)/2),

with the canonical tail normalization selecting one member of the scaling
family psi_k(r) = k^(1/(1-alpha)) psi(k^(-1/(1-alpha)) r).  The equation has
a removable singularity at r = 0 handled by a series start, and the tail
limit converges only like r^(2(alpha-1)), so the shooting target applies
one Richardson step between r_max/2 and r_max.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq
from scipy.special import roots_legendre

from .errors import NumericError, PreconditionError
from .params import Parameters

_NODES_PER_DECADE = 60  # profile export grid; dense enough for 1e-8 interpolation


def _rhs(r, y, n):
    psi, p = y
    return [p, (1.0 + p * p) * (n - 1.0) * (1.0 / psi - p / r)]


class _CanonicalEvaluator:
    """Evaluate psi, psi', psi'' anywhere: series near 0, dense ODE solution
    in range, fitted algebraic tail beyond r_max."""

    def __init__(self, sol, c, n, alpha, r_lo, r_hi, tail_a, tail_c3):
        self.sol = sol
        self.c = c
        self.n = n
        self.alpha = alpha
        self.r_lo = r_lo
        self.r_hi = r_hi
        self.a2 = (n - 1.0) / (2.0 * n * c)
        self.tail_a = tail_a
        self.tail_c3 = tail_c3

    def _split(self, r):
        r = np.asarray(r, dtype=float)
        return r, r < self.r_lo, r > self.r_hi

    def psi(self, r):
        r, lo, hi = self._split(r)
        mid = ~lo & ~hi
        out = np.empty_like(r)
        out[lo] = self.c + self.a2 * r[lo] ** 2
        if mid.any():
            out[mid] = self.sol(r[mid])[0]
        a = self.alpha
        out[hi] = r[hi] + self.tail_a * r[hi] ** a + self.tail_c3 * r[hi] ** (3 * a - 2)
        return out

    def dpsi(self, r):
        r, lo, hi = self._split(r)
        mid = ~lo & ~hi
        out = np.empty_like(r)
        out[lo] = 2.0 * self.a2 * r[lo]
        if mid.any():
            out[mid] = self.sol(r[mid])[1]
        a = self.alpha
        out[hi] = (1.0 + self.tail_a * a * r[hi] ** (a - 1)
                   + self.tail_c3 * (3 * a - 2) * r[hi] ** (3 * a - 3))
        return out

    def ddpsi(self, r):
        r = np.asarray(r, dtype=float)
        psi = self.psi(r)
        p = self.dpsi(r)
        out = np.empty_like(r)
        tiny = r < 1e-12
        out[tiny] = (self.n - 1.0) / (self.n * psi[tiny])
        rt = r[~tiny]
        out[~tiny] = ((1.0 + p[~tiny] ** 2) * (self.n - 1.0)
                      * (1.0 / psi[~tiny] - p[~tiny] / rt))
        return out


class _ScaledEvaluator:
    """psi_k(r) = s * psi(r/s) with s = k^(1/(1-alpha))."""

    def __init__(self, base, s):
        self.base = base
        self.s = s

    def psi(self, r):
        return self.s * self.base.psi(np.asarray(r, dtype=float) / self.s)

    def dpsi(self, r):
        return self.base.dpsi(np.asarray(r, dtype=float) / self.s)

    def ddpsi(self, r):
        return self.base.ddpsi(np.asarray(r, dtype=float) / self.s) / self.s


@dataclass(frozen=True, eq=False)
class ProfileSolution:
    """Minimal profile at one scale k, tabulated on a radial grid."""

    params: Parameters
    k: float
    r: np.ndarray
    psi_hat: np.ndarray
    dpsi_hat: np.ndarray
    ddpsi_hat: np.ndarray
    asym_coeff: float
    _ev: object = field(repr=False)

    def value(self, r):
        return self._ev.psi(r)

    def slope(self, r):
        return self._ev.dpsi(r)

    def second(self, r):
        return self._ev.ddpsi(r)

    @property
    def tip_height(self) -> float:
        return float(self.psi_hat[0])

    def wronskian(self, r):
        """psi - r psi', strictly positive and decreasing on the profile."""
        r = np.asarray(r, dtype=float)
        return self._ev.psi(r) - r * self._ev.dpsi(r)


def _tail_measure(evalp, evadp, r_max, alpha):
    """Richardson-corrected tail coefficient of (psi - r)/r^alpha."""
    f1 = (evalp(r_max) - r_max) / r_max ** alpha
    f2 = (evalp(r_max / 2) - r_max / 2) / (r_max / 2) ** alpha
    q = 2.0 ** (2.0 * (1.0 - alpha))
    a = f1 - (f2 - f1) / (q - 1.0)
    c3 = (f1 - a) * r_max ** (2.0 - 2.0 * alpha)
    return float(a), float(c3)


def _integrate(params, c, r_max, rtol):
    n = params.n
    r0 = 1e-6 * c
    a2 = (n - 1.0) / (2.0 * n * c)
    y0 = [c + a2 * r0 * r0, 2.0 * a2 * r0]
    sol = solve_ivp(_rhs, (r0, r_max), y0, args=(n,), method="DOP853",
                    rtol=rtol, atol=rtol * 1e-2, dense_output=True)
    if not sol.success:
        raise NumericError(f"profile integration failed at psi(0)={c}: {sol.message}")
    return sol, r0


def solve_profile(params: Parameters, r_max: float = 60.0, tol: float = 1e-6) -> ProfileSolution:
    """Solve the canonical (k = 1) profile by shooting on psi(0).

    The tip value psi(0) is not known in closed form; it is the unique value
    for which the Richardson-corrected tail coefficient equals
    2^((alpha+1)/2).  The scaling law tail(c) = tail(1) * c^(1-alpha) gives
    the first guess, then a bracketed root find pins it down.
    """
    if r_max < 50.0:
        raise PreconditionError(f"r_max = {r_max} < 50 leaves the tail unresolved")
    if not 0.0 < tol <= 1e-4:
        raise PreconditionError(f"tol = {tol} outside (0, 1e-4]")
    rtol = min(tol / 10.0, 1e-11)
    alpha = params.alpha
    target = params.tail_coeff

    def tail_of(c):
        sol, _ = _integrate(params, c, r_max, rtol)
        a, _ = _tail_measure(lambda r: sol.sol(r)[0], lambda r: sol.sol(r)[1], r_max, alpha)
        return a

    a1 = tail_of(1.0)
    c_guess = (target / a1) ** (1.0 / (1.0 - alpha))
    lo, hi = c_guess * 0.98, c_guess * 1.02
    g = lambda c: tail_of(c) - target
    g_lo, g_hi = g(lo), g(hi)
    widen = 0
    while g_lo * g_hi > 0.0:
        widen += 1
        if widen > 6:
            raise NumericError(
                f"shooting bracket never straddles the asymptote: "
                f"psi(0) in [{lo:.6g}, {hi:.6g}] gives tail offsets "
                f"[{g_lo:.3e}, {g_hi:.3e}] against target {target:.6g}")
        lo, hi = lo * 0.9, hi * 1.1
        g_lo, g_hi = g(lo), g(hi)
    c_star = brentq(g, lo, hi, xtol=1e-13, rtol=8.9e-16)

    res, r0 = _integrate(params, c_star, r_max, rtol)
    sol = res.sol
    tail_a, tail_c3 = _tail_measure(lambda r: sol(r)[0], lambda r: sol(r)[1], r_max, alpha)
    ev = _CanonicalEvaluator(sol, c_star, params.n, alpha, r0, r_max, tail_a, tail_c3)

    r_lo = 1e-3 * c_star
    decades = math.log10(r_max / r_lo)
    grid = np.concatenate([[0.0], np.geomspace(r_lo, r_max, int(decades * _NODES_PER_DECADE) + 1)])
    psi = ev.psi(grid)
    dpsi = ev.dpsi(grid)
    dpsi[0] = 0.0
    ddpsi = ev.ddpsi(grid)

    prof = ProfileSolution(params=params, k=1.0, r=grid, psi_hat=psi,
                           dpsi_hat=dpsi, ddpsi_hat=ddpsi,
                           asym_coeff=tail_a, _ev=ev)
    _validate_profile(prof, tol)
    return prof


def _validate_profile(prof: ProfileSolution, tol: float) -> None:
    if np.any(prof.psi_hat <= prof.r):
        raise NumericError("profile dipped below the cone")
    if np.any(prof.ddpsi_hat <= 0.0):
        raise NumericError("profile lost convexity")
    if np.any(prof.wronskian(prof.r) <= 0.0):
        raise NumericError("psi - r psi' lost positivity")
    defect = ode_defect(prof)
    if defect > tol:
        raise NumericError(
            f"integrated ODE defect {defect:.3e} exceeds tol {tol:.1e}; grid too coarse")


def ode_defect(prof: ProfileSolution, points_per_decade: int = 40) -> float:
    """Max integrated-ODE defect of the stored solution.

    On each panel of a dense check grid, compares the increment of psi' with
    the Gauss-Legendre quadrature of the right-hand side evaluated through
    the profile's own interpolant, normalized by panel length.  This bounds
    the pointwise residual of the returned curve without re-differentiating.
    """
    r_lo = max(prof.r[1], 1e-3 * prof.tip_height)
    r_hi = prof.r[-1] * 0.98
    decades = math.log10(r_hi / r_lo)
    edges = np.geomspace(r_lo, r_hi, int(decades * points_per_decade) + 1)
    xg, wg = roots_legendre(5)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    rq = mid[:, None] + half[:, None] * xg[None, :]
    n = prof.params.n
    psi = prof.value(rq.ravel()).reshape(rq.shape)
    p = prof.slope(rq.ravel()).reshape(rq.shape)
    integrand = (1.0 + p * p) * (n - 1.0) * (1.0 / psi - p / rq)
    inc = (half * np.dot(integrand, wg))
    defect = np.abs(prof.slope(edges[1:]) - prof.slope(edges[:-1]) - inc) / (2.0 * half)
    return float(defect.max())


def scale_profile(base: ProfileSolution, k: float) -> ProfileSolution:
    """Member psi_k of the scaling family, tabulated on the base grid."""
    if k <= 0.0:
        raise PreconditionError(f"scale k must be positive, got {k}")
    if base.k != 1.0:
        raise PreconditionError("scale_profile expects the canonical k = 1 solution")
    if k == 1.0:
        return base
    s = k ** (1.0 / (1.0 - base.params.alpha))
    ev = _ScaledEvaluator(base._ev, s)
    psi = ev.psi(base.r)
    dpsi = ev.dpsi(base.r)
    dpsi[0] = 0.0
    return ProfileSolution(params=base.params, k=k, r=base.r, psi_hat=psi,
                           dpsi_hat=dpsi, ddpsi_hat=ev.ddpsi(base.r),
                           asym_coeff=k * base.asym_coeff, _ev=ev)


@dataclass(frozen=True, eq=False)
class ConeGraph:
    """The profile rewritten as a graph over the diagonal line."""

    params: Parameters
    k: float
    z: np.ndarray
    psi: np.ndarray
    dpsi: np.ndarray
    ddpsi: np.ndarray
    _prof: ProfileSolution = field(repr=False)
    _x_of_z: object = field(repr=False)

    def value(self, z):
        x = self._invert(z)
        return (self._prof.value(x) - x) / math.sqrt(2.0)

    def slope(self, z):
        p = self._prof.slope(self._invert(z))
        return (p - 1.0) / (p + 1.0)

    def _invert(self, z):
        z = np.asarray(z, dtype=float)
        x = np.clip(self._x_of_z(np.clip(z, self.z[0], self.z[-1])), 0.0, None)
        # beyond the table the curve hugs the diagonal, so x ~ z/sqrt(2)
        x = np.where(z > self.z[-1], z / math.sqrt(2.0), x)
        # Newton polish: F(x) = (x + psi(x))/sqrt(2) - z
        for _ in range(3):
            f = (x + self._prof.value(x)) / math.sqrt(2.0) - z
            fp = (1.0 + self._prof.slope(x)) / math.sqrt(2.0)
            x = np.clip(x - f / fp, 0.0, None)
        return x


def to_cone_graph(profile: ProfileSolution) -> ConeGraph:
    """Rotate the radial profile 45 degrees into diagonal-graph form."""
    s2 = math.sqrt(2.0)
    z = (profile.r + profile.psi_hat) / s2
    if np.any(np.diff(z) <= 0.0):
        raise NumericError("rotated coordinate not monotone; profile invalid")
    psi = (profile.psi_hat - profile.r) / s2
    dpsi = (profile.dpsi_hat - 1.0) / (profile.dpsi_hat + 1.0)
    ddpsi = 2.0 * s2 * profile.ddpsi_hat / (1.0 + profile.dpsi_hat) ** 3
    x_of_z = PchipInterpolator(z, profile.r, extrapolate=True)
    return ConeGraph(params=profile.params, k=profile.k, z=z, psi=psi,
                     dpsi=dpsi, ddpsi=ddpsi, _prof=profile, _x_of_z=x_of_z)


@dataclass(frozen=True, eq=False)
class BarrierProfile:
    """Two-parameter perturbation psi_k^(lam,mu)(z, tau) = psi_{lam(tau) k}(z / mu(tau))."""

    base: ProfileSolution
    lambda_fn: object
    mu_fn: object

    def _scales(self, tau):
        lam = float(self.lambda_fn(tau))
        mu = float(self.mu_fn(tau))
        if lam <= 0.0 or mu <= 0.0:
            raise PreconditionError(f"barrier scales must stay positive: lam={lam}, mu={mu}")
        return lam, mu

    def value(self, z, tau: float):
        lam, mu = self._scales(tau)
        s = lam ** (1.0 / (1.0 - self.base.params.alpha))
        return s * self.base.value(np.asarray(z, dtype=float) / (s * mu))

    def dlambda(self, z, tau: float):
        """Partial derivative in lambda, via the closed-form expansion."""
        lam, mu = self._scales(tau)
        a = self.base.params.alpha
        r = np.asarray(z, dtype=float) / (lam ** (1.0 / (1.0 - a)) * mu)
        return lam ** (a / (1.0 - a)) / (1.0 - a) * self.base.wronskian(r)

    def dmu(self, z, tau: float):
        lam, mu = self._scales(tau)
        a = self.base.params.alpha
        s = lam ** (1.0 / (1.0 - a))
        r = np.asarray(z, dtype=float) / (s * mu)
        return -(s / mu) * r * self.base.slope(r)

    def pde_residual(self, z, tau: float, dtau: float | None = None):
        """Right-hand side of the evolution equation the perturbation obeys.

        A nonpositive value at all (z, tau) makes the perturbation a lower
        barrier for the type II rescaled flow (and vice versa).  Time
        derivatives of lambda and mu are taken by central differences.
        """
        lam, mu = self._scales(tau)
        if dtau is None:
            dtau = 1e-6 * tau
        lam_dot = (float(self.lambda_fn(tau + dtau)) - float(self.lambda_fn(tau - dtau))) / (2 * dtau)
        mu_dot = (float(self.mu_fn(tau + dtau)) - float(self.mu_fn(tau - dtau))) / (2 * dtau)
        p = self.base.params
        a = p.alpha
        n = p.n
        sig = p.sigma
        s = lam ** (1.0 / (1.0 - a))
        z = np.asarray(z, dtype=float)
        r = z / (s * mu)
        w = self.base.wronskian(r)
        dp = self.base.slope(r)
        ddp = self.base.second(r)
        t1 = (-(0.5 + sig) / (2.0 * sig * tau) * s
              + lam ** (a / (1.0 - a)) / (1.0 - a) * lam_dot) * w
        t2 = -(s / mu) * mu_dot * (r * dp)
        with np.errstate(divide="ignore", invalid="ignore"):
            slope_over_r = np.where(r > 1e-12, dp / np.maximum(r, 1e-300),
                                    self.base.second(np.zeros_like(r)))
        t3 = ((mu * mu - 1.0) / (s * mu * mu)
              * (ddp / ((1.0 + dp ** 2) * (1.0 + (dp / mu) ** 2))
                 + (n - 1.0) * slope_over_r))
        return t1 + t2 + t3


def perturb_profile(base: ProfileSolution, lambda_fn, mu_fn) -> BarrierProfile:
    """Wrap a profile with time-dependent scale and stretch perturbations."""
    return BarrierProfile(base=base, lambda_fn=lambda_fn, mu_fn=mu_fn)


def make_lower_barrier(profile_k: ProfileSolution, beta: float, tau0: float) -> BarrierProfile:
    """Lower barrier: lam(tau) = 1 - beta^(alpha-3) (tau/tau0)^(-varrho), mu = 1."""
    p = profile_k.params
    if p.varrho is None:
        raise PreconditionError("lower barrier needs the n >= 5 tuning constants")
    amp = beta ** (p.alpha - 3.0)
    rho_exp = p.varrho
    return perturb_profile(profile_k,
                           lambda tau: 1.0 - amp * (tau / tau0) ** (-rho_exp),
                           lambda tau: 1.0)


def make_upper_barrier(profile_k: ProfileSolution, beta: float, tau0: float) -> BarrierProfile:
    """Upper barrier with the matched stretch factor mu_+(tau) >= 1."""
    p = profile_k.params
    if p.varrho is None:
        raise PreconditionError("upper barrier needs the n >= 5 tuning constants")
    amp = beta ** (p.alpha - 3.0)
    rho_exp = p.varrho
    sig = p.sigma
    r = np.geomspace(1e-4, 1.5 * beta, 600)
    delta = float(np.min(profile_k.wronskian(r) / (r * profile_k.slope(r)))) / (4.0 * (1.0 - p.alpha))
    if delta <= 0.0:
        raise NumericError("upper-barrier stretch coefficient came out non-positive")
    return perturb_profile(
        profile_k,
        lambda tau: 1.0 + amp * (tau / tau0) ** (-rho_exp),
        lambda tau: 1.0 + delta * amp * (2.0 * sig * tau) ** (-1.0 + rho_exp)
        * (tau / tau0) ** (-rho_exp),
    )


def _tail_fit(r: np.ndarray, vals: np.ndarray):
    mask = vals > 0.0
    if mask.sum() < 8:
        return math.nan, math.inf
    lr = np.log(r[mask])
    lv = np.log(vals[mask])
    coef, res = np.polyfit(lr, lv, 1, full=True)[:2]
    rms = math.sqrt(float(res[0]) / lr.size) if res.size else 0.0
    return float(coef[0]), rms


def decay_report(obj, m_max: int = 2, window: tuple[float, float] = (0.15, 0.85)) -> list[dict]:
    """Fitted tail decay exponents of derivative magnitudes.

    For a ``ConeGraph`` the orders m = 0..m_max are reported (expected
    exponent alpha - m); for a ``ProfileSolution`` only m >= 2 decays, so
    the report starts there.  Orders above 2 use log-grid differentiation
    of the stored curvature, hence the m_max <= 4 cap.
    """
    if m_max > 4:
        raise PreconditionError("m_max above 4 is under the finite-difference noise floor")
    alpha = obj.params.alpha
    if isinstance(obj, ConeGraph):
        r_hi = obj.z[-1]
        grid = np.geomspace(max(window[0] * r_hi, obj.z[0] * 1.5), window[1] * r_hi, 400)
        derivs = {0: np.abs(obj.value(grid)), 1: np.abs(obj.slope(grid))}
        x = obj._invert(grid)
        d2 = 2.0 * math.sqrt(2.0) * obj._prof.second(x) / (1.0 + obj._prof.slope(x)) ** 3
        derivs[2] = np.abs(d2)
        start = 0
        base_d2 = d2
    else:
        r_hi = obj.r[-1]
        grid = np.geomspace(window[0] * r_hi, window[1] * r_hi, 400)
        base_d2 = obj.second(grid)
        derivs = {2: np.abs(base_d2)}
        start = 2
    # higher orders by successive differentiation on the log grid
    ln = np.log(grid)
    d = base_d2
    for m in range(3, m_max + 1):
        d = np.gradient(d, ln) / grid
        derivs[m] = np.abs(d)
    rows = []
    partial = grid[-1] / grid[0] < 4.0
    for m in range(start, m_max + 1):
        if m not in derivs:
            continue
        slope, rms = _tail_fit(grid, derivs[m])
        rows.append({"m": m, "exponent": slope, "expected": alpha - m,
                     "residual": rms, "partial": partial})
    return rows
