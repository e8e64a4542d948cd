"""Linearized-operator spectrum in the Gaussian-weighted radial space.

The operator acting on perturbations of the type I rescaled cone graph is

    L f = -( f'' + 2(n-1)(y f' + f)/y^2 + (-y f' + f)/2 ),

self-adjoint for the inner product with weight y^(2(n-1)) exp(-y^2/4) on
(0, inf).  Its eigenvalues are lam_i = -(1-alpha)/2 + i with eigenfunctions
c_i y^alpha M(-i, n+alpha-1/2; y^2/4), where M is the confluent
hypergeometric series (terminating for nonpositive integer first argument).
The normalization constants c_i are fixed by unit weighted norm and are
computed by quadrature, not asserted against closed forms.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import expit, roots_legendre

from .errors import NumericError, PreconditionError
from .params import Parameters

_MAX_SERIES_TERMS = 400


def kummer_m(a: float, b: float, xi):
    """Confluent hypergeometric series M(a, b; xi).

    Terminates exactly (polynomial of degree -a) when ``a`` is a nonpositive
    integer, which is the only case the eigenbasis needs; other ``a`` are
    summed until the terms fall below machine precision.
    """
    if b <= 0 and float(b).is_integer():
        raise PreconditionError(f"Kummer b = {b} is a nonpositive integer (pole)")
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < 0):
        raise PreconditionError("kummer_m expects xi >= 0")
    out = np.ones_like(xi)
    term = np.ones_like(xi)
    terminating = a <= 0 and float(a).is_integer()
    n_terms = int(-a) if terminating else _MAX_SERIES_TERMS
    for j in range(n_terms):
        term = term * ((a + j) / (b + j)) * xi / (j + 1.0)
        out = out + term
        if not terminating and np.all(np.abs(term) <= 1e-17 * np.abs(out)):
            break
    else:
        if not terminating:
            raise NumericError(f"Kummer series did not converge for a={a}, b={b}")
    return out if out.ndim else float(out)


def cutoff_zeta(r):
    """Smooth non-decreasing transition: 0 for r <= 0, 1 for r >= 1.

    Realized as the standard exp(-1/t) partition function, so it is C-infinity
    with all derivatives vanishing at both ends.
    """
    r = np.asarray(r, dtype=float)
    out = np.where(r >= 1.0, 1.0, 0.0)
    inside = (r > 0.0) & (r < 1.0)
    ri = np.where(inside, r, 0.5)
    out = np.where(inside, expit(1.0 / (1.0 - ri) - 1.0 / ri), out)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Quadrature:
    """Fixed Gauss-Legendre composite rule on [0, y_max].

    ``w`` already contains the measure weight y^(2(n-1)) exp(-y^2/4), so a
    weighted inner product is a plain dot product of samples.
    """

    y: np.ndarray
    w: np.ndarray
    y_max: float
    n_panels: int
    nodes_per_panel: int

    def __len__(self) -> int:
        return self.y.size


def _weight(y: np.ndarray, n: int) -> np.ndarray:
    return y ** (2 * (n - 1)) * np.exp(-y * y / 4.0)


def make_quadrature(params: Parameters, y_max: float | None = None,
                    n_panels: int = 160, nodes_per_panel: int = 12) -> Quadrature:
    if y_max is None:
        # Far enough out that the heaviest integrand (two top eigenfunctions)
        # is below 1e-19 relative at the cut.
        p = 2 * (params.n - 1) + 2 * params.alpha + 4 * 6 + 2
        y = 20.0
        while y * y / 4.0 - p * math.log(y) < 46.0:
            y += 1.0
        y_max = y
    xg, wg = roots_legendre(nodes_per_panel)
    edges = np.linspace(0.0, y_max, n_panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    y = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    w = (half[:, None] * wg[None, :]).ravel() * _weight(y, params.n)
    return Quadrature(y=y, w=w, y_max=float(y_max),
                      n_panels=n_panels, nodes_per_panel=nodes_per_panel)


def weighted_inner(f: np.ndarray, g: np.ndarray, quad: Quadrature) -> float:
    """Weighted inner product of samples taken on the quadrature nodes.

    Rejects sample pairs whose product grows faster than y^(1-2(n-1)) toward
    y = 0, since the weighted integral would diverge there.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != quad.y.shape or g.shape != quad.y.shape:
        raise PreconditionError("samples must be aligned with the quadrature nodes")
    fg0, fg1 = f[0] * g[0], f[1] * g[1]
    if fg0 != 0.0 and fg1 != 0.0:
        # weight contributes y^(2(n-1)); estimate the product's local power
        n_weight = round(math.log(quad.w[1] / quad.w[0]) / math.log(quad.y[1] / quad.y[0]))
        p = math.log(abs(fg1 / fg0)) / math.log(quad.y[1] / quad.y[0])
        if p + n_weight < -1.0:
            raise PreconditionError(
                f"integrand behaves like y^{p + n_weight:.2f} near 0 (non-integrable)")
    return float(np.dot(quad.w, f * g))


def grid_quadrature(y: np.ndarray, n: int) -> Quadrature:
    """Trapezoid-rule quadrature on an arbitrary grid, weight folded in.

    Convenience for inner products of functions sampled on finite-difference
    grids rather than on the Gauss nodes.
    """
    y = np.asarray(y, dtype=float)
    w = np.empty_like(y)
    w[1:-1] = 0.5 * (y[2:] - y[:-2])
    w[0] = 0.5 * (y[1] - y[0])
    w[-1] = 0.5 * (y[-1] - y[-2])
    return Quadrature(y=y, w=w * _weight(y, n), y_max=float(y[-1]),
                      n_panels=0, nodes_per_panel=0)


@dataclass(frozen=True)
class SpectralBasis:
    """Normalized eigenfunctions of L plus the quadrature used to build them."""

    params: Parameters
    m: int
    c: np.ndarray
    quad: Quadrature

    def to_json(self) -> str:
        p = self.params
        return json.dumps({
            "n": p.n,
            "alpha": p.alpha,
            "lambda": list(p.lam[: self.m + 1]),
            "c": [float(ci) for ci in self.c],
            "quadrature": {
                "y_max": self.quad.y_max,
                "n_panels": self.quad.n_panels,
                "nodes_per_panel": self.quad.nodes_per_panel,
            },
        }, indent=2)


def make_basis(params: Parameters, m: int | None = None,
               quad: Quadrature | None = None) -> SpectralBasis:
    if m is None:
        m = len(params.lam) - 1
    if m > len(params.lam) - 1:
        raise PreconditionError(f"m = {m} exceeds the {len(params.lam) - 1} derived eigenvalues")
    if quad is None:
        quad = make_quadrature(params)
    b = params.kummer_b
    c = np.empty(m + 1)
    ya = quad.y ** params.alpha
    for i in range(m + 1):
        f = ya * kummer_m(-i, b, quad.y * quad.y / 4.0)
        norm2 = float(np.dot(quad.w, f * f))
        if not norm2 > 0.0:
            raise NumericError(f"non-positive norm for eigenfunction {i}")
        c[i] = 1.0 / math.sqrt(norm2)
    return SpectralBasis(params=params, m=m, c=c, quad=quad)


def eigenfunction(basis: SpectralBasis, i: int, y):
    """i-th normalized eigenfunction c_i y^alpha M(-i, b; y^2/4) at y > 0."""
    if not 0 <= i <= basis.m:
        raise PreconditionError(f"eigenfunction index {i} outside 0..{basis.m}")
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise PreconditionError("eigenfunctions are evaluated at y > 0")
    p = basis.params
    out = basis.c[i] * y ** p.alpha * kummer_m(-i, p.kummer_b, y * y / 4.0)
    return out if out.ndim else float(out)


def gram_matrix(basis: SpectralBasis) -> np.ndarray:
    """Matrix of weighted inner products of the normalized eigenfunctions."""
    fs = [eigenfunction(basis, i, basis.quad.y) for i in range(basis.m + 1)]
    g = np.empty((basis.m + 1, basis.m + 1))
    for i in range(basis.m + 1):
        for j in range(i + 1):
            g[i, j] = g[j, i] = float(np.dot(basis.quad.w, fs[i] * fs[j]))
    return g


def apply_L(basis: SpectralBasis, f: np.ndarray, y: np.ndarray):
    """Apply L by 4th-order central differences on a uniform grid.

    Returns (interior y, L f on interior).  The grid must be uniform and
    fine; the two cells at each end feed the stencil only.
    """
    y = np.asarray(y, dtype=float)
    f = np.asarray(f, dtype=float)
    h = y[1] - y[0]
    if not np.allclose(np.diff(y), h, rtol=1e-10, atol=0):
        raise PreconditionError("apply_L needs a uniform grid")
    if h > 5e-3:
        raise NumericError(f"grid spacing {h:.2e} too coarse; need <= 5e-3 for 4th order")
    n = basis.params.n
    fi = f[2:-2]
    yi = y[2:-2]
    d1 = (-f[4:] + 8.0 * f[3:-1] - 8.0 * f[1:-3] + f[:-4]) / (12.0 * h)
    d2 = (-f[4:] + 16.0 * f[3:-1] - 30.0 * fi + 16.0 * f[1:-3] - f[:-4]) / (12.0 * h * h)
    lf = -(d2 + 2.0 * (n - 1) * (yi * d1 + fi) / (yi * yi) + 0.5 * (-yi * d1 + fi))
    return yi, lf


@dataclass(frozen=True)
class ProjectionResult:
    """Components of the localized projection onto the two unstable modes."""

    phi0: float
    phi1: float
    s: float

    def norm(self) -> float:
        return math.hypot(self.phi0, self.phi1)


def _cutoff_window(y: np.ndarray, s: float, rho: float, beta: float,
                   sigma: float) -> np.ndarray:
    return cutoff_zeta(np.exp(sigma * s) * y - beta) * cutoff_zeta(rho * np.exp(s / 2.0) - y)


def project_phi(basis: SpectralBasis, view, rho: float, beta: float) -> ProjectionResult:
    """Project a type I snapshot onto the two lowest modes through the cutoffs.

    ``view`` needs attributes ``y``, ``v`` and ``s``.  The snapshot must cover
    the cutoff support (up to the quadrature truncation); outside its own
    range the function is extended by zero.
    """
    p = basis.params
    s = view.s
    y_lo = beta * math.exp(-p.sigma * s)
    y_hi = min(rho * math.exp(s / 2.0), basis.quad.y_max)
    if view.y[0] > y_lo or view.y[-1] < y_hi:
        raise PreconditionError(
            f"snapshot domain [{view.y[0]:.3g}, {view.y[-1]:.3g}] does not cover "
            f"the cutoff support [{y_lo:.3g}, {y_hi:.3g}]")
    interp = PchipInterpolator(view.y, view.v, extrapolate=False)
    vq = interp(basis.quad.y)
    vq = np.where(np.isfinite(vq), vq, 0.0)
    vq *= _cutoff_window(basis.quad.y, s, rho, beta, p.sigma)
    phi = [float(np.dot(basis.quad.w, vq * basis.c[i] * eigenfunction(basis, i, basis.quad.y)))
           for i in (0, 1)]
    return ProjectionResult(phi0=phi[0], phi1=phi[1], s=s)


def mode_coefficient(basis: SpectralBasis, view, rho: float, beta: float, i: int) -> float:
    """Cutoff-localized coefficient <zeta zeta v, c_i phi_i> of mode i."""
    p = basis.params
    interp = PchipInterpolator(view.y, view.v, extrapolate=False)
    vq = interp(basis.quad.y)
    vq = np.where(np.isfinite(vq), vq, 0.0)
    vq *= _cutoff_window(basis.quad.y, view.s, rho, beta, p.sigma)
    return float(np.dot(basis.quad.w, vq * basis.c[i] * eigenfunction(basis, i, basis.quad.y)))


def cutoff_gram_deficit(basis: SpectralBasis, s0: float, rho: float, beta: float,
                        i: int, j: int) -> float:
    """Deficit <(1 - zeta zeta) phi_i, phi_j> of the localized Gram entry.

    Computed directly as an integral over the two cutoff shoulders, which
    stays accurate when the deficit is far below machine epsilon relative
    to 1 (it decays like exp(-2(n+alpha-1/2) sigma s0)).
    """
    p = basis.params
    lo_hi = (beta + 1.0) * math.exp(-p.sigma * s0)
    hi_lo = rho * math.exp(s0 / 2.0) - 1.0
    xg, wg = roots_legendre(16)

    def shoulder(a: float, b: float) -> float:
        if b <= a:
            return 0.0
        edges = np.linspace(a, b, 33)
        mid = 0.5 * (edges[:-1] + edges[1:])
        half = 0.5 * np.diff(edges)
        y = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
        w = (half[:, None] * wg[None, :]).ravel() * _weight(y, p.n)
        g = (1.0 - _cutoff_window(y, s0, rho, beta, p.sigma))
        fi = eigenfunction(basis, i, y)
        fj = eigenfunction(basis, j, y)
        return float(np.dot(w, g * fi * fj))

    out = shoulder(1e-300, lo_hi)
    if hi_lo < basis.quad.y_max:
        out += shoulder(max(hi_lo, lo_hi), basis.quad.y_max + 6.0)
    return out
