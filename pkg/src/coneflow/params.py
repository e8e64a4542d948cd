"""Derived scalar constants for the radial flow, as functions of the dimension.

The ambient space is R^{2n}; every other module takes a ``Parameters``
instance instead of recomputing constants.  The decay exponent ``alpha`` is
the root in [-2, -1) of

    alpha*(alpha - 1) + 2*(n - 1)*(alpha + 1) = 0,

from which the spectral gap ``lam[i] = -(1 - alpha)/2 + i``, the rescaling
exponent ``sigma`` and the eigenfunction coefficients ``upsilon1/2`` follow
in closed form.  The degree-argument tuning constants (``varsigma``,
``vartheta``, ``varkappa``, ``varrho``) are only defined for n >= 5; they
are picked by a midpoint rule inside their admissible open intervals.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import NumericError, PreconditionError

ALPHA_TOL = 1e-12


@dataclass(frozen=True)
class Parameters:
    """All scalar constants derived from the dimension parameter n."""

    n: int
    alpha: float
    alpha_bar: float
    lam: tuple[float, ...]
    sigma: float
    upsilon1: float
    upsilon2: float
    varsigma: float | None
    vartheta: float | None
    varkappa: float | None
    varrho: float | None

    @property
    def lam2(self) -> float:
        return self.lam[2]

    @property
    def kummer_b(self) -> float:
        """Second Kummer argument n + alpha - 1/2 of the eigenfunctions."""
        return self.n + self.alpha - 0.5

    @property
    def tail_coeff(self) -> float:
        """Asymptote coefficient 2^((alpha+1)/2) of the canonical profile."""
        return 2.0 ** ((self.alpha + 1.0) / 2.0)

    def tip_scale(self, neg_t: float) -> float:
        """Collapse length scale (-t)^(1/2+sigma)."""
        return neg_t ** (0.5 + self.sigma)

    def tau_of_t(self, neg_t: float) -> float:
        """Rescaled slow time 1/(2 sigma (-t)^(2 sigma))."""
        return 1.0 / (2.0 * self.sigma * neg_t ** (2.0 * self.sigma))

    def to_dict(self) -> dict:
        d = {
            "n": self.n,
            "alpha": self.alpha,
            "alpha_bar": self.alpha_bar,
            "sigma": self.sigma,
            "upsilon1": self.upsilon1,
            "upsilon2": self.upsilon2,
            "varsigma": self.varsigma,
            "vartheta": self.vartheta,
            "varkappa": self.varkappa,
            "varrho": self.varrho,
        }
        for i, li in enumerate(self.lam):
            d[f"lambda{i}"] = li
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def derive_parameters(n: int, m: int = 6) -> Parameters:
    """Compute every constant for dimension parameter ``n``.

    ``m`` is the number of eigenvalues carried (indices 0..m).  Requires
    n >= 4 and m >= 3; the tuning constants need n >= 5 and are ``None``
    for n = 4, where their admissible interval is empty.
    """
    if int(n) != n or n < 4:
        raise PreconditionError(f"dimension parameter n must be an integer >= 4, got {n}")
    if int(m) != m or m < 3:
        raise PreconditionError(f"eigenvalue count m must be an integer >= 3, got {m}")
    n = int(n)

    disc = 4 * n * n - 20 * n + 17
    if disc < 1:
        raise PreconditionError(f"discriminant 4n^2-20n+17 = {disc} < 1 for n = {n}")
    root = math.sqrt(disc)
    alpha = (-(2 * n - 3) + root) / 2.0
    alpha_bar = (-(2 * n - 3) - root) / 2.0

    resid = alpha * (alpha - 1.0) + 2.0 * (n - 1.0) * (alpha + 1.0)
    if abs(resid) > ALPHA_TOL * max(1.0, 2.0 * n):
        raise NumericError(f"alpha root residual {resid:.3e} exceeds tolerance")
    if not (-2.0 <= alpha < -1.0):
        raise NumericError(f"alpha = {alpha} outside [-2, -1)")

    lam = tuple(-(1.0 - alpha) / 2.0 + i for i in range(m + 1))
    lam2 = lam[2]
    sigma = -0.5 + 2.0 / (1.0 - alpha)
    if not (1.0 / 6.0 - 1e-15 <= sigma < 0.5):
        raise NumericError(f"sigma = {sigma} outside [1/6, 1/2)")
    if abs(sigma - lam2 / (1.0 - alpha)) > 1e-14:
        raise NumericError("sigma/lambda2 consistency check failed")

    b = n + alpha - 0.5
    upsilon1 = -1.0 / (4.0 * b)
    upsilon2 = 1.0 / (16.0 * b * (b + 1.0))

    varsigma = vartheta = varkappa = varrho = None
    if n >= 5:
        # The admissible interval for vartheta is non-empty only when
        # varsigma exceeds (-1-alpha)(n+alpha+3/2)/(1-alpha)^2, so the
        # midpoint is taken over the sub-interval of varsigma choices that
        # keep the vartheta interval open.
        vs_hi = min((n + alpha - 2.5) / (1.0 - alpha), 1.0 / lam2)
        vs_lo = max(0.0, (-1.0 - alpha) * (n + alpha + 1.5) / (1.0 - alpha) ** 2)
        if not vs_lo < vs_hi:
            raise NumericError(f"empty varsigma interval ({vs_lo}, {vs_hi}) for n = {n}")
        varsigma = 0.5 * (vs_lo + vs_hi)

        th_lo = (-1.0 - alpha) / (1.0 - alpha)
        th_hi = min(
            (1.0 - alpha) * varsigma / (n + alpha + 1.5),
            (1.0 - alpha) / (2.0 - alpha),
            1.0 / (2.0 * sigma),
        )
        if not th_lo < th_hi:
            raise NumericError(f"empty vartheta interval ({th_lo}, {th_hi}) for n = {n}")
        vartheta = 0.5 * (th_lo + th_hi)

        varkappa = min(
            varsigma * lam2 - vartheta * sigma * (n + alpha + 1.5),
            varsigma * lam2 / 2.0,
            2.0 * (lam2 + (alpha - 2.0) * vartheta * sigma),
        )
        varrho = 1.0 - 0.5 * (1.0 - alpha) * (1.0 - vartheta)
        if varkappa <= 0.0:
            raise NumericError(f"varkappa = {varkappa} <= 0 for n = {n}")
        if not 0.0 < varrho < vartheta:
            raise NumericError(f"varrho = {varrho} outside (0, vartheta) for n = {n}")

    return Parameters(
        n=n,
        alpha=alpha,
        alpha_bar=alpha_bar,
        lam=lam,
        sigma=sigma,
        upsilon1=upsilon1,
        upsilon2=upsilon2,
        varsigma=varsigma,
        vartheta=vartheta,
        varkappa=varkappa,
        varrho=varrho,
    )
