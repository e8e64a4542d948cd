"""Figure rendering for the report path.

Plots are written as PNG files next to the delimited outputs; they share
the same data the CSVs carry, so nothing here affects numbers.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def rate_fit_figure(path, neg_t, series: dict, fits: dict) -> Path:
    """Log-log decay series with their fitted power laws."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for name, vals in series.items():
        vals = np.asarray(vals)
        mask = vals > 0
        ax.loglog(neg_t[mask], vals[mask], "o", ms=3.5, label=name)
        fit = fits.get(name)
        if fit is not None:
            grid = np.geomspace(neg_t[mask].min(), neg_t[mask].max(), 50)
            ax.loglog(grid, np.exp(fit.intercept) * grid ** fit.exponent, "-",
                      lw=1.0, color=ax.lines[-1].get_color(),
                      label=f"{name} fit: {fit.exponent:+.4f}")
    ax.set_xlabel(r"$-t$")
    ax.set_ylabel("sup norm")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def distance_figure(path, tau, profile_dist, cone_dist) -> Path:
    """Convergence of the collapse view to the minimal profile and the cone."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.loglog(tau, profile_dist, "o-", ms=3.5, label=r"sup |w - profile| on tip window")
    ax.loglog(tau, cone_dist, "s-", ms=3.5, label="sup |v| on annulus")
    ax.set_xlabel(r"$\tau$")
    ax.set_ylabel("distance")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def ratio_figure(path, neg_t, ratio) -> Path:
    """Mean curvature to second-fundamental-form ratio in the collapse core."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.loglog(neg_t, ratio, "o-", ms=3.5)
    ax.set_xlabel(r"$-t$")
    ax.set_ylabel(r"sup $|H|$ / sup $|A|$ (tip region)")
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def profile_figure(path, r, psi_hat, label: str) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.plot(r, psi_hat, lw=1.2, label=label)
    ax.plot(r, r, "--", lw=0.8, color="gray", label="diagonal")
    ax.set_xlabel("r")
    ax.set_ylabel("profile height")
    ax.set_xlim(0, min(10.0, r.max()))
    ax.set_ylim(0, min(11.0, psi_hat.max()))
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)
