"""Matplotlib rendering for the report commands.

Every CLI command that writes delimited output can also render a figure
next to it.  All functions take already-computed arrays and a target file
path; nothing here recomputes physics.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

plt.rcParams.update({
    "figure.figsize": (6.0, 3.8),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
})

HL_COLOR = "#6a3d9a"
SNL_COLOR = "#e31a1c"


def _finish(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_sweep(param_name: str, values, deviations, stderrs, path,
               snl: float | None = None, hl: float | None = None) -> Path:
    """Deviation vs sweep parameter with reference lines."""
    fig, ax = plt.subplots()
    ax.errorbar(values, deviations, yerr=stderrs, fmt="o-", ms=4, capsize=2,
                color="#b8860b", label="simulation")
    if hl is not None:
        ax.axhline(hl, color=HL_COLOR, ls="-", lw=1, label="Heisenberg limit")
    if snl is not None:
        ax.axhline(snl, color=SNL_COLOR, ls="--", lw=1, label="shot-noise limit")
    ax.set_xlabel(param_name)
    ax.set_ylabel("Holevo deviation")
    ax.legend(loc="best")
    return _finish(fig, path)


def plot_outcome_curves(phis, probabilities, estimates, path) -> Path:
    """One panel per measurement record: P(record | phase) over the phase."""
    n = probabilities.shape[1]
    bits = int(math.log2(n))
    ncols = 4
    nrows = (n + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(2.6 * ncols, 2.0 * nrows),
                             sharex=True, sharey=True)
    for y, ax in enumerate(np.ravel(axes)[:n]):
        ax.plot(phis, probabilities[:, y], color="#b8860b", lw=1.2)
        ax.axvline(estimates[y], color="gray", ls=":", lw=0.8)
        ax.set_title(format(y, f"0{bits}b"), fontsize=8)
    for ax in np.ravel(axes)[n:]:
        ax.axis("off")
    fig.supxlabel("true phase (rad)")
    fig.supylabel("probability")
    return _finish(fig, path)


def plot_pdf_curves(phi_est, densities, labels, path) -> Path:
    """Analytic estimate densities, one curve per coefficient set."""
    fig, ax = plt.subplots()
    for dens, label in zip(densities, labels):
        ax.plot(phi_est, dens, lw=1.2, label=label)
    ax.set_xlabel("phase estimate (rad)")
    ax.set_ylabel("density")
    ax.legend(loc="best")
    return _finish(fig, path)


def plot_hom(xi_products, p_coins, visibilities, path) -> Path:
    fig, ax = plt.subplots()
    ax.plot(xi_products, p_coins, "o-", ms=3, color="#1f78b4",
            label="coincidence probability")
    ax.plot(xi_products, visibilities, "s--", ms=3, color="#33a02c",
            label="visibility")
    ax.set_xlabel("overlap product")
    ax.set_ylabel("value")
    ax.legend(loc="best")
    return _finish(fig, path)


def plot_phase_deviation(phis, deviations, path, mean_deviation=None,
                         snl: float | None = None,
                         hl: float | None = None) -> Path:
    """Phase-dependent deviation profile with reference lines."""
    fig, ax = plt.subplots()
    ax.plot(phis, deviations, "o-", ms=2.5, lw=0.8, color="#ff7f00",
            label="phase-dependent deviation")
    if mean_deviation is not None:
        ax.axhline(mean_deviation, color="#1f78b4", lw=1.2,
                   label="phase-averaged deviation")
    if hl is not None:
        ax.axhline(hl, color=HL_COLOR, ls="-", lw=1, label="Heisenberg limit")
    if snl is not None:
        ax.axhline(snl, color=SNL_COLOR, ls="--", lw=1, label="shot-noise limit")
    ax.set_xlabel("true phase (rad)")
    ax.set_ylabel("Holevo deviation")
    ax.legend(loc="best", fontsize=7)
    return _finish(fig, path)
