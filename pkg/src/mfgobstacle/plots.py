"""Figure rendering for the report path.

Pure matplotlib-to-file helpers so CLI runs drop plots next to the CSV and
JSON artifacts.  Kept import-light at the package level: matplotlib is only
pulled in when a figure is actually rendered.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

DPI = 150


def _plot_scalar_field(ax, field, label):
    grid = field.grid
    if grid.dims == 1:
        x = grid.axes()[0]
        ax.plot(x, field.values, lw=1.2)
        ax.set_xlabel("x")
        ax.set_ylabel(label)
    else:
        xs, ys = grid.axes()
        mesh = ax.pcolormesh(xs, ys, field.values.T, shading="nearest")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.set_aspect("equal")
        plt.colorbar(mesh, ax=ax, label=label)
    ax.set_title(label)


def save_solution_figure(u, theta, path, epsilon=None) -> Path:
    """Value function and density side by side."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.4), constrained_layout=True)
    _plot_scalar_field(axes[0], u, "u")
    _plot_scalar_field(axes[1], theta, "theta")
    if epsilon is not None:
        fig.suptitle(f"epsilon = {epsilon:g}")
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return Path(path)


def save_trace_figure(trace_rows, path) -> Path:
    """Schedule trace: positive-part mass, residuals, density range, cap use."""
    rows = list(trace_rows)
    eps = np.array([r.epsilon for r in rows])
    fig, axes = plt.subplots(2, 2, figsize=(9, 6.4), constrained_layout=True)

    ax = axes[0, 0]
    uplus = np.array([r.int_u_plus for r in rows])
    pos = uplus > 0
    if pos.any():
        ax.loglog(eps[pos], uplus[pos], "o-", label="int u+")
        if pos.sum() >= 2:
            slope = np.polyfit(np.log(eps[pos]), np.log(uplus[pos]), 1)[0]
            ax.set_title(f"int u+ vs eps (slope {slope:.2f})")
    else:
        ax.set_title("int u+ identically zero")
    ax.set_xlabel("epsilon")
    ax.grid(True, which="both", alpha=0.3)

    ax = axes[0, 1]
    ax.semilogy(eps, np.maximum([r.residual_norm for r in rows], 1e-18), "o-")
    ax.set_xlabel("epsilon")
    ax.set_title("final residual norm")
    ax.grid(True, alpha=0.3)

    ax = axes[1, 0]
    ax.plot(eps, [r.min_theta for r in rows], "o-", label="min theta")
    ax.plot(eps, [r.max_theta for r in rows], "s-", label="max theta")
    ax.set_xlabel("epsilon")
    ax.legend()
    ax.set_title("density range")
    ax.grid(True, alpha=0.3)

    ax = axes[1, 1]
    ax.plot(eps, [r.max_beta_prime for r in rows], "o-")
    ax.set_xlabel("epsilon")
    ax.set_title("max penalization slope")
    ax.grid(True, alpha=0.3)

    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return Path(path)


def save_uniqueness_figure(solutions, path) -> Path:
    """Overlay the final value functions of several starts (1D shows curves,
    2D shows the spread of pairwise differences)."""
    fig, ax = plt.subplots(figsize=(6, 3.6), constrained_layout=True)
    first = solutions[0].u
    if first.grid.dims == 1:
        x = first.grid.axes()[0]
        for k, sol in enumerate(solutions):
            ax.plot(x, sol.u.values, lw=1.0, label=f"start {k}")
        ax.set_xlabel("x")
        ax.set_ylabel("u")
        ax.legend()
    else:
        base = solutions[0].u.values
        spreads = [np.abs(sol.u.values - base).max() for sol in solutions]
        ax.bar(range(len(spreads)), spreads)
        ax.set_xlabel("start")
        ax.set_ylabel("max |u - u0|")
    ax.set_title("multi-start coincidence")
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return Path(path)
