"""Scalar estimate reports, the energy identity, and the uniqueness test.

Every a priori bounded quantity of the penalized system is computed as a
named scalar with grid quadrature and discrete derivatives, so a sweep of
reports over epsilon turns the uniform-boundedness statements into checkable
ratios.  The uniqueness diagnostic integrates the coupling monotonicity over
the set where one candidate exceeds the other.
"""
from __future__ import annotations

from dataclasses import dataclass, fields as dataclass_fields

import numpy as np

from .errors import DomainError, GridMismatchError
from .grid import GridField, gradient_values, norms
from .model import (
    ModelSpec,
    PenalizationSpec,
    coupling_floor,
    eval_coupling,
    eval_hamiltonian,
    eval_penalization,
)


@dataclass(frozen=True)
class EstimateReport:
    """Named scalars for one penalized solution."""

    epsilon: float
    min_theta: float
    int_theta: float
    int_theta_g_theta: float
    int_abs_u: float
    int_Du2_theta: float
    w22_u: float
    int_gprime_Dtheta2: float
    w12_theta_pow: float
    w12_theta: float
    linf_theta: float
    linf_Du: float
    max_beta_prime: float
    int_u_plus: float
    theta_floor_ok: bool

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclass_fields(self)}

    def to_csv(self) -> str:
        names = [f.name for f in dataclass_fields(self)]
        vals = [repr(getattr(self, n)) if n != "theta_floor_ok"
                else str(bool(getattr(self, n))).lower() for n in names]
        return ",".join(names) + "\n" + ",".join(vals) + "\n"


def estimate_report(model: ModelSpec, sol) -> EstimateReport:
    """Compute the estimate scalars for a converged penalized solution."""
    grid = sol.u.grid
    u = sol.u.values
    theta = sol.theta.values
    vol = grid.cell_volume

    grad_u = gradient_values(u, grid.spacing)
    du_sq = (grad_u * grad_u).sum(axis=-1)
    g_val, g_slope = eval_coupling(model.coupling, theta)
    grad_theta = gradient_values(theta, grid.spacing)
    dtheta_sq = (grad_theta * grad_theta).sum(axis=-1)
    _, pen_slope = eval_penalization(PenalizationSpec(sol.epsilon), u - model.obstacle)

    alpha = model.coupling.alpha
    theta_pow = GridField(grid, theta ** (0.5 * (alpha + 1.0)))

    floor = coupling_floor(model.coupling)
    min_theta = float(theta.min())
    return EstimateReport(
        epsilon=float(sol.epsilon),
        min_theta=min_theta,
        int_theta=float(theta.sum() * vol),
        int_theta_g_theta=float((theta * g_val).sum() * vol),
        int_abs_u=float(np.abs(u).sum() * vol),
        int_Du2_theta=float((du_sq * theta).sum() * vol),
        w22_u=norms(sol.u).w22,
        int_gprime_Dtheta2=float((g_slope * dtheta_sq).sum() * vol),
        w12_theta_pow=norms(theta_pow).w12,
        w12_theta=norms(sol.theta).w12,
        linf_theta=float(theta.max()),
        linf_Du=float(np.sqrt(du_sq.max())),
        max_beta_prime=float(pen_slope.max()),
        int_u_plus=float(np.maximum(u, 0.0).sum() * vol),
        theta_floor_ok=bool(min_theta >= floor - 1e-12),
    )


def energy_identity_gap(model: ModelSpec, sol) -> float:
    """Residual of the integrated energy identity at a solution candidate.

    Returns |int g(theta) theta - int (H - D_pH.Du) theta
             - int (b_eps - b_eps' u) theta - int u|.

    At a converged discrete solution the exact discrete integration by
    parts collapses this to the residual paired with u, so the gap acts as
    a solution certificate: it is at solver-tolerance level on solutions
    and order one off the solution manifold.
    """
    grid = sol.u.grid
    u = sol.u.values
    theta = sol.theta.values
    vol = grid.cell_volume

    grad_u = gradient_values(u, grid.spacing)
    jet = eval_hamiltonian(model.hamiltonian, grad_u, grid.coordinates())
    pen_val, pen_slope = eval_penalization(PenalizationSpec(sol.epsilon),
                                           u - model.obstacle)
    g_val, _ = eval_coupling(model.coupling, theta)

    drift_dot = (jet.grad_p * grad_u).sum(axis=-1)
    total = (
        (g_val * theta).sum()
        - ((jet.value - drift_dot) * theta).sum()
        - ((pen_val - pen_slope * u) * theta).sum()
        - u.sum()
    )
    return float(abs(total * vol))


@dataclass(frozen=True)
class UniquenessGap:
    """Monotonicity diagnostics on the set where one value function exceeds
    the other; every entry vanishes when the two candidates coincide."""

    set_A_measure: float
    monotonicity_integral: float
    gradient_gap: float
    linf_u_gap: float
    linf_theta_gap: float

    def __post_init__(self):
        if self.monotonicity_integral < -1e-8:
            raise DomainError(
                "monotonicity integral is negative beyond round-off; "
                "inputs violate the increasing-coupling structure"
            )

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclass_fields(self)}

    def to_csv(self) -> str:
        names = [f.name for f in dataclass_fields(self)]
        return (",".join(names) + "\n"
                + ",".join(repr(float(getattr(self, n))) for n in names) + "\n")


def uniqueness_gap(model: ModelSpec, sol1, sol2, threshold: float = 1e-8) -> UniquenessGap:
    """Compare two solution candidates on A = {u1 - u2 > threshold}."""
    u1, u2 = sol1.u, sol2.u
    th1, th2 = sol1.theta, sol2.theta
    if u1.grid != u2.grid:
        raise GridMismatchError("uniqueness gap needs solutions on one grid")
    grid = u1.grid
    vol = grid.cell_volume

    diff = u1.values - u2.values
    mask = diff > threshold
    g1, _ = eval_coupling(model.coupling, th1.values)
    g2, _ = eval_coupling(model.coupling, th2.values)
    grad_diff = gradient_values(diff, grid.spacing)
    grad_sq = (grad_diff * grad_diff).sum(axis=-1)

    return UniquenessGap(
        set_A_measure=float(mask.sum() * vol),
        monotonicity_integral=float(((g1 - g2) * (th1.values - th2.values) * mask).sum() * vol),
        gradient_gap=float((grad_sq * mask).sum() * vol),
        linf_u_gap=float(np.abs(diff).max()),
        linf_theta_gap=float(np.abs(th1.values - th2.values).max()),
    )


# Quantities whose sweep ratios certify the uniform-in-epsilon bounds.  The
# signed integral of theta*g(theta) is compared in absolute value.
BOUNDED_QUANTITIES = (
    "int_theta",
    "int_theta_g_theta",
    "int_abs_u",
    "int_Du2_theta",
    "w22_u",
    "int_gprime_Dtheta2",
    "w12_theta_pow",
    "w12_theta",
    "linf_theta",
    "linf_Du",
    "max_beta_prime",
)


@dataclass(frozen=True)
class UniformityVerdict:
    ratios: dict
    threshold: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "ratios": {k: float(v) for k, v in self.ratios.items()},
            "threshold": self.threshold,
            "passed": self.passed,
        }


def assumption_constants(reports, ratio_threshold: float = 2.0) -> UniformityVerdict:
    """Uniformity verdict over an epsilon sweep of estimate reports.

    ``reports`` must be ordered from the largest epsilon down.  For each
    bounded quantity the score is (max over the sweep) / (value at the
    largest epsilon); a blow-up as epsilon shrinks shows up as a large
    ratio.  The threshold is an operational choice, not a reference value.
    """
    reports = list(reports)
    if len(reports) < 3:
        raise DomainError("uniformity verdict needs at least 3 reports")
    tiny = 1e-14
    ratios = {}
    for name in BOUNDED_QUANTITIES:
        series = np.array([abs(float(getattr(r, name))) for r in reports])
        first = series[0]
        peak = series.max()
        if first <= tiny:
            ratios[name] = 1.0 if peak <= tiny else float("inf")
        else:
            ratios[name] = float(peak / first)
    passed = all(r <= ratio_threshold for r in ratios.values())
    return UniformityVerdict(ratios=ratios, threshold=ratio_threshold, passed=passed)
