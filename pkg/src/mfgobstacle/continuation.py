"""Continuation in the penalization parameter and limit-system residuals.

Solves the penalized system along a geometric epsilon schedule with warm
starts, takes the smallest-epsilon pair as the limit candidate (no
extrapolation: only subsequential convergence is guaranteed), and measures
how well that pair satisfies the four conditions of the limiting obstacle
system.  The transport inequality is tested weakly against a batch of
smooth nonnegative trial fields; the pointwise slack is reported separately
as a diagnostic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields as dataclass_fields
from pathlib import Path

import numpy as np

from . import diagnostics
from .errors import ContinuationError, DomainError
from .grid import GridField, PeriodicGrid, divergence_values, gradient_values, norms
from .model import ModelSpec, PenalizationSpec, eval_coupling, eval_hamiltonian, eval_penalization
from .seeding import substream
from .solver import PenalizedSolution, SolverOptions, newton_solve

TAU = 2.0 * math.pi

TRACE_COLUMNS = (
    "epsilon",
    "residual_norm",
    "newton_iterations",
    "int_u_plus",
    "max_beta_prime",
    "min_theta",
    "max_theta",
    "lip_u",
    "w22_u",
    "energy_gap",
)


@dataclass(frozen=True)
class EpsilonSchedule:
    """Geometric schedule start * factor**k for k = 0 .. steps-1."""

    start: float = 0.2
    factor: float = 0.5
    steps: int = 6

    def __post_init__(self):
        if not self.start > 0.0:
            raise DomainError("schedule start must be positive")
        if not 0.0 < self.factor < 1.0:
            raise DomainError("schedule factor must lie in (0, 1)")
        if int(self.steps) < 1:
            raise DomainError("schedule needs at least one step")
        object.__setattr__(self, "steps", int(self.steps))

    def values(self) -> tuple[float, ...]:
        return tuple(self.start * self.factor ** k for k in range(self.steps))


@dataclass(frozen=True)
class TraceRow:
    epsilon: float
    residual_norm: float
    newton_iterations: int
    int_u_plus: float
    max_beta_prime: float
    min_theta: float
    max_theta: float
    lip_u: float
    w22_u: float
    energy_gap: float

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclass_fields(self)}


@dataclass(frozen=True)
class LimitReport:
    """Residuals of the four limit-system conditions.

    ``kfp_inequality_violation`` is the weak-form measure (worst trial-field
    excess, clamped at zero); ``kfp_pointwise_violation`` is the pointwise
    negative-slack diagnostic.
    """

    hj_residual: float
    obstacle_violation: float
    kfp_inequality_violation: float
    kfp_pointwise_violation: float
    kfp_equality_residual_inactive: float
    complementarity: float

    def __post_init__(self):
        for f in dataclass_fields(self):
            if getattr(self, f.name) < 0.0:
                raise DomainError(f"{f.name} must be nonnegative")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclass_fields(self)}


@dataclass
class LimitSolution:
    """Smallest-epsilon pair with contact sets, residuals, and the sweep trace."""

    u: GridField
    theta: GridField
    contact_set: np.ndarray
    inactive_set: np.ndarray
    residuals: LimitReport
    schedule_trace: tuple[TraceRow, ...]
    limit_reports: tuple[LimitReport, ...]
    per_epsilon: tuple[PenalizedSolution, ...]
    contact_tolerance: float

    def __post_init__(self):
        if float(self.u.values.max()) > self.contact_tolerance:
            raise DomainError(
                "limit candidate violates the obstacle beyond the contact tolerance"
            )

    @property
    def final_epsilon(self) -> float:
        return self.per_epsilon[-1].epsilon


# ---------------------------------------------------------------------------
# Weak-form trial fields
# ---------------------------------------------------------------------------

def _trial_fields(grid: PeriodicGrid, seed: int, random_count: int = 16):
    """Smooth nonnegative trial fields, sup-normalized to one.

    Deterministic batch: constants, 1 +- cos along each axis, their products
    in two dimensions, plus squared random low-frequency trigonometric
    polynomials drawn from the named substream.
    """
    coords = grid.coordinates()
    fields = [np.ones(grid.shape)]
    axis_fields = []
    for j in range(grid.dims):
        c = np.cos(TAU * coords[..., j])
        axis_fields.append([1.0 + c, 1.0 - c])
        fields.extend([1.0 + c, 1.0 - c])
    if grid.dims == 2:
        for a in axis_fields[0]:
            for b in axis_fields[1]:
                fields.append(a * b)

    rng = substream(seed, "trial-fields")
    for _ in range(random_count):
        base = rng.normal(0.0, 1.0)
        wave = np.full(grid.shape, base)
        for j in range(grid.dims):
            for freq in (1, 2):
                amp_c, amp_s = rng.normal(0.0, 1.0, size=2)
                wave = wave + amp_c * np.cos(TAU * freq * coords[..., j])
                wave = wave + amp_s * np.sin(TAU * freq * coords[..., j])
        fields.append(wave * wave)

    out = []
    for f in fields:
        peak = float(np.abs(f).max())
        if peak > 0.0:
            out.append(f / peak)
    return out


def limit_residuals(model: ModelSpec, u: GridField, theta: GridField,
                    contact_tolerance: float, seed: int = 0) -> LimitReport:
    """Residuals of the limiting obstacle system for a candidate pair."""
    if np.any(theta.values <= 0.0):
        raise DomainError("density must be positive")
    grid = u.grid
    vol = grid.cell_volume
    spacing = grid.spacing

    grad_u = gradient_values(u.values, spacing)
    jet = eval_hamiltonian(model.hamiltonian, grad_u, grid.coordinates())
    g_val, _ = eval_coupling(model.coupling, theta.values)
    flux = jet.grad_p * theta.values[..., None]
    div_flux = divergence_values(flux, spacing)

    hj = jet.value - g_val
    hj_residual = float(np.sqrt((hj * hj).sum() * vol))
    obstacle_violation = float(max(u.values.max() - model.obstacle, 0.0))

    # slack of the transport inequality: source - (-div flux)
    slack = model.source + div_flux
    neg = np.minimum(slack, 0.0)
    pointwise = float(np.sqrt((neg * neg).sum() * vol))

    inactive = u.values < (model.obstacle - contact_tolerance)
    eq = (-div_flux - model.source) * inactive
    eq_residual = float(np.sqrt((eq * eq).sum() * vol))

    complementarity = float((np.abs(u.values - model.obstacle) * np.maximum(slack, 0.0)).sum() * vol)

    worst = -np.inf
    for phi in _trial_fields(grid, seed):
        grad_phi = gradient_values(phi, spacing)
        lhs = (flux * grad_phi).sum() * vol
        rhs = (model.source * phi).sum() * vol
        worst = max(worst, float(lhs - rhs))
    weak_violation = max(worst, 0.0)

    return LimitReport(
        hj_residual=hj_residual,
        obstacle_violation=obstacle_violation,
        kfp_inequality_violation=weak_violation,
        kfp_pointwise_violation=pointwise,
        kfp_equality_residual_inactive=eq_residual,
        complementarity=complementarity,
    )


# ---------------------------------------------------------------------------
# Continuation driver
# ---------------------------------------------------------------------------

def default_contact_tolerance(final_epsilon: float) -> float:
    """Contact-set tolerance tied to the finest penalization scale."""
    return max(10.0 * final_epsilon, 1e-6)


def solution_trace_row(model: ModelSpec, sol: PenalizedSolution) -> TraceRow:
    grid = sol.u.grid
    vol = grid.cell_volume
    _, pen_slope = eval_penalization(PenalizationSpec(sol.epsilon),
                                     sol.u.values - model.obstacle)
    grad_u = gradient_values(sol.u.values, grid.spacing)
    lip = float(np.sqrt((grad_u * grad_u).sum(axis=-1).max()))
    return TraceRow(
        epsilon=float(sol.epsilon),
        residual_norm=float(sol.residual_norm),
        newton_iterations=int(sol.newton_iterations),
        int_u_plus=float(np.maximum(sol.u.values, 0.0).sum() * vol),
        max_beta_prime=float(pen_slope.max()),
        min_theta=float(sol.theta.values.min()),
        max_theta=float(sol.theta.values.max()),
        lip_u=lip,
        w22_u=norms(sol.u).w22,
        energy_gap=diagnostics.energy_identity_gap(model, sol),
    )


def run_continuation(model: ModelSpec, grid: PeriodicGrid, schedule: EpsilonSchedule,
                     opts: SolverOptions | None = None, u_init: GridField | None = None,
                     seed: int = 0, contact_tolerance: float | None = None) -> LimitSolution:
    """Drive epsilon to its smallest scheduled value with warm starts.

    Each solve starts from the previous solution; the limit fields are the
    smallest-epsilon iterate.  A non-converged inner solve aborts with the
    completed trace attached to the raised ``ContinuationError``.
    """
    opts = opts or SolverOptions()
    current = u_init if u_init is not None else GridField.constant(grid, 0.0)
    rows: list[TraceRow] = []
    reports: list[LimitReport] = []
    solutions: list[PenalizedSolution] = []

    for eps in schedule.values():
        sol = newton_solve(model, eps, current, opts)
        if not sol.converged:
            raise ContinuationError(
                f"penalized solve did not converge at epsilon={eps:g} "
                f"(residual {sol.residual_norm:.3e})",
                trace=rows,
            )
        rows.append(solution_trace_row(model, sol))
        reports.append(
            limit_residuals(model, sol.u, sol.theta,
                            default_contact_tolerance(eps), seed=seed)
        )
        solutions.append(sol)
        current = sol.u

    final = solutions[-1]
    tau = (contact_tolerance if contact_tolerance is not None
           else default_contact_tolerance(final.epsilon))
    final_report = limit_residuals(model, final.u, final.theta, tau, seed=seed)
    contact = final.u.values >= (model.obstacle - tau)
    return LimitSolution(
        u=final.u,
        theta=final.theta,
        contact_set=contact,
        inactive_set=~contact,
        residuals=final_report,
        schedule_trace=tuple(rows),
        limit_reports=tuple(reports),
        per_epsilon=tuple(solutions),
        contact_tolerance=tau,
    )


# ---------------------------------------------------------------------------
# Trend fitting and trace serialization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrendFit:
    slope: float
    fit_residual: float


def uplus_trend(trace) -> TrendFit:
    """Least-squares slope of log(int u+) against log(epsilon).

    A trace whose positive part vanishes identically reports an infinite
    slope: the constraint is inactive and decays faster than any power.
    """
    rows = list(trace)
    if len(rows) < 3:
        raise DomainError("trend fit needs at least 3 trace rows")
    eps = np.array([r.epsilon for r in rows])
    vals = np.array([r.int_u_plus for r in rows])
    keep = vals > 0.0
    if keep.sum() < 2:
        return TrendFit(slope=math.inf, fit_residual=0.0)
    x = np.log(eps[keep])
    y = np.log(vals[keep])
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    rms = float(np.sqrt(np.mean((y - fitted) ** 2)))
    return TrendFit(slope=float(slope), fit_residual=rms)


def trace_to_csv(rows) -> str:
    lines = [",".join(TRACE_COLUMNS)]
    for row in rows:
        rec = row.to_dict()
        cells = []
        for name in TRACE_COLUMNS:
            v = rec[name]
            cells.append(str(int(v)) if name == "newton_iterations" else repr(float(v)))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_trace_csv(rows, path) -> None:
    Path(path).write_text(trace_to_csv(rows), encoding="utf-8")
