import math

import numpy as np
import pytest

from mfgobstacle import (
    ContinuationError,
    DomainError,
    EpsilonSchedule,
    GridField,
    PeriodicGrid,
    SolverOptions,
    limit_residuals,
    run_continuation,
    uplus_trend,
)
from mfgobstacle.continuation import TraceRow, trace_to_csv
from _oracles import const_model, cos_model, scalar_constant_solution

TAU = 2.0 * math.pi


def test_schedule_values_and_validation():
    sched = EpsilonSchedule()
    vals = sched.values()
    assert vals[0] == 0.2 and vals[-1] == pytest.approx(0.00625)
    assert len(vals) == 6
    assert all(a > b for a, b in zip(vals, vals[1:]))
    with pytest.raises(DomainError):
        EpsilonSchedule(start=-1.0)
    with pytest.raises(DomainError):
        EpsilonSchedule(factor=1.0)
    with pytest.raises(DomainError):
        EpsilonSchedule(steps=0)


@pytest.fixture(scope="module")
def constant_limit():
    return run_continuation(const_model(), PeriodicGrid((64,)), EpsilonSchedule())


@pytest.fixture(scope="module")
def cos_limit():
    return run_continuation(cos_model(), PeriodicGrid((128,)), EpsilonSchedule())


class TestConstantDataContinuation:
    @pytest.fixture
    def limit(self, constant_limit):
        return constant_limit

    def test_matches_scalar_oracle_at_every_epsilon(self, limit):
        for sol in limit.per_epsilon:
            u_star, theta_star = scalar_constant_solution(sol.epsilon)
            assert np.abs(sol.u.values - u_star).max() <= 1e-8
            assert np.abs(sol.theta.values - theta_star).max() <= 1e-8

    def test_limit_density_approaches_coupling_inverse_of_h(self, limit):
        assert np.abs(limit.theta.values - math.e).max() <= 3e-3

    def test_obstacle_violation_order_epsilon(self, limit):
        assert limit.u.values.max() <= 10.0 * limit.final_epsilon

    def test_positive_part_contracts_per_halving(self, limit):
        uplus = [row.int_u_plus for row in limit.schedule_trace]
        ratios = [b / a for a, b in zip(uplus, uplus[1:])]
        assert max(ratios) <= 0.6

    def test_positive_part_slope_at_least_linear(self, limit):
        fit = uplus_trend(limit.schedule_trace)
        assert fit.slope >= 1.0

    def test_trace_is_deterministic(self, limit):
        again = run_continuation(const_model(), PeriodicGrid((64,)), EpsilonSchedule())
        assert trace_to_csv(again.schedule_trace) == trace_to_csv(limit.schedule_trace)
        assert np.array_equal(again.u.values, limit.u.values)


class TestCosModelContinuation:
    @pytest.fixture
    def limit(self, cos_limit):
        return cos_limit

    def test_penalization_slope_stays_bounded(self, limit):
        # the sweep maximum settles at exp(-min V - offset); assert the tight bound
        peak = max(row.max_beta_prime for row in limit.schedule_trace)
        assert peak <= 1.01 * math.exp(-1.0)
        tail = [row.max_beta_prime for row in limit.schedule_trace[-3:]]
        assert max(tail) / min(tail) <= 1.5

    def test_sup_norms_do_not_blow_up(self, limit):
        rows = limit.schedule_trace
        for name in ("lip_u", "w22_u", "max_theta"):
            series = [getattr(r, name) for r in rows]
            assert max(series) <= 2.0 * series[0]
        tail_theta = [r.max_theta for r in rows[-3:]]
        assert max(tail_theta) / min(tail_theta) <= 1.5

    def test_penalty_value_controlled_by_positive_part(self, limit):
        from mfgobstacle.model import PenalizationSpec, eval_penalization

        for sol in limit.per_epsilon:
            pen, _ = eval_penalization(PenalizationSpec(sol.epsilon), sol.u.values)
            cap = max(row.max_beta_prime for row in limit.schedule_trace)
            assert pen.max() <= cap * sol.u.values.max() + 1e-15

    def test_limit_reports_shrink_along_tail(self, limit):
        for name in ("hj_residual", "complementarity"):
            series = [getattr(r, name) for r in limit.limit_reports]
            assert series[-1] <= max(0.9 * series[-3], 1e-12)

    def test_energy_gap_at_solver_tolerance(self, limit):
        for row in limit.schedule_trace:
            assert row.energy_gap <= 1e-9


class TestLimitResiduals:
    def test_exact_constant_limit(self):
        g = PeriodicGrid((64,))
        rep = limit_residuals(const_model(), GridField.constant(g, 0.0),
                              GridField.constant(g, math.e), 0.01)
        assert rep.hj_residual == pytest.approx(0.0, abs=1e-14)
        assert rep.obstacle_violation == 0.0
        assert rep.kfp_inequality_violation == 0.0
        assert rep.kfp_pointwise_violation == 0.0
        assert rep.kfp_equality_residual_inactive == 0.0
        assert rep.complementarity == 0.0

    def test_constructed_obstacle_violation(self):
        g = PeriodicGrid((64,))
        rep = limit_residuals(const_model(), GridField.constant(g, 0.1),
                              GridField.constant(g, math.e), 0.01)
        assert rep.obstacle_violation == pytest.approx(0.1)

    def test_requires_positive_density(self):
        g = PeriodicGrid((16,))
        with pytest.raises(DomainError):
            limit_residuals(const_model(), GridField.constant(g, 0.0),
                            GridField.constant(g, 0.0), 0.01)

    def test_inactive_set_equality_residual(self):
        # a density that cannot balance the source on the inactive set
        g = PeriodicGrid((64,))
        u = GridField.constant(g, -1.0)
        theta = GridField.constant(g, 1.0)
        rep = limit_residuals(const_model(), u, theta, 0.01)
        # flux vanishes (constant u), so the equality residual equals the source
        assert rep.kfp_equality_residual_inactive == pytest.approx(1.0)


class TestUplusTrend:
    def test_exact_log_linear_data(self):
        rows = [TraceRow(e, 0.0, 0, 3.0 * e, 0, 0, 0, 0, 0, 0)
                for e in (0.2, 0.1, 0.05, 0.025)]
        fit = uplus_trend(rows)
        assert fit.slope == pytest.approx(1.0, abs=1e-12)
        assert fit.fit_residual <= 1e-12

    def test_all_zero_trace_reports_infinite_slope(self):
        rows = [TraceRow(e, 0.0, 0, 0.0, 0, 0, 0, 0, 0, 0) for e in (0.2, 0.1, 0.05)]
        assert uplus_trend(rows).slope == math.inf

    def test_needs_three_rows(self):
        rows = [TraceRow(0.2, 0.0, 0, 1.0, 0, 0, 0, 0, 0, 0)] * 2
        with pytest.raises(DomainError):
            uplus_trend(rows)


def test_nonconverged_solve_aborts_with_partial_trace():
    with pytest.raises(ContinuationError) as err:
        run_continuation(cos_model(), PeriodicGrid((64,)), EpsilonSchedule(steps=4),
                         SolverOptions(max_iterations=1))
    assert err.value.trace == ()


def test_warm_starts_keep_iteration_counts_small():
    limit = run_continuation(cos_model(), PeriodicGrid((64,)), EpsilonSchedule())
    for row in limit.schedule_trace[1:]:
        assert row.newton_iterations <= 8


def test_trace_csv_columns_pinned():
    rows = [TraceRow(0.1, 1e-12, 3, 0.01, 0.2, 1.0, 2.0, 0.1, 0.5, 1e-14)]
    text = trace_to_csv(rows)
    header = text.splitlines()[0]
    assert header == ("epsilon,residual_norm,newton_iterations,int_u_plus,"
                      "max_beta_prime,min_theta,max_theta,lip_u,w22_u,energy_gap")
    assert text.splitlines()[1].split(",")[2] == "3"


def test_continuation_accepts_explicit_initialization():
    g = PeriodicGrid((64,))
    x = g.axes()[0]
    init = GridField(g, -0.5 - 0.1 * np.cos(TAU * x))
    limit = run_continuation(cos_model(), g, EpsilonSchedule(steps=3), u_init=init)
    assert limit.per_epsilon[-1].converged


def test_two_dimensional_continuation():
    from _oracles import model_2d

    g = PeriodicGrid((16, 16))
    limit = run_continuation(model_2d(), g, EpsilonSchedule(steps=4))
    assert all(s.converged for s in limit.per_epsilon)
    assert limit.u.values.max() <= limit.contact_tolerance
    rep = limit.residuals
    assert rep.kfp_inequality_violation <= 1e-8
    assert rep.obstacle_violation <= 10.0 * limit.final_epsilon
    uplus = [row.int_u_plus for row in limit.schedule_trace]
    assert all(b < a for a, b in zip(uplus, uplus[1:]))
