import math

import numpy as np
import pytest
from scipy.optimize import brentq

from mfgobstacle import (
    AssumptionError,
    CouplingSpec,
    DomainError,
    HamiltonianSpec,
    ModelSpec,
    PenalizationSpec,
    alpha_max,
    check_assumptions,
    coupling_floor,
    eval_coupling,
    eval_hamiltonian,
    eval_penalization,
    invert_coupling,
    validate_model,
)
from _oracles import cos_model

TAU = 2.0 * math.pi


class TestHamiltonian:
    def test_jet_at_critical_point(self):
        spec = HamiltonianSpec(potential=[(1, 1.0)], offset=2.0)
        jet = eval_hamiltonian(spec, [0.0], [0.0])
        assert float(jet.value) == pytest.approx(3.0, abs=1e-14)
        assert jet.grad_p[0] == pytest.approx(0.0)
        assert np.allclose(jet.hess_pp, np.eye(1))
        assert jet.grad_x[0] == pytest.approx(0.0, abs=1e-12)

    def test_jet_closed_form(self):
        spec = HamiltonianSpec(potential=[(1, 1.0)], offset=2.0)
        jet = eval_hamiltonian(spec, [1.0], [0.25])
        assert float(jet.value) == pytest.approx(2.5, abs=1e-14)
        assert jet.grad_p[0] == pytest.approx(1.0)
        assert jet.grad_x[0] == pytest.approx(-TAU, rel=1e-14)

    def test_derivatives_match_finite_differences(self):
        rng = np.random.default_rng(11)
        spec = HamiltonianSpec(potential=[(1, 0.7, 0.3), (2, -0.4)], offset=2.0)
        h = 1e-6
        for _ in range(20):
            p = rng.uniform(-5, 5, size=1)
            x = rng.uniform(0, 1, size=1)
            jet = eval_hamiltonian(spec, p, x)
            fd_p = float(eval_hamiltonian(spec, p + h, x).value
                         - eval_hamiltonian(spec, p - h, x).value) / (2 * h)
            fd_x = float(eval_hamiltonian(spec, p, x + h).value
                         - eval_hamiltonian(spec, p, x - h).value) / (2 * h)
            assert jet.grad_p[0] == pytest.approx(fd_p, rel=1e-6, abs=1e-8)
            assert jet.grad_x[0] == pytest.approx(fd_x, rel=1e-6, abs=1e-8)

    def test_derivatives_match_finite_differences_2d(self):
        rng = np.random.default_rng(12)
        spec = HamiltonianSpec(potential=[((1, 1), 0.5), ((2, 0), 0.3, 0.4)], offset=2.0)
        h = 1e-6
        p = rng.uniform(-3, 3, size=2)
        x = rng.uniform(0, 1, size=2)
        jet = eval_hamiltonian(spec, p, x)
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fd_p = float(eval_hamiltonian(spec, p + e, x).value
                         - eval_hamiltonian(spec, p - e, x).value) / (2 * h)
            fd_x = float(eval_hamiltonian(spec, p, x + e).value
                         - eval_hamiltonian(spec, p, x - e).value) / (2 * h)
            assert jet.grad_p[j] == pytest.approx(fd_p, rel=1e-6, abs=1e-8)
            assert jet.grad_x[j] == pytest.approx(fd_x, rel=1e-6, abs=1e-8)

    def test_periodicity_under_unit_translations(self):
        rng = np.random.default_rng(3)
        spec = HamiltonianSpec(potential=[(1, 1.0), (3, 0.2, 1.1)], offset=2.0)
        p = rng.uniform(-4, 4, size=(16, 1))
        x = rng.uniform(0, 1, size=(16, 1))
        base = eval_hamiltonian(spec, p, x).value
        shifted = eval_hamiltonian(spec, p, x + 1.0).value
        assert np.abs(shifted - base).max() <= 1e-12

    def test_rejects_non_finite_input(self):
        spec = HamiltonianSpec(offset=1.0)
        with pytest.raises(DomainError):
            eval_hamiltonian(spec, [np.nan], [0.0])
        with pytest.raises(DomainError):
            eval_hamiltonian(spec, [0.0], [np.inf])

    def test_rejects_unknown_kind_and_bad_terms(self):
        with pytest.raises(DomainError):
            HamiltonianSpec(kind="eikonal")
        with pytest.raises(DomainError):
            HamiltonianSpec(potential=[(1.5, 1.0)])
        with pytest.raises(DomainError):
            HamiltonianSpec(potential=[((1, 0), 1.0), (1, 0.5)])


class TestCoupling:
    def test_logarithmic_values(self):
        spec = CouplingSpec("logarithmic")
        assert eval_coupling(spec, 1.0) == pytest.approx((0.0, 1.0))
        val, slope = eval_coupling(spec, math.e)
        assert val == pytest.approx(1.0, rel=1e-14)
        assert slope == pytest.approx(1.0 / math.e, rel=1e-14)

    def test_power_values(self):
        spec = CouplingSpec("power", alpha=0.5, theta_shift=1.0)
        val, slope = eval_coupling(spec, 4.0)
        assert val == pytest.approx(1.0, rel=1e-14)
        assert slope == pytest.approx(0.25, rel=1e-14)

    def test_domain_errors(self):
        spec = CouplingSpec("logarithmic")
        with pytest.raises(DomainError):
            eval_coupling(spec, 0.0)
        with pytest.raises(DomainError):
            eval_coupling(spec, -1.0)
        pw = CouplingSpec("power", alpha=0.5, theta_shift=1.0)
        with pytest.raises(DomainError):
            invert_coupling(pw, -1.0)
        with pytest.raises(DomainError):
            CouplingSpec("power", alpha=0.0)
        with pytest.raises(DomainError):
            CouplingSpec("logarithmic", alpha=0.5)

    def test_inverse_closed_forms(self):
        log = CouplingSpec("logarithmic")
        assert invert_coupling(log, 0.0) == pytest.approx(1.0)
        # cross-check exp against root finding on g(theta) - y = 0
        root = brentq(lambda t: math.log(t) - 2.0, 1.0, 100.0, xtol=1e-14)
        assert invert_coupling(log, 2.0) == pytest.approx(root, rel=1e-12)
        assert invert_coupling(log, 2.0) == pytest.approx(7.389056, rel=1e-6)
        pw = CouplingSpec("power", alpha=0.5, theta_shift=1.0)
        assert invert_coupling(pw, 0.0) == pytest.approx(1.0, rel=1e-14)

    @pytest.mark.parametrize("spec,lo", [
        (CouplingSpec("logarithmic"), 1e-6),
        (CouplingSpec("power", alpha=0.5, theta_shift=1.0), 1e-6),
        # steep power branch: theta**2 underflows against the shift below
        # ~1e-2, so the representable round-trip window starts there
        (CouplingSpec("power", alpha=2.0, theta_shift=0.3), 1e-2),
    ])
    def test_inverse_round_trip(self, spec, lo):
        theta = np.geomspace(lo, 1e6, 97)
        val, _ = eval_coupling(spec, theta)
        back = invert_coupling(spec, val)
        rel = np.abs(back - theta) / theta
        assert rel.max() <= 1e-10

    def test_inverse_monotone(self):
        spec = CouplingSpec("logarithmic")
        y = np.linspace(-3, 3, 101)
        out = invert_coupling(spec, y)
        assert np.all(np.diff(out) > 0)

    def test_floor_positive(self):
        assert coupling_floor(CouplingSpec("logarithmic")) == 1.0
        assert coupling_floor(CouplingSpec("power", alpha=0.5, theta_shift=1.0)) == pytest.approx(1.0)
        assert coupling_floor(CouplingSpec("power", alpha=2.0, theta_shift=4.0)) == pytest.approx(2.0)


class TestPenalization:
    def test_branch_values(self):
        spec = PenalizationSpec(0.1)
        assert eval_penalization(spec, -1.0) == (0.0, 0.0)
        val, slope = eval_penalization(spec, 0.3)
        assert val == pytest.approx(2.0, rel=1e-14)
        assert slope == pytest.approx(10.0, rel=1e-14)
        val, slope = eval_penalization(spec, 0.1)
        assert val == pytest.approx(0.25, rel=1e-14)
        assert slope == pytest.approx(5.0, rel=1e-14)

    def test_c1_matching_at_breakpoints(self):
        spec = PenalizationSpec(0.1)
        for s0 in (0.0, 0.2):
            below = eval_penalization(spec, s0 - 1e-13)
            above = eval_penalization(spec, s0 + 1e-13)
            assert abs(below[0] - above[0]) <= 1e-11
            assert abs(below[1] - above[1]) <= 1e-10

    def test_envelope_identity(self):
        # |value - s*slope| stays below 1, with equality on the linear branch
        spec = PenalizationSpec(0.1)
        s = np.linspace(-1.0, 1.0, 4001)
        val, slope = eval_penalization(spec, s)
        assert np.abs(val - s * slope).max() <= 1.0 + 1e-12
        outer = s > 0.2
        assert np.allclose((val - s * slope)[outer], -1.0)

    def test_slope_nondecreasing_and_capped(self):
        for eps in (0.05, 0.1, 0.7):
            spec = PenalizationSpec(eps)
            s = np.linspace(-2 * eps, 4 * eps, 1001)
            _, slope = eval_penalization(spec, s)
            assert np.all(np.diff(slope) >= -1e-14)
            assert slope.max() <= 1.0 / eps + 1e-12
            assert slope.min() >= 0.0

    def test_rejects_bad_epsilon(self):
        with pytest.raises(DomainError):
            PenalizationSpec(0.0)
        with pytest.raises(DomainError):
            PenalizationSpec(-0.3)


class TestAlphaMax:
    def test_low_dimensions_unbounded(self):
        assert alpha_max(1) == math.inf
        assert alpha_max(2) == math.inf

    def test_known_values(self):
        assert alpha_max(3) == pytest.approx(math.sqrt(3.0), abs=1e-12)
        assert alpha_max(4) == pytest.approx(math.sqrt(2.0) - 1.0, abs=1e-12)

    def test_satisfies_defining_equation(self):
        for n in range(3, 11):
            beta = math.sqrt(n / (n - 2.0))
            a = alpha_max(n)
            assert abs(2.0 * a - (a + 1.0) * beta * (beta - 1.0)) <= 1e-12
            root = brentq(lambda t: 2.0 * t - (t + 1.0) * beta * (beta - 1.0),
                          0.0, 100.0, xtol=1e-15)
            assert a == pytest.approx(root, abs=1e-12)

    def test_domain_error(self):
        with pytest.raises(DomainError):
            alpha_max(0)


class TestAssumptionAudit:
    def test_reference_model_passes(self):
        report = check_assumptions(cos_model(), sample_count=256, seed=0)
        assert report.passed
        convex = next(c for c in report.checks if c.name == "hamiltonian_uniformly_convex")
        assert convex.constants["lambda"] == pytest.approx(1.0, abs=1e-12)

    def test_positivity_failure_carries_witness(self):
        bad = ModelSpec(HamiltonianSpec(potential=[(1, 1.0)], offset=-2.0),
                        CouplingSpec("logarithmic"))
        report = check_assumptions(bad, sample_count=128, seed=0)
        assert not report.passed
        failure = report.first_failure
        assert failure.name == "hamiltonian_positive"
        assert "(i)" in failure.detail
        assert failure.witness is not None and "x" in failure.witness

    def test_supercritical_exponent_fails(self):
        model = ModelSpec(HamiltonianSpec(offset=1.0),
                          CouplingSpec("power", alpha=2.0, theta_shift=1.0))
        report = check_assumptions(model, sample_count=64, seed=0, dims=3)
        bad = next(c for c in report.checks if c.name == "coupling_exponent_subcritical")
        assert not bad.passed
        assert bad.constants["alpha_max"] == pytest.approx(math.sqrt(3.0), abs=1e-12)
        # the same exponent is fine in two dimensions
        ok = check_assumptions(model, sample_count=64, seed=0, dims=2)
        good = next(c for c in ok.checks if c.name == "coupling_exponent_subcritical")
        assert good.passed

    def test_validate_model_raises_with_first_failure(self):
        bad = ModelSpec(HamiltonianSpec(potential=[(1, 1.0)], offset=-2.0),
                        CouplingSpec("logarithmic"))
        with pytest.raises(AssumptionError, match="assumption"):
            validate_model(bad, sample_count=64, seed=0)

    def test_power_coupling_model_passes(self):
        model = ModelSpec(HamiltonianSpec(potential=[(1, 0.5)], offset=1.5),
                          CouplingSpec("power", alpha=0.5, theta_shift=1.0))
        report = check_assumptions(model, sample_count=256, seed=1)
        assert report.passed, report.first_failure

    def test_sample_count_validation(self):
        with pytest.raises(DomainError):
            check_assumptions(cos_model(), sample_count=0, seed=0)

    def test_report_serializes(self):
        report = check_assumptions(cos_model(), sample_count=64, seed=0)
        payload = report.to_dict()
        assert payload["passed"] is True
        assert len(payload["checks"]) == len(report.checks)


class TestModelSpec:
    def test_fixed_normalization(self):
        with pytest.raises(DomainError):
            ModelSpec(HamiltonianSpec(offset=1.0), CouplingSpec("logarithmic"), obstacle=0.5)
        with pytest.raises(DomainError):
            ModelSpec(HamiltonianSpec(offset=1.0), CouplingSpec("logarithmic"), source=2.0)
