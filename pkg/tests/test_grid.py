import math

import numpy as np
import pytest

from mfgobstacle import (
    DomainError,
    GridField,
    GridVectorField,
    PeriodicGrid,
    divergence,
    gradient,
    integrate,
    laplacian,
    norms,
    read_field_csv,
    write_field_csv,
)
from mfgobstacle.grid import diff_matrix, gradient_values, hessian_values, laplacian_matrix

TAU = 2.0 * math.pi


def test_grid_validation():
    with pytest.raises(DomainError):
        PeriodicGrid((3,))
    with pytest.raises(DomainError):
        PeriodicGrid((4, 4, 4))
    g = PeriodicGrid((8, 16))
    assert g.spacing == (0.125, 0.0625)
    assert g.num_points == 128
    assert g.cell_volume == pytest.approx(0.125 * 0.0625)


def test_field_validation():
    g = PeriodicGrid((8,))
    with pytest.raises(Exception):
        GridField(g, np.zeros(7))
    with pytest.raises(DomainError):
        GridField(g, np.full(8, np.nan))
    with pytest.raises(Exception):
        GridVectorField(g, np.zeros((8,)))


class TestGradient:
    def test_constant_field(self):
        g = PeriodicGrid((16, 8))
        out = gradient(GridField.constant(g, 5.0))
        assert np.abs(out.values).max() == 0.0

    def test_trig_error_bound_and_slope(self):
        errs = {}
        for n in (128, 256):
            g = PeriodicGrid((n,))
            x = g.axes()[0]
            u = GridField(g, np.sin(TAU * x))
            err = np.abs(gradient(u).values[..., 0] - TAU * np.cos(TAU * x)).max()
            errs[n] = err
            assert err <= TAU ** 3 / (6.0 * n * n)
        slope = math.log2(errs[128] / errs[256])
        assert 1.9 <= slope <= 2.1

    def test_spike_stencil(self):
        g = PeriodicGrid((4,))
        u = np.zeros(4)
        u[1] = 1.0
        out = gradient(GridField(g, u)).values[..., 0]
        h = 0.25
        assert out[0] == pytest.approx(1.0 / (2 * h))
        assert out[2] == pytest.approx(-1.0 / (2 * h))
        assert out[1] == 0.0 and out[3] == 0.0

    def test_linearity(self):
        rng = np.random.default_rng(0)
        g = PeriodicGrid((12, 6))
        u = GridField(g, rng.standard_normal(g.shape))
        v = GridField(g, rng.standard_normal(g.shape))
        combo = GridField(g, 2.0 * u.values - 3.0 * v.values)
        lhs = gradient(combo).values
        rhs = 2.0 * gradient(u).values - 3.0 * gradient(v).values
        assert np.abs(lhs - rhs).max() <= 1e-13


class TestDivergence:
    def test_constant_vector_field(self):
        g = PeriodicGrid((8, 8))
        F = GridVectorField(g, np.ones(g.shape + (2,)))
        assert np.abs(divergence(F).values).max() == 0.0

    @pytest.mark.parametrize("sizes", [(64,), (16, 16), (12, 20)])
    def test_exact_adjointness(self, sizes):
        rng = np.random.default_rng(5)
        g = PeriodicGrid(sizes)
        u = GridField(g, rng.standard_normal(g.shape))
        F = GridVectorField(g, rng.standard_normal(g.shape + (g.dims,)))
        vol = g.cell_volume
        lhs = (divergence(F).values * u.values).sum() * vol
        rhs = -(F.values * gradient(u).values).sum() * vol
        assert abs(lhs - rhs) <= 1e-13

    @pytest.mark.parametrize("sizes", [(32,), (8, 8)])
    def test_telescoping_sum(self, sizes):
        rng = np.random.default_rng(6)
        g = PeriodicGrid(sizes)
        F = GridVectorField(g, rng.standard_normal(g.shape + (g.dims,)))
        assert abs(divergence(F).values.sum()) <= 1e-12

    def test_consistency_slope(self):
        errs = {}
        for n in (128, 256):
            g = PeriodicGrid((n,))
            x = g.axes()[0]
            F = GridVectorField(g, np.sin(TAU * x)[:, None])
            err = np.abs(divergence(F).values - TAU * np.cos(TAU * x)).max()
            errs[n] = err
        assert 1.9 <= math.log2(errs[128] / errs[256]) <= 2.1


class TestIntegrate:
    def test_unit_mass(self):
        assert integrate(GridField.constant(PeriodicGrid((16, 16)), 1.0)) == pytest.approx(1.0)

    def test_resolved_modes(self):
        g = PeriodicGrid((64,))
        x = g.axes()[0]
        assert abs(integrate(GridField(g, np.cos(TAU * x)))) <= 1e-14
        assert integrate(GridField(g, np.cos(TAU * x) ** 2)) == pytest.approx(0.5, abs=1e-14)


class TestNorms:
    def test_constant(self):
        nb = norms(GridField.constant(PeriodicGrid((32,)), -2.0))
        assert nb.l1 == pytest.approx(2.0)
        assert nb.l2 == pytest.approx(2.0)
        assert nb.linf == 2.0
        assert nb.grad_l2 == 0.0 and nb.hess_l2 == 0.0
        assert nb.w22 == pytest.approx(2.0)

    def test_trig_closed_forms(self):
        g = PeriodicGrid((256,))
        x = g.axes()[0]
        nb = norms(GridField(g, np.sin(TAU * x)))
        assert nb.l2 == pytest.approx(math.sqrt(0.5), rel=1e-3)
        assert nb.grad_l2 == pytest.approx(TAU * math.sqrt(0.5), rel=1e-3)

    def test_ordering(self):
        rng = np.random.default_rng(2)
        g = PeriodicGrid((24, 8))
        nb = norms(GridField(g, rng.standard_normal(g.shape)))
        assert nb.w22 >= nb.w12 >= nb.l2


def test_laplacian_consistency():
    errs = {}
    for n in (64, 128):
        g = PeriodicGrid((n,))
        x = g.axes()[0]
        u = GridField(g, np.sin(TAU * x))
        err = np.abs(laplacian(u).values + TAU ** 2 * np.sin(TAU * x)).max()
        errs[n] = err
    assert 1.9 <= math.log2(errs[64] / errs[128]) <= 2.1


def test_hessian_mixed_symmetry():
    rng = np.random.default_rng(9)
    g = PeriodicGrid((12, 10))
    hess = hessian_values(rng.standard_normal(g.shape), g.spacing)
    assert np.abs(hess[..., 0, 1] - hess[..., 1, 0]).max() == 0.0


def test_diff_matrix_matches_stencil():
    rng = np.random.default_rng(4)
    g = PeriodicGrid((8, 6))
    u = rng.standard_normal(g.shape)
    for axis in range(2):
        via_matrix = (diff_matrix(g.sizes, axis) @ u.ravel()).reshape(g.shape)
        direct = gradient_values(u, g.spacing)[..., axis]
        assert np.abs(via_matrix - direct).max() <= 1e-14


def test_laplacian_matrix_matches_stencil():
    rng = np.random.default_rng(8)
    g = PeriodicGrid((10, 6))
    u = rng.standard_normal(g.shape)
    from mfgobstacle.grid import laplacian_values

    via_matrix = (laplacian_matrix(g.sizes) @ u.ravel()).reshape(g.shape)
    assert np.abs(via_matrix - laplacian_values(u, g.spacing)).max() <= 1e-11


def test_field_csv_round_trip(tmp_path):
    rng = np.random.default_rng(13)
    for sizes in ((16,), (6, 8)):
        g = PeriodicGrid(sizes)
        field = GridField(g, rng.standard_normal(g.shape))
        path = tmp_path / f"field_{len(sizes)}d.csv"
        write_field_csv(field, path)
        back = read_field_csv(path)
        assert back.grid == g
        assert np.array_equal(back.values, field.values)
