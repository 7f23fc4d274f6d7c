"""Periodic tensor grids and discrete calculus with exact summation by parts.

Centered first differences are used throughout, so the discrete divergence
is exactly the negative adjoint of the discrete gradient in the
cell-volume-weighted inner product.  The integral identities the solver
leans on (telescoping divergence, discrete integration by parts) therefore
hold to round-off, not merely to discretization order.  Second derivatives
compose one-sided differences, giving the standard compact stencils.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, GridMismatchError


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform tensor grid on the unit torus, dimensions 1 or 2."""

    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if len(sizes) not in (1, 2):
            raise DomainError("grids support dimensions 1 and 2 only")
        if any(n < 4 for n in sizes):
            raise DomainError("each axis needs at least 4 points")

    @property
    def dims(self) -> int:
        return len(self.sizes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.sizes

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(1.0 / n for n in self.sizes)

    @property
    def num_points(self) -> int:
        return int(np.prod(self.sizes))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(np.arange(n) / n for n in self.sizes)

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape (*sizes, dims)."""
        return _coordinates(self.sizes)


@lru_cache(maxsize=32)
def _coordinates(sizes: tuple[int, ...]) -> np.ndarray:
    axes = [np.arange(n) / n for n in sizes]
    out = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    out.setflags(write=False)
    return out


@dataclass
class GridField:
    """Real scalar samples on a periodic grid."""

    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise GridMismatchError(
                f"field shape {vals.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise DomainError("grid fields must be finite")
        self.values = vals

    @classmethod
    def constant(cls, grid: PeriodicGrid, value: float) -> "GridField":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(cls, grid: PeriodicGrid, fn) -> "GridField":
        """Sample ``fn`` on the node coordinates (fn maps (..., N) -> (...))."""
        return cls(grid, np.asarray(fn(grid.coordinates()), dtype=float))


@dataclass
class GridVectorField:
    """Real N-vector samples on a periodic grid, components on the last axis."""

    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape + (self.grid.dims,):
            raise GridMismatchError(
                f"vector field shape {vals.shape} does not match grid "
                f"{self.grid.shape} x {self.grid.dims}"
            )
        if not np.all(np.isfinite(vals)):
            raise DomainError("grid fields must be finite")
        self.values = vals


# ---------------------------------------------------------------------------
# Array-level stencils (used directly by the solver inner loops)
# ---------------------------------------------------------------------------

def gradient_values(values: np.ndarray, spacing: tuple[float, ...]) -> np.ndarray:
    """Centered periodic gradient; output shape (*shape, N)."""
    comps = [
        (np.roll(values, -1, axis=j) - np.roll(values, 1, axis=j)) / (2.0 * h)
        for j, h in enumerate(spacing)
    ]
    return np.stack(comps, axis=-1)


def divergence_values(vec: np.ndarray, spacing: tuple[float, ...]) -> np.ndarray:
    """Centered periodic divergence of (*shape, N) component arrays."""
    out = np.zeros(vec.shape[:-1])
    for j, h in enumerate(spacing):
        comp = vec[..., j]
        out += (np.roll(comp, -1, axis=j) - np.roll(comp, 1, axis=j)) / (2.0 * h)
    return out


def laplacian_values(values: np.ndarray, spacing: tuple[float, ...]) -> np.ndarray:
    out = np.zeros_like(values)
    for j, h in enumerate(spacing):
        out += (np.roll(values, -1, axis=j) - 2.0 * values + np.roll(values, 1, axis=j)) / (h * h)
    return out


def hessian_values(values: np.ndarray, spacing: tuple[float, ...]) -> np.ndarray:
    """Discrete Hessian, shape (*shape, N, N).

    Diagonal entries use the composed one-sided stencil (u[i+1] - 2u[i] +
    u[i-1]) / h^2; mixed entries compose centered differences.
    """
    n = len(spacing)
    out = np.empty(values.shape + (n, n))
    for j, hj in enumerate(spacing):
        out[..., j, j] = (
            np.roll(values, -1, axis=j) - 2.0 * values + np.roll(values, 1, axis=j)
        ) / (hj * hj)
        for l in range(j + 1, n):
            hl = spacing[l]
            mixed = (
                np.roll(values, (-1, -1), axis=(j, l))
                - np.roll(values, (-1, 1), axis=(j, l))
                - np.roll(values, (1, -1), axis=(j, l))
                + np.roll(values, (1, 1), axis=(j, l))
            ) / (4.0 * hj * hl)
            out[..., j, l] = mixed
            out[..., l, j] = mixed
    return out


# ---------------------------------------------------------------------------
# Field-level operations
# ---------------------------------------------------------------------------

def gradient(u: GridField) -> GridVectorField:
    return GridVectorField(u.grid, gradient_values(u.values, u.grid.spacing))


def divergence(flux: GridVectorField) -> GridField:
    return GridField(flux.grid, divergence_values(flux.values, flux.grid.spacing))


def laplacian(u: GridField) -> GridField:
    return GridField(u.grid, laplacian_values(u.values, u.grid.spacing))


def integrate(f: GridField) -> float:
    """Trapezoidal (= midpoint on the torus) quadrature over the unit cell."""
    return float(f.values.sum() * f.grid.cell_volume)


def inner(f: GridField, g: GridField) -> float:
    if f.grid != g.grid:
        raise GridMismatchError("inner product needs fields on one grid")
    return float((f.values * g.values).sum() * f.grid.cell_volume)


def vector_inner(F: GridVectorField, G: GridVectorField) -> float:
    if F.grid != G.grid:
        raise GridMismatchError("inner product needs fields on one grid")
    return float((F.values * G.values).sum() * F.grid.cell_volume)


@dataclass(frozen=True)
class NormBundle:
    l1: float
    l2: float
    linf: float
    grad_l2: float
    hess_l2: float
    w12: float
    w22: float


def norms(u: GridField) -> NormBundle:
    """Discrete Lebesgue and Sobolev norms of a scalar field."""
    vol = u.grid.cell_volume
    vals = u.values
    l1 = float(np.abs(vals).sum() * vol)
    l2 = float(np.sqrt((vals * vals).sum() * vol))
    linf = float(np.abs(vals).max())
    grad = gradient_values(vals, u.grid.spacing)
    grad_l2 = float(np.sqrt((grad * grad).sum() * vol))
    hess = hessian_values(vals, u.grid.spacing)
    hess_l2 = float(np.sqrt((hess * hess).sum() * vol))
    w12 = float(np.sqrt(l2 * l2 + grad_l2 * grad_l2))
    w22 = float(np.sqrt(w12 * w12 + hess_l2 * hess_l2))
    return NormBundle(l1, l2, linf, grad_l2, hess_l2, w12, w22)


# ---------------------------------------------------------------------------
# Sparse operators (assembled once per grid, then cached)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def diff_matrix(sizes: tuple[int, ...], axis: int) -> sp.csr_matrix:
    """Centered first-difference matrix along ``axis`` on the flat indexing."""
    num = int(np.prod(sizes))
    h = 1.0 / sizes[axis]
    idx = np.arange(num).reshape(sizes)
    plus = np.roll(idx, -1, axis=axis).ravel()
    minus = np.roll(idx, 1, axis=axis).ravel()
    rows = np.concatenate([np.arange(num), np.arange(num)])
    cols = np.concatenate([plus, minus])
    data = np.concatenate([np.full(num, 0.5 / h), np.full(num, -0.5 / h)])
    return sp.coo_matrix((data, (rows, cols)), shape=(num, num)).tocsr()


@lru_cache(maxsize=64)
def second_diff_matrix(sizes: tuple[int, ...], axis: int) -> sp.csr_matrix:
    num = int(np.prod(sizes))
    h = 1.0 / sizes[axis]
    idx = np.arange(num).reshape(sizes)
    plus = np.roll(idx, -1, axis=axis).ravel()
    minus = np.roll(idx, 1, axis=axis).ravel()
    rows = np.concatenate([np.arange(num)] * 3)
    cols = np.concatenate([plus, np.arange(num), minus])
    data = np.concatenate(
        [np.full(num, 1.0 / h ** 2), np.full(num, -2.0 / h ** 2), np.full(num, 1.0 / h ** 2)]
    )
    return sp.coo_matrix((data, (rows, cols)), shape=(num, num)).tocsr()


@lru_cache(maxsize=32)
def laplacian_matrix(sizes: tuple[int, ...]) -> sp.csr_matrix:
    out = second_diff_matrix(sizes, 0)
    for axis in range(1, len(sizes)):
        out = out + second_diff_matrix(sizes, axis)
    return out.tocsr()


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------

def write_field_csv(field: GridField, path) -> None:
    """Write one row per node: integer index, coordinates, value."""
    grid = field.grid
    coords = grid.coordinates().reshape(-1, grid.dims)
    index = np.stack(
        np.meshgrid(*[np.arange(n) for n in grid.sizes], indexing="ij"), axis=-1
    ).reshape(-1, grid.dims)
    names_i = ["i", "j"][: grid.dims]
    names_x = ["x", "y"][: grid.dims]
    lines = [",".join(names_i + names_x + ["value"])]
    flat = field.values.ravel()
    for k in range(grid.num_points):
        cells = [str(int(v)) for v in index[k]]
        cells += [repr(float(v)) for v in coords[k]]
        cells.append(repr(float(flat[k])))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_field_csv(path) -> GridField:
    """Reconstruct a field from ``write_field_csv`` output."""
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    header = text[0].split(",")
    dims = sum(1 for name in header if name in ("i", "j"))
    rows = [line.split(",") for line in text[1:]]
    index = np.array([[int(c) for c in r[:dims]] for r in rows])
    vals = np.array([float(r[-1]) for r in rows])
    sizes = tuple(int(index[:, d].max()) + 1 for d in range(dims))
    grid = PeriodicGrid(sizes)
    values = np.empty(grid.shape)
    values[tuple(index.T)] = vals
    return GridField(grid, values)
