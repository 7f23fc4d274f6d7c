"""Damped Newton solver for the penalized coupled system at fixed epsilon.

The coupled pair (value function u, density theta) is reduced to a single
equation in u: the first equation is solvable pointwise for the density,

    theta = g^{-1}( H(Du, x) + b_eps(u) ),

and the remaining unknown satisfies the transport residual

    R(u) = -div( D_pH(Du, x) * theta(u) ) + b_eps'(u) * theta(u) - source.

A zero of R solves the discrete system, since the elimination enforces the
first equation exactly.  The Jacobian is assembled either by graph-colored
central finite differences over the stencil sparsity pattern (default) or
from the frozen-coefficient quasi-Newton surrogate; linear solves use a
direct sparse factorization.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, SolverError
from .grid import (
    GridField,
    PeriodicGrid,
    diff_matrix,
    divergence_values,
    gradient_values,
    laplacian_matrix,
    laplacian_values,
)
from .model import (
    ModelSpec,
    PenalizationSpec,
    coupling_floor,
    eval_coupling,
    eval_hamiltonian,
    eval_penalization,
    invert_coupling,
    penalization_curvature,
)

# Exponent guard for the logarithmic coupling: g^{-1}(y) = exp(y) is clamped
# here during iteration; a converged solution must never touch the clamp.
EXP_CLAMP = 700.0

JACOBIAN_MODES = ("colored_fd", "frozen_advection")


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-10
    max_iterations: int = 100
    armijo_slope: float = 1e-4
    backtrack_factor: float = 0.5
    max_backtracks: int = 40
    jacobian_mode: str = "colored_fd"
    viscosity_coefficient: float = 0.0

    def __post_init__(self):
        if not self.tolerance > 0.0:
            raise DomainError("tolerance must be positive")
        if self.jacobian_mode not in JACOBIAN_MODES:
            raise DomainError(f"unknown jacobian_mode {self.jacobian_mode!r}")
        if self.viscosity_coefficient < 0.0:
            raise DomainError("viscosity coefficient must be nonnegative")


@dataclass
class PenalizedSolution:
    """One converged (or abandoned) penalized solve."""

    epsilon: float
    u: GridField
    theta: GridField
    residual_norm: float
    newton_iterations: int
    line_search_backtracks: int
    converged: bool

    def __post_init__(self):
        if np.any(self.theta.values <= 0.0):
            raise DomainError("density must be positive everywhere")

    def to_snapshot(self) -> dict:
        return {
            "epsilon": float(self.epsilon),
            "grid": {"dims": self.u.grid.dims, "sizes": list(self.u.grid.sizes)},
            "u": [float(v) for v in self.u.values.ravel()],
            "theta": [float(v) for v in self.theta.values.ravel()],
            "stats": {
                "residual_norm": float(self.residual_norm),
                "newton_iterations": int(self.newton_iterations),
                "line_search_backtracks": int(self.line_search_backtracks),
                "converged": bool(self.converged),
            },
        }


# ---------------------------------------------------------------------------
# State assembly
# ---------------------------------------------------------------------------

@dataclass
class _State:
    grad_u: np.ndarray        # (*shape, N)
    hj_value: np.ndarray      # H(Du, x)
    drift: np.ndarray         # D_pH(Du, x), (*shape, N)
    hess_pp: np.ndarray       # (*shape, N, N)
    pen_value: np.ndarray
    pen_slope: np.ndarray
    theta: np.ndarray
    g_slope: np.ndarray       # g'(theta)
    clamped: bool


def _theta_from_argument(model: ModelSpec, arg: np.ndarray):
    """Invert the coupling at H + penalty, guarding the exponential."""
    if model.coupling.kind == "logarithmic":
        clamped = bool(np.any(arg > EXP_CLAMP))
        theta = np.exp(np.minimum(arg, EXP_CLAMP))
        return theta, clamped
    return invert_coupling(model.coupling, arg), False


def _assemble_state(model: ModelSpec, epsilon: float, u_vals: np.ndarray,
                    grid: PeriodicGrid) -> _State:
    pen = PenalizationSpec(epsilon)
    grad_u = gradient_values(u_vals, grid.spacing)
    jet = eval_hamiltonian(model.hamiltonian, grad_u, grid.coordinates())
    pen_value, pen_slope = eval_penalization(pen, u_vals - model.obstacle)
    theta, clamped = _theta_from_argument(model, jet.value + pen_value)
    _, g_slope = eval_coupling(model.coupling, theta)
    return _State(grad_u, jet.value, jet.grad_p, jet.hess_pp,
                  pen_value, pen_slope, theta, g_slope, clamped)


def _residual_values(model: ModelSpec, epsilon: float, u_vals: np.ndarray,
                     grid: PeriodicGrid, viscosity: float) -> np.ndarray:
    st = _assemble_state(model, epsilon, u_vals, grid)
    flux = st.drift * st.theta[..., None]
    out = -divergence_values(flux, grid.spacing) + st.pen_slope * st.theta - model.source
    if viscosity != 0.0:
        out -= viscosity * laplacian_values(u_vals, grid.spacing)
    return out


def _l2_norm(vals: np.ndarray, grid: PeriodicGrid) -> float:
    return float(np.sqrt((vals * vals).sum() * grid.cell_volume))


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def recover_theta(model: ModelSpec, epsilon: float, u: GridField) -> GridField:
    """Pointwise density recovered from the eliminated first equation.

    Monotonicity of the coupling inverse puts the result at or above the
    coupling floor g^{-1}(0) whenever H + penalty >= 0.  The logarithmic
    exponent is clamped at EXP_CLAMP; the solver treats a clamp that is
    still active at convergence as a hard error.
    """
    st = _assemble_state(model, epsilon, u.values, u.grid)
    return GridField(u.grid, st.theta)


def residual(model: ModelSpec, epsilon: float, u: GridField,
             opts: SolverOptions | None = None) -> GridField:
    """Reduced transport residual; zero exactly at a discrete solution."""
    nu = (opts.viscosity_coefficient if opts is not None else 0.0)
    return GridField(u.grid, _residual_values(model, epsilon, u.values, u.grid, nu))


def linearized_hj_operator(model: ModelSpec, epsilon: float, u: GridField) -> sp.csr_matrix:
    """Linearization of the eliminated Hamilton-Jacobi equation at u:
    v -> D_pH(Du, x).grad(v) + b_eps'(u) v, assembled sparse."""
    grid = u.grid
    st = _assemble_state(model, epsilon, u.values, grid)
    num = grid.num_points
    out = sp.csr_matrix((num, num))
    for j in range(grid.dims):
        out = out + sp.diags(st.drift[..., j].ravel()) @ diff_matrix(grid.sizes, j)
    return (out + sp.diags(st.pen_slope.ravel())).tocsr()


def kfp_operator(model: ModelSpec, epsilon: float, u: GridField) -> sp.csr_matrix:
    """Discrete transport operator w -> -div(D_pH w) + b_eps'(u) w.

    Assembled from its own formula; exact summation by parts makes it the
    entrywise transpose of ``linearized_hj_operator``.
    """
    grid = u.grid
    st = _assemble_state(model, epsilon, u.values, grid)
    num = grid.num_points
    out = sp.csr_matrix((num, num))
    for j in range(grid.dims):
        out = out - diff_matrix(grid.sizes, j) @ sp.diags(st.drift[..., j].ravel())
    return (out + sp.diags(st.pen_slope.ravel())).tocsr()


# ---------------------------------------------------------------------------
# Jacobians
# ---------------------------------------------------------------------------

def _stencil_offsets(dims: int) -> tuple[tuple[int, ...], ...]:
    """Offsets k such that R at a node can depend on u at node + k."""
    if dims == 1:
        return ((0,), (1,), (-1,), (2,), (-2,))
    offs = [(0, 0)]
    for j, sign in ((0, 1), (0, -1), (1, 1), (1, -1)):
        e = [0, 0]
        e[j] = sign
        offs.append(tuple(e))
        e2 = [0, 0]
        e2[j] = 2 * sign
        offs.append(tuple(e2))
    offs += [(1, 1), (1, -1), (-1, 1), (-1, -1)]
    return tuple(offs)


def _canonical_offsets(sizes: tuple[int, ...], offsets) -> tuple[tuple[int, ...], ...]:
    """Deduplicate offsets modulo the periodic sizes (relevant on tiny grids)."""
    seen = {}
    for off in offsets:
        key = tuple(o % n for o, n in zip(off, sizes))
        seen.setdefault(key, off)
    return tuple(seen.values())


@lru_cache(maxsize=32)
def _coloring(sizes: tuple[int, ...], offsets: tuple[tuple[int, ...], ...]):
    """Greedy distance coloring of columns sharing a residual row.

    Columns k, k' conflict when k - k' lies in the difference set of the
    stencil, taken modulo the periodic sizes.
    """
    conflicts = set()
    for a in offsets:
        for b in offsets:
            d = tuple((ai - bi) % n for ai, bi, n in zip(a, b, sizes))
            if any(d):
                conflicts.add(d)
    num = int(np.prod(sizes))
    idx = np.arange(num).reshape(sizes)
    axes = tuple(range(len(sizes)))
    neighbor = np.stack(
        [np.roll(idx, tuple(-di for di in d), axis=axes).ravel() for d in sorted(conflicts)]
    )
    colors = np.full(num, -1, dtype=np.int64)
    for i in range(num):
        used = set(colors[neighbor[:, i]].tolist())
        used.discard(-1)
        c = 0
        while c in used:
            c += 1
        colors[i] = c
    return colors, int(colors.max()) + 1


def _jacobian_colored_fd(model, epsilon, u_vals, grid, viscosity) -> sp.csc_matrix:
    sizes = grid.sizes
    offsets = _canonical_offsets(sizes, _stencil_offsets(grid.dims))
    colors, ncolors = _coloring(sizes, offsets)
    num = grid.num_points
    delta = 1e-6 * max(1.0, float(np.abs(u_vals).max()))

    columns = np.empty((ncolors, num))
    for c in range(ncolors):
        mask = (colors == c).astype(float).reshape(grid.shape)
        rp = _residual_values(model, epsilon, u_vals + delta * mask, grid, viscosity)
        rm = _residual_values(model, epsilon, u_vals - delta * mask, grid, viscosity)
        columns[c] = ((rp - rm) / (2.0 * delta)).ravel()

    idx = np.arange(num).reshape(sizes)
    axes = tuple(range(len(sizes)))
    rows_all, cols_all, data_all = [], [], []
    all_rows = np.arange(num)
    for off in offsets:
        cols = np.roll(idx, tuple(-o for o in off), axis=axes).ravel()
        data = columns[colors[cols], all_rows]
        rows_all.append(all_rows)
        cols_all.append(cols)
        data_all.append(data)
    mat = sp.coo_matrix(
        (np.concatenate(data_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
        shape=(num, num),
    )
    return mat.tocsc()


def _jacobian_frozen(model, epsilon, u_vals, grid, viscosity) -> sp.csc_matrix:
    """Quasi-Newton surrogate with advection and density coefficients frozen
    at the current iterate:

        A_theta + L^T diag(1/g'(theta)) L + diag(b_eps''(u) theta)

    where L is the linearized HJ operator and A_theta the variable-
    coefficient diffusion -div(theta D^2_pp H grad .).  For the quadratic
    Hamiltonian family this coincides with the analytic Jacobian of the
    reduced residual.
    """
    st = _assemble_state(model, epsilon, u_vals, grid)
    num = grid.num_points
    gmats = [diff_matrix(grid.sizes, j) for j in range(grid.dims)]

    lin = sp.csr_matrix((num, num))
    for j in range(grid.dims):
        lin = lin + sp.diags(st.drift[..., j].ravel()) @ gmats[j]
    lin = lin + sp.diags(st.pen_slope.ravel())

    diff = sp.csr_matrix((num, num))
    for j in range(grid.dims):
        for l in range(grid.dims):
            coeff = st.theta * st.hess_pp[..., j, l]
            if not np.any(coeff):
                continue
            diff = diff - gmats[j] @ sp.diags(coeff.ravel()) @ gmats[l]

    curvature = penalization_curvature(PenalizationSpec(epsilon), u_vals - model.obstacle)
    out = (
        diff
        + lin.T @ sp.diags(1.0 / st.g_slope.ravel()) @ lin
        + sp.diags((curvature * st.theta).ravel())
    )
    if viscosity != 0.0:
        out = out - viscosity * laplacian_matrix(grid.sizes)
    return out.tocsc()


def jacobian_matrix(model: ModelSpec, epsilon: float, u: GridField,
                    opts: SolverOptions | None = None) -> sp.csc_matrix:
    """Sparse Jacobian of the reduced residual at u, per ``jacobian_mode``."""
    opts = opts or SolverOptions()
    args = (model, epsilon, u.values, u.grid, opts.viscosity_coefficient)
    if opts.jacobian_mode == "colored_fd":
        return _jacobian_colored_fd(*args)
    return _jacobian_frozen(*args)


# ---------------------------------------------------------------------------
# Newton iteration
# ---------------------------------------------------------------------------

def newton_solve(model: ModelSpec, epsilon: float, u_init: GridField,
                 opts: SolverOptions | None = None) -> PenalizedSolution:
    """Damped Newton on the reduced residual.

    The additive level of u is pinned only through the penalization, so a
    start with u <= 0 everywhere sits on a plateau where constants are a
    null direction of the Jacobian.  Any solution pokes above the obstacle
    (the source forces positive absorption), so such starts are lifted to
    max(u) = epsilon/2 before iterating; warm starts with a positive part
    are taken as given.

    Exceeding ``max_iterations`` returns a non-converged result.  A singular
    factorization, a non-finite step, or an exponent clamp active at a
    converged iterate raises ``SolverError``.
    """
    if epsilon <= 0.0:
        raise DomainError("epsilon must be positive")
    opts = opts or SolverOptions()
    grid = u_init.grid
    u = u_init.values.copy()

    top = float(u.max())
    if top <= 0.0:
        u = u + (0.5 * epsilon - top)

    nu = opts.viscosity_coefficient
    res = _residual_values(model, epsilon, u, grid, nu)
    res_norm = _l2_norm(res, grid)
    history = [(0, res_norm)]
    iterations = 0
    backtracks = 0
    converged = res_norm <= opts.tolerance

    while not converged and iterations < opts.max_iterations:
        if opts.jacobian_mode == "colored_fd":
            jac = _jacobian_colored_fd(model, epsilon, u, grid, nu)
        else:
            jac = _jacobian_frozen(model, epsilon, u, grid, nu)
        try:
            step = spla.splu(jac).solve(-res.ravel())
        except RuntimeError as exc:
            raise SolverError(f"singular Jacobian at iteration {iterations}: {exc}",
                              history=history) from exc
        if not np.all(np.isfinite(step)):
            raise SolverError(f"non-finite Newton step at iteration {iterations}",
                              history=history)
        step = step.reshape(grid.shape)

        merit0 = res_norm * res_norm
        t = 1.0
        accepted = False
        for _ in range(opts.max_backtracks + 1):
            candidate = u + t * step
            try:
                cand_res = _residual_values(model, epsilon, candidate, grid, nu)
                cand_norm = (_l2_norm(cand_res, grid)
                             if np.all(np.isfinite(cand_res)) else np.inf)
            except DomainError:
                # overshooting trial left the coupling domain; reject it
                cand_norm = np.inf
            if cand_norm * cand_norm <= (1.0 - 2.0 * opts.armijo_slope * t) * merit0:
                accepted = True
                break
            t *= opts.backtrack_factor
            backtracks += 1
        if not accepted:
            break
        u, res, res_norm = candidate, cand_res, cand_norm
        iterations += 1
        history.append((iterations, res_norm))
        converged = res_norm <= opts.tolerance

    final = _assemble_state(model, epsilon, u, grid)
    if converged and final.clamped:
        raise SolverError(
            "exponent clamp active at a converged solution; the density "
            "bound is violated and the model is outside the solvable regime",
            history=history,
        )
    return PenalizedSolution(
        epsilon=float(epsilon),
        u=GridField(grid, u),
        theta=GridField(grid, final.theta),
        residual_norm=res_norm,
        newton_iterations=iterations,
        line_search_backtracks=backtracks,
        converged=bool(converged),
    )


def mass_identity_gap(model: ModelSpec, sol: PenalizedSolution) -> float:
    """|integral of absorption - source mass|; telescoping makes this a
    direct certificate of the summed transport equation."""
    _, slope = eval_penalization(PenalizationSpec(sol.epsilon),
                                 sol.u.values - model.obstacle)
    vol = sol.u.grid.cell_volume
    return float(abs((slope * sol.theta.values).sum() * vol - model.source))


def theta_floor(model: ModelSpec) -> float:
    """Lower bound every recovered density satisfies."""
    return coupling_floor(model.coupling)
