"""Continuous problem data: Hamiltonians, density couplings, penalizations.

The model family couples a positive, uniformly convex Hamiltonian

    H(p, x) = |p|^2 / 2 + V(x) + c0,   V a trigonometric polynomial,

with a strictly increasing coupling g through which the agent density
enters the Hamilton-Jacobi equation, and a one-parameter penalization of
the constraint u <= 0 whose slope is capped at 1/epsilon.  The obstacle is
normalized to zero and the agent source to one.

All operations are pure functions of their inputs.  Arrays follow the
convention that the last axis holds the spatial components; plain scalars
are treated as a single one-dimensional point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AssumptionError, DomainError
from .seeding import substream

TAU = 2.0 * math.pi

HAMILTONIAN_KINDS = ("quadratic_potential",)
COUPLING_KINDS = ("logarithmic", "power")


# ---------------------------------------------------------------------------
# Hamiltonian
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialTerm:
    """One cosine mode of the potential: amplitude * cos(2*pi*k.x + phase)."""

    frequency: tuple[int, ...]
    amplitude: float
    phase: float = 0.0


def _normalize_term(raw) -> PotentialTerm:
    if isinstance(raw, PotentialTerm):
        return raw
    seq = list(raw)
    if len(seq) not in (2, 3):
        raise DomainError(
            "potential term must be (frequency, amplitude) or "
            "(frequency, amplitude, phase), got %r" % (raw,)
        )
    freq = seq[0]
    if isinstance(freq, (int, np.integer)):
        freq = (int(freq),)
    else:
        try:
            freq = tuple(int(k) for k in freq)
        except TypeError as exc:
            raise DomainError("frequency must be an integer or integer vector") from exc
        for k, raw_k in zip(freq, seq[0]):
            if float(raw_k) != float(k):
                raise DomainError("frequencies must be integers (periodicity)")
    if not freq:
        raise DomainError("frequency vector must be non-empty")
    amp = float(seq[1])
    phase = float(seq[2]) if len(seq) == 3 else 0.0
    if not (math.isfinite(amp) and math.isfinite(phase)):
        raise DomainError("potential amplitudes and phases must be finite")
    return PotentialTerm(freq, amp, phase)


@dataclass(frozen=True)
class HamiltonianSpec:
    """Quadratic-in-momentum Hamiltonian with a trigonometric potential."""

    kind: str = "quadratic_potential"
    potential: tuple[PotentialTerm, ...] = ()
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in HAMILTONIAN_KINDS:
            raise DomainError(f"unknown Hamiltonian kind {self.kind!r}")
        terms = tuple(_normalize_term(t) for t in self.potential)
        object.__setattr__(self, "potential", terms)
        object.__setattr__(self, "offset", float(self.offset))
        if not math.isfinite(self.offset):
            raise DomainError("offset must be finite")
        dims = {len(t.frequency) for t in terms}
        if len(dims) > 1:
            raise DomainError("all potential frequency vectors must share one dimension")

    @property
    def dims(self) -> int | None:
        """Spatial dimension fixed by the potential, or None if V == 0."""
        return len(self.potential[0].frequency) if self.potential else None

    @property
    def amplitude_budget(self) -> float:
        """Sum of |amplitudes|; V is bounded by it in absolute value."""
        return float(sum(abs(t.amplitude) for t in self.potential))


@dataclass(frozen=True)
class HamiltonianJet:
    """Value and derivatives of H at a batch of (p, x) points."""

    value: np.ndarray
    grad_p: np.ndarray
    hess_pp: np.ndarray
    grad_x: np.ndarray


def _points(a, dims: int, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.shape[-1] != dims:
        raise DomainError(f"{name} must have {dims} components on the last axis")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


def _dims_of(spec: HamiltonianSpec, p, x) -> int:
    if spec.dims is not None:
        return spec.dims
    arr = np.asarray(x, dtype=float)
    return int(arr.shape[-1]) if arr.ndim >= 1 else 1


def potential_value(spec: HamiltonianSpec, x: np.ndarray) -> np.ndarray:
    """V(x) for x of shape (..., N)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1])
    for t in spec.potential:
        k = np.asarray(t.frequency, dtype=float)
        out = out + t.amplitude * np.cos(TAU * (x * k).sum(axis=-1) + t.phase)
    return out


def potential_gradient(spec: HamiltonianSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape)
    for t in spec.potential:
        k = np.asarray(t.frequency, dtype=float)
        s = np.sin(TAU * (x * k).sum(axis=-1) + t.phase)
        out = out - (t.amplitude * TAU) * s[..., None] * k
    return out


def potential_hessian(spec: HamiltonianSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    out = np.zeros(x.shape[:-1] + (n, n))
    for t in spec.potential:
        k = np.asarray(t.frequency, dtype=float)
        c = np.cos(TAU * (x * k).sum(axis=-1) + t.phase)
        out = out - (t.amplitude * TAU * TAU) * c[..., None, None] * np.outer(k, k)
    return out


def eval_hamiltonian(spec: HamiltonianSpec, p, x) -> HamiltonianJet:
    """Evaluate H together with D_pH, D^2_pp H and D_x H.

    For the quadratic family the momentum derivatives are exact and cheap:
    D_pH = p and D^2_pp H = I.
    """
    dims = _dims_of(spec, p, x)
    p = _points(p, dims, "p")
    x = _points(x, dims, "x")
    batch = np.broadcast_shapes(p.shape[:-1], x.shape[:-1])
    value = 0.5 * (p * p).sum(axis=-1) + potential_value(spec, x) + spec.offset
    grad_p = np.broadcast_to(p, batch + (dims,)).copy()
    hess_pp = np.broadcast_to(np.eye(dims), batch + (dims, dims))
    grad_x = np.broadcast_to(potential_gradient(spec, x), batch + (dims,)).copy()
    return HamiltonianJet(np.broadcast_to(value, batch).copy(), grad_p, hess_pp, grad_x)


# ---------------------------------------------------------------------------
# Coupling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CouplingSpec:
    """Strictly increasing coupling through which the density enters the HJ
    equation.

    ``logarithmic``: g(t) = log t  (growth exponent alpha = 0).
    ``power``:       g(t) = t**alpha - theta_shift, so the zero of g sits at
    the positive value theta_shift**(1/alpha).
    """

    kind: str
    alpha: float = 0.0
    theta_shift: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "theta_shift", float(self.theta_shift))
        if self.kind not in COUPLING_KINDS:
            raise DomainError(f"unknown coupling kind {self.kind!r}")
        if not (math.isfinite(self.alpha) and math.isfinite(self.theta_shift)):
            raise DomainError("coupling parameters must be finite")
        if self.kind == "logarithmic":
            if self.alpha != 0.0:
                raise DomainError("logarithmic coupling has growth exponent 0")
            if self.theta_shift != 1.0:
                raise DomainError("theta_shift is unused for the logarithmic coupling")
        else:
            if self.alpha <= 0.0:
                raise DomainError("power coupling requires alpha > 0")
            if self.theta_shift <= 0.0:
                raise DomainError("power coupling requires theta_shift > 0")


def coupling_floor(spec: CouplingSpec) -> float:
    """The positive density value where the coupling crosses zero."""
    if spec.kind == "logarithmic":
        return 1.0
    return float(spec.theta_shift ** (1.0 / spec.alpha))


def eval_coupling(spec: CouplingSpec, theta):
    """Return (g(theta), g'(theta)); theta must be positive."""
    th = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(th)) or np.any(th <= 0.0):
        raise DomainError("coupling is defined for positive theta only")
    if spec.kind == "logarithmic":
        val, slope = np.log(th), 1.0 / th
    else:
        val = th ** spec.alpha - spec.theta_shift
        slope = spec.alpha * th ** (spec.alpha - 1.0)
    if np.isscalar(theta):
        return float(val), float(slope)
    return val, slope


def invert_coupling(spec: CouplingSpec, y):
    """Solve g(theta) = y for theta > 0."""
    yv = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(yv)):
        raise DomainError("coupling inverse requires finite input")
    if spec.kind == "logarithmic":
        out = np.exp(yv)
    else:
        if np.any(yv <= -spec.theta_shift):
            raise DomainError(
                "value below the range of the power coupling "
                f"(needs y > {-spec.theta_shift})"
            )
        out = (yv + spec.theta_shift) ** (1.0 / spec.alpha)
    return float(out) if np.isscalar(y) else out


# ---------------------------------------------------------------------------
# Penalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PenalizationSpec:
    """Obstacle penalization with slope capped at 1/epsilon.

    Piecewise definition: 0 on s <= 0, s^2/(4 eps^2) on (0, 2 eps],
    (s - eps)/eps beyond.  The quadratic bridge matches value and slope at
    both breakpoints, is convex, and satisfies |b(s) - s b'(s)| <= 1.
    """

    epsilon: float

    def __post_init__(self):
        object.__setattr__(self, "epsilon", float(self.epsilon))
        if not (math.isfinite(self.epsilon) and self.epsilon > 0.0):
            raise DomainError("epsilon must be positive")


def eval_penalization(spec: PenalizationSpec, s):
    """Return (value, slope) of the penalization at s."""
    sv = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(sv)):
        raise DomainError("penalization input must be finite")
    eps = spec.epsilon
    mid = (sv > 0.0) & (sv <= 2.0 * eps)
    outer = sv > 2.0 * eps
    value = np.where(mid, sv * sv / (4.0 * eps * eps), 0.0)
    value = np.where(outer, (sv - eps) / eps, value)
    slope = np.where(mid, sv / (2.0 * eps * eps), 0.0)
    slope = np.where(outer, 1.0 / eps, slope)
    if np.isscalar(s):
        return float(value), float(slope)
    return value, slope


def penalization_curvature(spec: PenalizationSpec, s):
    """Second derivative of the penalization (almost everywhere)."""
    sv = np.asarray(s, dtype=float)
    eps = spec.epsilon
    out = np.where((sv > 0.0) & (sv <= 2.0 * eps), 1.0 / (2.0 * eps * eps), 0.0)
    return float(out) if np.isscalar(s) else out


# ---------------------------------------------------------------------------
# Full model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    """Hamiltonian plus coupling, with obstacle 0 and unit agent source."""

    hamiltonian: HamiltonianSpec
    coupling: CouplingSpec
    obstacle: float = 0.0
    source: float = 1.0

    def __post_init__(self):
        if float(self.obstacle) != 0.0:
            raise DomainError("the obstacle is normalized to zero")
        if float(self.source) != 1.0:
            raise DomainError("the agent source is normalized to one")
        object.__setattr__(self, "obstacle", 0.0)
        object.__setattr__(self, "source", 1.0)


# ---------------------------------------------------------------------------
# Critical coupling exponent
# ---------------------------------------------------------------------------

def alpha_max(dims: int):
    """Largest admissible power-coupling exponent for dimension ``dims``.

    Unbounded (math.inf) in dimensions 1 and 2.  Above two dimensions it is
    the root of 2*a = (a + 1)*q with q = b*(b - 1), b = sqrt(N/(N - 2)),
    which resolves to the closed form q / (2 - q).
    """
    dims = int(dims)
    if dims < 1:
        raise DomainError("dimension must be a positive integer")
    if dims <= 2:
        return math.inf
    b = math.sqrt(dims / (dims - 2.0))
    q = b * (b - 1.0)
    return q / (2.0 - q)


# ---------------------------------------------------------------------------
# Assumption validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    passed: bool
    detail: str
    constants: dict
    witness: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "passed": bool(self.passed),
            "detail": self.detail,
            "constants": {k: float(v) for k, v in self.constants.items()},
        }
        if self.witness is not None:
            out["witness"] = {
                k: (list(v) if isinstance(v, (tuple, list, np.ndarray)) else float(v))
                for k, v in self.witness.items()
            }
        return out


@dataclass(frozen=True)
class AssumptionReport:
    dims: int
    sample_count: int
    seed: int
    checks: tuple[AssumptionCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def first_failure(self) -> AssumptionCheck | None:
        for c in self.checks:
            if not c.passed:
                return c
        return None

    def to_dict(self) -> dict:
        return {
            "dims": self.dims,
            "sample_count": self.sample_count,
            "seed": self.seed,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
        }


def _dense_potential_extrema(spec: HamiltonianSpec, dims: int):
    """Min/max of V on a fine deterministic grid (argmin returned too)."""
    if not spec.potential:
        return 0.0, 0.0, np.zeros(dims)
    res = 4096 if dims == 1 else 128
    axes = [np.arange(res) / res for _ in range(dims)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    vals = potential_value(spec, mesh)
    lo = float(vals.min())
    hi = float(vals.max())
    argmin = mesh.reshape(-1, dims)[int(vals.argmin())]
    return lo, hi, argmin


def check_assumptions(model: ModelSpec, sample_count: int = 256, seed: int = 0,
                      dims: int | None = None) -> AssumptionReport:
    """Numerically audit the structural assumptions on H and g.

    Samples (p, x, theta) with |p| <= 10 and theta in [theta0/2, 10], fits
    the growth constants over the sample cloud, and reports a pass/fail
    verdict with a witnessing sample for every requirement.  ``dims``
    overrides the dimension inferred from the potential (needed to audit
    the critical exponent in dimensions the potential does not pin down).
    """
    if int(sample_count) < 1:
        raise DomainError("sample_count must be at least 1")
    sample_count = int(sample_count)
    ham, g = model.hamiltonian, model.coupling
    n = int(dims) if dims is not None else (ham.dims or 1)
    if ham.dims is not None and n != ham.dims:
        raise DomainError(f"dims={n} conflicts with the potential dimension {ham.dims}")

    rng = substream(seed, "assumptions")
    p = rng.uniform(-10.0, 10.0, size=(sample_count, n))
    mag = np.linalg.norm(p, axis=-1, keepdims=True)
    p *= np.minimum(1.0, 10.0 / np.maximum(mag, 1e-300))
    x = rng.uniform(0.0, 1.0, size=(sample_count, n))
    theta0 = coupling_floor(g)
    th = rng.uniform(0.5 * theta0, 10.0, size=sample_count)
    th = np.concatenate([th, [0.5 * theta0, 10.0]])

    jet = eval_hamiltonian(ham, p, x)
    pnorm = np.linalg.norm(p, axis=-1)
    checks: list[AssumptionCheck] = []

    def add(name, passed, detail, constants, witness=None):
        checks.append(AssumptionCheck(name, bool(passed), detail, constants, witness))

    # (i) positivity, audited on samples and on a dense potential grid.
    vmin, vmax, argmin = _dense_potential_extrema(ham, n)
    hmin_idx = int(jet.value.argmin())
    floor = vmin + ham.offset
    ok = jet.value[hmin_idx] > 0.0 and floor > 0.0
    add(
        "hamiltonian_positive", ok,
        "assumption (i): H must be positive"
        + ("" if ok else f"; min V + offset = {floor:.6g}"),
        {"min_sampled_H": float(jet.value[hmin_idx]), "min_potential_plus_offset": floor},
        None if ok else {"p": p[hmin_idx], "x": argmin, "H": min(float(jet.value[hmin_idx]), floor)},
    )

    # (ii) periodicity under unit translations.
    shift_err = 0.0
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        shifted = eval_hamiltonian(ham, p, x + e)
        shift_err = max(shift_err, float(np.abs(shifted.value - jet.value).max()))
    scale = 1.0 + float(np.abs(jet.value).max())
    add("hamiltonian_periodic", shift_err <= 1e-9 * scale,
        "assumption (ii): H periodic in x", {"max_shift_error": shift_err})

    # (iii) uniform convexity via the smallest momentum-Hessian eigenvalue.
    eigs = np.linalg.eigvalsh(jet.hess_pp)
    lam = float(eigs.min())
    i_bad = int(eigs.min(axis=-1).argmin())
    add("hamiltonian_uniformly_convex", lam >= 1.0 - 1e-10,
        "assumption (iii): uniform convexity with constant 1",
        {"lambda": lam},
        None if lam >= 1.0 - 1e-10 else {"p": p[i_bad], "x": x[i_bad]})

    # (iv) growth of the second derivatives (fitted constants; Frobenius).
    hxx = potential_hessian(ham, x)
    c_pp = float(np.abs(jet.hess_pp).max())
    c_xx = float((np.linalg.norm(hxx, axis=(-2, -1)) / (1.0 + pnorm ** 2)).max())
    c_growth = max(c_pp, c_xx)  # mixed p-x derivatives vanish for this family
    add("hamiltonian_growth", math.isfinite(c_growth),
        "assumption (iv): second-derivative growth bounds (fitted)",
        {"C": c_growth, "C_pp": c_pp, "C_xx": c_xx})

    # (iv) H - D_pH.p bounded above.
    drift = jet.value - (jet.grad_p * p).sum(axis=-1)
    c_drift = float(drift.max())
    add("hamiltonian_drift_bound", math.isfinite(c_drift),
        "assumption (iv): H - D_pH.p bounded above (fitted)",
        {"C": c_drift, "analytic_bound": vmax + ham.offset})

    # Quadratic envelope implied by (iii)-(iv).
    c_low = float(np.maximum(0.5 * pnorm ** 2 - jet.value, 0.0).max())
    c_up = float((jet.value / (1.0 + pnorm ** 2)).max())
    add("hamiltonian_quadratic_envelope",
        math.isfinite(c_low) and math.isfinite(c_up),
        "quadratic growth envelope of H (fitted)",
        {"C_lower": c_low, "C_upper": c_up})

    # First-derivative growth implied by (iv).
    c_dp = float((np.linalg.norm(jet.grad_p, axis=-1) / (1.0 + pnorm)).max())
    c_dx = float((np.linalg.norm(jet.grad_x, axis=-1) / (1.0 + pnorm ** 2)).max())
    add("hamiltonian_derivative_growth",
        math.isfinite(c_dp) and math.isfinite(c_dx),
        "sublinear D_pH and quadratic D_xH growth (fitted)",
        {"C_p": c_dp, "C_x": c_dx})

    # (vi)(a) strict monotonicity of g.
    _, gp = eval_coupling(g, th)
    gp_min = float(np.min(gp))
    i_bad = int(np.argmin(gp))
    add("coupling_increasing", gp_min > 0.0,
        "assumption (vi)(a): g strictly increasing",
        {"min_gprime": gp_min},
        None if gp_min > 0.0 else {"theta": float(th[i_bad])})

    # (vi)(b) the zero of g sits at positive density.
    add("coupling_zero_crossing", theta0 > 0.0,
        "assumption (vi)(b): g vanishes at a positive density",
        {"theta_zero": theta0})

    # (vi)(d) power bracket on g'.
    alpha = g.alpha
    lower = float(np.min(gp * th ** (1.0 - alpha)))
    upper = float(np.max(gp / (th ** (alpha - 1.0) + 1.0)))
    add("coupling_slope_bracket", lower > 0.0 and math.isfinite(upper),
        "assumption (vi)(d): power bracket on g' (fitted)",
        {"C": lower, "C_tilde": upper, "alpha": alpha})

    # (vi)(c) convexity of theta * g(theta) via second differences.
    tgrid = np.linspace(theta0 * 1e-2, 20.0, 2001)
    f, _ = eval_coupling(g, tgrid)
    f = tgrid * f
    d2 = f[2:] - 2.0 * f[1:-1] + f[:-2]
    d2_min = float(d2.min())
    tol = 1e-10 * max(1.0, float(np.abs(f).max()))
    i_bad = int(d2.argmin())
    add("coupling_theta_g_convex", d2_min >= -tol,
        "assumption (vi)(c): theta*g(theta) convex",
        {"min_second_difference": d2_min},
        None if d2_min >= -tol else {"theta": float(tgrid[i_bad + 1])})

    # (vi)(f) superlinear growth: C0*t <= g(t)*t/2 + C1 for every C0.
    wide = np.geomspace(1e-6, 1e12, 4000)
    gw, _ = eval_coupling(g, wide)
    fitted_c1 = {}
    growth_ok = True
    for c0 in (1.0, 2.0, 5.0, 10.0):
        excess = c0 * wide - 0.5 * wide * gw
        k = int(excess.argmax())
        fitted_c1[f"C1_at_C0={c0:g}"] = max(float(excess[k]), 0.0)
        if k == len(wide) - 1:  # supremum escaping to infinity
            growth_ok = False
    add("coupling_superlinear_growth", growth_ok,
        "assumption (vi)(f): g(theta)*theta dominates every linear function",
        fitted_c1)

    # (vi)(d) exponent below the critical dimension threshold.
    a_crit = alpha_max(n)
    add("coupling_exponent_subcritical", alpha < a_crit,
        f"assumption (vi)(d): growth exponent below critical value for N={n}",
        {"alpha": alpha, "alpha_max": a_crit},
        None if alpha < a_crit else {"alpha": alpha, "alpha_max": a_crit, "dims": float(n)})

    return AssumptionReport(n, sample_count, int(seed), tuple(checks))


def validate_model(model: ModelSpec, sample_count: int = 256, seed: int = 0,
                   dims: int | None = None) -> AssumptionReport:
    """Run ``check_assumptions`` and raise on the first violated assumption."""
    report = check_assumptions(model, sample_count=sample_count, seed=seed, dims=dims)
    bad = report.first_failure
    if bad is not None:
        raise AssumptionError(f"model rejected: {bad.detail} [{bad.name}]", check=bad)
    return report
