"""Run configuration: strict JSON parsing, defaulting, and serialization.

Unknown keys are rejected with the offending path; defaults are
materialized at parse time so the echoed configuration in the manifest is
complete and round-trips exactly.  Model assumptions are audited at parse
time for every mode that runs solves ("validate" mode skips the gate, it
IS the gate).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .continuation import EpsilonSchedule
from .errors import ConfigError, DomainError
from .grid import PeriodicGrid
from .model import CouplingSpec, HamiltonianSpec, ModelSpec, validate_model
from .solver import SolverOptions

MODES = ("solve", "continue", "sweep", "uniqueness", "validate")

ASSUMPTION_SAMPLE_COUNT = 256


@dataclass(frozen=True)
class EmitFlags:
    json: bool = True
    csv: bool = True
    snapshots: bool = False
    figures: bool = True


@dataclass(frozen=True)
class RunConfig:
    mode: str
    model: ModelSpec
    grid: PeriodicGrid
    schedule: EpsilonSchedule
    solver: SolverOptions
    emit: EmitFlags
    seed: int
    output_dir: str
    epsilon: float          # single-solve mode
    starts: int             # uniqueness mode
    sweep_grids: tuple[tuple[int, ...], ...]


def _require_mapping(obj, path: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object")
    return obj


def _check_keys(obj: dict, allowed, path: str) -> None:
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown key (allowed: {', '.join(sorted(allowed))})")


def _number(obj: dict, key: str, path: str, default=None, kind=float):
    if key not in obj:
        if default is None:
            raise ConfigError(f"{path}.{key}: required")
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number")
    if kind is int and int(val) != val:
        raise ConfigError(f"{path}.{key}: expected an integer")
    return kind(val)


def _boolean(obj: dict, key: str, path: str, default: bool) -> bool:
    if key not in obj:
        return default
    if not isinstance(obj[key], bool):
        raise ConfigError(f"{path}.{key}: expected a boolean")
    return obj[key]


def _string(obj: dict, key: str, path: str, default=None, choices=None) -> str:
    if key not in obj:
        if default is None:
            raise ConfigError(f"{path}.{key}: required")
        return default
    val = obj[key]
    if not isinstance(val, str):
        raise ConfigError(f"{path}.{key}: expected a string")
    if choices is not None and val not in choices:
        raise ConfigError(f"{path}.{key}: must be one of {', '.join(choices)}")
    return val


def _parse_hamiltonian(obj, path: str) -> HamiltonianSpec:
    obj = _require_mapping(obj, path)
    _check_keys(obj, {"kind", "potential", "offset"}, path)
    kind = _string(obj, "kind", path, choices=("quadratic_potential",))
    potential = obj.get("potential", [])
    if not isinstance(potential, list):
        raise ConfigError(f"{path}.potential: expected a list of terms")
    offset = _number(obj, "offset", path, default=0.0)
    try:
        return HamiltonianSpec(kind=kind, potential=tuple(tuple(t) for t in potential),
                               offset=offset)
    except (DomainError, TypeError) as exc:
        raise ConfigError(f"{path}.potential: {exc}") from exc


def _parse_coupling(obj, path: str) -> CouplingSpec:
    obj = _require_mapping(obj, path)
    _check_keys(obj, {"kind", "alpha", "theta_shift"}, path)
    kind = _string(obj, "kind", path, choices=("logarithmic", "power"))
    alpha = _number(obj, "alpha", path, default=0.0)
    shift = _number(obj, "theta_shift", path, default=1.0)
    try:
        return CouplingSpec(kind=kind, alpha=alpha, theta_shift=shift)
    except DomainError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_grid(obj, path: str) -> PeriodicGrid:
    obj = _require_mapping(obj, path)
    _check_keys(obj, {"dims", "sizes"}, path)
    sizes = obj.get("sizes")
    if not isinstance(sizes, list) or not sizes:
        raise ConfigError(f"{path}.sizes: required list of axis point counts")
    dims = _number(obj, "dims", path, default=len(sizes), kind=int)
    if dims != len(sizes):
        raise ConfigError(f"{path}.dims: must equal len(sizes) = {len(sizes)}")
    try:
        return PeriodicGrid(tuple(int(n) for n in sizes))
    except (DomainError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_schedule(obj, path: str) -> EpsilonSchedule:
    obj = _require_mapping(obj, path)
    _check_keys(obj, {"start", "factor", "steps"}, path)
    try:
        return EpsilonSchedule(
            start=_number(obj, "start", path, default=0.2),
            factor=_number(obj, "factor", path, default=0.5),
            steps=_number(obj, "steps", path, default=6, kind=int),
        )
    except DomainError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_solver(obj, path: str) -> SolverOptions:
    obj = _require_mapping(obj, path)
    allowed = {
        "tolerance", "max_iterations", "armijo_slope", "backtrack_factor",
        "max_backtracks", "jacobian_mode", "viscosity_coefficient",
    }
    _check_keys(obj, allowed, path)
    try:
        return SolverOptions(
            tolerance=_number(obj, "tolerance", path, default=1e-10),
            max_iterations=_number(obj, "max_iterations", path, default=100, kind=int),
            armijo_slope=_number(obj, "armijo_slope", path, default=1e-4),
            backtrack_factor=_number(obj, "backtrack_factor", path, default=0.5),
            max_backtracks=_number(obj, "max_backtracks", path, default=40, kind=int),
            jacobian_mode=_string(obj, "jacobian_mode", path,
                                  default="colored_fd",
                                  choices=("colored_fd", "frozen_advection")),
            viscosity_coefficient=_number(obj, "viscosity_coefficient", path, default=0.0),
        )
    except DomainError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_config(document) -> RunConfig:
    """Parse a JSON document (text, path content, or mapping) into a RunConfig.

    Raises ``ConfigError`` naming the offending path for schema problems and
    forwards ``AssumptionError`` from the model audit.
    """
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
    else:
        doc = document
    doc = _require_mapping(doc, "$")
    top_allowed = {
        "mode", "model", "grid", "schedule", "solver", "seed", "output_dir",
        "emit", "epsilon", "starts", "sweep",
    }
    _check_keys(doc, top_allowed, "$")

    mode = _string(doc, "mode", "$", choices=MODES)
    model_obj = _require_mapping(doc.get("model"), "$.model")
    _check_keys(model_obj, {"hamiltonian", "coupling"}, "$.model")
    hamiltonian = _parse_hamiltonian(model_obj.get("hamiltonian"), "$.model.hamiltonian")
    coupling = _parse_coupling(model_obj.get("coupling"), "$.model.coupling")
    model = ModelSpec(hamiltonian=hamiltonian, coupling=coupling)

    grid = _parse_grid(doc.get("grid"), "$.grid")
    if hamiltonian.dims is not None and hamiltonian.dims != grid.dims:
        raise ConfigError(
            f"$.model.hamiltonian: potential dimension {hamiltonian.dims} "
            f"does not match grid dimension {grid.dims}"
        )

    schedule = _parse_schedule(doc.get("schedule", {}), "$.schedule")
    solver = _parse_solver(doc.get("solver", {}), "$.solver")

    emit_obj = _require_mapping(doc.get("emit", {}), "$.emit")
    _check_keys(emit_obj, {"json", "csv", "snapshots", "figures"}, "$.emit")
    emit = EmitFlags(
        json=_boolean(emit_obj, "json", "$.emit", True),
        csv=_boolean(emit_obj, "csv", "$.emit", True),
        snapshots=_boolean(emit_obj, "snapshots", "$.emit", False),
        figures=_boolean(emit_obj, "figures", "$.emit", True),
    )

    seed = _number(doc, "seed", "$", default=0, kind=int)
    output_dir = _string(doc, "output_dir", "$", default="output")
    epsilon = _number(doc, "epsilon", "$", default=schedule.start)
    if epsilon <= 0.0:
        raise ConfigError("$.epsilon: must be positive")
    starts = _number(doc, "starts", "$", default=3, kind=int)
    if starts < 2:
        raise ConfigError("$.starts: uniqueness needs at least 2 starts")

    sweep_obj = _require_mapping(doc.get("sweep", {}), "$.sweep")
    _check_keys(sweep_obj, {"grids"}, "$.sweep")
    raw_grids = sweep_obj.get("grids", [list(grid.sizes)])
    if not isinstance(raw_grids, list) or not raw_grids:
        raise ConfigError("$.sweep.grids: expected a non-empty list of size lists")
    sweep_grids = []
    for k, sizes in enumerate(raw_grids):
        cell = _parse_grid({"sizes": list(sizes)}, f"$.sweep.grids[{k}]")
        if cell.dims != grid.dims:
            raise ConfigError(f"$.sweep.grids[{k}]: dimension must match $.grid")
        sweep_grids.append(cell.sizes)

    config = RunConfig(
        mode=mode, model=model, grid=grid, schedule=schedule, solver=solver,
        emit=emit, seed=seed, output_dir=output_dir, epsilon=epsilon,
        starts=starts, sweep_grids=tuple(sweep_grids),
    )
    if mode != "validate":
        validate_model(model, sample_count=ASSUMPTION_SAMPLE_COUNT,
                       seed=seed, dims=grid.dims)
    return config


def serialize_config(config: RunConfig) -> dict:
    """Canonical JSON-ready echo of a config, defaults included."""
    ham = config.model.hamiltonian
    coup = config.model.coupling
    return {
        "mode": config.mode,
        "model": {
            "hamiltonian": {
                "kind": ham.kind,
                "potential": [
                    [list(t.frequency), t.amplitude, t.phase] for t in ham.potential
                ],
                "offset": ham.offset,
            },
            "coupling": {
                "kind": coup.kind,
                "alpha": coup.alpha,
                "theta_shift": coup.theta_shift,
            },
        },
        "grid": {"dims": config.grid.dims, "sizes": list(config.grid.sizes)},
        "schedule": {
            "start": config.schedule.start,
            "factor": config.schedule.factor,
            "steps": config.schedule.steps,
        },
        "solver": {
            "tolerance": config.solver.tolerance,
            "max_iterations": config.solver.max_iterations,
            "armijo_slope": config.solver.armijo_slope,
            "backtrack_factor": config.solver.backtrack_factor,
            "max_backtracks": config.solver.max_backtracks,
            "jacobian_mode": config.solver.jacobian_mode,
            "viscosity_coefficient": config.solver.viscosity_coefficient,
        },
        "emit": {
            "json": config.emit.json,
            "csv": config.emit.csv,
            "snapshots": config.emit.snapshots,
            "figures": config.emit.figures,
        },
        "seed": config.seed,
        "output_dir": config.output_dir,
        "epsilon": config.epsilon,
        "starts": config.starts,
        "sweep": {"grids": [list(s) for s in config.sweep_grids]},
    }


def config_from_file(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))
