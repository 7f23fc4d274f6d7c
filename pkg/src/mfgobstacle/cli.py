"""Experiment orchestration and command line entry point.

Modes: a single penalized solve, a continuation run to the smallest
scheduled epsilon, an epsilon sweep with a uniform-boundedness verdict over
one or more grids, a multi-start uniqueness test, and a standalone
assumption audit.  Every run writes manifest.json (config echo, versions,
seed, timestamp), report.json, and trace.csv; snapshots and figures are
opt-in via the emit flags.  Exit codes: 0 all gates pass, 1 configuration
error, 2 solver failure (partial artifacts kept), 3 an invariant gate
failed (named in the report).
"""
from __future__ import annotations

import argparse
import json
import math
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import diagnostics
from .config import RunConfig, parse_config, serialize_config
from .continuation import run_continuation, solution_trace_row, trace_to_csv, uplus_trend
from .errors import AssumptionError, ConfigError, ContinuationError, SolverError
from .grid import GridField, PeriodicGrid, write_field_csv
from .model import check_assumptions
from .seeding import substream
from .solver import mass_identity_gap, newton_solve, theta_floor

TAU = 2.0 * math.pi

WEAK_KFP_TOL = 1e-8
UNIQUENESS_LINF_TOL = 1e-6
UNIQUENESS_SET_TOL = 1e-6
UNIQUENESS_MONOTONICITY_TOL = 1e-10
MASS_IDENTITY_FACTOR = 10.0


@dataclass(frozen=True)
class Gate:
    name: str
    passed: bool
    value: float
    threshold: float

    def to_dict(self) -> dict:
        return {
            "passed": bool(self.passed),
            "value": float(self.value),
            "threshold": float(self.threshold),
        }


class _SolverFailure(Exception):
    """Internal: a mode handler hit a solver failure with partials to keep."""

    def __init__(self, message, traces=None):
        super().__init__(message)
        self.traces = traces or {}


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _versions() -> dict:
    import scipy

    try:
        from importlib.metadata import version

        own = version("mfgobstacle")
    except Exception:
        own = "0.1.0"
    return {
        "mfgobstacle": own,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def _random_start(grid: PeriodicGrid, rng) -> GridField:
    """Smooth random initial guess: offset plus low-frequency waves."""
    coords = grid.coordinates()
    vals = np.full(grid.shape, -abs(rng.normal(0.2, 0.2)))
    for j in range(grid.dims):
        for freq in (1, 2):
            amp = rng.normal(0.0, 0.15)
            phase = rng.uniform(0.0, TAU)
            vals = vals + amp * np.cos(TAU * freq * coords[..., j] + phase)
    return GridField(grid, vals)


def _grid_label(sizes) -> str:
    return "n" + "x".join(str(n) for n in sizes)


# ---------------------------------------------------------------------------
# Mode handlers: each returns (report_payload, gates, traces, figure_jobs,
# snapshot_jobs) where traces maps filename -> rows.
# ---------------------------------------------------------------------------

def _handle_solve(config: RunConfig):
    model = config.model
    sol = newton_solve(model, config.epsilon,
                       GridField.constant(config.grid, 0.0), config.solver)
    rows = [solution_trace_row(model, sol)]
    if not sol.converged:
        raise _SolverFailure(
            f"solve did not converge (residual {sol.residual_norm:.3e})",
            traces={"trace.csv": rows},
        )
    est = diagnostics.estimate_report(model, sol)
    mass_gap = mass_identity_gap(model, sol)
    floor = theta_floor(model)
    gates = [
        Gate("converged", True, sol.residual_norm, config.solver.tolerance),
        Gate("theta_floor", float(sol.theta.values.min()) >= floor,
             float(sol.theta.values.min()), floor),
        Gate("mass_identity", mass_gap <= MASS_IDENTITY_FACTOR * config.solver.tolerance,
             mass_gap, MASS_IDENTITY_FACTOR * config.solver.tolerance),
    ]
    report = {
        "mode": "solve",
        "epsilon": float(config.epsilon),
        "stats": {
            "residual_norm": float(sol.residual_norm),
            "newton_iterations": int(sol.newton_iterations),
            "line_search_backtracks": int(sol.line_search_backtracks),
        },
        "estimate_report": est.to_dict(),
        "mass_identity_gap": mass_gap,
        "energy_identity_gap": diagnostics.energy_identity_gap(model, sol),
    }
    figures = [("figure_solution.png", "solution", (sol.u, sol.theta, sol.epsilon))]
    snapshots = [("solution", sol)]
    return report, gates, {"trace.csv": rows}, figures, snapshots


def _continuation_gates(config, limit) -> list[Gate]:
    model = config.model
    floor = theta_floor(model)
    min_theta = min(float(s.theta.values.min()) for s in limit.per_epsilon)
    mass_worst = max(mass_identity_gap(model, s) for s in limit.per_epsilon)
    mass_tol = MASS_IDENTITY_FACTOR * config.solver.tolerance
    max_u = float(limit.u.values.max())
    weak = limit.residuals.kfp_inequality_violation
    return [
        Gate("theta_floor", min_theta >= floor, min_theta, floor),
        Gate("mass_identity", mass_worst <= mass_tol, mass_worst, mass_tol),
        Gate("obstacle", max_u <= limit.contact_tolerance, max_u, limit.contact_tolerance),
        Gate("weak_kfp_inequality", weak <= WEAK_KFP_TOL, weak, WEAK_KFP_TOL),
    ]


def _continuation_payload(config, limit) -> dict:
    trend = uplus_trend(limit.schedule_trace)
    theta_vals = limit.theta.values
    final_est = diagnostics.estimate_report(config.model, limit.per_epsilon[-1])
    return {
        "schedule": [float(e) for e in config.schedule.values()],
        "final_epsilon": float(limit.final_epsilon),
        "contact_tolerance": float(limit.contact_tolerance),
        "contact_fraction": float(limit.contact_set.mean()),
        "theta_limit": {
            "mean": float(theta_vals.mean()),
            "min": float(theta_vals.min()),
            "max": float(theta_vals.max()),
        },
        "uplus_slope": trend.slope,
        "uplus_fit_residual": trend.fit_residual,
        "limit_report": limit.residuals.to_dict(),
        "limit_reports_per_epsilon": [r.to_dict() for r in limit.limit_reports],
        "final_estimate_report": final_est.to_dict(),
    }


def _handle_continue(config: RunConfig):
    limit = run_continuation(config.model, config.grid, config.schedule,
                             config.solver, seed=config.seed)
    report = {"mode": "continue", **_continuation_payload(config, limit)}
    gates = _continuation_gates(config, limit)
    figures = [
        ("figure_solution.png", "solution", (limit.u, limit.theta, limit.final_epsilon)),
        ("figure_trace.png", "trace", limit.schedule_trace),
    ]
    snapshots = [("solution", limit.per_epsilon[-1])]
    return report, gates, {"trace.csv": list(limit.schedule_trace)}, figures, snapshots


def _handle_sweep(config: RunConfig):
    cells = []
    gates = []
    traces = {}
    figures = []
    for sizes in config.sweep_grids:
        label = _grid_label(sizes)
        grid = PeriodicGrid(sizes)
        limit = run_continuation(config.model, grid, config.schedule,
                                 config.solver, seed=config.seed)
        reports = [diagnostics.estimate_report(config.model, s) for s in limit.per_epsilon]
        verdict = diagnostics.assumption_constants(reports)
        trend = uplus_trend(limit.schedule_trace)
        cells.append({
            "label": label,
            "sizes": list(sizes),
            "uniformity": verdict.to_dict(),
            "uplus_slope": trend.slope,
            "estimate_reports": [r.to_dict() for r in reports],
        })
        gates.append(Gate(f"uniformity_{label}", verdict.passed,
                          max(verdict.ratios.values()), verdict.threshold))
        traces[f"trace_{label}.csv"] = list(limit.schedule_trace)
        figures.append((f"figure_trace_{label}.png", "trace", limit.schedule_trace))
    report = {"mode": "sweep", "cells": cells}
    return report, gates, traces, figures, []


def _handle_uniqueness(config: RunConfig):
    model = config.model
    grid = config.grid
    limits = []
    traces = {}
    for k in range(config.starts):
        if k == 0:
            init = None
        else:
            init = _random_start(grid, substream(config.seed, f"uniqueness-init-{k}"))
        try:
            limit = run_continuation(model, grid, config.schedule, config.solver,
                                     u_init=init, seed=config.seed)
        except ContinuationError as exc:
            partial = dict(traces)
            partial[f"trace_start{k}.csv"] = list(exc.trace)
            raise _SolverFailure(f"start {k}: {exc}", traces=partial) from exc
        limits.append(limit)
        traces[f"trace_start{k}.csv"] = list(limit.schedule_trace)

    pairs = []
    worst = {"linf_u_gap": 0.0, "set_A_measure": 0.0, "monotonicity_integral": 0.0}
    for a in range(len(limits)):
        for b in range(a + 1, len(limits)):
            gap = diagnostics.uniqueness_gap(model, limits[a], limits[b])
            pairs.append({"pair": [a, b], **gap.to_dict()})
            worst["linf_u_gap"] = max(worst["linf_u_gap"], gap.linf_u_gap)
            worst["set_A_measure"] = max(worst["set_A_measure"], gap.set_A_measure)
            worst["monotonicity_integral"] = max(
                worst["monotonicity_integral"], gap.monotonicity_integral
            )
    gates = [
        Gate("pairwise_linf_gap", worst["linf_u_gap"] <= UNIQUENESS_LINF_TOL,
             worst["linf_u_gap"], UNIQUENESS_LINF_TOL),
        Gate("positive_set_measure", worst["set_A_measure"] <= UNIQUENESS_SET_TOL,
             worst["set_A_measure"], UNIQUENESS_SET_TOL),
        Gate("monotonicity_integral",
             worst["monotonicity_integral"] <= UNIQUENESS_MONOTONICITY_TOL,
             worst["monotonicity_integral"], UNIQUENESS_MONOTONICITY_TOL),
    ]
    report = {
        "mode": "uniqueness",
        "starts": config.starts,
        "pairwise": pairs,
        "worst": worst,
    }
    figures = [("figure_uniqueness.png", "uniqueness", limits)]
    return report, gates, traces, figures, []


def _handle_validate(config: RunConfig):
    audit = check_assumptions(config.model, sample_count=512,
                              seed=config.seed, dims=config.grid.dims)
    gates = [Gate("assumptions", audit.passed,
                  float(sum(not c.passed for c in audit.checks)), 0.0)]
    report = {"mode": "validate", "assumption_report": audit.to_dict()}
    return report, gates, {}, [], []


_HANDLERS = {
    "solve": _handle_solve,
    "continue": _handle_continue,
    "sweep": _handle_sweep,
    "uniqueness": _handle_uniqueness,
    "validate": _handle_validate,
}


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------

def _emit_artifacts(config, outdir: Path, report, gates, traces, figures, snapshots):
    if config.emit.csv:
        for name, rows in traces.items():
            (outdir / name).write_text(trace_to_csv(rows), encoding="utf-8")
    if config.emit.json:
        failed = [g.name for g in gates if not g.passed]
        payload = dict(report)
        payload["gates"] = {g.name: g.to_dict() for g in gates}
        payload["failed_gate"] = failed[0] if failed else None
        _write_json(outdir / "report.json", payload)
    if config.emit.snapshots and snapshots:
        fields_dir = outdir / "fields"
        fields_dir.mkdir(exist_ok=True)
        for name, sol in snapshots:
            _write_json(fields_dir / f"{name}.json", sol.to_snapshot())
            write_field_csv(sol.u, fields_dir / f"{name}_u.csv")
            write_field_csv(sol.theta, fields_dir / f"{name}_theta.csv")
    if config.emit.figures and figures:
        from . import plots

        for filename, kind, payload in figures:
            target = outdir / filename
            if kind == "solution":
                u, theta, eps = payload
                plots.save_solution_figure(u, theta, target, epsilon=eps)
            elif kind == "trace":
                plots.save_trace_figure(payload, target)
            elif kind == "uniqueness":
                plots.save_uniqueness_figure(payload, target)


def run(config: RunConfig, quiet: bool = True) -> int:
    """Execute a config and write artifacts; returns the process exit code."""
    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_json(outdir / "manifest.json", {
        "config": serialize_config(config),
        "versions": _versions(),
        "seed": config.seed,
        "created_unix_s": time.time(),
    })

    def say(msg):
        if not quiet:
            print(msg)

    say(f"mode={config.mode} output={outdir}")
    try:
        report, gates, traces, figures, snapshots = _HANDLERS[config.mode](config)
    except (_SolverFailure, ContinuationError, SolverError) as exc:
        traces = getattr(exc, "traces", None) or {}
        if isinstance(exc, ContinuationError):
            traces = {"trace.csv": list(exc.trace)}
        if config.emit.csv:
            for name, rows in traces.items():
                (outdir / name).write_text(trace_to_csv(rows), encoding="utf-8")
        if config.emit.json:
            _write_json(outdir / "report.json", {
                "mode": config.mode,
                "error": str(exc),
                "gates": {},
                "failed_gate": None,
            })
        say(f"solver failure: {exc}")
        return 2

    _emit_artifacts(config, outdir, report, gates, traces, figures, snapshots)
    failed = [g for g in gates if not g.passed]
    for g in gates:
        say(f"[gate] {g.name}: {'PASS' if g.passed else 'FAIL'} "
            f"(value {g.value:.6g}, threshold {g.threshold:.6g})")
    if failed:
        print(f"gate failed: {failed[0].name}", file=sys.stderr)
        return 3
    say("all gates passed")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mfgobstacle",
        description="Penalization/continuation solver for stationary "
                    "mean-field-game obstacle problems on the torus.",
    )
    parser.add_argument("--config", required=True, help="path to a JSON run configuration")
    parser.add_argument("--mode", choices=sorted(_HANDLERS), help="override the config mode")
    parser.add_argument("--output", help="override the output directory")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    args = parser.parse_args(argv)

    try:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except FileNotFoundError:
        print(f"config error: no such file {args.config}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"config error: invalid JSON: {exc}", file=sys.stderr)
        return 1
    if not isinstance(doc, dict):
        print("config error: top level must be an object", file=sys.stderr)
        return 1
    if args.mode is not None:
        doc["mode"] = args.mode
    if args.output is not None:
        doc["output_dir"] = args.output
    if args.seed is not None:
        doc["seed"] = args.seed

    try:
        config = parse_config(doc)
    except (ConfigError, AssumptionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return run(config, quiet=args.quiet)


if __name__ == "__main__":
    raise SystemExit(main())
