"""Scenario-driven command line: simulate | witness | qrf | nogo | report.

Every run writes a ``manifest.json`` (config echo, config hash, seed, wall
time) next to the protocol artifacts.  Result bodies are deterministic for a
fixed (config, seed): floats are serialized with ``repr`` and JSON keys are
sorted, so repeated runs produce byte-identical artifact files (the manifest
differs only in its wall-time field).

Exit codes: 0 success, 1 usage/schema/IO error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from .config import Scenario, SchemaError, parse_scenario, serialize_scenario
from .linalg import DensityValidationError, DimensionMismatchError, MemoryCapError
from .models import ConstructionFailed
from .dynamics import ConditionTwoViolation, exact_propagate, perturbative_p
from .qrf import qrf_scan
from .witness import check_nogo_conditions, prep_marginal_preserving, run_witness_protocol

NUMERICAL_ERRORS = (
    DensityValidationError,
    ConditionTwoViolation,
    ConstructionFailed,
    DimensionMismatchError,
    MemoryCapError,
    np.linalg.LinAlgError,
)


def _fmt(x: float) -> str:
    return repr(float(x))


def _config_hash(config: dict) -> str:
    payload = json.dumps(config, sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_manifest(outdir: Path, scenario: Scenario, wall_time: float, extra: dict) -> None:
    config = serialize_scenario(scenario)
    manifest = {
        "config": config,
        "config_hash": _config_hash(config),
        "seed": scenario.seed,
        "wall_time_s": wall_time,
        **extra,
    }
    _write_json(outdir / "manifest.json", manifest)


def _provenance(scenario: Scenario) -> dict:
    config = serialize_scenario(scenario)
    return {"config_hash": _config_hash(config), "seed": scenario.seed}


def _run_trajectories(scenario: Scenario, model, state, family, grid):
    method = scenario.protocol.method
    rows = []
    for pulse in family:
        if method == "exact":
            traj = exact_propagate(
                model, state, pulse, grid, stepper=scenario.grid.stepper, keep_final=False
            )
        else:
            traj = perturbative_p(model, state, pulse, grid)
        rows.append((pulse.label, traj))
    return rows


def _write_trajectories_csv(path: Path, rows, method: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "p", "mask_id", "method"])
        for label, traj in rows:
            for t, p in zip(traj.times, traj.populations):
                writer.writerow([_fmt(t), _fmt(p), label, method])


def _write_per_mask_csvs(outdir: Path, rows, method: str) -> None:
    subdir = outdir / "trajectories"
    subdir.mkdir(exist_ok=True)
    for label, traj in rows:
        _write_trajectories_csv(subdir / f"traj_{label}.csv", [(label, traj)], method)


def write_state_txt(mat: np.ndarray, dims, path) -> None:
    """Plain-text matrix format: a dims header, then rows of "re im" pairs."""
    mat = np.asarray(mat, dtype=complex)
    with open(path, "w") as fh:
        fh.write("dims " + " ".join(str(int(d)) for d in dims) + "\n")
        for row in mat:
            fh.write(" ".join(f"{float(v.real)!r} {float(v.imag)!r}" for v in row) + "\n")


def read_state_txt(path):
    """Inverse of write_state_txt; returns (matrix, dims)."""
    with open(path) as fh:
        header = fh.readline().split()
        if not header or header[0] != "dims":
            raise ValueError(f"{path}: missing dims header")
        dims = tuple(int(x) for x in header[1:])
        rows = []
        for line in fh:
            vals = [float(x) for x in line.split()]
            rows.append([complex(vals[i], vals[i + 1]) for i in range(0, len(vals), 2)])
    return np.array(rows, dtype=complex), dims


def _grid_convergence(scenario: Scenario, model, state, family) -> dict:
    grid = scenario.build_grid()
    fine = grid.halved()
    pulse = family[0]
    if scenario.protocol.method == "exact":
        p1 = exact_propagate(model, state, pulse, grid, stepper=scenario.grid.stepper,
                             keep_final=False).populations[-1]
        p2 = exact_propagate(model, state, pulse, fine, stepper=scenario.grid.stepper,
                             keep_final=False).populations[-1]
    else:
        p1 = perturbative_p(model, state, pulse, grid).populations[-1]
        p2 = perturbative_p(model, state, pulse, fine).populations[-1]
    return {"delta_p_final_on_halving": abs(p2 - p1), "converged": bool(abs(p2 - p1) < 1e-9)}


def cmd_simulate(scenario: Scenario, outdir: Path, verify_grid: bool) -> int:
    start = time.monotonic()
    model = scenario.build_model()
    state = scenario.build_state(model)
    family = scenario.build_family()
    grid = scenario.build_grid()
    rows = _run_trajectories(scenario, model, state, family, grid)
    _write_trajectories_csv(outdir / "trajectories.csv", rows, scenario.protocol.method)
    _write_per_mask_csvs(outdir, rows, scenario.protocol.method)
    artifacts = ["trajectories.csv"]
    if scenario.protocol.method == "exact":
        final = exact_propagate(
            model, state, family[0], grid, stepper=scenario.grid.stepper
        ).final_state
        write_state_txt(final.mat, model.layout.dims, outdir / "final_state.txt")
        artifacts.append("final_state.txt")
    extra = {"artifacts": artifacts}
    if verify_grid:
        extra["grid_convergence"] = _grid_convergence(scenario, model, state, family)
    _write_manifest(outdir, scenario, time.monotonic() - start, extra)
    return 0


def _report_payload(report) -> dict:
    return {
        "yields": [[label, value] for label, value in report.yields],
        "contrast": report.contrast,
        "threshold": report.threshold,
        "detected": report.detected,
        "baseline": report.baseline,
        "scaling_ratio": report.scaling_ratio,
        "scaling_ok": report.scaling_ok,
    }


def cmd_witness(scenario: Scenario, outdir: Path, verify_grid: bool) -> int:
    start = time.monotonic()
    model = scenario.build_model()
    state = scenario.build_state(model)
    family = scenario.build_family()
    grid = scenario.build_grid()
    verdict = run_witness_protocol(
        model, state, family, grid,
        thresholds=scenario.protocol.thresholds,
        method=scenario.protocol.method,
        stepper=scenario.grid.stepper,
        check_scaling=scenario.protocol.check_scaling,
        workers=scenario.resolved_workers(),
    )
    payload = {
        "quadrant": verdict.quadrant,
        "report_before": _report_payload(verdict.report_before),
        "report_after": _report_payload(verdict.report_after),
        "profile_distance": verdict.profile_distance,
        "conditions": dataclasses.asdict(verdict.conditions),
        "caveat_condition2": verdict.caveat_condition2,
        "notes": verdict.notes,
        "config": serialize_scenario(scenario),
        **_provenance(scenario),
    }
    _write_json(outdir / "verdict.json", payload)
    rows_before = _run_trajectories(scenario, model, state, family, grid)
    rows_after = _run_trajectories(
        scenario, model, prep_marginal_preserving(state), family, grid
    )
    labeled = [("before_" + label, traj) for label, traj in rows_before]
    labeled += [("after_" + label, traj) for label, traj in rows_after]
    _write_trajectories_csv(outdir / "trajectories.csv", labeled, scenario.protocol.method)
    extra = {"artifacts": ["verdict.json", "trajectories.csv"]}
    if verify_grid:
        extra["grid_convergence"] = _grid_convergence(scenario, model, state, family)
    _write_manifest(outdir, scenario, time.monotonic() - start, extra)
    return 0


def cmd_qrf(scenario: Scenario, outdir: Path, verify_grid: bool) -> int:
    start = time.monotonic()
    model = scenario.build_model()
    state = scenario.build_state(model)
    q = scenario.protocol.qrf
    ops = {"dipole": model.dipole, "proj_excited": model.proj_excited}
    reports = qrf_scan(
        model, state, ops[q.op_a], ops[q.op_b], q.t1_grid, q.dt_grid, threshold=q.threshold
    )
    with open(outdir / "qrf_scan.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["t1", "t2", "re_exact", "im_exact", "re_regr", "im_regr",
             "deviation", "chi_norm", "violated"]
        )
        for r in reports:
            writer.writerow([
                _fmt(r.t1), _fmt(r.t2),
                _fmt(r.exact_value.real), _fmt(r.exact_value.imag),
                _fmt(r.regression_value.real), _fmt(r.regression_value.imag),
                _fmt(r.deviation), _fmt(r.chi_norm), int(r.violated),
            ])
    violated = [r for r in reports if r.violated]
    summary = {
        "cells": len(reports),
        "violated_cells": len(violated),
        "max_deviation": max(r.deviation for r in reports),
        "first_violated": (
            {"t1": violated[0].t1, "t2": violated[0].t2, "deviation": violated[0].deviation}
            if violated else None
        ),
        **_provenance(scenario),
    }
    _write_json(outdir / "qrf_summary.json", summary)
    _write_manifest(
        outdir, scenario, time.monotonic() - start,
        {"artifacts": ["qrf_scan.csv", "qrf_summary.json"]},
    )
    return 0


def cmd_nogo(scenario: Scenario, outdir: Path, verify_grid: bool) -> int:
    start = time.monotonic()
    model = scenario.build_model()
    state = scenario.build_state(model)
    family = scenario.build_family()
    grid = scenario.build_grid()
    report = check_nogo_conditions(
        model, state, family[0] if scenario.protocol.check_scaling else None, grid,
        tol=scenario.protocol.thresholds.condition,
        method=scenario.protocol.method,
        stepper=scenario.grid.stepper,
    )
    payload = {**dataclasses.asdict(report), **_provenance(scenario)}
    _write_json(outdir / "conditions.json", payload)
    print(f"condition 1 (weak field): ratio={report.scaling_ratio} ok={report.scaling_ok}")
    print(f"condition 2 ([P,H0] = 0): norm={report.cond2_norm:.3e} pass={report.cond2_pass}")
    print(f"condition 3 ([H0,R] = 0): norm={report.cond3_norm:.3e} pass={report.cond3_pass}")
    _write_manifest(
        outdir, scenario, time.monotonic() - start, {"artifacts": ["conditions.json"]}
    )
    return 0


def cmd_report(outdir: Path) -> int:
    manifest_path = outdir / "manifest.json"
    if not manifest_path.exists():
        print(f"no manifest.json under {outdir}", file=sys.stderr)
        return 1
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    print(f"run over config {manifest['config_hash'][:12]} (seed {manifest['seed']})")
    print(f"wall time: {manifest['wall_time_s']:.2f} s")
    for name in manifest.get("artifacts", []):
        print(f"artifact: {name}")
    verdict_path = outdir / "verdict.json"
    if verdict_path.exists():
        with open(verdict_path) as fh:
            verdict = json.load(fh)
        print(f"verdict: {verdict['quadrant']}")
        print(f"  contrast before/after: {verdict['report_before']['contrast']:.3e} / "
              f"{verdict['report_after']['contrast']:.3e}")
        print(f"  profile distance: {verdict['profile_distance']:.3e}")
        print(f"  notes: {verdict['notes']}")
    summary_path = outdir / "qrf_summary.json"
    if summary_path.exists():
        with open(summary_path) as fh:
            summary = json.load(fh)
        print(f"qrf: {summary['violated_cells']}/{summary['cells']} cells violated, "
              f"max deviation {summary['max_deviation']:.3e}")
    conditions_path = outdir / "conditions.json"
    if conditions_path.exists():
        with open(conditions_path) as fh:
            cond = json.load(fh)
        print(f"conditions: c2 pass={cond['cond2_pass']} c3 pass={cond['cond3_pass']} "
              f"scaling ok={cond['scaling_ok']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wfpc",
        description="weak-field phase-control simulator and correlation witness",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "witness", "qrf", "nogo"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="scenario YAML")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--workers", type=int, default=None, help="worker count override")
        p.add_argument("--method", choices=("exact", "pert2"), default=None)
        p.add_argument("--verify-grid", action="store_true",
                       help="run the step-halving convergence check")
    p = sub.add_parser("report")
    p.add_argument("--out", required=True, help="directory with run artifacts")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        return cmd_report(Path(args.out))
    try:
        scenario = parse_scenario(args.config)
        if args.seed is not None:
            scenario = dataclasses.replace(scenario, seed=args.seed)
        if args.workers is not None:
            scenario = dataclasses.replace(scenario, workers=args.workers)
        if args.method is not None:
            scenario.protocol.method = args.method
    except (SchemaError, FileNotFoundError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    outdir = Path(args.out) if args.out else Path(scenario.output.directory)
    outdir.mkdir(parents=True, exist_ok=True)
    handler = {
        "simulate": cmd_simulate,
        "witness": cmd_witness,
        "qrf": cmd_qrf,
        "nogo": cmd_nogo,
    }[args.command]
    try:
        return handler(scenario, outdir, args.verify_grid)
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
