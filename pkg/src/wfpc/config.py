"""Scenario configs: YAML schema, validation, and builder dispatch.

A scenario bundles a model, an initial state, a pulse + phase family, a time
grid, a protocol selection and an output spec.  Validation errors name the
offending key path (e.g. ``model.env_cutoffs[0]``); unknown builder names
raise ``UnknownBuilder``.  ``serialize_scenario`` inverts ``parse_scenario``
up to defaults, which is the round-trip contract used by the tests.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .linalg import SpaceLayout
from .models import (
    CorrelatedState,
    SystemModel,
    build_h0_commuting,
    build_h0_noncommuting,
    build_witness_state,
    classical_correlated_state,
    coherent_product_state,
    diag_excited_state,
    gibbs_state,
    thermal_env_density,
)
from .pulses import SpectralPulse, build_family, gaussian_pulse
from .dynamics import TimeGrid
from .witness import ProtocolThresholds


class SchemaError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class UnknownBuilder(SchemaError):
    pass


MODEL_BUILDERS = ("commuting", "noncommuting")
STATE_BUILDERS = (
    "gibbs",
    "witness",
    "coherent_product",
    "diag_excited",
    "classical_correlated",
)
PROTOCOL_KINDS = ("simulate", "witness", "qrf", "nogo")
STEPPERS = ("midpoint", "strang", "yoshida4")
METHODS = ("exact", "pert2")
QRF_OPS = ("dipole", "proj_excited")


def _get(d: dict, key: str, path: str, kind, required: bool = True, default=None):
    if key not in d:
        if required:
            raise SchemaError(f"{path}.{key}", "missing required key")
        return default
    val = d[key]
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise SchemaError(f"{path}.{key}", f"expected number, got {type(val).__name__}")
        return float(val)
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise SchemaError(f"{path}.{key}", f"expected integer, got {type(val).__name__}")
        return int(val)
    if kind is bool:
        if not isinstance(val, bool):
            raise SchemaError(f"{path}.{key}", f"expected boolean, got {type(val).__name__}")
        return val
    if kind is str:
        if not isinstance(val, str):
            raise SchemaError(f"{path}.{key}", f"expected string, got {type(val).__name__}")
        return val
    if kind is dict:
        if not isinstance(val, dict):
            raise SchemaError(f"{path}.{key}", f"expected mapping, got {type(val).__name__}")
        return val
    if kind is list:
        if not isinstance(val, list):
            raise SchemaError(f"{path}.{key}", f"expected list, got {type(val).__name__}")
        return val
    raise AssertionError(kind)


def _num_list(d: dict, key: str, path: str, item_kind, required: bool = True, default=None):
    raw = _get(d, key, path, list, required=required, default=None)
    if raw is None:
        return default
    out = []
    for i, v in enumerate(raw):
        if item_kind is int and (isinstance(v, bool) or not isinstance(v, int)):
            raise SchemaError(f"{path}.{key}[{i}]", f"expected integer, got {type(v).__name__}")
        if item_kind is float and (isinstance(v, bool) or not isinstance(v, (int, float))):
            raise SchemaError(f"{path}.{key}[{i}]", f"expected number, got {type(v).__name__}")
        out.append(item_kind(v))
    return out


@dataclass
class ModelSpec:
    builder: str
    omega_s: float
    omega_env: list[float]
    g: float
    system_levels: int
    env_cutoffs: list[int]


@dataclass
class StateSpec:
    builder: str
    params: dict = field(default_factory=dict)


@dataclass
class PulseSpec:
    omega_center: float
    omega_halfwidth: float
    n_bins: int
    sigma: float
    weak_scale: float
    delay: float
    family: list[dict]


@dataclass
class GridSpec:
    t0: float
    t1: float
    steps: int
    stepper: str = "midpoint"


@dataclass
class QrfSpec:
    t1_grid: list[float]
    dt_grid: list[float]
    threshold: float = 1e-8
    op_a: str = "dipole"
    op_b: str = "proj_excited"


@dataclass
class ProtocolSpec:
    kind: str
    method: str = "exact"
    thresholds: ProtocolThresholds = field(default_factory=ProtocolThresholds)
    check_scaling: bool = True
    qrf: QrfSpec | None = None


@dataclass
class OutputSpec:
    directory: str = "out"


@dataclass
class Scenario:
    seed: int
    model: ModelSpec
    state: StateSpec
    pulse: PulseSpec
    grid: GridSpec
    protocol: ProtocolSpec
    output: OutputSpec
    workers: int = 0  # 0 = use available parallelism

    def resolved_workers(self) -> int:
        import os

        return self.workers if self.workers > 0 else (os.cpu_count() or 1)

    # -- builders ---------------------------------------------------------
    def layout(self) -> SpaceLayout:
        return SpaceLayout(1, self.model.system_levels - 1, tuple(self.model.env_cutoffs))

    def build_model(self) -> SystemModel:
        fn = {"commuting": build_h0_commuting, "noncommuting": build_h0_noncommuting}[
            self.model.builder
        ]
        return fn(self.model.omega_s, self.model.omega_env, self.model.g, self.layout())

    def build_state(self, model: SystemModel) -> CorrelatedState:
        layout = model.layout
        p = self.state.params
        b = self.state.builder
        if b == "gibbs":
            return gibbs_state(model, p.get("beta", 1.0))
        env_beta = p.get("env_beta", 1.0)
        tau = thermal_env_density(layout, self.model.omega_env, env_beta)
        if b == "witness":
            return build_witness_state(
                layout,
                p["offdiag_in_rho"],
                p["offdiag_in_chi"],
                seed=self.seed,
            )
        if b == "coherent_product":
            return coherent_product_state(layout, p.get("theta", np.pi / 4), tau)
        if b == "diag_excited":
            return diag_excited_state(layout, env_density=tau)
        if b == "classical_correlated":
            tau_hot = thermal_env_density(layout, self.model.omega_env, env_beta / 2)
            return classical_correlated_state(layout, tau, tau_hot)
        raise UnknownBuilder("state.builder", f"unknown builder {b!r}")

    def build_base_pulse(self) -> SpectralPulse:
        p = self.pulse
        return gaussian_pulse(
            p.omega_center, p.omega_halfwidth, p.n_bins, p.sigma,
            weak_scale=p.weak_scale, delay=p.delay,
        )

    def build_family(self) -> list[SpectralPulse]:
        return build_family(self.build_base_pulse(), self.pulse.family, seed=self.seed)

    def build_grid(self) -> TimeGrid:
        return TimeGrid(self.grid.t0, self.grid.t1, self.grid.steps)


def _parse_model(d: dict) -> ModelSpec:
    builder = _get(d, "builder", "model", str)
    if builder not in MODEL_BUILDERS:
        raise UnknownBuilder("model.builder", f"unknown builder {builder!r}")
    omega_s = _get(d, "omega_s", "model", float)
    omega_env = _num_list(d, "omega_env", "model", float)
    g = _get(d, "g", "model", float)
    system_levels = _get(d, "system_levels", "model", int)
    if system_levels < 2:
        raise SchemaError("model.system_levels", "need at least 2 system levels")
    env_cutoffs = _num_list(d, "env_cutoffs", "model", int)
    for i, c in enumerate(env_cutoffs):
        if c < 1:
            raise SchemaError(f"model.env_cutoffs[{i}]", f"expected positive integer, got {c}")
    if len(omega_env) != len(env_cutoffs):
        raise SchemaError("model.omega_env", "one frequency per environment mode required")
    return ModelSpec(builder, omega_s, omega_env, g, system_levels, env_cutoffs)


def _parse_state(d: dict, seed_present: bool) -> StateSpec:
    builder = _get(d, "builder", "state", str)
    if builder not in STATE_BUILDERS:
        raise UnknownBuilder("state.builder", f"unknown builder {builder!r}")
    params = {k: v for k, v in d.items() if k != "builder"}
    if builder == "witness":
        for key in ("offdiag_in_rho", "offdiag_in_chi"):
            _get(d, key, "state", bool)
        if not seed_present:
            raise SchemaError("seed", "witness states are randomized; a seed is required")
    return StateSpec(builder, params)


def _parse_pulse(d: dict, seed_present: bool) -> PulseSpec:
    spec = PulseSpec(
        omega_center=_get(d, "omega_center", "pulse", float),
        omega_halfwidth=_get(d, "omega_halfwidth", "pulse", float),
        n_bins=_get(d, "n_bins", "pulse", int),
        sigma=_get(d, "sigma", "pulse", float),
        weak_scale=_get(d, "weak_scale", "pulse", float),
        delay=_get(d, "delay", "pulse", float, required=False, default=0.0),
        family=_get(d, "family", "pulse", list),
    )
    if spec.n_bins < 2:
        raise SchemaError("pulse.n_bins", "need at least 2 comb bins")
    if spec.weak_scale <= 0:
        raise SchemaError("pulse.weak_scale", "weak_scale must be positive")
    if not spec.family:
        raise SchemaError("pulse.family", "at least one family segment required")
    for i, seg in enumerate(spec.family):
        if not isinstance(seg, dict):
            raise SchemaError(f"pulse.family[{i}]", "expected mapping")
        kind = _get(seg, "kind", f"pulse.family[{i}]", str)
        if kind not in ("constant", "linear", "chirp", "random"):
            raise SchemaError(f"pulse.family[{i}].kind", f"unknown kind {kind!r}")
        count = _get(seg, "count", f"pulse.family[{i}]", int)
        if count < 1:
            raise SchemaError(f"pulse.family[{i}].count", "count must be positive")
        if kind == "random" and not seed_present and "seed" not in seg:
            raise SchemaError("seed", "random phase masks require a seed")
    return spec


def _parse_grid(d: dict) -> GridSpec:
    spec = GridSpec(
        t0=_get(d, "t0", "grid", float),
        t1=_get(d, "t1", "grid", float),
        steps=_get(d, "steps", "grid", int),
        stepper=_get(d, "stepper", "grid", str, required=False, default="midpoint"),
    )
    if spec.t1 <= spec.t0:
        raise SchemaError("grid.t1", "need t1 > t0")
    if spec.steps < 1:
        raise SchemaError("grid.steps", "need at least one step")
    if spec.stepper not in STEPPERS:
        raise SchemaError("grid.stepper", f"unknown stepper {spec.stepper!r}")
    return spec


def _parse_protocol(d: dict) -> ProtocolSpec:
    kind = _get(d, "kind", "protocol", str)
    if kind not in PROTOCOL_KINDS:
        raise SchemaError("protocol.kind", f"unknown protocol {kind!r}")
    method = _get(d, "method", "protocol", str, required=False, default="exact")
    if method not in METHODS:
        raise SchemaError("protocol.method", f"unknown method {method!r}")
    th = _get(d, "thresholds", "protocol", dict, required=False, default={})
    thresholds = ProtocolThresholds(
        contrast=_get(th, "contrast", "protocol.thresholds", float, required=False, default=1e-7),
        profile=_get(th, "profile", "protocol.thresholds", float, required=False, default=1e-7),
        condition=_get(th, "condition", "protocol.thresholds", float, required=False, default=1e-8),
    )
    check_scaling = _get(d, "check_scaling", "protocol", bool, required=False, default=True)
    qrf = None
    if kind == "qrf":
        q = _get(d, "qrf", "protocol", dict)
        qrf = QrfSpec(
            t1_grid=_num_list(q, "t1_grid", "protocol.qrf", float),
            dt_grid=_num_list(q, "dt_grid", "protocol.qrf", float),
            threshold=_get(q, "threshold", "protocol.qrf", float, required=False, default=1e-8),
            op_a=_get(q, "op_a", "protocol.qrf", str, required=False, default="dipole"),
            op_b=_get(q, "op_b", "protocol.qrf", str, required=False, default="proj_excited"),
        )
        for name, val in (("op_a", qrf.op_a), ("op_b", qrf.op_b)):
            if val not in QRF_OPS:
                raise SchemaError(f"protocol.qrf.{name}", f"unknown operator {val!r}")
        if not qrf.t1_grid or not qrf.dt_grid:
            raise SchemaError("protocol.qrf.t1_grid", "qrf grids must be nonempty")
    return ProtocolSpec(kind, method, thresholds, check_scaling, qrf)


def parse_scenario_dict(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise SchemaError("<root>", "config must be a mapping")
    seed_present = "seed" in raw
    seed = _get(raw, "seed", "<root>", int, required=False, default=0)
    if seed < 0:
        raise SchemaError("seed", "seed must be nonnegative")
    model = _parse_model(_get(raw, "model", "<root>", dict))
    state = _parse_state(_get(raw, "state", "<root>", dict), seed_present)
    pulse = _parse_pulse(_get(raw, "pulse", "<root>", dict), seed_present)
    grid = _parse_grid(_get(raw, "grid", "<root>", dict))
    protocol = _parse_protocol(_get(raw, "protocol", "<root>", dict))
    out = _get(raw, "output", "<root>", dict, required=False, default={})
    output = OutputSpec(directory=_get(out, "directory", "output", str, required=False, default="out"))
    workers = _get(raw, "workers", "<root>", int, required=False, default=0)
    if workers < 0:
        raise SchemaError("workers", "workers must be nonnegative (0 = auto)")
    return Scenario(seed, model, state, pulse, grid, protocol, output, workers)


def parse_scenario(path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    return parse_scenario_dict(raw)


def serialize_scenario(s: Scenario) -> dict:
    d = {
        "seed": s.seed,
        "model": {
            "builder": s.model.builder,
            "omega_s": s.model.omega_s,
            "omega_env": list(s.model.omega_env),
            "g": s.model.g,
            "system_levels": s.model.system_levels,
            "env_cutoffs": list(s.model.env_cutoffs),
        },
        "state": {"builder": s.state.builder, **copy.deepcopy(s.state.params)},
        "pulse": {
            "omega_center": s.pulse.omega_center,
            "omega_halfwidth": s.pulse.omega_halfwidth,
            "n_bins": s.pulse.n_bins,
            "sigma": s.pulse.sigma,
            "weak_scale": s.pulse.weak_scale,
            "delay": s.pulse.delay,
            "family": copy.deepcopy(s.pulse.family),
        },
        "grid": {
            "t0": s.grid.t0,
            "t1": s.grid.t1,
            "steps": s.grid.steps,
            "stepper": s.grid.stepper,
        },
        "protocol": {
            "kind": s.protocol.kind,
            "method": s.protocol.method,
            "thresholds": {
                "contrast": s.protocol.thresholds.contrast,
                "profile": s.protocol.thresholds.profile,
                "condition": s.protocol.thresholds.condition,
            },
            "check_scaling": s.protocol.check_scaling,
        },
        "output": {"directory": s.output.directory},
        "workers": s.workers,
    }
    if s.protocol.qrf is not None:
        d["protocol"]["qrf"] = {
            "t1_grid": list(s.protocol.qrf.t1_grid),
            "dt_grid": list(s.protocol.qrf.dt_grid),
            "threshold": s.protocol.qrf.threshold,
            "op_a": s.protocol.qrf.op_a,
            "op_b": s.protocol.qrf.op_b,
        }
    return d


def write_scenario(s: Scenario, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(serialize_scenario(s), fh, sort_keys=False)
