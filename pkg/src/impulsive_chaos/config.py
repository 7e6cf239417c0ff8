"""JSON run configuration and the built-in worked example.

Layout::

    {
      "system":       {"A": [[...]], "B": [[...]], "f": ["..."], "h": ["..."]},
      "schedule":     {"omega": 3.14159, "p": 2, "base_thetas": [0.5, 1.07]},
      "perturbation": {"kind": "logistic", "gamma": 3.95, "z0": 0.23,
                       "length": 1000000, "maps": ["4.5*s", "(s+1)^3"],
                       "extension": "preimage"}
                   or {"kind": "constant", "value": [1.0, 2.0], "length": 1000},
      "constants":    {"lambda": 2.5, "N": 4.9625, "M_f": ..., "delta0": ...},
      "integration":  {"t0": 0.6, "t1": 60, "x0": [0.3, 0.8], "step": null,
                       "tol": 1e-6, "transient": null},
      "diagnostics":  {"num": 5, "compact": [0, 10], "warmup": 10,
                       "delta0_floor": 0.5, "window_len": null, "scan_range": null}
    }

Only "system", "schedule" and "perturbation" are required.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ImpulsiveError
from .schedule import ImpulseSchedule
from .signals import VectorSequence, lift_sequence, logistic_orbit, with_backward_orbit
from .system import QuasilinearImpulsiveSystem

CONSTANT_KEYS = ("lambda", "N", "M_f", "M_h", "L_f", "L_h", "M_sigma", "delta0")
BACKWARD_ORBIT = 256

INTEGRATION_DEFAULTS = {"t0": 0.0, "t1": None, "x0": None, "step": None, "tol": 1e-6, "transient": None}
DIAGNOSTICS_DEFAULTS = {
    "num": 5,
    "compact": [0.0, 10.0],
    "warmup": 10,
    "delta0_floor": 0.5,
    "window_len": None,
    "scan_range": None,
}


def _require(block: dict, key: str, where: str):
    if key not in block:
        raise ConfigError(f"{where}: missing key '{key}'")
    return block[key]


def _matrix(value, where: str) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a square numeric matrix") from None
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise ConfigError(f"{where}: expected a square numeric matrix")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{where}: entries must be finite")
    return arr


def _number(value, where: str, allow_none: bool = False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{where}: expected a finite number")
    return float(value)


@dataclass
class RunConfig:
    system: dict
    schedule: dict
    perturbation: dict
    constants: dict = field(default_factory=dict)
    integration: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("system", "schedule", "perturbation", "constants", "integration", "diagnostics"):
            if not isinstance(getattr(self, name), dict):
                raise ConfigError(f"block '{name}' must be a JSON object")
        self.integration = {**INTEGRATION_DEFAULTS, **self.integration}
        self.diagnostics = {**DIAGNOSTICS_DEFAULTS, **self.diagnostics}
        unknown = set(self.constants) - set(CONSTANT_KEYS)
        if unknown:
            raise ConfigError(f"constants: unknown key(s) {sorted(unknown)}")
        for k, v in self.constants.items():
            _number(v, f"constants.{k}", allow_none=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {"system", "schedule", "perturbation", "constants", "integration", "diagnostics"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown top-level block(s) {sorted(unknown)}")
        for key in ("system", "schedule", "perturbation"):
            _require(d, key, "config")
        return cls(**{k: copy.deepcopy(v) for k, v in d.items()})

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "schedule": self.schedule,
            "perturbation": self.perturbation,
            "constants": self.constants,
            "integration": self.integration,
            "diagnostics": self.diagnostics,
        }

    def overrides(self) -> dict:
        """Constant overrides in the form expected by ``assemble_constants``."""
        out = {k: v for k, v in self.constants.items() if k != "delta0" and v is not None}
        if "lambda" in out:
            out["lam"] = out.pop("lambda")
        return out

    def with_seed(self, z0: float) -> "RunConfig":
        d = self.to_dict()
        d = copy.deepcopy(d)
        d["perturbation"]["z0"] = float(z0)
        return RunConfig.from_dict(d)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def parse_config(text: str) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno}, column {exc.colno} (offset {exc.pos}): {exc.msg}") from None
    return RunConfig.from_dict(data)


def build_schedule(cfg: RunConfig) -> ImpulseSchedule:
    s = cfg.schedule
    try:
        return ImpulseSchedule(
            p=int(_number(_require(s, "p", "schedule"), "schedule.p")),
            omega=_number(_require(s, "omega", "schedule"), "schedule.omega"),
            base=tuple(_number(v, "schedule.base_thetas") for v in _require(s, "base_thetas", "schedule")),
        )
    except ImpulsiveError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"schedule: {exc}") from None


def build_perturbation(cfg: RunConfig, m: int) -> VectorSequence:
    pb = cfg.perturbation
    kind = pb.get("kind", "logistic")
    try:
        if kind == "logistic":
            orbit = logistic_orbit(
                _number(_require(pb, "gamma", "perturbation"), "perturbation.gamma"),
                _number(_require(pb, "z0", "perturbation"), "perturbation.z0"),
                int(pb.get("length", 1_000_000)),
            )
            extension = pb.get("extension", "preimage")
            if extension == "preimage":
                orbit = with_backward_orbit(orbit, int(pb.get("backward", BACKWARD_ORBIT)))
            elif extension != "constant":
                raise ConfigError("perturbation.extension must be 'preimage' or 'constant'")
            maps = _require(pb, "maps", "perturbation")
            if not isinstance(maps, list) or len(maps) != m:
                raise ConfigError(f"perturbation.maps: expected {m} expressions")
            return lift_sequence(orbit, maps, extension=extension)
        if kind == "constant":
            value = _require(pb, "value", "perturbation")
            if not isinstance(value, list) or len(value) != m:
                raise ConfigError(f"perturbation.value: expected {m} numbers")
            vec = [_number(v, "perturbation.value") for v in value]
            return VectorSequence.constant(vec, int(pb.get("length", 1_000_000)))
    except ImpulsiveError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"perturbation: {exc}") from None
    raise ConfigError(f"perturbation.kind must be 'logistic' or 'constant', got {kind!r}")


def build_system(cfg: RunConfig) -> QuasilinearImpulsiveSystem:
    s = cfg.system
    A = _matrix(_require(s, "A", "system"), "system.A")
    B = _matrix(_require(s, "B", "system"), "system.B")
    m = A.shape[0]
    if "m" in s and s["m"] != m:
        raise ConfigError(f"system.m = {s['m']} but A is {m}x{m}")
    if B.shape != A.shape:
        raise ConfigError("system.B must have the same shape as system.A")
    f = _require(s, "f", "system")
    h = _require(s, "h", "system")
    for name, exprs in (("f", f), ("h", h)):
        if not isinstance(exprs, list) or len(exprs) != m or not all(isinstance(e, str) for e in exprs):
            raise ConfigError(f"system.{name}: expected {m} expression strings")
    schedule = build_schedule(cfg)
    perturbation = build_perturbation(cfg, m)
    try:
        return QuasilinearImpulsiveSystem(A, B, tuple(f), tuple(h), schedule, perturbation)
    except ImpulsiveError as exc:
        raise ConfigError(f"system: {exc}") from None


def example_config() -> RunConfig:
    """The worked two-dimensional example with logistic forcing."""
    pi = math.pi
    return RunConfig(
        system={
            "m": 2,
            "A": [[-6.0, 2.0], [-8.0, 1.0]],
            "B": [[-2.0 / 3.0, 0.0], [0.0, -2.0 / 3.0]],
            "f": ["0.1*cos(x2) + 0.3*sin(2*t)", "0.2*tanh(x1)"],
            "h": ["0.05*arctan(x1) + 0.4", "0.04*sin(x2)"],
        },
        # theta_k = ((-1)^k + pi k) / 2
        schedule={"omega": pi, "p": 2, "base_thetas": [0.5, (pi - 1.0) / 2.0]},
        perturbation={
            "kind": "logistic",
            "gamma": 3.95,
            "z0": 0.23,
            "length": 1_000_000,
            "maps": ["4.5*s", "(s+1)^3"],
            "extension": "preimage",
        },
        constants={
            "lambda": 2.5,
            "N": 4.9625,
            "M_f": 0.4473,
            "M_h": 0.4803,
            "L_f": 0.2,
            "L_h": 0.05,
            "M_sigma": 9.17878,
        },
        integration={"t0": 0.6, "t1": 60.0, "x0": [0.3, 0.8], "tol": 1e-6},
        diagnostics={"num": 5, "compact": [0.0, 10.0], "warmup": 10, "delta0_floor": 0.5},
    )
