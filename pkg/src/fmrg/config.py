"""Experiment configuration: flat dotted-key TOML files mapped onto nested dataclasses.

Every key is ``section.name = value``; see ``docs/config.md`` for the grammar
and the full key list. Unknown sections or keys are rejected.
"""

from __future__ import annotations

import json
import math
import sys
import typing
from dataclasses import dataclass, field, fields, replace

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError

METHOD_NAMES = ("FMRG-J", "FMRG-E", "DPS", "FlowDPS", "FlowChef", "MPGD", "SeedOpt", "LQR", "Tilt")
METHOD_ALIASES = {"greedy": "FMRG-J", "exact": "LQR", "tilt": "Tilt"}


@dataclass
class TargetSpec:
    kind: str = "gaussian"  # gaussian | gmm | degenerate
    mu1: list = field(default_factory=lambda: [0.0])
    sigma1: float = 1.0
    weights: list = field(default_factory=list)
    means: list = field(default_factory=list)
    covs: list = field(default_factory=list)
    basis: list = field(default_factory=list)
    sigma_par: float = 1.0
    sigma_perp: float = 1e-3


@dataclass
class RewardSpec:
    kind: str = "quadratic"  # quadratic | linear
    a: list = field(default_factory=lambda: [1.0])
    A: list = field(default_factory=list)
    y: list = field(default_factory=list)


@dataclass
class MethodSpec:
    name: str = "FMRG-J"
    lambda_: float = 0.5
    seed_opt_eta: float = -1.0  # negative: reuse method.lambda


@dataclass
class GuidanceSpec:
    schedule: str = "constant"
    n_opt: int = 1
    n_steps: int = 100
    knots: list = field(default_factory=list)
    t_stop: float = 1.0
    reuse: bool = False
    warmup_k: int = 1
    warmup_fraction: float = 0.5
    renoise_c: float = 0.0
    renoise_knots: list = field(default_factory=list)
    seed_opt_steps: int = 0


@dataclass
class FlowMapSpec:
    substeps: int = 1000


@dataclass
class EnsembleSpec:
    n_particles: int = 10000
    seed: int = 0


@dataclass
class SweepSpec:
    lambdas: list = field(default_factory=lambda: [0.1, 0.5, 1.0])
    methods: list = field(default_factory=lambda: ["greedy", "exact", "tilt"])


@dataclass
class EarlyStopSpec:
    t_stops: list = field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 1.0])


@dataclass
class SlopeSpec:
    lambda_min: float = 1e-3
    lambda_max: float = 1e-1
    n_points: int = 8
    t: float = 0.3
    x: float = 0.7


@dataclass
class InverseSpec:
    methods: list = field(default_factory=lambda: ["FMRG-E", "FMRG-J", "FlowDPS", "FlowChef"])
    etas: list = field(default_factory=lambda: [1.0, 1.0, 1.0, 0.25])
    guided_steps: int = 4
    euler_steps: int = 6
    truth_seed: int = 123


@dataclass
class OutputSpec:
    dir: str = "out"


@dataclass
class ExperimentConfig:
    target: TargetSpec = field(default_factory=TargetSpec)
    reward: RewardSpec = field(default_factory=RewardSpec)
    method: MethodSpec = field(default_factory=MethodSpec)
    guidance: GuidanceSpec = field(default_factory=GuidanceSpec)
    flowmap: FlowMapSpec = field(default_factory=FlowMapSpec)
    ensemble: EnsembleSpec = field(default_factory=EnsembleSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    earlystop: EarlyStopSpec = field(default_factory=EarlyStopSpec)
    slope: SlopeSpec = field(default_factory=SlopeSpec)
    inverse: InverseSpec = field(default_factory=InverseSpec)
    output: OutputSpec = field(default_factory=OutputSpec)

    def __post_init__(self):
        name = METHOD_ALIASES.get(self.method.name, self.method.name)
        if name not in METHOD_NAMES:
            raise ConfigError(f"method.name must be one of {METHOD_NAMES}, got {self.method.name!r}")


def _key(f):
    # ``lambda`` is a Python keyword, so the attribute carries a trailing underscore
    return f.name.rstrip("_")


def _field_types(cls):
    hints = typing.get_type_hints(cls)
    return {_key(f): (f.name, hints[f.name]) for f in fields(cls)}


def _coerce(value, typ, key):
    if typ is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected a boolean")
        return value
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer")
        return value
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number")
        return float(value)
    if typ is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string")
        return value
    if typ is list:
        if not isinstance(value, list):
            raise ConfigError(f"{key}: expected a list")
        return value
    raise ConfigError(f"{key}: unsupported type")


def flatten(cfg: ExperimentConfig) -> dict:
    """``{"section.key": value}`` for every field, in declaration order."""
    out = {}
    for sec in fields(cfg):
        sub = getattr(cfg, sec.name)
        for f in fields(sub):
            out[f"{sec.name}.{_key(f)}"] = getattr(sub, f.name)
    return out


def _flatten_tree(tree, prefix=""):
    out = {}
    for k, v in tree.items():
        name = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten_tree(v, name + "."))
        else:
            out[name] = v
    return out


def from_flat(flat: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    sections = {f.name: f for f in fields(base)}
    updates: dict = {}
    for dotted, value in flat.items():
        parts = dotted.split(".")
        if len(parts) != 2 or parts[0] not in sections:
            raise ConfigError(f"unknown config key {dotted!r}")
        sec, key = parts
        types = _field_types(type(getattr(base, sec)))
        if key not in types:
            raise ConfigError(f"unknown config key {dotted!r}")
        attr, typ = types[key]
        updates.setdefault(sec, {})[attr] = _coerce(value, typ, dotted)
    kwargs = {name: replace(getattr(base, name), **upd) for name, upd in updates.items()}
    try:
        return replace(base, **kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def loads(text: str) -> ExperimentConfig:
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return from_flat(_flatten_tree(tree))


def load(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return loads(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _literal(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_literal(x) for x in v) + "]"
    raise ConfigError(f"cannot serialize {v!r}")


def dumps(cfg: ExperimentConfig) -> str:
    """One ``section.key = value`` line per field; :func:`loads` inverts it exactly."""
    return "".join(f"{k} = {_literal(v)}\n" for k, v in flatten(cfg).items())

