"""Sweep configuration files.

A config is an INI-style text file with three sections::

    [sweep]
    schema = 1
    mode = ope              ; ope | opo | diagnose | lower_bound | linear_ope | linear_opo
    K = 250, 1000, 4000     ; episodes (transitions n for linear modes, n(s2) for lower_bound)
    H = 4
    replications = 200
    seed = 2024
    delta = 0.05
    data = episodes         ; episodes | exact
    budget = fixed_K        ; fixed_K | fixed_Kdm (then K is K * d_m and is divided by d_m(H))
    coverage_threshold = 1

    [instance]
    kind = random_uniform_reward
    S = 3
    A = 2
    seed = 7

    [policy]
    target = uniform        ; uniform | optimal | random
    behavior = uniform      ; uniform | random
    seed = 0

Every grid key accepts a comma-separated list; the sweep runs their product.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..hard_instances import KINDS, HardInstanceSpec

SCHEMA_VERSION = 1
MODES = ("ope", "opo", "diagnose", "lower_bound", "linear_ope", "linear_opo")
INSTANCE_KINDS = KINDS + ("random", "linear")
TARGETS = ("uniform", "optimal", "random")
BEHAVIORS = ("uniform", "random")
DATA_SOURCES = ("episodes", "exact")
BUDGETS = ("fixed_K", "fixed_Kdm")


class ConfigError(ValueError):
    def __init__(self, path, field_name: str, message: str):
        self.path = str(path) if path is not None else "<config>"
        self.field = field_name
        super().__init__(f"{self.path}: [{field_name}] {message}")


@dataclass(frozen=True)
class InstanceConfig:
    kind: str = "random_uniform_reward"
    S: int = 3
    A: int = 2
    seed: int = 7
    p: float | None = None
    c1: float = 1.0
    c0: float | None = None
    n_dm: float | None = None
    d: int | None = None
    style: str = "uniform"

    def to_spec(self, H: int) -> HardInstanceSpec:
        return HardInstanceSpec(kind=self.kind, H=H, S=self.S, A=self.A, p=self.p, c0=self.c0,
                                c1=self.c1, n_dm=self.n_dm, seed=self.seed)

    @classmethod
    def from_spec(cls, spec: HardInstanceSpec) -> "InstanceConfig":
        return cls(kind=spec.kind, S=spec.S, A=spec.A, seed=spec.seed, p=spec.p if spec.p is not None else spec.p1,
                   c1=spec.c1, c0=spec.c0, n_dm=spec.n_dm)


@dataclass(frozen=True)
class PolicyConfig:
    target: str = "uniform"
    behavior: str = "uniform"
    seed: int = 0


@dataclass(frozen=True)
class SweepConfig:
    mode: str = "ope"
    K: tuple = (1000,)
    H: tuple = (4,)
    S: tuple = ()
    A: tuple = ()
    d: tuple = ()
    replications: int = 1
    seed: int = 0
    delta: float = 0.05
    data: str = "episodes"
    budget: str = "fixed_K"
    coverage_threshold: int = 1
    instance: InstanceConfig = field(default_factory=InstanceConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    source: str | None = None

    def __post_init__(self):
        where = self.source
        _choice(where, "sweep.mode", self.mode, MODES)
        _choice(where, "sweep.data", self.data, DATA_SOURCES)
        _choice(where, "sweep.budget", self.budget, BUDGETS)
        _choice(where, "instance.kind", self.instance.kind, INSTANCE_KINDS)
        _choice(where, "policy.target", self.policy.target, TARGETS)
        _choice(where, "policy.behavior", self.policy.behavior, BEHAVIORS)
        for name in ("K", "H"):
            grid = getattr(self, name)
            if len(grid) == 0:
                raise ConfigError(where, f"sweep.{name}", "grid must be non-empty")
            if min(grid) < 1:
                raise ConfigError(where, f"sweep.{name}", f"grid values must be >= 1, got {grid}")
        if self.replications < 1:
            raise ConfigError(where, "sweep.replications", f"must be >= 1, got {self.replications}")
        if not 0 < self.delta < 1:
            raise ConfigError(where, "sweep.delta", f"must lie in (0, 1), got {self.delta}")
        if self.mode.startswith("linear") and self.instance.kind != "linear":
            raise ConfigError(where, "instance.kind", f"mode {self.mode} needs kind = linear")
        if self.mode == "lower_bound" and self.instance.kind != "ope_two_state":
            raise ConfigError(where, "instance.kind", "mode lower_bound needs kind = ope_two_state")

    def with_overrides(self, **changes) -> "SweepConfig":
        return replace(self, **changes)

    def to_text(self) -> str:
        def fmt(v):
            if isinstance(v, tuple):
                return ", ".join(str(x) for x in v)
            return str(v)

        lines = ["[sweep]", f"schema = {SCHEMA_VERSION}"]
        for f in fields(self):
            if f.name in ("instance", "policy", "source"):
                continue
            val = getattr(self, f.name)
            if isinstance(val, tuple) and not val:
                continue
            lines.append(f"{f.name} = {fmt(val)}")
        for section, obj in (("instance", self.instance), ("policy", self.policy)):
            lines += ["", f"[{section}]"]
            for f in fields(obj):
                val = getattr(obj, f.name)
                if val is not None:
                    lines.append(f"{f.name} = {fmt(val)}")
        return "\n".join(lines) + "\n"


def _choice(where, name: str, value, options) -> None:
    if value not in options:
        raise ConfigError(where, name, f"{value!r} is not one of {options}")


def _convert(where, name: str, raw: str, kind):
    try:
        if kind is tuple:
            return tuple(int(x) for x in raw.replace(",", " ").split())
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(where, name, f"cannot parse {raw!r} as {kind.__name__}") from None


_SWEEP_TYPES = {"mode": str, "K": tuple, "H": tuple, "S": tuple, "A": tuple, "d": tuple,
                "replications": int, "seed": int, "delta": float, "data": str, "budget": str,
                "coverage_threshold": int}
_INSTANCE_TYPES = {"kind": str, "S": int, "A": int, "seed": int, "p": float, "c1": float, "c0": float,
                   "n_dm": float, "d": int, "style": str}
_POLICY_TYPES = {"target": str, "behavior": str, "seed": int}


def _section(parser, where, name: str, types: dict, required: bool) -> dict:
    if not parser.has_section(name):
        if required:
            raise ConfigError(where, name, "missing section")
        return {}
    out = {}
    for key, raw in parser.items(name):
        if key == "schema" and name == "sweep":
            continue
        canon = next((k for k in types if k.lower() == key), None)
        if canon is None:
            raise ConfigError(where, f"{name}.{key}", "unknown field")
        out[canon] = _convert(where, f"{name}.{canon}", raw, types[canon])
    return out


def parse_config(text: str, source=None) -> SweepConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str.lower
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(source, "syntax", str(exc).splitlines()[0]) from None
    schema = parser.get("sweep", "schema", fallback=None) if parser.has_section("sweep") else None
    if schema is None:
        raise ConfigError(source, "sweep.schema", "missing schema version")
    if schema.strip() != str(SCHEMA_VERSION):
        raise ConfigError(source, "sweep.schema", f"unsupported schema {schema!r}; expected {SCHEMA_VERSION}")
    sweep = _section(parser, source, "sweep", _SWEEP_TYPES, required=True)
    instance = InstanceConfig(**_section(parser, source, "instance", _INSTANCE_TYPES, required=True))
    policy = PolicyConfig(**_section(parser, source, "policy", _POLICY_TYPES, required=False))
    return SweepConfig(instance=instance, policy=policy, source=str(source) if source else None, **sweep)


def load_config(path) -> SweepConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(path, "path", "config file does not exist")
    return parse_config(path.read_text(), source=path)
