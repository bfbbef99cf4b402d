"""Run configuration: YAML files loaded into strict dataclasses.

Unknown keys are rejected and every error names the offending key path.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import types
import typing
from dataclasses import dataclass
from pathlib import Path

import yaml

from burstmap.baselines import DEFAULT_CODES, DEFAULT_EPSILON, DistributedCode, ExpansionPolicy
from burstmap.detector import DEFAULT_COVERAGE, DEFAULT_FPR
from burstmap.factory import DEFAULT_D_BUF, Rotation, default_rotations, rotations_from_supports
from burstmap.geometry import DEFAULT_FOOTPRINT, CodeDistances, ConfigurationError
from burstmap.noise import Distribution, NoiseSpec, RayModel


def _model(name: str) -> RayModel:
    try:
        return RayModel(name)
    except ValueError:
        raise ConfigurationError(f"unknown ray model {name!r}") from None


@dataclass(frozen=True)
class DistConfig:
    mean: float
    std: float = 0.0


@dataclass(frozen=True)
class NoiseConfig:
    t1: DistConfig = DistConfig(200e-6, 20e-6)
    t2: DistConfig = DistConfig(300e-6, 50e-6)
    p1: DistConfig = DistConfig(8e-5, 5e-5)
    p2: DistConfig = DistConfig(5e-4, 3e-4)
    p_mr: DistConfig = DistConfig(2e-3, 5e-4)
    t_cycle: float = 1e-6
    heterogeneous: bool = True

    def spec(self) -> NoiseSpec:
        d = {k: Distribution(v.mean, v.std) for k, v in
             (("t1", self.t1), ("t2", self.t2), ("p1", self.p1), ("p2", self.p2), ("p_mr", self.p_mr))}
        return NoiseSpec(**d, t_cycle=self.t_cycle)


@dataclass(frozen=True)
class DistancesConfig:
    d_x: int = 7
    d_z: int = 3
    d_m: int = 3


@dataclass(frozen=True)
class FactoryConfig:
    distances: DistancesConfig = DistancesConfig()
    footprint: tuple[tuple[str, ...], ...] = DEFAULT_FOOTPRINT
    rotations: tuple[tuple[int, ...], ...] | None = None
    schedule_mode: str = "exact"
    access: str = "vertical"
    d_buf: int = DEFAULT_D_BUF

    def __post_init__(self):
        if self.schedule_mode not in ("exact", "greedy"):
            raise ConfigurationError(f"schedule_mode must be exact or greedy, got {self.schedule_mode!r}")
        if self.access not in ("vertical", "adjacent"):
            raise ConfigurationError(f"access must be vertical or adjacent, got {self.access!r}")
        if self.d_buf < 1:
            raise ConfigurationError("d_buf must be >= 1")

    def code_distances(self) -> CodeDistances:
        d = self.distances
        return CodeDistances(d.d_x, d.d_z, d.d_m)

    def rotation_list(self) -> list[Rotation]:
        return default_rotations() if self.rotations is None else rotations_from_supports(self.rotations)


@dataclass(frozen=True)
class DetectorConfig:
    fpr: float = DEFAULT_FPR
    coverage: float = DEFAULT_COVERAGE
    latency_mode: str = "analytic"
    n_streams: int = 20
    max_cycles: int = 1_000_000

    def __post_init__(self):
        if not 0 < self.fpr < 1:
            raise ConfigurationError(f"fpr must lie in (0, 1), got {self.fpr}")
        if not 0 < self.coverage < 1:
            raise ConfigurationError(f"coverage must lie in (0, 1), got {self.coverage}")
        if self.latency_mode not in ("analytic", "montecarlo"):
            raise ConfigurationError(f"latency_mode must be analytic or montecarlo, got {self.latency_mode!r}")
        if self.n_streams < 1 or self.max_cycles < 1:
            raise ConfigurationError("n_streams and max_cycles must be >= 1")


@dataclass(frozen=True)
class RayConfig:
    model: str = "direct"
    r_cre: float = 3.0
    f_t1: float = 0.01

    def __post_init__(self):
        _model(self.model)
        if self.r_cre <= 0:
            raise ConfigurationError("r_cre must be positive")
        if not 0 < self.f_t1 <= 1:
            raise ConfigurationError("f_t1 must lie in (0, 1]")


@dataclass(frozen=True)
class DExtraEntry:
    model: str
    r_cre: float
    d_extra: int
    f_t1: float | None = None


@dataclass(frozen=True)
class CodeEntry:
    n: int
    d: int
    ancilla: int = 1


@dataclass(frozen=True)
class BaselineConfig:
    epsilon: float = DEFAULT_EPSILON
    d_extra: tuple[DExtraEntry, ...] = ()
    codes: tuple[CodeEntry, ...] = tuple(CodeEntry(c.n, c.d, c.ancilla) for c in DEFAULT_CODES)

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ConfigurationError(f"epsilon must lie in (0, 1), got {self.epsilon}")

    def policy(self) -> ExpansionPolicy:
        return ExpansionPolicy({(e.model, e.r_cre, e.f_t1): e.d_extra for e in self.d_extra})

    def code_list(self) -> list[DistributedCode]:
        return [DistributedCode(c.n, c.d, ancilla=c.ancilla) for c in self.codes]


@dataclass(frozen=True)
class SweepConfig:
    model: str = "direct"
    f_t1: tuple[float, ...] = (0.1, 0.01, 0.001)
    r_cre: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0)
    gamma_toffline: tuple[float, ...] = (1e-6, 1e-5, 1e-4, 1e-3)
    detection: str = "ideal"
    t_offline: float | None = None
    methods: tuple[str, ...] = ("remap", "expansion", "distributed")
    scrambling_latency: str = "bound"
    latency_rays: int = 20
    latency_quantile: float = 0.9

    def __post_init__(self):
        _model(self.model)
        if not self.r_cre or not self.gamma_toffline:
            raise ConfigurationError("sweep grid is empty")
        if self.detection not in ("ideal", "windowed"):
            raise ConfigurationError(f"detection must be ideal or windowed, got {self.detection!r}")
        bad = set(self.methods) - {"remap", "expansion", "distributed"}
        if bad:
            raise ConfigurationError(f"unknown methods {sorted(bad)}")
        if self.scrambling_latency not in ("bound", "measured"):
            raise ConfigurationError("scrambling_latency must be bound or measured")


@dataclass(frozen=True)
class LatencyConfig:
    model: str = "direct"
    r_cre: tuple[float, ...] = (1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0)
    f_t1: tuple[float, ...] = (0.1, 0.01, 0.001)
    rays: int = 20

    def __post_init__(self):
        _model(self.model)
        if self.rays < 1:
            raise ConfigurationError("rays must be >= 1")


@dataclass(frozen=True)
class RemapDemoConfig:
    offline: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class RunConfig:
    seed: int
    trials: int = 1000
    output_dir: str | None = None
    noise: NoiseConfig = NoiseConfig()
    factory: FactoryConfig = FactoryConfig()
    detector: DetectorConfig = DetectorConfig()
    ray: RayConfig = RayConfig()
    baselines: BaselineConfig = BaselineConfig()
    sweep: SweepConfig = SweepConfig()
    latency: LatencyConfig = LatencyConfig()
    remap_demo: RemapDemoConfig = RemapDemoConfig()

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form (defaults included)."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _convert(tp, value, path: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(inner[0], value, path)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigurationError(f"{path}: expected a list, got {type(value).__name__}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(args[0], v, f"{path}[{i}]") for i, v in enumerate(value))
        if len(args) != len(value):
            raise ConfigurationError(f"{path}: expected {len(args)} entries, got {len(value)}")
        return tuple(_convert(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigurationError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, str):
            try:
                value = float(value)
            except ValueError:
                raise ConfigurationError(f"{path}: expected a number, got {value!r}") from None
        if isinstance(value, bool) or not isinstance(value, (int, float)) or math.isnan(value):
            raise ConfigurationError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigurationError(f"{path}: expected a string, got {value!r}")
        return value
    raise TypeError(f"unsupported config type {tp!r} at {path}")


def _build(cls, data, path: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path or '<root>'}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigurationError(f"unknown key {where}{unknown[0]}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        key = f"{path}.{f.name}" if path else f.name
        if f.name in data:
            kwargs[f.name] = _convert(hints[f.name], data[f.name], key)
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigurationError(f"missing required key {key}")
    try:
        return cls(**kwargs)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{path or '<root>'}: {exc}") from None


def config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "")


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"malformed config {path}: {exc}") from None
    return config_from_dict(data)
