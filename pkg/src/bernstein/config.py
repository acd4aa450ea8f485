"""Experiment configuration: dataclasses with JSON round trip and validation.

Validation errors carry the dotted path of the offending field, for example
``grid.times[0]``.
"""
from dataclasses import asdict, dataclass, field, fields
import json
import math

MODELS = ("bridge", "mixture", "stationary_gibbs", "conditioned_ou", "periodic_ou_sde")
WEIGHT_POLICIES = ("gibbs", "explicit")
SAMPLE_METHODS = ("exact", "sequential")


class ConfigError(ValueError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class Parameters:
    lam: float = 1.0
    T: float = 1.0
    d: int = 1
    b: tuple = ((1.0,),)
    weights_policy: str = "gibbs"
    weights: tuple = ()


@dataclass(frozen=True)
class GridSpec:
    times: tuple = (0.1, 0.3, 0.5, 0.7, 0.9)


@dataclass(frozen=True)
class SamplerSpec:
    N: int = 1000
    seed: int = 0
    steps: int = 4096
    method: str = "exact"


@dataclass(frozen=True)
class Tolerances:
    kernel: float = 1e-8
    normalization: float = 1e-8
    precision: float = 1e-8
    trace: float = 1e-6
    markov: float = 1e-12
    stationarity: float = 1e-10
    z_gate: float = 4.0


@dataclass(frozen=True)
class ReportSpec:
    lam_sweep: tuple = (1.0,)
    points: int = 41


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "bridge"
    parameters: Parameters = field(default_factory=Parameters)
    grid: GridSpec = field(default_factory=GridSpec)
    sampler: SamplerSpec = field(default_factory=SamplerSpec)
    tolerances: Tolerances = field(default_factory=Tolerances)
    report: ReportSpec = field(default_factory=ReportSpec)

    def to_dict(self):
        return _listify(asdict(self))

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data):
        cfg = _build(cls, data, "")
        validate(cfg)
        return cfg

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"invalid JSON: {exc}") from None
        return cls.from_dict(data)


_NESTED = {"parameters": Parameters, "grid": GridSpec, "sampler": SamplerSpec,
           "tolerances": Tolerances, "report": ReportSpec}


def _listify(obj):
    if isinstance(obj, dict):
        return {k: _listify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_listify(v) for v in obj]
    return obj


def _tuplify(obj):
    if isinstance(obj, (list, tuple)):
        return tuple(_tuplify(v) for v in obj)
    return obj


def _build(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(prefix or "<root>", "expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{prefix}{unknown[0]}", "unknown field")
    kwargs = {}
    for name, value in data.items():
        path = f"{prefix}{name}"
        if cls is ExperimentConfig and name in _NESTED:
            kwargs[name] = _build(_NESTED[name], value, path + ".")
        else:
            kwargs[name] = _coerce(known[name], value, path)
    return cls(**kwargs)


def _coerce(f, value, path):
    default = f.default if f.default is not f.default_factory else None
    if isinstance(default, bool):
        raise ConfigError(path, "unsupported boolean field")
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {value!r}")
        return _tuplify(value)
    return value


def _positive(value, path):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ConfigError(path, f"must be a positive finite number, got {value!r}")


def validate(cfg):
    if cfg.model not in MODELS:
        raise ConfigError("model", f"must be one of {MODELS}, got {cfg.model!r}")
    p = cfg.parameters
    _positive(p.lam, "parameters.lam")
    _positive(p.T, "parameters.T")
    if p.d < 1:
        raise ConfigError("parameters.d", "must be at least 1")
    if cfg.model in ("bridge", "mixture"):
        if len(p.b) == 0:
            raise ConfigError("parameters.b", "needs at least one terminal point")
        for i, pt in enumerate(p.b):
            if not isinstance(pt, tuple) or len(pt) != p.d:
                raise ConfigError(f"parameters.b[{i}]", f"must be a list of {p.d} numbers")
            for j, c in enumerate(pt):
                if isinstance(c, bool) or not isinstance(c, (int, float)) or not math.isfinite(c):
                    raise ConfigError(f"parameters.b[{i}][{j}]", "must be a finite number")
    if cfg.model == "bridge" and len(p.b) != 1:
        raise ConfigError("parameters.b", "a bridge has exactly one terminal point")
    if p.weights_policy not in WEIGHT_POLICIES:
        raise ConfigError("parameters.weights_policy", f"must be one of {WEIGHT_POLICIES}")
    if cfg.model == "mixture" and p.weights_policy == "explicit":
        if len(p.weights) != len(p.b):
            raise ConfigError("parameters.weights", "one weight per terminal point required")
        for i, w in enumerate(p.weights):
            if isinstance(w, bool) or not isinstance(w, (int, float)) or not w > 0:
                raise ConfigError(f"parameters.weights[{i}]", "weights must be positive")
        if abs(sum(p.weights) - 1.0) > 1e-10:
            raise ConfigError("parameters.weights", "weights must sum to 1")
    times = cfg.grid.times
    if len(times) == 0:
        raise ConfigError("grid.times", "must not be empty")
    closed = cfg.model == "periodic_ou_sde"
    for i, t in enumerate(times):
        if isinstance(t, bool) or not isinstance(t, (int, float)):
            raise ConfigError(f"grid.times[{i}]", "must be a number")
        inside = 0 <= t <= p.T if closed else 0 < t < p.T
        if not inside:
            interval = f"[0, {p.T}]" if closed else f"(0, {p.T})"
            raise ConfigError(f"grid.times[{i}]", f"{t} lies outside {interval}")
        if i and t <= times[i - 1]:
            raise ConfigError(f"grid.times[{i}]", "times must be strictly increasing")
    s = cfg.sampler
    if s.N < 1:
        raise ConfigError("sampler.N", "must be at least 1")
    if not 0 <= s.seed < 2 ** 64:
        raise ConfigError("sampler.seed", "must be a 64-bit unsigned integer")
    if s.steps < 2:
        raise ConfigError("sampler.steps", "must be at least 2")
    if s.method not in SAMPLE_METHODS:
        raise ConfigError("sampler.method", f"must be one of {SAMPLE_METHODS}")
    if s.method == "sequential" and cfg.model != "bridge":
        raise ConfigError("sampler.method", "sequential sampling applies to the bridge model only")
    for f in fields(Tolerances):
        _positive(getattr(cfg.tolerances, f.name), f"tolerances.{f.name}")
    for i, lam in enumerate(cfg.report.lam_sweep):
        _positive(lam, f"report.lam_sweep[{i}]")
    if cfg.report.points < 3:
        raise ConfigError("report.points", "must be at least 3")
    return cfg
