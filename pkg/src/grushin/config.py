"""TOML experiment files: parsing with field-precise errors, and serialization."""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .diffusion import SimConfig
from .exceptions import ConfigurationError, GrushinError
from .extensions import ExtensionSpec, check_compatible, spec_from_dict, spec_to_dict
from .geometry import AlphaGeometry
from .testfunctions import TestFunction

EXPERIMENTS = ("hitting", "occupation", "semigroup", "averaging_pair", "sign_stats", "theta_qv", "absorption_cdf")
_REQUIRED = {
    "hitting": ("y",),
    "occupation": (),
    "semigroup": ("f", "start", "t"),
    "averaging_pair": ("f", "g", "start", "t"),
    "sign_stats": (),
    "theta_qv": ("start",),
    "absorption_cdf": ("z0", "times"),
}


@dataclass(frozen=True)
class SimSection:
    epsilon_shell: float = 0.01
    dt_max: float = 0.01
    horizon: float = 1.0
    wall: float | None = None
    n_paths: int = 1000
    seed: int = 0
    record_stride: int = 1
    step_scale: float = 0.05
    track_theta: bool = True

    def sim_config(self, **overrides) -> SimConfig:
        kw = dict(epsilon_shell=self.epsilon_shell, dt_max=self.dt_max, horizon=self.horizon, wall=self.wall,
                  record_stride=self.record_stride, step_scale=self.step_scale, track_theta=self.track_theta)
        kw.update(overrides)
        return SimConfig(**kw)


@dataclass(frozen=True)
class Experiment:
    name: str = "sign_stats"
    y: float | None = None
    t: float | None = None
    start: tuple[float, float] | None = None
    z0: float | None = None
    times: tuple[float, ...] | None = None
    f: TestFunction | None = None
    g: TestFunction | None = None


@dataclass(frozen=True)
class Output:
    csv_dir: str | None = None
    json: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    alpha: float
    extension: ExtensionSpec
    sim: SimSection = field(default_factory=SimSection)
    experiment: Experiment = field(default_factory=Experiment)
    output: Output = field(default_factory=Output)

    @property
    def geometry(self) -> AlphaGeometry:
        return AlphaGeometry(self.alpha)


# ---------------------------------------------------------------------------
# parsing


def _number(table: dict, key: str, where: str, *, integer=False, positive=False, default=None):
    if key not in table:
        if default is None:
            raise ConfigurationError("missing required value", f"{where}.{key}" if where else key)
        return default
    v = table[key]
    name = f"{where}.{key}" if where else key
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigurationError(f"expected a number, got {v!r}", name)
    if integer:
        if isinstance(v, float) and not v.is_integer():
            raise ConfigurationError(f"expected an integer, got {v!r}", name)
        v = int(v)
    else:
        v = float(v)
    if positive and not v > 0:
        raise ConfigurationError(f"must be positive, got {v!r}", name)
    return v


def _check_keys(table: dict, allowed, where: str) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigurationError(f"unknown key; expected one of {sorted(allowed)}",
                                     f"{where}.{key}" if where else key)


def _table(doc: dict, key: str) -> dict:
    v = doc.get(key, {})
    if not isinstance(v, dict):
        raise ConfigurationError("expected a table", key)
    return v


def _parse_sim(t: dict) -> SimSection:
    _check_keys(t, {f.name for f in fields(SimSection)}, "sim")
    d = SimSection()
    wall = _number(t, "wall", "sim", positive=True) if "wall" in t else None
    track = t.get("track_theta", d.track_theta)
    if not isinstance(track, bool):
        raise ConfigurationError("expected true or false", "sim.track_theta")
    seed = _number(t, "seed", "sim", integer=True, default=d.seed)
    if not 0 <= seed < 2 ** 64:
        raise ConfigurationError("seed must be a 64-bit unsigned integer", "sim.seed")
    s = SimSection(
        epsilon_shell=_number(t, "epsilon_shell", "sim", positive=True, default=d.epsilon_shell),
        dt_max=_number(t, "dt_max", "sim", positive=True, default=d.dt_max),
        horizon=_number(t, "horizon", "sim", positive=True, default=d.horizon),
        wall=wall,
        n_paths=_number(t, "n_paths", "sim", integer=True, positive=True, default=d.n_paths),
        seed=seed,
        record_stride=_number(t, "record_stride", "sim", integer=True, positive=True, default=d.record_stride),
        step_scale=_number(t, "step_scale", "sim", positive=True, default=d.step_scale),
        track_theta=track,
    )
    s.sim_config()  # cross-field checks
    return s


def _parse_experiment(t: dict) -> Experiment:
    _check_keys(t, {f.name for f in fields(Experiment)}, "experiment")
    name = t.get("name")
    if name not in EXPERIMENTS:
        raise ConfigurationError(f"unknown experiment {name!r}; expected one of {list(EXPERIMENTS)}",
                                 "experiment.name")
    for key in _REQUIRED[name]:
        if key not in t:
            raise ConfigurationError(f"required by experiment {name!r}", f"experiment.{key}")
    kw: dict = {"name": name}
    for key in ("y", "t", "z0"):
        if key in t:
            kw[key] = _number(t, key, "experiment", positive=True)
    if "start" in t:
        st = t["start"]
        if not (isinstance(st, list) and len(st) == 2 and all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                                              for v in st)):
            raise ConfigurationError("expected [x, theta]", "experiment.start")
        kw["start"] = (float(st[0]), float(st[1]))
    if "times" in t:
        ts = t["times"]
        if not (isinstance(ts, list) and ts and all(isinstance(v, (int, float)) and v > 0 for v in ts)):
            raise ConfigurationError("expected a non-empty list of positive times", "experiment.times")
        kw["times"] = tuple(float(v) for v in ts)
    for key in ("f", "g"):
        if key in t:
            if not isinstance(t[key], dict):
                raise ConfigurationError("expected a table with a 'terms' array", f"experiment.{key}")
            kw[key] = TestFunction.from_dict(t[key], f"experiment.{key}")
    return Experiment(**kw)


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a decoded TOML document."""
    _check_keys(doc, {"alpha", "extension", "sim", "experiment", "output"}, "")
    alpha = _number(doc, "alpha", "")
    if not math.isfinite(alpha):
        raise ConfigurationError("must be finite", "alpha")
    ext = _table(doc, "extension")
    _check_keys(ext, {"kind", "gamma", "a", "mu_plus", "mu_minus", "arcs"}, "extension")
    spec = spec_from_dict(ext)
    geom = AlphaGeometry(alpha)
    check_compatible(geom, spec)
    out = _table(doc, "output")
    _check_keys(out, {"csv_dir", "json"}, "output")
    for key in ("csv_dir", "json"):
        if key in out and not isinstance(out[key], str):
            raise ConfigurationError("expected a path string", f"output.{key}")
    return ExperimentConfig(alpha, spec, _parse_sim(_table(doc, "sim")),
                            _parse_experiment(_table(doc, "experiment")) if "experiment" in doc else Experiment(),
                            Output(out.get("csv_dir"), out.get("json")))


def loads(text: str) -> ExperimentConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"invalid TOML: {exc}") from None
    try:
        return parse_config(doc)
    except ConfigurationError:
        raise
    except GrushinError as exc:
        raise ConfigurationError(str(exc)) from None


def load(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}") from None
    return loads(text)


# ---------------------------------------------------------------------------
# serialization


def to_dict(cfg: ExperimentConfig) -> dict:
    sim = {f.name: getattr(cfg.sim, f.name) for f in fields(SimSection) if getattr(cfg.sim, f.name) is not None}
    exp: dict = {}
    for f in fields(Experiment):
        v = getattr(cfg.experiment, f.name)
        if v is None:
            continue
        if isinstance(v, TestFunction):
            v = v.to_dict()
        elif isinstance(v, tuple):
            v = list(v)
        exp[f.name] = v
    out = {k: v for k, v in (("csv_dir", cfg.output.csv_dir), ("json", cfg.output.json)) if v is not None}
    doc = {"alpha": cfg.alpha, "extension": spec_to_dict(cfg.extension), "sim": sim, "experiment": exp}
    if out:
        doc["output"] = out
    return doc


def dumps(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))
