"""Paths of Brownian motion on M_alpha extended across the singular set.

The radial part ``|x|`` moves by exact squared-Bessel transitions. Each step
first draws the exact hitting time of ``x = 0``; if that falls beyond the step,
the endpoint is drawn conditioned on no visit via the bridge hitting probability. Arrivals at the singular set are
resolved by the extension's rule, after which the path restarts on the shell
``|x| = epsilon_shell`` with a sign and an angle. The angle diffuses with
variance ``|x|^(2 alpha) dt`` per step, equivalently the quadratic variation of
the natural-scale coordinate.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from . import _engine as eng
from .bessel import ScaleSpec, green_at_zero
from .exceptions import ConfigurationError, DomainError, SingularPointError
from .extensions import (Absorbed, Cone, CylinderNeumann, CylinderNonLocal, CylinderSymmetric,
                         EntranceOnly, ExtensionSpec, check_compatible, CYLINDER_KINDS)
from .geometry import AlphaGeometry, SurfacePoint, wrap_angle
from .measures import Uniform

# Multiplies gamma * G(0, 0) to give the mean hold at the singular point per return
# to the shell, where G is the Green function of (-eps, eps). The value follows
# from expected occupation = Green function against the speed measure.
HOLD_NORMALIZATION = 1.0

_KIND_CODES = {
    Absorbed: eng.K_ABSORBED,
    Cone: eng.K_CONE,
    EntranceOnly: eng.K_ENTRANCE,
    CylinderSymmetric: eng.K_CYL_SYM,
    CylinderNeumann: eng.K_CYL_NEUMANN,
    CylinderNonLocal: eng.K_CYL_NONLOCAL,
}


@dataclass(frozen=True)
class SimConfig:
    """Numerical settings of the path construction.

    epsilon_shell : radius of the shell on which excursions start
    dt_max : largest time step
    horizon : final time
    wall : reflecting truncation at ``|x| = wall`` (None for none)
    record_stride : keep every k-th step in recorded trajectories
    step_scale : steps are capped at ``step_scale * |x|^2`` (no smaller than
        ``epsilon_shell^2``) when the angle is tracked
    track_theta : when False the cap is dropped; the angle is then only
        meaningful at the resolution of ``dt_max``
    max_steps : safety limit per path
    """

    epsilon_shell: float = 0.01
    dt_max: float = 0.01
    horizon: float = 1.0
    wall: float | None = None
    record_stride: int = 1
    step_scale: float = 0.05
    track_theta: bool = True
    max_steps: int = 200_000_000

    def __post_init__(self):
        for name in ("epsilon_shell", "dt_max", "horizon", "step_scale"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigurationError(f"must be a positive finite number, got {v!r}", f"sim.{name}")
        if self.wall is not None:
            if not (math.isfinite(self.wall) and self.wall > self.epsilon_shell):
                raise ConfigurationError("wall must exceed epsilon_shell", "sim.wall")
        if int(self.record_stride) < 1:
            raise ConfigurationError("must be a positive integer", "sim.record_stride")

    def refined(self, factor: float = 0.5) -> "SimConfig":
        """Same settings with ``dt_max`` and ``step_scale`` multiplied by ``factor``."""
        return replace(self, dt_max=self.dt_max * factor, step_scale=self.step_scale * factor)


class Event(NamedTuple):
    t: float
    kind: str  # "HITZ", "EXSTART", "ABSORB" or "WALL"
    sign: int
    x: float
    theta: float


_EVENT_NAMES = {eng.EV_HITZ: "HITZ", eng.EV_EXSTART: "EXSTART", eng.EV_ABSORB: "ABSORB", eng.EV_WALL: "WALL"}


@dataclass
class Trajectory:
    """Recorded samples ``(t, x, theta)`` plus the event log of one path."""

    t: np.ndarray
    x: np.ndarray
    theta: np.ndarray
    events: list[Event] = field(default_factory=list)
    stats: np.ndarray | None = None

    @property
    def samples(self) -> list[tuple[float, float, float]]:
        return list(zip(self.t.tolist(), self.x.tolist(), self.theta.tolist()))

    def excursion_starts(self) -> list[Event]:
        return [e for e in self.events if e.kind == "EXSTART"]

    def to_csv(self, path) -> None:
        """Write ``t,x,theta,event`` rows; event rows follow the sample at the same time."""
        rows = [(t, 0, x, th, "") for t, x, th in zip(self.t.tolist(), self.x.tolist(), self.theta.tolist())]
        for e in self.events:
            label = e.kind
            if e.kind == "EXSTART":
                label = f"EXSTART:{e.sign:+d}:{_fmt(e.theta)}"
            rows.append((e.t, 1, e.x, e.theta, label))
        rows.sort(key=lambda row: (row[0], row[1]))
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("t,x,theta,event\n")
            for t, _, x, th, label in rows:
                fh.write(f"{_fmt(t)},{_fmt(x)},{_fmt(th)},{label}\n")


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def read_trajectory_csv(path) -> Trajectory:
    """Inverse of :meth:`Trajectory.to_csv` (event signs and angles are recovered from the labels)."""
    ts, xs, ths, events = [], [], [], []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "t,x,theta,event":
            raise ValueError(f"unexpected header {header!r}")
        for line in fh:
            t, x, th, label = line.rstrip("\n").split(",", 3)
            if not label:
                ts.append(float(t)); xs.append(float(x)); ths.append(float(th))
                continue
            sign = 0
            if label.startswith("EXSTART"):
                _, s, _ = label.split(":")
                sign, label = int(s), "EXSTART"
            events.append(Event(float(t), label, sign, float(x), float(th)))
    return Trajectory(np.array(ts), np.array(xs), np.array(ths), events)


# ---------------------------------------------------------------------------
# parameter packing


@dataclass(frozen=True)
class _Packed:
    fp: np.ndarray
    ip: np.ndarray
    mup_x: np.ndarray
    mup_c: np.ndarray
    mum_x: np.ndarray
    mum_c: np.ndarray
    arc_lo: np.ndarray
    arc_hi: np.ndarray


def hold_mean(geom: AlphaGeometry, spec: ExtensionSpec, epsilon: float,
              normalization: float | None = None) -> float:
    """Mean of the exponential hold at the cone point for each return to the shell."""
    if not isinstance(spec, Cone) or spec.gamma == 0.0:
        return 0.0
    kappa = HOLD_NORMALIZATION if normalization is None else normalization
    return kappa * spec.gamma * green_at_zero(ScaleSpec(geom.alpha, spec.a), epsilon)


def _pack(geom, spec, config: SimConfig, *, stop_level=0.0, stop_at_hit=False, record=0,
          hold_normalization=None) -> _Packed:
    spec = check_compatible(geom, spec)
    fp = np.zeros(eng.N_FP)
    ip = np.zeros(eng.N_IP, dtype=np.int64)
    fp[eng.F_ALPHA] = geom.alpha
    fp[eng.F_A] = getattr(spec, "a", 0.5)
    fp[eng.F_HOLD_MEAN] = hold_mean(geom, spec, config.epsilon_shell, hold_normalization)
    fp[eng.F_EPS] = config.epsilon_shell
    fp[eng.F_DT_MAX] = config.dt_max
    fp[eng.F_STEP_SCALE] = config.step_scale
    fp[eng.F_HORIZON] = config.horizon
    fp[eng.F_WALL] = config.wall or 0.0
    fp[eng.F_STOP_LEVEL] = stop_level
    ip[eng.I_KIND] = _KIND_CODES[type(spec)]
    ip[eng.I_TRACK_THETA] = int(config.track_theta)
    ip[eng.I_STOP_AT_HIT] = int(stop_at_hit)
    ip[eng.I_RECORD] = record
    ip[eng.I_STRIDE] = config.record_stride
    ip[eng.I_MAX_STEPS] = config.max_steps
    mu_p = getattr(spec, "mu_plus", Uniform()).encode()
    mu_m = getattr(spec, "mu_minus", Uniform()).encode()
    ip[eng.I_MU_P_KIND] = mu_p[0]
    ip[eng.I_MU_M_KIND] = mu_m[0]
    arcs = spec.arcs if isinstance(spec, CylinderNonLocal) else ((0.0, 0.0),)
    return _Packed(fp, ip, mu_p[1], mu_p[2], mu_m[1], mu_m[2],
                   np.array([lo for lo, _ in arcs]), np.array([hi for _, hi in arcs]))


def path_rng(seed: int, path_index: int = 0) -> np.random.Generator:
    """Independent stream for path ``path_index``: a Philox generator keyed by ``(seed, path_index)``."""
    return np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), int(path_index)]))


def _check_start(geom: AlphaGeometry, start) -> SurfacePoint:
    if not isinstance(start, SurfacePoint):
        x, th = start
        start = geom.point(x, th)
    if start.topology is not geom.topology:
        start = geom.point(start.x, start.theta)
    return start


def _run(packed: _Packed, rng, start: SurfacePoint, obs_times: np.ndarray):
    return eng.run_path(rng, *eng.SPECIAL, packed.fp, packed.ip, packed.mup_x, packed.mup_c,
                        packed.mum_x, packed.mum_c, packed.arc_lo, packed.arc_hi, obs_times,
                        float(start.x), float(start.theta))


def _to_trajectory(out) -> Trajectory:
    stats, _, _, s_t, s_x, s_th, e_t, e_code, e_sign, e_x, e_th = out
    events = [Event(float(t), _EVENT_NAMES[int(c)], int(s), float(x), float(th))
              for t, c, s, x, th in zip(e_t, e_code, e_sign, e_x, e_th)]
    return Trajectory(s_t.copy(), s_x.copy(), s_th.copy(), events, stats.copy())


# ---------------------------------------------------------------------------
# single-path operations


class StepResult(NamedTuple):
    x: float
    theta: float
    elapsed: float
    hit: bool


def step_interior(geom: AlphaGeometry, state: tuple[float, float], dt: float,
                  rng: np.random.Generator) -> StepResult:
    """Advance ``(x, theta)`` with ``x != 0`` by one exact radial step of length ``dt``.

    The step is shortened to the hitting time when the bridge test reports a
    visit to ``x = 0``; ``elapsed`` is then smaller than ``dt`` and ``x = 0``.
    Requires ``alpha <= 1``.
    """
    x, theta = state
    if x == 0.0:
        raise SingularPointError("step_interior needs x != 0; use the boundary rules on Z")
    if not dt > 0.0:
        raise DomainError("dt must be positive")
    if geom.bessel_dim < 0.0:
        raise DomainError("exact radial steps need alpha <= 1")
    r1, elapsed, hit, q = eng.interior_step(rng, *eng.SPECIAL, abs(x), geom.alpha, dt)
    th1 = theta + math.sqrt(q) * rng.standard_normal()
    return StepResult(math.copysign(r1, x) if not hit else 0.0, th1, elapsed, bool(hit))


class Dispatch(NamedTuple):
    hold_duration: float
    sign: int
    entrance_theta: float


ABSORB = "absorb"


def boundary_dispatch(spec: ExtensionSpec, rng: np.random.Generator, *, alpha: float,
                      epsilon_shell: float) -> Dispatch | str:
    """What a path at the singular point does next: a hold, a sign and an entrance angle.

    Returns :data:`ABSORB` for absorbing extensions.
    """
    geom = AlphaGeometry(alpha)
    spec = check_compatible(geom, spec)
    if isinstance(spec, Absorbed):
        return ABSORB
    if isinstance(spec, CYLINDER_KINDS):
        raise ConfigurationError("cylinder extensions use cylinder_boundary_rule", "extension.kind")
    mu_p, mu_m = spec.mu_plus.encode(), spec.mu_minus.encode()
    hold, sign, theta = eng.dispatch(rng, _KIND_CODES[type(spec)], spec.a,
                                     hold_mean(geom, spec, epsilon_shell),
                                     mu_p[0], mu_p[1], mu_p[2], mu_m[0], mu_m[1], mu_m[2])
    return Dispatch(hold, int(sign), wrap_angle(theta))


def cylinder_boundary_rule(spec: ExtensionSpec, hit_theta: float, incoming_sign: int,
                           rng: np.random.Generator) -> int:
    """Sign of the next excursion after the cylinder is hit at angle ``hit_theta``."""
    if not isinstance(spec, CYLINDER_KINDS):
        raise ConfigurationError("not a cylinder extension", "extension.kind")
    arcs = spec.arcs if isinstance(spec, CylinderNonLocal) else ((0.0, 0.0),)
    lo = np.array([a for a, _ in arcs])
    hi = np.array([b for _, b in arcs])
    return int(eng.cylinder_sign(rng, _KIND_CODES[type(spec)], float(hit_theta), int(incoming_sign), lo, hi))


def simulate_path(geom: AlphaGeometry, spec: ExtensionSpec, config: SimConfig, start,
                  seed: int, path_index: int = 0) -> Trajectory:
    """Full recorded trajectory on ``[0, horizon]``; a pure function of its arguments."""
    start = _check_start(geom, start)
    packed = _pack(geom, spec, config, record=2)
    return _to_trajectory(_run(packed, path_rng(seed, path_index), start, np.empty(0)))


def run_excursion(geom: AlphaGeometry, spec: ExtensionSpec, entrance_sign: int, entrance_theta: float,
                  config: SimConfig, rng: np.random.Generator) -> Trajectory:
    """One excursion from the shell ``x = sign * epsilon_shell`` until it reaches Z or the horizon."""
    if entrance_sign not in (1, -1):
        raise DomainError("entrance_sign must be +1 or -1")
    packed = _pack(geom, spec, config, stop_at_hit=True, record=2)
    start = geom.point(entrance_sign * config.epsilon_shell, entrance_theta)
    return _to_trajectory(_run(packed, rng, start, np.empty(0)))


# ---------------------------------------------------------------------------
# batches


CHUNK = 512


def default_threads() -> int:
    env = os.environ.get("GRUSHIN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigurationError(f"GRUSHIN_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


@dataclass
class Batch:
    """Per-path outputs of a batch, indexed by path number."""

    stats: np.ndarray  # (n, N_STATS)
    obs_x: np.ndarray  # (n, n_obs)
    obs_theta: np.ndarray  # (n, n_obs), wrapped to [0, 2 pi)
    trajectories: list[Trajectory] | None = None

    def stat(self, slot: int) -> np.ndarray:
        return self.stats[:, slot]


def simulate_batch(geom: AlphaGeometry, spec: ExtensionSpec, config: SimConfig, start, n: int,
                   seed: int, *, obs_times: Sequence[float] = (), stop_level: float = 0.0,
                   stop_at_hit: bool = False, record: int = 0, threads: int | None = None,
                   hold_normalization: float | None = None) -> Batch:
    """Simulate ``n`` independent paths; path ``i`` uses :func:`path_rng` ``(seed, i)``.

    Work is split in fixed chunks of path indices, so the result does not depend
    on the number of worker threads.
    """
    if n < 1:
        raise ConfigurationError("need at least one path", "sim.n_paths")
    start = _check_start(geom, start)
    obs = np.asarray(sorted(float(t) for t in obs_times), dtype=float)
    if obs.size and (obs[0] < 0.0 or obs[-1] > config.horizon):
        raise ConfigurationError("observation times must lie in [0, horizon]")
    packed = _pack(geom, spec, config, stop_level=stop_level, stop_at_hit=stop_at_hit,
                   record=record, hold_normalization=hold_normalization)
    stats = np.empty((n, eng.N_STATS))
    ox = np.empty((n, obs.size))
    oth = np.empty((n, obs.size))
    trajs: list = [None] * n if record else None

    def work(lo: int) -> None:
        for i in range(lo, min(lo + CHUNK, n)):
            out = _run(packed, path_rng(seed, i), start, obs)
            stats[i] = out[0]
            ox[i] = out[1]
            oth[i] = out[2]
            if record:
                trajs[i] = _to_trajectory(out)

    chunks = range(0, n, CHUNK)
    threads = threads or default_threads()
    if threads == 1 or len(chunks) == 1:
        for lo in chunks:
            work(lo)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, chunks))
    return Batch(stats, ox, wrap_angle(oth) if obs.size else oth, trajs)
