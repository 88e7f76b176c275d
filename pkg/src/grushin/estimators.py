"""Monte Carlo estimators built on path batches, and their closed-form oracles."""
from __future__ import annotations

import json
import math
import subprocess
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numba as nb
import numpy as np
from scipy import integrate

from . import _engine as eng
from .bessel import (ScaleSpec, SpeedSpec, expected_exit_time, green_at_zero, hitting_prob, scale_function,
                     speed_density, speed_measure_interval)
from .diffusion import Batch, SimConfig, Trajectory, simulate_batch
from .exceptions import ConfigurationError
from .extensions import Absorbed, Cone, CylinderNonLocal, ExtensionSpec, check_compatible
from .geometry import AlphaGeometry, BoundaryClass, SurfacePoint
from .testfunctions import TestFunction, satisfies_averaging_match

Z_THRESHOLD = 4.0
_NEVER = 1e12  # horizon for experiments that run to a stopping time


@dataclass(frozen=True)
class MCResult:
    """Sample count, mean and standard error of a Monte Carlo estimate."""

    n: int
    mean: float
    stderr: float
    extra: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_samples(cls, samples, **extra) -> "MCResult":
        x = np.asarray(samples, dtype=float).ravel()
        n = x.size
        if n == 0:
            raise ValueError("no samples")
        sd = float(np.std(x, ddof=1)) if n > 1 else 0.0
        return cls(n, float(np.mean(x)), sd / math.sqrt(n), dict(extra))

    @property
    def _m2(self) -> float:
        return (self.stderr ** 2) * self.n * (self.n - 1)

    def merge(self, other: "MCResult") -> "MCResult":
        """Statistics of the pooled sample (parallel-variance combination)."""
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self._m2 + other._m2 + delta * delta * self.n * other.n / n
        stderr = math.sqrt(m2 / (n - 1) / n) if n > 1 else 0.0
        return MCResult(n, mean, stderr, {**self.extra, **other.extra})

    def z_score(self, target: float) -> float:
        diff = self.mean - target
        if self.stderr == 0.0:
            return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        return diff / self.stderr

    def within(self, target: float, z: float = Z_THRESHOLD) -> bool:
        return abs(self.z_score(target)) < z

    def to_dict(self) -> dict:
        return {"n": self.n, "mean": self.mean, "stderr": self.stderr}


def _bernoulli(flags) -> MCResult:
    return MCResult.from_samples(np.asarray(flags, dtype=float))


def _require_regular(geom: AlphaGeometry, what: str) -> None:
    if geom.boundary_class is not BoundaryClass.REGULAR:
        raise ConfigurationError(f"{what} needs a regular boundary (-1 < alpha < 1), got alpha={geom.alpha}",
                                 "alpha")


def _default(config: SimConfig | None, **kw) -> SimConfig:
    if config is None:
        return SimConfig(**kw)
    return config


# ---------------------------------------------------------------------------
# estimators


def estimate_hitting(geom: AlphaGeometry, spec: ExtensionSpec, y: float, n: int, seed: int,
                     config: SimConfig | None = None, threads: int | None = None) -> MCResult:
    """Fraction of paths started on Z that reach ``x = y`` before ``x = -y``."""
    _require_regular(geom, "hitting experiment")
    if not y > 0.0:
        raise ConfigurationError("y must be positive", "experiment.y")
    config = _default(config, epsilon_shell=min(0.01, y / 10), dt_max=0.01, horizon=_NEVER, track_theta=False)
    if config.epsilon_shell >= y:
        raise ConfigurationError("epsilon_shell must be below y", "sim.epsilon_shell")
    b = simulate_batch(geom, spec, config, (0.0, 0.0), n, seed, stop_level=y, threads=threads)
    sign = b.stat(eng.S_STOP_SIGN)
    unresolved = int(np.sum(sign == 0.0))
    return MCResult.from_samples(sign > 0.0, unresolved=unresolved)


def occupation_oracle(alpha: float, a: float, gamma: float, wall: float) -> float:
    """Long-run fraction of time at Z with reflecting walls at ``|x| = wall``."""
    if math.isinf(gamma):
        return 1.0
    body = speed_measure_interval(SpeedSpec(alpha, a, 0.0), -wall, wall)
    return gamma / (gamma + body)


def estimate_occupation_fraction(geom: AlphaGeometry, spec: ExtensionSpec, config: SimConfig, n: int, seed: int,
                                 start: SurfacePoint | tuple = (0.0, 0.0), threads: int | None = None,
                                 hold_normalization: float | None = None) -> MCResult:
    """Per-path fraction of ``[0, horizon]`` spent on Z, averaged over ``n`` paths."""
    if config.wall is None:
        raise ConfigurationError("occupation needs reflecting walls", "sim.wall")
    spec = check_compatible(geom, spec)
    if not isinstance(spec, (Cone, Absorbed)):
        raise ConfigurationError("occupation is defined for cone or absorbed extensions", "extension.kind")
    b = simulate_batch(geom, spec, config, start, n, seed, threads=threads,
                       hold_normalization=hold_normalization)
    return MCResult.from_samples(b.stat(eng.S_TIME_AT_Z) / config.horizon)


def estimate_semigroup(geom: AlphaGeometry, spec: ExtensionSpec, f: TestFunction, start, t: float, n: int,
                       seed: int, config: SimConfig | None = None, threads: int | None = None) -> MCResult:
    """Monte Carlo value of ``E f(X_t)`` from ``start``."""
    values = _observe(geom, spec, [f], start, t, n, seed, config, threads)[0]
    return MCResult.from_samples(values)


def _observe(geom, spec, fs, start, t, n, seed, config, threads):
    if not t > 0.0:
        raise ConfigurationError("t must be positive", "experiment.t")
    config = _default(config, epsilon_shell=0.01, dt_max=0.01, horizon=t)
    if config.horizon != t:
        config = replace(config, horizon=t)
    b = simulate_batch(geom, spec, config, start, n, seed, obs_times=[t], threads=threads)
    x, th = b.obs_x[:, 0], b.obs_theta[:, 0]
    return [np.broadcast_to(f(x, th, geom.topology), x.shape).astype(float) for f in fs]


class PairCheck(NamedTuple):
    f: MCResult
    g: MCResult
    z_score: float


def averaging_pair_check(geom: AlphaGeometry, spec: ExtensionSpec, f: TestFunction, g: TestFunction, start,
                         t: float, n: int, seed: int, config: SimConfig | None = None,
                         threads: int | None = None) -> PairCheck:
    """Estimate ``E f(X_t)`` and ``E g(X_t)`` on common paths and z-score their difference.

    ``f`` and ``g`` must agree on ``x > 0`` and have equal angular means on ``x < 0``.
    """
    if not satisfies_averaging_match(f, g):
        raise ConfigurationError("f and g must agree on x > 0 and have equal angular means on x < 0",
                                 "experiment.g")
    x0 = start.x if isinstance(start, SurfacePoint) else start[0]
    if not x0 > 0.0:
        raise ConfigurationError("start must have x > 0", "experiment.start")
    vf, vg = _observe(geom, spec, [f, g], start, t, n, seed, config, threads)
    diff = MCResult.from_samples(vf - vg)
    return PairCheck(MCResult.from_samples(vf), MCResult.from_samples(vg), diff.z_score(0.0))


class SignStats(NamedTuple):
    n_pos: int
    n_neg: int
    n_sign_changes: int

    def positive_fraction(self) -> MCResult:
        total = self.n_pos + self.n_neg
        return _bernoulli(np.r_[np.ones(self.n_pos), np.zeros(self.n_neg)]) if total else MCResult(0, math.nan, math.nan)


def excursion_sign_stats(paths: Iterable[Trajectory] | Batch) -> SignStats:
    """Counts of positive and negative excursion starts and of sign changes between consecutive starts."""
    if isinstance(paths, Batch):
        s = paths.stats
        return SignStats(int(s[:, eng.S_N_POS].sum()), int(s[:, eng.S_N_NEG].sum()),
                         int(s[:, eng.S_N_SIGN_CHANGES].sum()))
    n_pos = n_neg = changes = 0
    for tr in paths:
        signs = [e.sign for e in tr.events if e.kind == "EXSTART"]
        n_pos += sum(1 for s in signs if s > 0)
        n_neg += sum(1 for s in signs if s < 0)
        changes += sum(1 for s0, s1 in zip(signs, signs[1:]) if s0 != s1)
    return SignStats(n_pos, n_neg, changes)


def positive_start_angles(paths: Iterable[Trajectory]) -> np.ndarray:
    return np.array([e.theta for tr in paths for e in tr.events if e.kind == "EXSTART" and e.sign > 0])


def nonlocal_rule_holds(spec: CylinderNonLocal, paths: Sequence[Trajectory]) -> bool:
    """Every excursion start lies in A exactly when it is positive."""
    for tr in paths:
        for e in tr.events:
            if e.kind == "EXSTART" and bool(spec.contains(e.theta)) != (e.sign > 0):
                return False
    return True


def estimate_theta_qv(geom: AlphaGeometry, start, n: int, seed: int, config: SimConfig | None = None,
                      threads: int | None = None) -> MCResult:
    """Mean quadratic variation of theta over ``[0, T0]``.

    The estimate is the accumulated conditional variance ``sum |x|^(2 alpha) dt``.
    ``extra`` carries the realized sums of squared theta and natural-scale
    increments and their largest pathwise relative gap. By default paths are
    kept in ``|x| <= 2 |x0|`` by a reflecting wall so that ``T0`` has finite mean.
    """
    if geom.boundary_class is BoundaryClass.ENTRANCE:
        raise ConfigurationError("theta QV to T0 needs alpha > -1 (T0 is infinite otherwise)", "alpha")
    _require_regular(geom, "theta QV experiment")
    start = start if isinstance(start, SurfacePoint) else geom.point(*start)
    if start.x == 0.0:
        raise ConfigurationError("start must be off the singular set", "experiment.start")
    config = _default(config, epsilon_shell=0.01, dt_max=0.01, horizon=_NEVER, wall=2 * abs(start.x),
                      step_scale=0.01)
    b = simulate_batch(geom, Absorbed(), config, start, n, seed, stop_at_hit=True, threads=threads)
    qv = b.stat(eng.S_QV_THETA)
    real_th = b.stat(eng.S_QV_THETA_REAL)
    real_y = b.stat(eng.S_QV_Y_REAL)
    gap = np.abs(real_th - real_y) / np.maximum(real_y, 1e-300)
    t0 = b.stat(eng.S_T0)
    return MCResult.from_samples(qv, realized_theta=float(real_th.mean()), realized_y=float(real_y.mean()),
                                 max_rel_gap=float(gap.max()), median_rel_gap=float(np.median(gap)),
                                 mean_t0=float(t0.mean()), unresolved=int(np.sum(~np.isfinite(t0))))


def absorption_cdf(geom: AlphaGeometry, x0: float, times: Sequence[float], n: int, seed: int,
                   config: SimConfig | None = None, threads: int | None = None) -> list[MCResult]:
    """Empirical ``P(T0 <= t)`` for the absorbed process started at ``|x| = x0``."""
    times = [float(t) for t in times]
    if not times or min(times) <= 0.0:
        raise ConfigurationError("times must be positive", "experiment.times")
    config = _default(config, epsilon_shell=0.01, dt_max=0.05, horizon=max(times), track_theta=False)
    b = simulate_batch(geom, Absorbed(), config, (x0, 0.0), n, seed, stop_at_hit=True, threads=threads)
    t0 = b.stat(eng.S_T0)
    return [_bernoulli(t0 <= t) for t in times]


def estimate_absorption_cdf(geom: AlphaGeometry, z0: float, times: Sequence[float], n: int, seed: int,
                            config: SimConfig | None = None, threads: int | None = None) -> list[MCResult]:
    """``P(T0 <= t)`` on the alpha = 1 cylinder from ``x^2 = z0``, to compare with the BESQ0 atom."""
    if geom.alpha != 1.0:
        raise ConfigurationError(f"this experiment is defined at alpha = 1, got {geom.alpha}", "alpha")
    if not z0 > 0.0:
        raise ConfigurationError("z0 must be positive", "experiment.z0")
    return absorption_cdf(geom, math.sqrt(z0), times, n, seed, config, threads)


# ---------------------------------------------------------------------------
# independent occupation cross-check


def sticky_walk_chain(alpha: float, a: float, gamma: float, wall: float, n_cells: int):
    """Semi-Markov walk on the grid ``x_j = j wall / n_cells`` that matches the sticky diffusion.

    Returns ``(x, p_up, hold, at_zero)``: grid, probability of stepping right,
    mean time until the next grid point is reached and, for the site at 0, the
    mean part of that time spent exactly at 0. Means come from the Green
    function of each cell computed by quadrature.
    """
    h = wall / n_cells
    x = np.arange(-n_cells, n_cells + 1) * h
    sc = ScaleSpec(alpha, a)
    sp = SpeedSpec(alpha, a, gamma)
    p_up = np.empty(x.size)
    hold = np.empty(x.size)
    for j, xj in enumerate(x):
        if j == 0:
            p_up[j], hold[j] = 1.0, _reflected_exit_time(sp, xj, xj + h)
        elif j == x.size - 1:
            p_up[j], hold[j] = 0.0, _reflected_exit_time(sp, xj, xj - h)
        else:
            p_up[j] = hitting_prob(sc, xj, xj - h, xj + h)
            hold[j] = expected_exit_time(sp, xj, xj - h, xj + h)
    at_zero = gamma * green_at_zero(sc, h)
    return x, p_up, hold, at_zero


def _reflected_exit_time(sp: SpeedSpec, wall_x: float, target: float) -> float:
    """Mean time for the diffusion reflected at ``wall_x`` to reach ``target``."""
    sc = ScaleSpec(sp.alpha, sp.a)
    lo, hi = sorted((wall_x, target))
    s_t = scale_function(sc, target)
    val, _ = integrate.quad(lambda y: abs(scale_function(sc, y) - s_t) * speed_density(sp, y), lo, hi,
                            epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def sticky_walk_occupation(alpha: float, a: float, gamma: float, wall: float, n_cells: int = 50) -> float:
    """Exact long-run fraction of time at 0 for the grid walk (renewal-reward over its stationary law)."""
    x, p_up, hold, at_zero = sticky_walk_chain(alpha, a, gamma, wall, n_cells)
    # birth-death detailed balance for the embedded chain
    pi = np.ones(x.size)
    for j in range(1, x.size):
        pi[j] = pi[j - 1] * p_up[j - 1] / (1.0 - p_up[j])
    pi /= pi.sum()
    j0 = int(np.argmin(np.abs(x)))
    return float(pi[j0] * at_zero / np.dot(pi, hold))


@nb.njit(cache=True)
def _walk(rng, p_up, hold, j0, at_zero, n_jumps):
    j = j0
    t_total = 0.0
    t_zero = 0.0
    for _ in range(n_jumps):
        t_total += rng.exponential(hold[j])
        if j == j0:
            t_zero += rng.exponential(at_zero)
        j = j + 1 if rng.random() < p_up[j] else j - 1
    return t_zero, t_total


def simulate_sticky_walk(alpha: float, a: float, gamma: float, wall: float, n_cells: int = 50,
                         n_jumps: int = 2_000_000, seed: int = 0) -> float:
    """Monte Carlo run of the grid walk; holds are exponential with the chain's mean times.

    The time at 0 per visit is drawn separately with mean ``gamma * G(0, 0)``
    and counted in both totals (it is part of that site's mean hold).
    """
    x, p_up, hold, at_zero = sticky_walk_chain(alpha, a, gamma, wall, n_cells)
    j0 = int(np.argmin(np.abs(x)))
    moving = hold.copy()
    moving[j0] -= at_zero
    t_zero, t_move = _walk(np.random.default_rng(seed), p_up, moving, j0, at_zero, n_jumps)
    return t_zero / (t_zero + t_move)


# ---------------------------------------------------------------------------
# records


def git_rev() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             timeout=5, cwd=Path(__file__).parent)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def result_record(experiment: str, params: dict, result: MCResult, seed: int, runtime_s: float,
                  z_score: float | None = None) -> dict:
    rec = {"experiment": experiment, "params": params, "n": result.n, "mean": result.mean,
           "stderr": result.stderr}
    if z_score is not None:
        rec["z_score"] = z_score
    rec.update(runtime_s=runtime_s, seed=seed, git_rev=git_rev())
    return rec


def append_record(path, record: dict) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, default=_json_default) + "\n")


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not JSON serializable: {type(v).__name__}")


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
