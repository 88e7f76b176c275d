"""The acceptance battery: each criterion is a function returning a :class:`CriterionResult`.

Criteria that depend on the shell radius take ``eps_factor``; the consistency
criterion reruns them with the radius halved.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, stats

from . import _engine as eng
from .bessel import (BesqMode, BesqParams, ScaleSpec, SpeedSpec, besq0_absorption_prob, besq_step_exact,
                     scale_function, speed_density, speed_measure_interval)
from .diffusion import SimConfig, simulate_batch
from .estimators import (MCResult, Z_THRESHOLD, averaging_pair_check, estimate_absorption_cdf, estimate_hitting,
                         estimate_occupation_fraction, estimate_semigroup, estimate_theta_qv, excursion_sign_stats,
                         nonlocal_rule_holds, occupation_oracle, sticky_walk_occupation)
from .extensions import (Absorbed, Cone, CylinderNeumann, CylinderNonLocal, CylinderSymmetric, EntranceOnly)
from .geometry import AlphaGeometry, classify_boundary
from .testfunctions import harmonic, indicator, zero


@dataclass
class CriterionResult:
    key: str
    passed: bool
    detail: str
    runtime_s: float = 0.0
    checks: list[str] = field(default_factory=list)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.key:<28} {self.detail}  [{self.runtime_s:.1f}s]"


@dataclass(frozen=True)
class Settings:
    seed: int = 20240601
    threads: int | None = None
    eps_factor: float = 1.0
    hold_normalization: float | None = None


class _Collector:
    def __init__(self):
        self.ok = True
        self.notes: list[str] = []

    def check(self, passed: bool, note: str) -> None:
        self.ok &= bool(passed)
        self.notes.append(("ok   " if passed else "FAIL ") + note)


def _z(r: MCResult, target: float) -> str:
    return f"{r.mean:.5f}+-{r.stderr:.5f} vs {target:.5f} (z={r.z_score(target):+.2f})"


# ---------------------------------------------------------------------------


def boundary_classification(s: Settings) -> _Collector:
    c = _Collector()
    expected = {-3: "entrance", -1: "entrance", -0.5: "regular", 0: "regular", 0.99: "regular",
                1: "exit", 2: "exit"}
    for alpha, want in expected.items():
        got = classify_boundary(alpha).value
        c.check(got == want, f"alpha={alpha}: {got}")
    return c


def skewness(s: Settings) -> _Collector:
    c = _Collector()
    geom = AlphaGeometry(-0.5)
    for i, a in enumerate((0.3, 0.5, 0.7)):
        for j, y in enumerate((0.5, 1.0)):
            cfg = SimConfig(epsilon_shell=0.01 * s.eps_factor, dt_max=0.1, horizon=1e12, track_theta=False)
            r = estimate_hitting(geom, Cone(0.0, a), y, 100_000, s.seed + 10 * i + j, cfg, s.threads)
            c.check(r.within(a) and r.extra["unresolved"] == 0, f"a={a} y={y}: {_z(r, a)}")
    return c


def besq0_absorption(s: Settings) -> _Collector:
    c = _Collector()
    times = (0.25, 0.5, 1.0, 2.0)
    cfg = SimConfig(epsilon_shell=0.01 * s.eps_factor, dt_max=0.05, horizon=max(times), track_theta=False)
    res = estimate_absorption_cdf(AlphaGeometry(1.0), 1.0, times, 100_000, s.seed + 1, cfg, s.threads)
    for t, r in zip(times, res):
        target = besq0_absorption_prob(1.0, t)
        c.check(r.within(target), f"t={t}: {_z(r, target)}")
    return c


def sticky_occupation(s: Settings) -> _Collector:
    c = _Collector()
    geom = AlphaGeometry(-0.5)
    oracle = occupation_oracle(-0.5, 0.5, 2.0, 1.0)
    walk = sticky_walk_occupation(-0.5, 0.5, 2.0, 1.0, n_cells=40)
    c.check(abs(walk - oracle) < 1e-9 * oracle, f"grid walk {walk:.6f} vs speed measure {oracle:.6f}")
    cfg = SimConfig(epsilon_shell=0.01 * s.eps_factor, dt_max=0.01, horizon=1e4, wall=1.0, track_theta=False)
    r = estimate_occupation_fraction(geom, Cone(2.0, 0.5), cfg, 8, s.seed + 2, threads=s.threads,
                                     hold_normalization=s.hold_normalization)
    rel = abs(r.mean - oracle) / oracle
    c.check(rel < 0.05, f"gamma=2: {r.mean:.5f} vs 3/19={oracle:.5f} (rel {rel:.2%})")
    cfg0 = SimConfig(epsilon_shell=0.01 * s.eps_factor, dt_max=0.01, horizon=1e3, wall=1.0, track_theta=False)
    r0 = estimate_occupation_fraction(geom, Cone(0.0, 0.5), cfg0, 2, s.seed + 3, threads=s.threads)
    c.check(r0.mean == 0.0, f"gamma=0: {r0.mean!r}")
    return c


def averaging(s: Settings) -> _Collector:
    c = _Collector()
    geom = AlphaGeometry(-0.5)
    spec = Cone(0.0, 0.5)
    cfg = SimConfig(epsilon_shell=0.01 * s.eps_factor, dt_max=0.01, horizon=1.0, track_theta=False)
    f = harmonic(-1, "cos", 1)
    r = estimate_semigroup(geom, spec, f, (0.5, 0.0), 1.0, 100_000, s.seed + 4, cfg, s.threads)
    c.check(r.within(0.0), f"E cos(theta)1{{x<0}}: {_z(r, 0.0)}")
    pairs = {
        "cos(theta)1{x<0} vs 0": (f, zero()),
        "1{x<0} vs 1{x<0}+sin(2theta)1{x<0}": (indicator(-1), indicator(-1) + harmonic(-1, "sin", 2)),
    }
    for k, (name, (ff, gg)) in enumerate(pairs.items()):
        pc = averaging_pair_check(geom, spec, ff, gg, (0.5, 0.0), 1.0, 100_000, s.seed + 5 + k, cfg, s.threads)
        c.check(abs(pc.z_score) < Z_THRESHOLD, f"pair {name}: z={pc.z_score:+.2f}")
    same = averaging_pair_check(geom, spec, f, f, (0.5, 0.0), 1.0, 2_000, s.seed + 7, cfg, s.threads)
    c.check(same.z_score == 0.0, f"f=g: z={same.z_score}")
    return c


def sign_rules(s: Settings) -> _Collector:
    c = _Collector()
    geom = AlphaGeometry(0.5)
    cfg = SimConfig(epsilon_shell=0.05 * s.eps_factor, dt_max=0.05, horizon=10.0, track_theta=False)
    b = simulate_batch(geom, CylinderNeumann(), cfg, (0.5, 0.0), 10_000, s.seed + 8, threads=s.threads)
    st = excursion_sign_stats(b)
    c.check(st.n_sign_changes == 0 and st.n_neg == 0 and st.n_pos > 0,
            f"neumann: {st.n_sign_changes} sign changes over {st.n_pos + st.n_neg} excursions")
    n_paths = 100
    b = simulate_batch(geom, CylinderSymmetric(), cfg, (0.5, 0.0), n_paths, s.seed + 9, threads=s.threads)
    st = excursion_sign_stats(b)
    while st.n_pos + st.n_neg < 100_000:
        n_paths *= 2
        b = simulate_batch(geom, CylinderSymmetric(), cfg, (0.5, 0.0), n_paths, s.seed + 9, threads=s.threads)
        st = excursion_sign_stats(b)
    r = st.positive_fraction()
    c.check(r.within(0.5), f"symmetric: {r.n} excursions, {_z(r, 0.5)}")
    nl = CylinderNonLocal(((0.0, math.pi),))
    cfg_nl = SimConfig(epsilon_shell=0.05 * s.eps_factor, dt_max=0.05, horizon=10.0, track_theta=True)
    b = simulate_batch(geom, nl, cfg_nl, (0.5, 0.0), 200, s.seed + 10, record=1, threads=s.threads)
    pos = [e for tr in b.trajectories for e in tr.events if e.kind == "EXSTART" and e.sign > 0]
    inside = sum(bool(nl.contains(e.theta)) for e in pos)
    c.check(len(pos) > 0 and inside == len(pos) and nonlocal_rule_holds(nl, b.trajectories),
            f"non-local A=(0,pi): {inside}/{len(pos)} positive starts in A")
    return c


def entrance_regime(s: Settings) -> _Collector:
    c = _Collector()
    cfg = SimConfig(epsilon_shell=0.01 * s.eps_factor, dt_max=1.0, horizon=100.0, track_theta=False)
    b = simulate_batch(AlphaGeometry(-2.0), EntranceOnly(0.5), cfg, (0.0, 0.0), 10_000, s.seed + 11,
                       threads=s.threads)
    returns = int(b.stat(eng.S_N_RETURNS).sum())
    min_r = float(b.stat(eng.S_MIN_R_AFTER_START).min())
    c.check(returns == 0 and min_r > 0.0, f"{returns} returns over 10^4 paths, min |x| after entry {min_r:.3g}")
    return c


_COMPLETENESS = (
    (-2.0, EntranceOnly(0.5)),
    (-0.5, Cone(0.0, 0.5)),
    (0.0, CylinderSymmetric()),
    (0.5, CylinderSymmetric()),
    (1.5, Absorbed()),
)


def stochastic_completeness(s: Settings) -> _Collector:
    c = _Collector()
    for k, (alpha, spec) in enumerate(_COMPLETENESS):
        cfg = SimConfig(epsilon_shell=0.1 * s.eps_factor, dt_max=0.1, horizon=10.0, track_theta=False)
        b = simulate_batch(AlphaGeometry(alpha), spec, cfg, (0.5, 0.0), 100_000, s.seed + 12 + k, threads=s.threads)
        bad = int(b.stat(eng.S_NONFINITE).sum())
        finite_end = bool(np.all(np.isfinite(b.stat(eng.S_X_END))))
        reached = bool(np.all(b.stat(eng.S_T_END) >= 10.0 - 1e-9))
        c.check(bad == 0 and finite_end and reached,
                f"alpha={alpha}: {bad} non-finite, max |x| {b.stat(eng.S_MAX_R).max():.3g}")
    return c


def theta_qv(s: Settings) -> _Collector:
    c = _Collector()
    geom = AlphaGeometry(0.5)
    eps = 0.01 * s.eps_factor
    base = SimConfig(epsilon_shell=eps, dt_max=0.01, horizon=1e12, wall=2.0, step_scale=0.05)
    r1 = estimate_theta_qv(geom, (1.0, 0.0), 20_000, s.seed + 20, base, s.threads)
    r2 = estimate_theta_qv(geom, (1.0, 0.0), 20_000, s.seed + 20, base.refined(0.5), s.threads)
    band = Z_THRESHOLD * math.hypot(r1.stderr, r2.stderr)
    c.check(math.isfinite(r1.mean) and r1.extra["unresolved"] == 0 and abs(r1.mean - r2.mean) < band,
            f"mean QV {r1.mean:.4f} -> {r2.mean:.4f} under dt halving (band {band:.4f})")
    fine = SimConfig(epsilon_shell=eps, dt_max=2.5e-7, horizon=1e12, wall=1.0, step_scale=1e-4)
    rp = estimate_theta_qv(geom, (0.5, 0.0), 10, s.seed + 21, fine, s.threads)
    gap = rp.extra["max_rel_gap"]
    c.check(gap < 0.01, f"pathwise |QV(theta)-QV(y)|/QV(y) max over 10 fine paths {gap:.4%}")
    return c


def _eps_rerun(s: Settings) -> _Collector:
    c = _Collector()
    half = Settings(s.seed, s.threads, s.eps_factor * 0.5, s.hold_normalization)
    for key, fn in CRITERIA.items():
        if key in _EPS_DEPENDENT:
            sub = fn(half)
            c.check(sub.ok, f"{key} with epsilon_shell halved")
            c.notes.extend("    " + n for n in sub.notes)
    # worker-count invariance
    geom = AlphaGeometry(-0.5)
    cfg = SimConfig(epsilon_shell=0.01, dt_max=0.1, horizon=1e12, track_theta=False)
    a = estimate_hitting(geom, Cone(0.0, 0.7), 1.0, 3000, s.seed, cfg, threads=1)
    b = estimate_hitting(geom, Cone(0.0, 0.7), 1.0, 3000, s.seed, cfg, threads=4)
    cfg_q = SimConfig(epsilon_shell=0.01, dt_max=0.01, horizon=1.0)
    ba = simulate_batch(geom, Cone(2.0, 0.5), cfg_q, (0.5, 0.0), 1500, s.seed, obs_times=[0.5, 1.0], threads=1)
    bb = simulate_batch(geom, Cone(2.0, 0.5), cfg_q, (0.5, 0.0), 1500, s.seed, obs_times=[0.5, 1.0], threads=3)
    same = (a.mean, a.stderr) == (b.mean, b.stderr) and np.array_equal(ba.stats, bb.stats) \
        and np.array_equal(ba.obs_x, bb.obs_x) and np.array_equal(ba.obs_theta, bb.obs_theta)
    c.check(same, "bit-identical results with 1 and 3/4 worker threads")
    return c


def scheme_consistency(s: Settings) -> _Collector:
    return _eps_rerun(s)


def oracle_layer(s: Settings) -> _Collector:
    c = _Collector()
    rng = np.random.default_rng(s.seed)
    for d in (0.0, 0.5, 1.0, 1.5, 3.0):
        p = BesqParams(d, BesqMode.ABSORBING if d == 0.0 else BesqMode.REFLECTING)
        for z in (0.0, 1.0):
            for dt in (0.1, 1.0):
                r = MCResult.from_samples(besq_step_exact(p, np.full(1_000_000, z), dt, rng))
                target = z + d * dt
                c.check(r.within(target) or (r.stderr == 0.0 and r.mean == target),
                        f"BESQ mean d={d} z={z} dt={dt}: {_z(r, target)}")
    for d in (0.5, 1.5, 3.0):
        p = BesqParams(d, BesqMode.REFLECTING)
        one = besq_step_exact(p, np.full(100_000, 1.0), 1.0, rng)
        two = besq_step_exact(p, besq_step_exact(p, np.full(100_000, 1.0), 0.5, rng), 0.5, rng)
        ks = stats.ks_2samp(one, two)
        crit = 1.949 * math.sqrt(2.0 / 100_000)  # alpha = 0.001
        c.check(ks.statistic < crit, f"Chapman-Kolmogorov d={d}: KS {ks.statistic:.4f} < {crit:.4f}")
    for alpha, a in ((-0.5, 0.5), (-0.5, 0.3), (0.25, 0.6), (0.7, 0.2)):
        sp = SpeedSpec(alpha, a, 1.5)
        for lo, hi in ((0.1, 2.0), (-3.0, -0.2), (0.5, 0.7)):
            exact = speed_measure_interval(sp, lo, hi)
            num, _ = integrate.quad(lambda x: speed_density(sp, x), lo, hi, epsabs=0.0, epsrel=1e-13, limit=200)
            rel = abs(exact - num) / num
            c.check(rel < 1e-10, f"speed mass alpha={alpha} a={a} ({lo},{hi}): rel err {rel:.1e}")
        sc = ScaleSpec(alpha, a)
        x = np.linspace(-2, 2, 401)
        sv = scale_function(sc, x)
        c.check(bool(np.all(np.diff(sv) > 0)) and scale_function(sc, 0.0) == 0.0, f"scale increasing alpha={alpha}")
    x = rng.normal(size=1001)
    pooled = MCResult.from_samples(x)
    parts = [MCResult.from_samples(x[:100]), MCResult.from_samples(x[100:600]), MCResult.from_samples(x[600:])]
    left = parts[0].merge(parts[1]).merge(parts[2])
    right = parts[2].merge(parts[0].merge(parts[1]))
    for m in (left, right):
        c.check(m.n == pooled.n and math.isclose(m.mean, pooled.mean, rel_tol=1e-12, abs_tol=1e-15)
                and math.isclose(m.stderr, pooled.stderr, rel_tol=1e-12), "MCResult merge reproduces pooled sample")
    return c


CRITERIA: dict[str, Callable[[Settings], _Collector]] = {
    "1-boundary-classification": boundary_classification,
    "2-skewness": skewness,
    "3-besq0-absorption": besq0_absorption,
    "4-sticky-occupation": sticky_occupation,
    "5-averaging": averaging,
    "6-sign-rules": sign_rules,
    "7-entrance-regime": entrance_regime,
    "8-stochastic-completeness": stochastic_completeness,
    "9-theta-qv": theta_qv,
    "10-scheme-consistency": scheme_consistency,
    "11-oracle-layer": oracle_layer,
}
_EPS_DEPENDENT = ("2-skewness", "3-besq0-absorption", "4-sticky-occupation", "5-averaging", "6-sign-rules",
                  "7-entrance-regime", "8-stochastic-completeness", "9-theta-qv")


def run_criterion(key: str, settings: Settings | None = None) -> CriterionResult:
    settings = settings or Settings()
    t0 = time.perf_counter()
    col = CRITERIA[key](settings)
    failed = [n for n in col.notes if n.startswith("FAIL")]
    detail = failed[0][5:] if failed else f"{len(col.notes)} checks"
    return CriterionResult(key, col.ok, detail, time.perf_counter() - t0, col.notes)


def run_all(settings: Settings | None = None, keys=None, report: Callable[[CriterionResult], None] | None = None):
    results = []
    for key in keys or CRITERIA:
        res = run_criterion(key, settings)
        if report:
            report(res)
        results.append(res)
    return results
