import math

import numpy as np
import pytest
from scipy import special, stats

from grushin import _engine as eng
from grushin.diffusion import (ABSORB, HOLD_NORMALIZATION, SimConfig, boundary_dispatch, cylinder_boundary_rule,
                               default_threads, hold_mean, path_rng, read_trajectory_csv, run_excursion,
                               simulate_batch, simulate_path, step_interior)
from grushin.exceptions import ConfigurationError, DomainError, SingularPointError
from grushin.extensions import (Absorbed, Cone, CylinderNeumann, CylinderNonLocal, CylinderSymmetric, EntranceOnly)
from grushin.geometry import AlphaGeometry, SurfacePoint
from grushin.measures import Atom, Uniform


def test_sim_config_validation():
    with pytest.raises(ConfigurationError, match="sim.dt_max"):
        SimConfig(dt_max=0.0)
    with pytest.raises(ConfigurationError, match="sim.wall"):
        SimConfig(epsilon_shell=0.1, wall=0.05)
    with pytest.raises(ConfigurationError, match="sim.record_stride"):
        SimConfig(record_stride=0)
    r = SimConfig(dt_max=0.02, step_scale=0.1).refined()
    assert (r.dt_max, r.step_scale) == (0.01, 0.05)


def test_step_interior_flat_cylinder():
    geom = AlphaGeometry(0.0)
    rng = path_rng(1)
    out = np.array([step_interior(geom, (1.0, 0.0), 0.01, rng)[:2] for _ in range(100_000)])
    assert stats.kstest(out[:, 0] - 1.0, stats.norm(0, 0.1).cdf).pvalue > 1e-3
    assert stats.kstest(out[:, 1], stats.norm(0, 0.1).cdf).pvalue > 1e-3


def test_step_interior_besq_mean():
    geom = AlphaGeometry(-0.5)
    rng = path_rng(2)
    x2 = np.array([step_interior(geom, (1.0, 0.0), 0.01, rng).x ** 2 for _ in range(200_000)])
    se = x2.std() / math.sqrt(x2.size)
    assert abs(x2.mean() - 1.015) < 4 * se


def test_step_interior_hits_with_exact_probability():
    # for d = 0.5 the probability of reaching 0 within dt is Q(0.75, z / 2 dt)
    geom = AlphaGeometry(0.5)
    rng = path_rng(3)
    res = [step_interior(geom, (0.3, 0.0), 0.05, rng) for _ in range(50_000)]
    hits = np.array([r.hit for r in res], dtype=float)
    p = special.gammaincc(0.75, 0.09 / 0.1)
    assert abs(hits.mean() - p) < 4 * math.sqrt(p * (1 - p) / hits.size)
    assert all(r.x == 0.0 and r.elapsed <= 0.05 for r in res if r.hit)
    assert all(r.x > 0.0 and r.elapsed == 0.05 for r in res if not r.hit)


def test_step_interior_errors():
    with pytest.raises(SingularPointError):
        step_interior(AlphaGeometry(0.0), (0.0, 1.0), 0.1, path_rng(0))
    with pytest.raises(DomainError):
        step_interior(AlphaGeometry(0.0), (1.0, 1.0), -0.1, path_rng(0))
    with pytest.raises(DomainError):
        step_interior(AlphaGeometry(1.5), (1.0, 1.0), 0.1, path_rng(0))


def test_boundary_dispatch_rules():
    rng = path_rng(4)
    spec = Cone(0.0, 0.7, Uniform(), Atom(2.0))
    draws = [boundary_dispatch(spec, rng, alpha=-0.5, epsilon_shell=0.01) for _ in range(100_000)]
    signs = np.array([d.sign for d in draws])
    p = (signs > 0).mean()
    assert abs(p - 0.7) < 4 * math.sqrt(0.21 / signs.size)
    assert all(d.hold_duration == 0.0 for d in draws)
    assert all(d.entrance_theta == 2.0 for d in draws if d.sign < 0)
    assert boundary_dispatch(Absorbed(), rng, alpha=-0.5, epsilon_shell=0.01) == ABSORB
    assert boundary_dispatch(Cone(math.inf), rng, alpha=-0.5, epsilon_shell=0.01) == ABSORB
    with pytest.raises(ConfigurationError):
        boundary_dispatch(CylinderSymmetric(), rng, alpha=0.5, epsilon_shell=0.01)


def test_sticky_hold_mean():
    rng = path_rng(5)
    spec = Cone(2.0, 0.3)
    holds = np.array([boundary_dispatch(spec, rng, alpha=-0.5, epsilon_shell=0.04).hold_duration
                      for _ in range(50_000)])
    target = HOLD_NORMALIZATION * 2.0 * 0.3 * 0.7 * 0.04 ** 0.5
    assert hold_mean(AlphaGeometry(-0.5), spec, 0.04) == pytest.approx(target)
    assert abs(holds.mean() - target) < 4 * holds.std() / math.sqrt(holds.size)


def test_cylinder_rules():
    rng = path_rng(6)
    assert all(cylinder_boundary_rule(CylinderNeumann(), th, s, rng) == s for th in (0.1, 4.0) for s in (1, -1))
    nl = CylinderNonLocal(((0.0, math.pi),))
    assert cylinder_boundary_rule(nl, 1.0, -1, rng) == 1
    assert cylinder_boundary_rule(nl, 4.0, 1, rng) == -1
    signs = np.array([cylinder_boundary_rule(CylinderSymmetric(), 0.0, 1, rng) for _ in range(100_000)])
    assert abs((signs > 0).mean() - 0.5) < 4 * 0.5 / math.sqrt(signs.size)
    with pytest.raises(ConfigurationError):
        cylinder_boundary_rule(Cone(), 0.0, 1, rng)


def test_run_excursion_cone():
    geom = AlphaGeometry(-0.5)
    cfg = SimConfig(epsilon_shell=0.05, dt_max=0.01, horizon=1e6, wall=1.0)
    durations = []
    for i in range(200):
        sign = 1 if i % 2 else -1
        tr = run_excursion(geom, Cone(), sign, 1.0, cfg, path_rng(7, i))
        assert tr.events[-1].kind == "HITZ"
        assert np.all(np.sign(tr.x[:-1]) == sign) and tr.x[-1] == 0.0
        assert tr.x[0] == pytest.approx(sign * 0.05) and tr.theta[0] == pytest.approx(1.0)
        durations.append(tr.t[-1])
    durations = np.array(durations)
    assert np.all(np.isfinite(durations)) and durations.mean() < 10.0


def test_run_excursion_entrance_never_returns():
    geom = AlphaGeometry(-2.0)
    cfg = SimConfig(epsilon_shell=0.01, dt_max=1.0, horizon=100.0, track_theta=False)
    for i in range(100):
        tr = run_excursion(geom, EntranceOnly(), 1, 0.0, cfg, path_rng(8, i))
        assert not any(e.kind == "HITZ" for e in tr.events)
        assert tr.t[-1] == pytest.approx(100.0) and tr.x.min() > 0


def _check_trajectory(tr):
    assert np.all(np.diff(tr.t) > 0)
    absorbed = [e.t for e in tr.events if e.kind == "ABSORB"]
    if absorbed:
        assert np.all(tr.x[tr.t > absorbed[0]] == 0.0)
    last_hit = 0.0 if tr.x[0] == 0.0 else -1.0
    for e in tr.events:
        if e.kind == "HITZ":
            last_hit = e.t
        if e.kind == "EXSTART":
            assert e.t == 0.0 or last_hit >= 0.0
            assert e.t >= last_hit


@pytest.mark.parametrize("alpha, spec", [
    (-0.5, Cone(1.0, 0.4)), (-0.5, Cone(0.0, 0.5)), (0.5, CylinderSymmetric()), (0.3, CylinderNeumann()),
    (0.2, CylinderNonLocal()), (-2.0, EntranceOnly()), (1.0, Absorbed()), (1.5, Absorbed()), (-0.5, Absorbed()),
])
def test_simulate_path_invariants_and_determinism(alpha, spec, tmp_path):
    geom = AlphaGeometry(alpha)
    cfg = SimConfig(epsilon_shell=0.02, dt_max=0.01, horizon=3.0)
    start = SurfacePoint(0.0, 0.0) if alpha > -1 else SurfacePoint(0.0)
    for st in (start, (0.3, 1.0)):
        tr = simulate_path(geom, spec, cfg, st, seed=42)
        _check_trajectory(tr)
        again = simulate_path(geom, spec, cfg, st, seed=42)
        assert np.array_equal(tr.t, again.t) and np.array_equal(tr.x, again.x) and tr.events == again.events
    tr.to_csv(tmp_path / "p.csv")
    back = read_trajectory_csv(tmp_path / "p.csv")
    assert np.array_equal(back.t, tr.t) and np.array_equal(back.x, tr.x) and np.array_equal(back.theta, tr.theta)
    assert [(e.t, e.kind, e.sign) for e in back.events] == [(e.t, e.kind, e.sign if e.kind == "EXSTART" else 0)
                                                           for e in tr.events]


def test_csv_format(tmp_path):
    geom = AlphaGeometry(0.5)
    tr = simulate_path(geom, CylinderSymmetric(), SimConfig(epsilon_shell=0.05, horizon=2.0), (0.0, 1.0), seed=3)
    tr.to_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "t,x,theta,event"
    labels = {ln.split(",")[3].split(":")[0] for ln in lines[1:]}
    assert labels <= {"", "HITZ", "EXSTART", "ABSORB", "WALL"}
    ex = [ln for ln in lines if ",EXSTART:" in ln][0]
    sign, theta = ex.split(",")[3].split(":")[1:]
    assert sign in ("+1", "-1") and float(theta) == float(ex.split(",")[2])


def test_cone_start_on_z_and_angles():
    geom = AlphaGeometry(-0.5)
    spec = Cone(0.0, 1.0, Atom(1.25), Uniform())
    tr = simulate_path(geom, spec, SimConfig(epsilon_shell=0.01, horizon=1.0), (0.0, 3.0), seed=1)
    first = tr.events[0]
    assert first.kind == "EXSTART" and first.t == 0.0 and first.sign == 1 and first.theta == 1.25
    assert all(e.sign == 1 for e in tr.excursion_starts())


def test_absorbed_exit_regime_law():
    # alpha = 1.5 (d = -0.5): P(T0 <= t) from x = 1 is Q(1.25, 1 / 2t)
    geom = AlphaGeometry(1.5)
    cfg = SimConfig(epsilon_shell=0.02, dt_max=0.01, horizon=2.0, track_theta=False)
    b = simulate_batch(geom, Absorbed(), cfg, (1.0, 0.0), 4000, seed=9)
    t0 = b.stat(eng.S_T_ABSORB)
    prev = 0.0
    for t in (0.25, 0.5, 1.0, 2.0):
        p_emp = (t0 <= t).mean()
        p = special.gammaincc(1.25, 1 / (2 * t))
        assert abs(p_emp - p) < 4 * math.sqrt(p * (1 - p) / t0.size) + 0.01
        assert p_emp >= prev
        prev = p_emp


def test_entrance_paths_leave_and_stay_away():
    cfg = SimConfig(epsilon_shell=0.01, dt_max=0.5, horizon=50.0, track_theta=False)
    b = simulate_batch(AlphaGeometry(-2.0), EntranceOnly(0.3), cfg, (0.0, 0.0), 500, seed=10)
    assert b.stat(eng.S_N_RETURNS).sum() == 0
    assert b.stat(eng.S_MIN_R_AFTER_START).min() > 0


def test_cylinder_symmetric_both_signs_on_long_paths():
    cfg = SimConfig(epsilon_shell=0.05, dt_max=0.05, horizon=20.0, track_theta=False)
    b = simulate_batch(AlphaGeometry(0.5), CylinderSymmetric(), cfg, (0.5, 0.0), 50, seed=11)
    busy = b.stat(eng.S_N_POS) + b.stat(eng.S_N_NEG) >= 20
    assert busy.sum() >= 40
    assert np.all(b.stat(eng.S_N_POS)[busy] > 0) and np.all(b.stat(eng.S_N_NEG)[busy] > 0)


def test_neumann_never_crosses():
    cfg = SimConfig(epsilon_shell=0.05, dt_max=0.05, horizon=10.0, track_theta=False)
    b = simulate_batch(AlphaGeometry(0.3), CylinderNeumann(), cfg, (-0.5, 0.0), 200, seed=12,
                       obs_times=np.linspace(0.5, 10, 20))
    assert b.stat(eng.S_N_SIGN_CHANGES).sum() == 0 and b.stat(eng.S_N_POS).sum() == 0
    assert np.all(b.obs_x <= 0.0)


def test_occupation_zero_without_stickiness():
    cfg = SimConfig(epsilon_shell=0.01, dt_max=0.01, horizon=50.0, wall=1.0)
    b = simulate_batch(AlphaGeometry(-0.5), Cone(0.0, 0.5), cfg, (0.0, 0.0), 20, seed=13)
    assert np.all(b.stat(eng.S_TIME_AT_Z) == 0.0)
    b = simulate_batch(AlphaGeometry(-0.5), Cone(1.0, 0.5), cfg, (0.0, 0.0), 20, seed=13)
    assert np.all(b.stat(eng.S_TIME_AT_Z) > 0.0)


def test_wall_keeps_paths_inside():
    cfg = SimConfig(epsilon_shell=0.01, dt_max=0.01, horizon=20.0, wall=1.0)
    b = simulate_batch(AlphaGeometry(0.0), CylinderSymmetric(), cfg, (0.5, 0.0), 50, seed=14,
                       obs_times=np.linspace(1, 20, 40))
    assert np.all(np.abs(b.obs_x) <= 1.0) and np.all(b.stat(eng.S_MAX_R) <= 1.0)


def test_observations_and_thread_invariance():
    geom = AlphaGeometry(-0.5)
    cfg = SimConfig(epsilon_shell=0.01, dt_max=0.01, horizon=1.0)
    kw = dict(obs_times=[0.25, 1.0], record=1)
    a = simulate_batch(geom, Cone(0.5, 0.4), cfg, (0.5, 0.0), 1200, seed=15, threads=1, **kw)
    b = simulate_batch(geom, Cone(0.5, 0.4), cfg, (0.5, 0.0), 1200, seed=15, threads=3, **kw)
    assert np.array_equal(a.stats, b.stats) and np.array_equal(a.obs_x, b.obs_x)
    assert np.array_equal(a.obs_theta, b.obs_theta)
    assert [tr.events for tr in a.trajectories] == [tr.events for tr in b.trajectories]
    # path i of a batch is the single path with index i (observation times split steps, so omit them)
    plain = simulate_batch(geom, Cone(0.5, 0.4), cfg, (0.5, 0.0), 10, seed=15)
    single = simulate_path(geom, Cone(0.5, 0.4), cfg, (0.5, 0.0), seed=15, path_index=7)
    assert np.array_equal(single.stats, plain.stats[7])
    assert np.all((a.obs_theta >= 0) & (a.obs_theta < 2 * math.pi))


def test_incompatible_spec_rejected():
    with pytest.raises(ConfigurationError):
        simulate_path(AlphaGeometry(0.5), Cone(), SimConfig(), (0.5, 0.0), seed=0)


def test_stochastic_completeness_small():
    for alpha, spec in ((-2.0, EntranceOnly()), (-0.5, Cone()), (0.0, CylinderSymmetric()),
                        (0.5, CylinderSymmetric()), (1.5, Absorbed())):
        cfg = SimConfig(epsilon_shell=0.1, dt_max=0.1, horizon=10.0, track_theta=False)
        b = simulate_batch(AlphaGeometry(alpha), spec, cfg, (0.5, 0.0), 2000, seed=16)
        assert b.stat(eng.S_NONFINITE).sum() == 0
        assert np.all(np.isfinite(b.stat(eng.S_X_END))) and np.all(b.stat(eng.S_T_END) >= 10.0)


def test_default_threads_env(monkeypatch):
    monkeypatch.setenv("GRUSHIN_THREADS", "3")
    assert default_threads() == 3
    monkeypatch.setenv("GRUSHIN_THREADS", "x")
    with pytest.raises(ConfigurationError):
        default_threads()


def test_streams_are_distinct():
    a = path_rng(1, 0).random(4)
    assert not np.array_equal(a, path_rng(1, 1).random(4))
    assert not np.array_equal(a, path_rng(2, 0).random(4))
    assert np.array_equal(a, path_rng(1, 0).random(4))
