import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from grushin.bessel import besq0_absorption_prob, zero_hitting_cdf
from grushin.diffusion import SimConfig, simulate_batch
from grushin.estimators import (MCResult, absorption_cdf, append_record, averaging_pair_check,
                                estimate_absorption_cdf, estimate_hitting, estimate_occupation_fraction,
                                estimate_semigroup, estimate_theta_qv, excursion_sign_stats, nonlocal_rule_holds,
                                occupation_oracle, result_record, simulate_sticky_walk, sticky_walk_occupation)
from grushin.exceptions import ConfigurationError
from grushin.extensions import Absorbed, Cone, CylinderNeumann, CylinderNonLocal, CylinderSymmetric, EntranceOnly
from grushin.geometry import AlphaGeometry, IsometryElement, SurfacePoint, apply_isometry
from grushin.testfunctions import NEG, POS, constant, harmonic, indicator, pushforward

finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(st.lists(finite, min_size=2, max_size=40), st.lists(finite, min_size=2, max_size=40),
       st.lists(finite, min_size=2, max_size=40))
def test_merge_matches_pooled_sample(a, b, c):
    pooled = MCResult.from_samples(a + b + c)
    ra, rb, rc = (MCResult.from_samples(v) for v in (a, b, c))
    for m in (ra.merge(rb).merge(rc), ra.merge(rb.merge(rc)), rc.merge(ra).merge(rb)):
        assert m.n == pooled.n
        assert m.mean == pytest.approx(pooled.mean, abs=1e-9)
        assert m.stderr == pytest.approx(pooled.stderr, rel=1e-7, abs=1e-9)


def test_z_score_edges():
    r = MCResult(10, 1.0, 0.0)
    assert r.z_score(1.0) == 0.0 and r.z_score(0.0) == math.inf and r.z_score(2.0) == -math.inf
    assert MCResult(10, 1.0, 0.1).within(1.3) and not MCResult(10, 1.0, 0.1).within(1.5)
    with pytest.raises(ValueError):
        MCResult.from_samples([])


def test_hitting_matches_skewness():
    geom = AlphaGeometry(-0.5)
    r = estimate_hitting(geom, Cone(0.0, 0.7), 0.2, 5000, seed=1)
    assert r.within(0.7) and r.extra["unresolved"] == 0
    r = estimate_hitting(AlphaGeometry(0.5), CylinderSymmetric(), 0.3, 5000, seed=2)
    assert r.within(0.5)


def test_hitting_requires_regular_boundary():
    with pytest.raises(ConfigurationError, match="alpha"):
        estimate_hitting(AlphaGeometry(1.5), Absorbed(), 0.5, 10, seed=0)
    with pytest.raises(ConfigurationError, match="alpha"):
        estimate_hitting(AlphaGeometry(-2.0), EntranceOnly(), 0.5, 10, seed=0)


def test_occupation_oracle_against_grid_walk():
    for alpha, a, gamma in ((-0.5, 0.5, 1.0), (-0.3, 0.8, 0.4), (-0.8, 0.2, 3.0)):
        oracle = occupation_oracle(alpha, a, gamma, 1.0)
        assert sticky_walk_occupation(alpha, a, gamma, 1.0, n_cells=40) == pytest.approx(oracle, rel=1e-6)
    walk = simulate_sticky_walk(-0.5, 0.5, 1.0, 1.0, n_cells=20, n_jumps=2_000_000, seed=3)
    assert walk == pytest.approx(occupation_oracle(-0.5, 0.5, 1.0, 1.0), rel=0.03)
    assert occupation_oracle(-0.5, 0.5, math.inf, 1.0) == 1.0
    assert occupation_oracle(-0.5, 0.5, 0.0, 1.0) == 0.0


def test_occupation_estimator_behaviour():
    geom = AlphaGeometry(-0.5)
    cfg = SimConfig(epsilon_shell=0.02, dt_max=0.01, horizon=100.0, wall=1.0, track_theta=False)
    with pytest.raises(ConfigurationError, match="sim.wall"):
        estimate_occupation_fraction(geom, Cone(1.0), SimConfig(), 2, seed=0)
    assert estimate_occupation_fraction(geom, Cone(0.0), cfg, 2, seed=4).mean == 0.0
    base = estimate_occupation_fraction(geom, Cone(1.0), cfg, 2, seed=4)
    doubled = estimate_occupation_fraction(geom, Cone(1.0), cfg, 2, seed=4, hold_normalization=2.0)
    assert 0.0 < base.mean < doubled.mean < 1.0
    absorbed = estimate_occupation_fraction(geom, Absorbed(), cfg, 20, seed=4, start=(0.5, 0.0))
    assert absorbed.mean > 0.9


def test_semigroup_trivial_cases():
    geom = AlphaGeometry(0.3)
    r = estimate_semigroup(geom, CylinderSymmetric(), constant(1.0), (0.4, 1.0), 1.0, 500, seed=5)
    assert (r.mean, r.stderr) == (1.0, 0.0)
    r = estimate_semigroup(geom, CylinderNeumann(), indicator(NEG), (0.4, 1.0), 1.0, 500, seed=5)
    assert (r.mean, r.stderr) == (0.0, 0.0)
    with pytest.raises(ConfigurationError, match="experiment.t"):
        estimate_semigroup(geom, CylinderNeumann(), indicator(NEG), (0.4, 1.0), 0.0, 5, seed=5)


def test_rotation_coupling_is_exact():
    geom = AlphaGeometry(0.5)
    f = harmonic(POS, "cos", 1) + 0.5 * harmonic(NEG, "sin", 2) + indicator(POS)
    g = IsometryElement(False, 1.3)
    p = SurfacePoint(0.4, 0.2)
    lhs = estimate_semigroup(geom, CylinderSymmetric(), f, p, 0.5, 2000, seed=6)
    rhs = estimate_semigroup(geom, CylinderSymmetric(), pushforward(f, g), apply_isometry(g, p), 0.5, 2000, seed=6)
    assert lhs.mean == pytest.approx(rhs.mean, abs=1e-9)


def test_reflection_invariance_statistically():
    geom = AlphaGeometry(0.5)
    f = harmonic(POS, "cos", 1, coeffs=(1.0, -1.0), radius=1.0) + 0.3 * indicator(NEG)
    g = IsometryElement(True, 0.0)
    p = SurfacePoint(0.4, 0.2)
    lhs = estimate_semigroup(geom, CylinderSymmetric(), f, p, 0.5, 20_000, seed=7)
    rhs = estimate_semigroup(geom, CylinderSymmetric(), pushforward(f, g), apply_isometry(g, p), 0.5, 20_000, seed=8)
    z = (lhs.mean - rhs.mean) / math.hypot(lhs.stderr, rhs.stderr)
    assert abs(z) < 4


def test_averaging_pair_common_paths():
    geom = AlphaGeometry(-0.5)
    f = indicator(NEG)
    pc = averaging_pair_check(geom, Cone(), f, f, (0.3, 0.0), 0.2, 500, seed=9)
    assert pc.z_score == 0.0 and pc.f == pc.g
    g = indicator(NEG) + harmonic(NEG, "cos", 1)
    pc = averaging_pair_check(geom, Cone(), f, g, (0.3, 0.0), 0.2, 5000, seed=9)
    assert abs(pc.z_score) < 4
    with pytest.raises(ConfigurationError, match="experiment.g"):
        averaging_pair_check(geom, Cone(), f, harmonic(POS, "cos", 1), (0.3, 0.0), 0.2, 5, seed=9)
    with pytest.raises(ConfigurationError, match="experiment.start"):
        averaging_pair_check(geom, Cone(), f, g, (-0.3, 0.0), 0.2, 5, seed=9)


def test_sign_stats_from_batch_and_trajectories_agree():
    geom = AlphaGeometry(0.4)
    cfg = SimConfig(epsilon_shell=0.05, dt_max=0.05, horizon=3.0)
    b = simulate_batch(geom, CylinderNonLocal(), cfg, (0.0, 1.0), 40, seed=10, record=1)
    assert excursion_sign_stats(b) == excursion_sign_stats(b.trajectories)
    assert nonlocal_rule_holds(CylinderNonLocal(), b.trajectories)
    assert not nonlocal_rule_holds(CylinderNonLocal(((math.pi, 2 * math.pi),)), b.trajectories)


def test_theta_qv_flat_case_is_exit_time():
    r = estimate_theta_qv(AlphaGeometry(0.0), (0.5, 0.0), 300, seed=11)
    assert r.mean == pytest.approx(r.extra["mean_t0"], rel=1e-12)
    assert r.extra["unresolved"] == 0
    with pytest.raises(ConfigurationError, match="alpha"):
        estimate_theta_qv(AlphaGeometry(-2.0), (0.5, 0.0), 10, seed=0)
    with pytest.raises(ConfigurationError, match="experiment.start"):
        estimate_theta_qv(AlphaGeometry(0.5), (0.0, 0.0), 10, seed=0)


def test_absorption_cdf_regular_case():
    times = [0.25, 0.5, 1.0, 2.0]
    res = absorption_cdf(AlphaGeometry(0.5), 1.0, times, 20_000, seed=12)
    means = [r.mean for r in res]
    assert means == sorted(means)
    for t, r in zip(times, res):
        assert r.within(float(zero_hitting_cdf(1.0, t, 0.5)))


def test_absorption_cdf_besq0():
    times = [0.5, 1.0, 4.0]
    res = estimate_absorption_cdf(AlphaGeometry(1.0), 1.0, times, 20_000, seed=13)
    for t, r in zip(times, res):
        assert r.within(besq0_absorption_prob(1.0, t))
    with pytest.raises(ConfigurationError, match="alpha"):
        estimate_absorption_cdf(AlphaGeometry(0.5), 1.0, times, 10, seed=0)
    with pytest.raises(ConfigurationError, match="experiment.times"):
        absorption_cdf(AlphaGeometry(0.5), 1.0, [0.0], 10, seed=0)


def test_json_records(tmp_path):
    rec = result_record("hitting", {"alpha": -0.5, "y": np.float64(0.2)}, MCResult(10, 0.5, 0.1), 7, 1.5, 0.3)
    assert {"experiment", "params", "n", "mean", "stderr", "z_score", "runtime_s", "seed", "git_rev"} <= set(rec)
    path = tmp_path / "out.jsonl"
    append_record(path, rec)
    append_record(path, rec)
    lines = path.read_text().splitlines()
    assert len(lines) == 2 and json.loads(lines[0])["params"]["y"] == 0.2
