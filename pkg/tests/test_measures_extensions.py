import math

import numpy as np
import pytest

from grushin.exceptions import ConfigurationError
from grushin.extensions import (Absorbed, Cone, CylinderNeumann, CylinderNonLocal, CylinderSymmetric, EntranceOnly,
                                canonical, check_compatible, kind_name, spec_from_dict, spec_to_dict)
from grushin.geometry import AlphaGeometry
from grushin.measures import Atom, AtomMixture, PiecewiseDensity, Uniform, measure_from_dict

TWO_PI = 2 * math.pi


@pytest.mark.parametrize("mu", [
    Uniform(), Atom(1.0), AtomMixture(((0.5, 0.25), (2.0, 0.75))),
    PiecewiseDensity((0.0, math.pi, TWO_PI), (0.75 / math.pi, 0.25 / math.pi)),
])
def test_measure_sampling_matches_moments(rng, mu):
    s = mu.sample(rng, 200_000)
    assert np.all((s >= 0) & (s < TWO_PI))
    for k in (1, 2):
        for kind, f in (("cos", np.cos), ("sin", np.sin)):
            vals = f(k * s)
            se = vals.std() / math.sqrt(s.size) + 1e-12
            assert abs(vals.mean() - mu.mean_of(k, kind)) < 4 * se + 1e-9


def test_measure_round_trip():
    for mu in (Uniform(), Atom(1.0), AtomMixture(((0.5, 0.25), (2.0, 0.75))),
               PiecewiseDensity((0.0, 1.0, TWO_PI), (0.2, (1 - 0.2) / (TWO_PI - 1)))):
        assert measure_from_dict(mu.to_dict()) == mu


@pytest.mark.parametrize("bad", [
    {"kind": "atoms", "atoms": [[0.0, 0.5], [1.0, 0.6]]},
    {"kind": "atoms", "atoms": [[0.0, -0.5], [1.0, 1.5]]},
    {"kind": "piecewise", "breakpoints": [0.0, 1.0], "values": [1.0]},
    {"kind": "piecewise", "breakpoints": [0.0, math.pi, TWO_PI], "values": [-0.1, 0.1 + 1 / math.pi]},
    {"kind": "atom"},
    {"kind": "gaussian"},
])
def test_measure_validation(bad):
    with pytest.raises(ConfigurationError):
        measure_from_dict(bad, "mu")


def test_compatibility_rules():
    assert isinstance(check_compatible(AlphaGeometry(-0.5), Cone(0.0, 0.3)), Cone)
    assert isinstance(check_compatible(AlphaGeometry(-0.5), Cone(math.inf, 0.3)), Absorbed)
    check_compatible(AlphaGeometry(-2.0), EntranceOnly())
    check_compatible(AlphaGeometry(0.5), CylinderSymmetric())
    check_compatible(AlphaGeometry(1.5), Absorbed())
    for alpha, spec in ((0.5, Cone()), (-2.0, Cone()), (-0.5, EntranceOnly()), (-0.5, CylinderNeumann()),
                        (1.0, CylinderSymmetric()), (-1.0, Cone())):
        with pytest.raises(ConfigurationError):
            check_compatible(AlphaGeometry(alpha), spec)


def test_parameter_ranges():
    with pytest.raises(ConfigurationError):
        Cone(gamma=-1.0)
    with pytest.raises(ConfigurationError):
        Cone(a=1.2)
    with pytest.raises(ConfigurationError):
        EntranceOnly(a=-0.1)
    assert canonical(Cone(math.inf)) == Absorbed()


def test_nonlocal_arcs():
    a = CylinderNonLocal(((0.0, math.pi),))
    assert a.covered_length() == pytest.approx(math.pi)
    assert a.contains(1.0) and not a.contains(4.0) and not a.contains(0.0)
    wrap = CylinderNonLocal(((5.0, 1.0),))
    assert wrap.contains(6.0) and wrap.contains(0.5) and not wrap.contains(3.0)
    with pytest.raises(ConfigurationError):
        CylinderNonLocal(((0.0, 4.0), (3.0, TWO_PI - 1e-15)))
    with pytest.raises(ConfigurationError):
        CylinderNonLocal(())


@pytest.mark.parametrize("spec", [
    Absorbed(), Cone(2.0, 0.3, Atom(1.0), Uniform()), EntranceOnly(0.6), CylinderSymmetric(), CylinderNeumann(),
    CylinderNonLocal(((0.5, 2.0), (3.0, 4.0))),
])
def test_spec_round_trip(spec):
    d = spec_to_dict(spec)
    assert d["kind"] == kind_name(spec)
    assert spec_from_dict(d) == spec


def test_spec_from_dict_errors():
    with pytest.raises(ConfigurationError, match="extension.kind"):
        spec_from_dict({"kind": "sticky"})
    with pytest.raises(ConfigurationError, match="extension.a"):
        spec_from_dict({"kind": "cone", "a": 2.0})
    assert spec_from_dict({"kind": "cone", "gamma": "inf"}) == Cone(math.inf)
