"""Behaviour rules at the singular set, one class per kind of extension."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .exceptions import ConfigurationError
from .geometry import TWO_PI, AlphaGeometry, BoundaryClass, Topology, wrap_angle
from .measures import AngularMeasure, Uniform, measure_from_dict


@dataclass(frozen=True)
class Absorbed:
    """The singular set is a trap."""


@dataclass(frozen=True)
class Cone:
    """Extension through the cone point for ``-1 < alpha < 0``.

    ``gamma`` is the speed-measure atom at 0 (stickiness), ``a`` the probability
    that an excursion is positive, ``mu_plus``/``mu_minus`` the entrance-angle laws.
    """

    gamma: float = 0.0
    a: float = 0.5
    mu_plus: AngularMeasure = field(default_factory=Uniform)
    mu_minus: AngularMeasure = field(default_factory=Uniform)

    def __post_init__(self):
        if not (0.0 <= self.gamma <= math.inf):
            raise ConfigurationError(f"gamma must lie in [0, inf], got {self.gamma}", "extension.gamma")
        if not 0.0 <= self.a <= 1.0:
            raise ConfigurationError(f"a must lie in [0, 1], got {self.a}", "extension.a")


@dataclass(frozen=True)
class EntranceOnly:
    """Entrance law from the singular point when ``alpha <= -1``; the process never returns."""

    a: float = 0.5
    mu_plus: AngularMeasure = field(default_factory=Uniform)
    mu_minus: AngularMeasure = field(default_factory=Uniform)

    def __post_init__(self):
        if not 0.0 <= self.a <= 1.0:
            raise ConfigurationError(f"a must lie in [0, 1], got {self.a}", "extension.a")


@dataclass(frozen=True)
class CylinderSymmetric:
    """Normal reflection of ``|x|`` with fair-coin excursion signs (the bridging extension)."""


@dataclass(frozen=True)
class CylinderNeumann:
    """Normal reflection back into the side the path came from; no crossing."""


@dataclass(frozen=True)
class CylinderNonLocal:
    """Excursions starting at an angle in ``arcs`` go to ``x > 0``, all others to ``x < 0``.

    ``arcs`` is a tuple of open arcs ``(start, end)`` traversed counter-clockwise.
    """

    arcs: tuple[tuple[float, float], ...] = ((0.0, math.pi),)

    def __post_init__(self):
        arcs = tuple((wrap_angle(float(lo)), wrap_angle(float(hi))) for lo, hi in self.arcs)
        if not arcs:
            raise ConfigurationError("need at least one arc", "extension.arcs")
        if any(lo == hi for lo, hi in arcs):
            raise ConfigurationError("arcs must have distinct endpoints", "extension.arcs")
        object.__setattr__(self, "arcs", arcs)
        if self.covered_length() >= TWO_PI - 1e-12:
            raise ConfigurationError("the complement of A must have non-empty interior", "extension.arcs")

    def covered_length(self) -> float:
        # measure of the union, computed on a split of wrapping arcs
        pieces = []
        for lo, hi in self.arcs:
            if lo < hi:
                pieces.append((lo, hi))
            else:
                pieces += [(lo, TWO_PI), (0.0, hi)]
        pieces.sort()
        total, cur_lo, cur_hi = 0.0, None, None
        for lo, hi in pieces:
            if cur_hi is None or lo > cur_hi:
                if cur_hi is not None:
                    total += cur_hi - cur_lo
                cur_lo, cur_hi = lo, hi
            else:
                cur_hi = max(cur_hi, hi)
        return total + (cur_hi - cur_lo)

    def contains(self, theta) -> np.ndarray:
        theta = np.asarray(wrap_angle(theta))
        inside = np.zeros(theta.shape, dtype=bool)
        for lo, hi in self.arcs:
            width = (hi - lo) % TWO_PI
            off = (theta - lo) % TWO_PI
            inside |= (off > 0.0) & (off < width)
        return inside[()]


ExtensionSpec = Union[Absorbed, Cone, EntranceOnly, CylinderSymmetric, CylinderNeumann, CylinderNonLocal]

CYLINDER_KINDS = (CylinderSymmetric, CylinderNeumann, CylinderNonLocal)


def canonical(spec: ExtensionSpec) -> ExtensionSpec:
    """Collapse degenerate parameter choices: ``gamma = inf`` is absorption."""
    if isinstance(spec, Cone) and math.isinf(spec.gamma):
        return Absorbed()
    return spec


def check_compatible(geom: AlphaGeometry, spec: ExtensionSpec) -> ExtensionSpec:
    """Return the canonical spec, or raise if it cannot live on ``geom``."""
    spec = canonical(spec)
    bc, top = geom.boundary_class, geom.topology
    if isinstance(spec, Absorbed):
        return spec
    if isinstance(spec, Cone):
        if not (bc is BoundaryClass.REGULAR and top is Topology.CONE):
            raise ConfigurationError(f"cone extension needs -1 < alpha < 0, got alpha={geom.alpha}", "extension.kind")
    elif isinstance(spec, EntranceOnly):
        if bc is not BoundaryClass.ENTRANCE:
            raise ConfigurationError(f"entrance-only extension needs alpha <= -1, got alpha={geom.alpha}", "extension.kind")
    elif isinstance(spec, CYLINDER_KINDS):
        if not (bc is BoundaryClass.REGULAR and top is Topology.CYLINDER):
            raise ConfigurationError(f"cylinder extensions need 0 <= alpha < 1, got alpha={geom.alpha}", "extension.kind")
    else:
        raise ConfigurationError(f"unknown extension {spec!r}", "extension.kind")
    return spec


_KIND_NAMES = {
    Absorbed: "absorbed",
    Cone: "cone",
    EntranceOnly: "entrance",
    CylinderSymmetric: "cylinder-symmetric",
    CylinderNeumann: "cylinder-neumann",
    CylinderNonLocal: "cylinder-nonlocal",
}


def kind_name(spec: ExtensionSpec) -> str:
    return _KIND_NAMES[type(spec)]


def spec_to_dict(spec: ExtensionSpec) -> dict:
    out: dict = {"kind": kind_name(spec)}
    if isinstance(spec, Cone):
        out["gamma"] = spec.gamma
    if isinstance(spec, (Cone, EntranceOnly)):
        out["a"] = spec.a
        out["mu_plus"] = spec.mu_plus.to_dict()
        out["mu_minus"] = spec.mu_minus.to_dict()
    if isinstance(spec, CylinderNonLocal):
        out["arcs"] = [list(arc) for arc in spec.arcs]
    return out


def spec_from_dict(d: dict) -> ExtensionSpec:
    kind = d.get("kind")
    if kind not in _KIND_NAMES.values():
        raise ConfigurationError(f"unknown kind {kind!r}; expected one of {sorted(_KIND_NAMES.values())}",
                                 "extension.kind")
    mus = {}
    if kind in ("cone", "entrance"):
        for name in ("mu_plus", "mu_minus"):
            mus[name] = measure_from_dict(d.get(name, {"kind": "uniform"}), f"extension.{name}")
    if kind == "absorbed":
        return Absorbed()
    if kind == "cone":
        gamma = d.get("gamma", 0.0)
        gamma = math.inf if gamma in ("inf", "infinity") else float(gamma)
        return Cone(gamma=gamma, a=float(d.get("a", 0.5)), **mus)
    if kind == "entrance":
        return EntranceOnly(a=float(d.get("a", 0.5)), **mus)
    if kind == "cylinder-symmetric":
        return CylinderSymmetric()
    if kind == "cylinder-neumann":
        return CylinderNeumann()
    arcs = d.get("arcs", [[0.0, math.pi]])
    try:
        return CylinderNonLocal(tuple((lo, hi) for lo, hi in arcs))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError("arcs must be a list of [start, end] pairs", "extension.arcs") from None
