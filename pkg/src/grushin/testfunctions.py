"""A closed family of bounded observables on M_alpha.

Every function is a finite sum of terms ``w * 1{side} * P(|x|) * 1{|x| < R} * h(theta)``
with ``h`` one of ``1``, ``cos(k theta)``, ``sin(k theta)``. Sums, scalar
multiples and pushforwards by isometries stay in the family, which makes the
matching conditions between two observables decidable exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .exceptions import ConfigurationError
from .geometry import IsometryElement, Topology

POS, NEG, BOTH = 1, -1, 0
_HARMONICS = ("one", "cos", "sin")
_TOL = 1e-12


@dataclass(frozen=True)
class Term:
    """One product term.

    side : ``POS`` (x > 0), ``NEG`` (x < 0) or ``BOTH`` (all of M including Z)
    coeffs : polynomial in ``|x|``, lowest degree first
    radius : support ``|x| < radius``; must be finite for a non-constant polynomial
    harmonic, k : angular factor ``1``, ``cos(k theta)`` or ``sin(k theta)``
    """

    side: int = BOTH
    coeffs: tuple[float, ...] = (1.0,)
    radius: float = math.inf
    harmonic: str = "one"
    k: int = 0

    def __post_init__(self):
        if self.side not in (POS, NEG, BOTH):
            raise ConfigurationError(f"side must be 1, -1 or 0, got {self.side}", "f.side")
        if self.harmonic not in _HARMONICS:
            raise ConfigurationError(f"harmonic must be one of {_HARMONICS}", "f.harmonic")
        coeffs = tuple(float(c) for c in self.coeffs) or (0.0,)
        if not all(math.isfinite(c) for c in coeffs):
            raise ConfigurationError("coefficients must be finite", "f.coeffs")
        if not self.radius > 0.0:
            raise ConfigurationError("radius must be positive", "f.radius")
        if math.isinf(self.radius) and any(c != 0.0 for c in coeffs[1:]):
            raise ConfigurationError("a non-constant polynomial needs a finite radius to stay bounded", "f.radius")
        k = int(self.k)
        if k < 0:
            raise ConfigurationError("k must be non-negative", "f.k")
        # normalize the trivial harmonics
        harmonic = self.harmonic
        if harmonic == "cos" and k == 0:
            harmonic = "one"
        if harmonic == "sin" and k == 0:
            coeffs = (0.0,)
            harmonic = "one"
        if harmonic == "one":
            k = 0
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "harmonic", harmonic)
        object.__setattr__(self, "k", k)

    def scaled(self, c: float) -> "Term":
        return Term(self.side, tuple(c * v for v in self.coeffs), self.radius, self.harmonic, self.k)

    def _radial(self, r):
        return np.polynomial.polynomial.polyval(r, self.coeffs) * (r < self.radius)

    def _angular(self, theta):
        if self.harmonic == "cos":
            return np.cos(self.k * theta)
        if self.harmonic == "sin":
            return np.sin(self.k * theta)
        return np.ones_like(theta)


@dataclass(frozen=True)
class TestFunction:
    """Finite sum of :class:`Term` objects."""

    __test__ = False  # not a pytest class

    terms: tuple[Term, ...] = ()

    def __add__(self, other: "TestFunction") -> "TestFunction":
        return TestFunction(self.terms + other.terms)

    def __mul__(self, c: float) -> "TestFunction":
        return TestFunction(tuple(t.scaled(float(c)) for t in self.terms))

    __rmul__ = __mul__

    def __neg__(self) -> "TestFunction":
        return self * -1.0

    def __sub__(self, other: "TestFunction") -> "TestFunction":
        return self + (-other)

    def bound(self) -> float:
        """An upper bound for ``sup |f|``."""
        total = 0.0
        for t in self.terms:
            if math.isinf(t.radius):
                total += abs(t.coeffs[0])
            else:
                total += sum(abs(c) * t.radius ** i for i, c in enumerate(t.coeffs))
        return total

    def __call__(self, x, theta, topology: Topology = Topology.CYLINDER):
        """Evaluate on arrays; at a cone point the angular factor is replaced by its mean."""
        x = np.asarray(x, dtype=float)
        theta = np.asarray(theta, dtype=float)
        r = np.abs(x)
        at_z = x == 0.0
        out = np.zeros(np.broadcast(x, theta).shape)
        for t in self.terms:
            if t.side == POS:
                mask = x > 0.0
            elif t.side == NEG:
                mask = x < 0.0
            else:
                mask = np.ones_like(x, dtype=bool)
            ang = t._angular(theta)
            if topology is Topology.CONE:
                ang = np.where(at_z, 1.0 if t.harmonic == "one" else 0.0, ang)
            out = out + np.where(mask, t._radial(r) * ang, 0.0)
        return out[()] if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {"terms": [
            {"side": t.side, "coeffs": list(t.coeffs), "radius": "inf" if math.isinf(t.radius) else t.radius,
             "harmonic": t.harmonic, "k": t.k} for t in self.terms]}

    @classmethod
    def from_dict(cls, d: dict, field: str = "f") -> "TestFunction":
        try:
            terms = []
            for i, td in enumerate(d["terms"]):
                radius = td.get("radius", math.inf)
                radius = math.inf if radius in ("inf", "infinity") else float(radius)
                try:
                    terms.append(Term(int(td.get("side", BOTH)), tuple(td.get("coeffs", (1.0,))), radius,
                                      td.get("harmonic", "one"), int(td.get("k", 0))))
                except ConfigurationError as exc:
                    raise ConfigurationError(str(exc).split(": ", 1)[-1], f"{field}.terms[{i}]") from None
            return cls(tuple(terms))
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed test function ({exc})", field) from None


# ---------------------------------------------------------------------------
# constructors


def constant(c: float = 1.0) -> TestFunction:
    return TestFunction((Term(BOTH, (c,)),))


def indicator(side: int) -> TestFunction:
    """``1{x > 0}`` for ``side = 1``, ``1{x < 0}`` for ``side = -1``."""
    return TestFunction((Term(side, (1.0,)),))


def harmonic(side: int, kind: str, k: int, coeffs: Iterable[float] = (1.0,), radius: float = math.inf) -> TestFunction:
    """``1{side} * P(|x|) * cos(k theta)`` (or ``sin``)."""
    return TestFunction((Term(side, tuple(coeffs), radius, kind, k),))


def zero() -> TestFunction:
    return TestFunction(())


# ---------------------------------------------------------------------------
# exact comparisons


def _side_view(f: TestFunction, side: int) -> list[Term]:
    return [t for t in f.terms if t.side in (side, BOTH)]


def _vanishes(terms: list[Term], harmonics: set[tuple[str, int]] | None = None) -> bool:
    """True when the sum of ``terms`` is identically zero for |x| > 0 on one side."""
    by_h: dict[tuple[str, int], list[Term]] = {}
    for t in terms:
        key = (t.harmonic, t.k)
        if harmonics is None or key in harmonics:
            by_h.setdefault(key, []).append(t)
    for group in by_h.values():
        radii = sorted({t.radius for t in group})
        for rad in radii:
            # polynomial sum over the band just inside ``rad``
            active = [t for t in group if t.radius >= rad]
            deg = max(len(t.coeffs) for t in active)
            total = np.zeros(deg)
            for t in active:
                total[: len(t.coeffs)] += t.coeffs
            if np.any(np.abs(total) > _TOL):
                return False
    return True


def theta_average(f: TestFunction, side: int) -> TestFunction:
    """The angular mean of ``f`` restricted to one side, as a function of ``|x|``."""
    return TestFunction(tuple(Term(side, t.coeffs, t.radius) for t in _side_view(f, side) if t.harmonic == "one"))


def agree_on_side(f: TestFunction, g: TestFunction, side: int) -> bool:
    return _vanishes(_side_view(f - g, side))


def satisfies_averaging_match(f: TestFunction, g: TestFunction) -> bool:
    """``f = g`` on ``x > 0`` and the two have equal angular means on ``x < 0``."""
    return agree_on_side(f, g, POS) and _vanishes(_side_view(f - g, NEG), {("one", 0)})


# ---------------------------------------------------------------------------
# isometries


def pushforward(f: TestFunction, g: IsometryElement) -> TestFunction:
    """``f o g^{-1}``, so that ``pushforward(f, g)(g p) = f(p)``."""
    terms = []
    rho = g.rotate
    for t in f.terms:
        side = -t.side if g.reflect_x else t.side
        if t.harmonic == "one":
            terms.append(Term(side, t.coeffs, t.radius))
            continue
        c, s = math.cos(t.k * rho), math.sin(t.k * rho)
        if t.harmonic == "cos":
            # cos(k(theta - rho)) = c cos(k theta) + s sin(k theta)
            pairs = ((c, "cos"), (s, "sin"))
        else:
            # sin(k(theta - rho)) = c sin(k theta) - s cos(k theta)
            pairs = ((c, "sin"), (-s, "cos"))
        for w, h in pairs:
            if w != 0.0:
                terms.append(Term(side, tuple(w * v for v in t.coeffs), t.radius, h, t.k))
    return TestFunction(tuple(terms))
