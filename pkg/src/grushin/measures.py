"""Probability measures on the circle used as entrance-angle laws."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError
from .geometry import TWO_PI, wrap_angle

# Encoded form consumed by the path engine: (kind, positions, cumulative probabilities).
# kind 0: piecewise-uniform with breakpoints positions[0..m] and cdf at the right end of each piece;
# kind 1: atoms at positions with cumulative weights.
PIECEWISE, ATOMS = 0, 1


class AngularMeasure:
    """Base class; subclasses are small frozen dataclasses."""

    def encode(self) -> tuple[int, np.ndarray, np.ndarray]:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        kind, xs, cdf = self.encode()
        u = rng.random(size)
        idx = np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)
        if kind == ATOMS:
            return xs[idx][()]
        lo, hi = xs[idx], xs[idx + 1]
        return (lo + rng.random(np.shape(u)) * (hi - lo))[()]

    def mean_of(self, k: int, kind: str = "cos") -> float:
        """Integral of ``cos(k theta)`` or ``sin(k theta)`` against the measure."""
        enc, xs, cdf = self.encode()
        w = np.diff(np.concatenate([[0.0], cdf]))
        f = np.cos if kind == "cos" else np.sin
        if enc == ATOMS:
            return float(np.sum(w * f(k * xs)))
        if k == 0:
            return 1.0 if kind == "cos" else 0.0
        lo, hi = xs[:-1], xs[1:]
        # average of f(k theta) over each piece, weighted by the piece mass
        if kind == "cos":
            avg = (np.sin(k * hi) - np.sin(k * lo)) / (k * (hi - lo))
        else:
            avg = (np.cos(k * lo) - np.cos(k * hi)) / (k * (hi - lo))
        return float(np.sum(w * avg))

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Uniform(AngularMeasure):
    def encode(self):
        return PIECEWISE, np.array([0.0, TWO_PI]), np.array([1.0])

    def to_dict(self):
        return {"kind": "uniform"}


@dataclass(frozen=True)
class Atom(AngularMeasure):
    theta0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta0", wrap_angle(float(self.theta0)))

    def encode(self):
        return ATOMS, np.array([self.theta0]), np.array([1.0])

    def to_dict(self):
        return {"kind": "atom", "theta": self.theta0}


@dataclass(frozen=True)
class AtomMixture(AngularMeasure):
    atoms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        atoms = tuple((wrap_angle(float(t)), float(w)) for t, w in self.atoms)
        if not atoms:
            raise ConfigurationError("atom mixture needs at least one atom")
        if any(w < 0.0 or not math.isfinite(w) for _, w in atoms):
            raise ConfigurationError("atom weights must be nonnegative")
        if not math.isclose(sum(w for _, w in atoms), 1.0, rel_tol=0.0, abs_tol=1e-9):
            raise ConfigurationError("atom weights must sum to 1")
        object.__setattr__(self, "atoms", atoms)

    def encode(self):
        xs = np.array([t for t, _ in self.atoms])
        cdf = np.cumsum([w for _, w in self.atoms])
        cdf[-1] = 1.0
        return ATOMS, xs, cdf

    def to_dict(self):
        return {"kind": "atoms", "atoms": [list(p) for p in self.atoms]}


@dataclass(frozen=True)
class PiecewiseDensity(AngularMeasure):
    """Density (w.r.t. d theta) constant on ``[breakpoints[i], breakpoints[i+1])``.

    Breakpoints run from 0 to 2 pi; the density must integrate to 1.
    """

    breakpoints: tuple[float, ...] = (0.0, TWO_PI)
    values: tuple[float, ...] = (1.0 / TWO_PI,)

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        vals = tuple(float(v) for v in self.values)
        if len(bp) != len(vals) + 1 or len(vals) == 0:
            raise ConfigurationError("need one more breakpoint than density value")
        if not math.isclose(bp[0], 0.0, abs_tol=1e-12) or not math.isclose(bp[-1], TWO_PI, abs_tol=1e-9):
            raise ConfigurationError("breakpoints must start at 0 and end at 2 pi")
        if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            raise ConfigurationError("breakpoints must be strictly increasing")
        if any(v < 0.0 or not math.isfinite(v) for v in vals):
            raise ConfigurationError("density values must be nonnegative")
        mass = sum(v * (b2 - b1) for v, b1, b2 in zip(vals, bp, bp[1:]))
        if not math.isclose(mass, 1.0, rel_tol=0.0, abs_tol=1e-9):
            raise ConfigurationError(f"density integrates to {mass}, not 1")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    def encode(self):
        xs = np.array(self.breakpoints)
        cdf = np.cumsum(np.array(self.values) * np.diff(xs))
        cdf[-1] = 1.0
        return PIECEWISE, xs, cdf

    def to_dict(self):
        return {"kind": "piecewise", "breakpoints": list(self.breakpoints), "values": list(self.values)}


def measure_from_dict(d: dict, field: str = "measure") -> AngularMeasure:
    kind = d.get("kind", "uniform")
    try:
        if kind == "uniform":
            return Uniform()
        if kind == "atom":
            return Atom(d["theta"])
        if kind == "atoms":
            return AtomMixture(tuple((t, w) for t, w in d["atoms"]))
        if kind == "piecewise":
            return PiecewiseDensity(tuple(d["breakpoints"]), tuple(d["values"]))
    except KeyError as exc:
        raise ConfigurationError(f"missing key {exc.args[0]!r}", field) from None
    except ConfigurationError as exc:
        raise ConfigurationError(str(exc), field) from None
    raise ConfigurationError(f"unknown angular measure kind {kind!r}", field)
