"""Squared Bessel processes of real dimension and the one-dimensional diffusion data.

Conventions: a BESQ process of dimension ``d`` solves ``dz = 2 sqrt(z) dW + d dt``;
its square root ``|x|`` is the radial part of Brownian motion on M_alpha with
``d = 1 - alpha``. Scale functions and speed measures follow the convention in
which the generator is ``(1/2) d/dm d/ds`` and the speed density is ``2 / s'``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .exceptions import DomainError, SingularPointError, UnsupportedError


class BesqMode(str, enum.Enum):
    REFLECTING = "reflecting"
    ABSORBING = "absorbing"


@dataclass(frozen=True)
class BesqParams:
    dim: float
    mode: BesqMode = BesqMode.REFLECTING

    def __post_init__(self):
        object.__setattr__(self, "mode", BesqMode(self.mode))
        d = float(self.dim)
        object.__setattr__(self, "dim", d)
        if not math.isfinite(d):
            raise DomainError("BESQ dimension must be finite")
        # for d >= 2 the origin is never reached and the reflecting kernel is the only one
        if self.mode is BesqMode.REFLECTING and not d > 0.0:
            raise DomainError(f"reflecting BESQ needs d > 0, got {d}")
        if self.mode is BesqMode.ABSORBING and d > 2.0:
            raise DomainError(f"absorbing BESQ needs d <= 2, got {d}")


def bridge_hit_prob(z0, z1, dt, dim):
    """Probability that a BESQ(dim) bridge from ``z0`` to ``z1`` over ``dt`` touches 0.

    For ``0 < dim < 2`` and ``nu = 1 - dim/2`` this is ``1 - I_nu(u) / I_{-nu}(u)`` with
    ``u = sqrt(z0 z1) / dt``, evaluated as
    ``(2/pi) sin(nu pi) K_nu(u) / I_{-nu}(u)`` to avoid cancellation.
    Zero for ``dim >= 2``.
    """
    if dim >= 2.0:
        return np.zeros(np.broadcast(z0, z1).shape)[()]
    if dim <= 0.0:
        raise UnsupportedError("bridge test is only defined for 0 < d < 2")
    nu = 1.0 - 0.5 * dim
    u = np.sqrt(np.asarray(z0, dtype=float) * np.asarray(z1, dtype=float)) / dt
    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        p = (2.0 / math.pi) * math.sin(nu * math.pi) * special.kve(nu, u) / special.ive(-nu, u) * np.exp(-2.0 * u)
    p = np.where(u == 0.0, 1.0, p)
    p = np.where(u > 350.0, 0.0, p)
    return np.clip(p, 0.0, 1.0)[()]


def besq_step_exact(params: BesqParams, z, dt: float, rng: np.random.Generator):
    """Draw ``z'`` from the BESQ transition kernel over time ``dt``.

    Poisson-Gamma mixture: ``N ~ Poisson(z / (2 dt))`` and
    ``z' = dt * Gamma(d/2 + N, scale=2)`` (``z' = 0`` when ``d = 0`` and ``N = 0``).
    For ``0 < d < 2`` this is the instantaneously reflecting kernel; in
    ``ABSORBING`` mode a bridge test sends paths that touched 0 to 0.
    Vectorised over ``z``.
    """
    d = params.dim
    if d < 0.0:
        raise UnsupportedError("no exact BESQ sampler for d < 0; the diffusion module steps these paths")
    if not dt > 0.0:
        raise DomainError(f"dt must be positive, got {dt}")
    z = np.asarray(z, dtype=float)
    if np.any(z < 0.0):
        raise DomainError("BESQ state must be nonnegative")
    n = rng.poisson(z / (2.0 * dt))
    shape = 0.5 * d + n
    # numpy's gamma returns exactly 0 for shape 0, which is the atom for d = 0
    out = np.asarray(dt * rng.gamma(shape, 2.0))
    if params.mode is BesqMode.ABSORBING and 0.0 < d < 2.0:
        hit = rng.random(out.shape) < bridge_hit_prob(z, out, dt, d)
        out = np.where(hit | (z == 0.0), 0.0, out)
    return out[()]


def zero_hitting_time(z, dim: float, rng: np.random.Generator):
    """First hitting time of 0 for BESQ(dim < 2) from ``z``: ``z / (2 G)``, ``G ~ Gamma(1 - dim/2)``."""
    if dim >= 2.0:
        raise DomainError("0 is not reached for d >= 2")
    z = np.asarray(z, dtype=float)
    g = rng.gamma(1.0 - 0.5 * dim, 1.0, size=z.shape)
    with np.errstate(divide="ignore"):
        out = z / (2.0 * g)
    return out[()]


def zero_hitting_cdf(z, t, dim: float):
    """``P(T_0 <= t)`` for BESQ(dim < 2) started at ``z``: the regularised upper gamma ``Q(1 - dim/2, z / 2t)``."""
    if dim >= 2.0:
        return np.zeros(np.broadcast(z, t).shape)[()]
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise DomainError("t must be positive")
    return special.gammaincc(1.0 - 0.5 * dim, np.asarray(z, dtype=float) / (2.0 * t))[()]


def besq0_absorption_prob(z: float, t: float) -> float:
    """Probability that BESQ(0) started at ``z`` has been absorbed at 0 by time ``t``: ``exp(-z / 2t)``."""
    if not t > 0.0:
        raise DomainError(f"t must be positive, got {t}")
    if z < 0.0:
        raise DomainError("z must be nonnegative")
    return math.exp(-z / (2.0 * t))


@dataclass(frozen=True)
class ScaleSpec:
    alpha: float
    a: float = 0.5

    def __post_init__(self):
        if not -1.0 < self.alpha < 1.0:
            raise DomainError(f"scale function needs -1 < alpha < 1, got {self.alpha}")
        if not 0.0 <= self.a <= 1.0:
            raise DomainError(f"skewness must lie in [0, 1], got {self.a}")


@dataclass(frozen=True)
class SpeedSpec:
    alpha: float
    a: float = 0.5
    gamma: float = 0.0

    def __post_init__(self):
        if not -1.0 < self.alpha < 1.0:
            raise DomainError(f"speed measure needs -1 < alpha < 1, got {self.alpha}")
        if not 0.0 < self.a < 1.0:
            raise DomainError(f"speed density needs 0 < a < 1, got {self.a}")
        if not 0.0 <= self.gamma <= math.inf:
            raise DomainError(f"stickiness must lie in [0, inf], got {self.gamma}")


def scale_function(spec: ScaleSpec, x):
    """Normalised scale ``s(x) = -a (-x)^(1+alpha)`` for ``x < 0``, ``(1-a) x^(1+alpha)`` for ``x >= 0``."""
    x = np.asarray(x, dtype=float)
    p = 1.0 + spec.alpha
    s = np.where(x < 0.0, -spec.a * np.abs(x) ** p, (1.0 - spec.a) * np.abs(x) ** p)
    return s[()]


def speed_density(spec: SpeedSpec, x):
    """Lebesgue density of the speed measure away from 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x == 0.0):
        raise SingularPointError("the speed measure has an atom at 0; use speed_atom")
    al, a = spec.alpha, spec.a
    side = np.where(x < 0.0, a, 1.0 - a)
    return (2.0 / (side * (1.0 + al) * np.abs(x) ** al))[()]


def speed_atom(spec: SpeedSpec) -> float:
    return spec.gamma


def _half_line_mass(spec: SpeedSpec, c, side_weight):
    # mass of (0, c] under 2 x^(-alpha) / (w (1+alpha)) dx
    al = spec.alpha
    return 2.0 * np.asarray(c, dtype=float) ** (1.0 - al) / (side_weight * (1.0 + al) * (1.0 - al))


def speed_measure_interval(spec: SpeedSpec, lo: float, hi: float) -> float:
    """Speed measure of the open interval ``(lo, hi)``, atom included when ``lo < 0 < hi``."""
    if not lo < hi:
        raise DomainError(f"need lo < hi, got ({lo}, {hi})")
    a = spec.a

    def cumulative(x):
        # signed mass of (0, x]; negative for x < 0
        if x >= 0.0:
            return float(_half_line_mass(spec, x, 1.0 - a))
        return -float(_half_line_mass(spec, -x, a))

    mass = cumulative(hi) - cumulative(lo)
    if lo < 0.0 < hi:
        mass += spec.gamma
    return mass


def hitting_prob(spec: ScaleSpec, x: float, lo: float, hi: float) -> float:
    """Probability of reaching ``hi`` before ``lo`` from ``x``: ``(s(x) - s(lo)) / (s(hi) - s(lo))``."""
    if not lo < hi:
        raise DomainError(f"degenerate interval ({lo}, {hi})")
    if not lo <= x <= hi:
        raise DomainError(f"start {x} outside [{lo}, {hi}]")
    s_lo, s_x, s_hi = (float(scale_function(spec, v)) for v in (lo, x, hi))
    if s_hi == s_lo:
        raise DomainError("scale function is flat on the interval (a is 0 or 1)")
    return (s_x - s_lo) / (s_hi - s_lo)


def green_at_zero(spec: ScaleSpec, epsilon: float) -> float:
    """Green function ``G(0, 0)`` of the diffusion killed on leaving ``(-eps, eps)``.

    Equals ``-s(-eps) s(eps) / (s(eps) - s(-eps)) = a (1-a) eps^(1+alpha)``; the
    expected time spent at 0 before leaving the interval is ``gamma`` times this.
    """
    if not epsilon > 0.0:
        raise DomainError("epsilon must be positive")
    return spec.a * (1.0 - spec.a) * epsilon ** (1.0 + spec.alpha)


def expected_exit_time(spec: SpeedSpec, x: float, lo: float, hi: float) -> float:
    """``E_x[time to leave (lo, hi)]`` via the Green function against the speed measure.

    Integrates numerically on each side of 0; the atom contributes
    ``gamma * G(x, 0)`` when ``lo < 0 < hi``.
    """
    from scipy import integrate

    scale = ScaleSpec(spec.alpha, spec.a)
    s = lambda v: float(scale_function(scale, v))  # noqa: E731
    s_lo, s_hi = s(lo), s(hi)
    s_x = s(x)
    width = s_hi - s_lo

    def green(xi):
        sx, sxi = s_x, s(xi)
        return (min(sx, sxi) - s_lo) * (s_hi - max(sx, sxi)) / width

    total = 0.0
    pieces = [(lo, hi)]
    if lo < 0.0 < hi:
        pieces = [(lo, 0.0), (0.0, hi)]
        total += spec.gamma * green(0.0)
    for a_, b_ in pieces:
        pts = [x] if a_ < x < b_ else None
        val, _ = integrate.quad(lambda v: green(v) * float(speed_density(spec, v)), a_, b_,
                                points=pts, limit=200, epsabs=0.0, epsrel=1e-11)
        total += val
    return total
