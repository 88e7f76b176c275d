"""The surfaces M_alpha: coordinates, isometries and boundary type of the singular set.

The Riemannian part is ``(R \\ {0}) x T`` with metric ``dx^2 + |x|^(-2 alpha) dtheta^2``.
For ``alpha < 0`` the singular set ``{x = 0}`` collapses to a point (cone), for
``alpha >= 0`` it is a circle (cylinder).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, SingularPointError

TWO_PI = 2.0 * math.pi


class BoundaryClass(str, enum.Enum):
    ENTRANCE = "entrance"
    REGULAR = "regular"
    EXIT = "exit"


class Topology(str, enum.Enum):
    CONE = "cone"
    CYLINDER = "cylinder"


def wrap_angle(theta):
    """Reduce an angle (or array of angles) to ``[0, 2 pi)``."""
    out = np.mod(theta, TWO_PI)
    # np.mod can return exactly 2 pi for tiny negative inputs
    out = np.where(out >= TWO_PI, 0.0, out)
    if np.ndim(out) == 0:
        return float(out)
    return out


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not math.isfinite(alpha):
        raise DomainError(f"alpha must be finite, got {alpha!r}")
    return alpha


def classify_boundary(alpha: float) -> BoundaryClass:
    """Feller type of the singular set for the radial (Bessel) part.

    Entrance for ``alpha <= -1``, regular for ``-1 < alpha < 1`` and exit for
    ``alpha >= 1``.
    """
    alpha = _check_alpha(alpha)
    if alpha <= -1.0:
        return BoundaryClass.ENTRANCE
    if alpha < 1.0:
        return BoundaryClass.REGULAR
    return BoundaryClass.EXIT


def topology_of(alpha: float) -> Topology:
    return Topology.CONE if _check_alpha(alpha) < 0.0 else Topology.CYLINDER


@dataclass(frozen=True)
class AlphaGeometry:
    """The parameter alpha together with everything derived from it."""

    alpha: float
    bessel_dim: float = field(init=False)
    topology: Topology = field(init=False)
    boundary_class: BoundaryClass = field(init=False)

    def __post_init__(self):
        alpha = _check_alpha(self.alpha)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "bessel_dim", 1.0 - alpha)
        object.__setattr__(self, "topology", topology_of(alpha))
        object.__setattr__(self, "boundary_class", classify_boundary(alpha))

    def point(self, x: float, theta: float = 0.0) -> "SurfacePoint":
        return SurfacePoint(x, theta, self.topology)

    def summary(self) -> str:
        return f"{self.boundary_class.value}, d={self.bessel_dim:g}, {self.topology.value}"


@dataclass(frozen=True)
class SurfacePoint:
    """A point ``(x, theta)`` of M_alpha.

    In the cone topology every representative with ``x == 0`` is the same
    point; it is stored canonically as ``(0, 0)`` so that equality and hashing
    respect the quotient.
    """

    x: float
    theta: float = 0.0
    topology: Topology = Topology.CYLINDER

    def __post_init__(self):
        x = float(self.x)
        if not math.isfinite(x) or not math.isfinite(float(self.theta)):
            raise DomainError("surface point coordinates must be finite")
        theta = wrap_angle(float(self.theta))
        if x == 0.0:
            x = 0.0  # drop the sign of -0.0
            if self.topology == Topology.CONE:
                theta = 0.0
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "topology", Topology(self.topology))

    @property
    def on_singular_set(self) -> bool:
        return self.x == 0.0


@dataclass(frozen=True)
class IsometryElement:
    """An element of Z/2 x SO(2): optional reflection ``x -> -x`` then rotation of theta."""

    reflect_x: bool = False
    rotate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "reflect_x", bool(self.reflect_x))
        object.__setattr__(self, "rotate", wrap_angle(float(self.rotate)))

    def compose(self, other: "IsometryElement") -> "IsometryElement":
        """``self`` after ``other``. Reflection and rotation commute, so the group is abelian."""
        return IsometryElement(self.reflect_x != other.reflect_x, self.rotate + other.rotate)

    __matmul__ = compose

    def inverse(self) -> "IsometryElement":
        return IsometryElement(self.reflect_x, -self.rotate)


IDENTITY = IsometryElement()


def apply_isometry(g: IsometryElement, p: SurfacePoint) -> SurfacePoint:
    x = -p.x if g.reflect_x else p.x
    return SurfacePoint(x, p.theta + g.rotate, p.topology)


def metric_coefficients(alpha: float, x: float) -> tuple[float, float]:
    """Diagonal metric entries ``(g_xx, g_thetatheta) = (1, |x|^(-2 alpha))``."""
    alpha = _check_alpha(alpha)
    x = float(x)
    if x == 0.0:
        raise SingularPointError("the metric is singular at x = 0")
    return 1.0, abs(x) ** (-2.0 * alpha)


def _check_natural_scale_alpha(alpha: float) -> float:
    alpha = _check_alpha(alpha)
    if alpha <= -1.0:
        raise DomainError(f"natural scale coordinate needs alpha > -1, got {alpha}")
    return alpha


def to_natural_scale(alpha: float, x):
    """``y = sgn(x) |x|^(alpha+1) / (alpha+1)``; works elementwise on arrays."""
    alpha = _check_natural_scale_alpha(alpha)
    p = alpha + 1.0
    x = np.asarray(x, dtype=float)
    y = np.sign(x) * np.abs(x) ** p / p
    return float(y) if y.ndim == 0 else y


def from_natural_scale(alpha: float, y):
    """Inverse of :func:`to_natural_scale`."""
    alpha = _check_natural_scale_alpha(alpha)
    p = alpha + 1.0
    y = np.asarray(y, dtype=float)
    x = np.sign(y) * (p * np.abs(y)) ** (1.0 / p)
    return float(x) if x.ndim == 0 else x


def curve_length(alpha: float, x, theta) -> float:
    """Riemannian length of a polygonal curve sampled at points ``(x_i, theta_i)``.

    Uses the midpoint value of the metric on each segment; the curve must stay
    away from ``x = 0`` and theta is taken unwrapped.
    """
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(x == 0.0) or np.any(np.sign(x[1:]) != np.sign(x[:-1])):
        raise SingularPointError("curve touches the singular set")
    xm = 0.5 * (x[1:] + x[:-1])
    g_tt = np.abs(xm) ** (-2.0 * _check_alpha(alpha))
    return float(np.sum(np.sqrt(np.diff(x) ** 2 + g_tt * np.diff(theta) ** 2)))
