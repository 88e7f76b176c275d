"""Brownian motion on the surfaces M_alpha and its extensions across the singular set."""
from .exceptions import (ConfigurationError, DomainError, GrushinError, SingularPointError,
                         UnsupportedError)
from .geometry import (AlphaGeometry, BoundaryClass, IsometryElement, SurfacePoint, Topology,
                       apply_isometry, classify_boundary, from_natural_scale, metric_coefficients,
                       to_natural_scale)

__version__ = "0.1.0"

__all__ = [
    "AlphaGeometry", "BoundaryClass", "ConfigurationError", "DomainError", "GrushinError", "IsometryElement",
    "SingularPointError", "SurfacePoint", "Topology", "UnsupportedError", "apply_isometry", "classify_boundary",
    "from_natural_scale", "metric_coefficients", "to_natural_scale",
]
