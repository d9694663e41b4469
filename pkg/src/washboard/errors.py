"""Exception hierarchy shared across the package.

Every failure mode that callers are expected to handle programmatically gets
its own class.  ``WashboardError`` is the common base so that the CLI can map
"any numerical failure" to a single exit code.
"""


class WashboardError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(WashboardError):
    """A run configuration is inconsistent or incomplete."""


class RegimeError(WashboardError):
    """The tilt does not lie in the regime required by the requested analysis."""


class DegenerateError(WashboardError):
    """Critical-point structure of the potential is degenerate or ambiguous."""


class ScaleError(WashboardError):
    """A requested quantity underflows or overflows double precision."""


class QuadratureError(WashboardError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class WindowError(WashboardError):
    """Evaluation requested outside the constructed well window."""


class AlignmentError(WashboardError):
    """Grid cell edges do not line up with well boundaries."""


class SingularSystemError(WashboardError):
    """The implicit time-step system could not be solved."""


class UnsupportedError(WashboardError):
    """The requested operation is outside the supported problem class."""


class ZeroDensityError(WashboardError):
    """Density vanished where a pointwise value was required."""


class MethodError(WashboardError):
    """Unknown or inapplicable integration method."""


class GridMismatchError(WashboardError):
    """Two time series do not share a common time grid or index window."""


class ModeError(WashboardError):
    """Requested limit-dynamics mode conflicts with the potential."""


class SingularIntegralError(WashboardError):
    """An integrand is too close to singular for reliable quadrature."""


class StabilityError(WashboardError):
    """Time step violates the documented stability heuristic."""
