class GibbsError(Exception):
    """Base class for every failure raised by the engine."""

    exit_code = 3


class ConfigError(GibbsError):
    """Job configuration could not be read or validated."""

    exit_code = 2


class AlphabetError(GibbsError, ValueError):
    """Symbol outside the alphabet or mismatched alphabet sizes."""


class DepthError(GibbsError, ValueError):
    """Depth request incompatible with the object (e.g. refining downwards)."""


class DepthCapError(GibbsError):
    """Operation would exceed the configured depth cap or cell budget."""


class ConvergenceError(GibbsError):
    """Iterative method did not converge, or an oracle disagreed with a formula."""


class NotNormalizedError(GibbsError):
    """A normalized potential was required."""


class BaseMismatchError(GibbsError):
    """Tangent vectors live at different base potentials."""


class MeanError(GibbsError, ValueError):
    """Input was required to have zero mean."""


class UnsupportedError(GibbsError):
    """Requested variant has no closed form or needs a binary alphabet."""


class DomainError(GibbsError, ValueError):
    """Point outside the open (r, s) square."""


class ChartError(GibbsError):
    """Coordinates outside the chart or chart metric degenerate."""


class StepSizeError(GibbsError):
    """Step refinement reached the minimum step without meeting tolerance."""


class MeasureError(GibbsError, ValueError):
    """Weights are negative or do not sum to one."""
