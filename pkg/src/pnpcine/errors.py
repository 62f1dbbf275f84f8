"""Exception taxonomy shared across the toolkit.

Each class maps to a distinct CLI exit code (see cli.EXIT_CODES), so keep
the hierarchy flat and stable.
"""


class PnpCineError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(PnpCineError, ValueError):
    """Shapes or grid sizes are inconsistent or degenerate."""


class ParameterError(PnpCineError, ValueError):
    """A scalar parameter is outside its admissible range."""


class InfeasibleMaskError(ParameterError):
    """Sampling budget cannot accommodate the requested calibration lines."""


class EmptyMaskError(PnpCineError, ValueError):
    """A sampling mask keeps no entries."""


class UndefinedSnrError(PnpCineError, ValueError):
    """SNR is undefined (zero reference signal)."""


class UndefinedMetricError(PnpCineError, ValueError):
    """A metric is undefined for the given inputs (zero reference)."""


class FormatError(PnpCineError, ValueError):
    """A binary container is malformed, truncated, or has a bad magic/version."""


class CertificationError(PnpCineError, ValueError):
    """A declared spectral norm is violated by the stored kernel."""


class DivergenceError(PnpCineError, ArithmeticError):
    """An iterative solve produced non-finite values."""


class DenoiserError(PnpCineError, ValueError):
    """A denoiser could not be resolved or was fed an incompatible input."""
