"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: ConfigError -> 2, NumericalError and
subclasses -> 3, DivergenceError -> 4.
"""


class ResmoothError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(ResmoothError):
    """Invalid configuration value; message names the offending field."""


class NumericalError(ResmoothError):
    """A numerical procedure failed to meet its accuracy contract."""


class EvaluationError(NumericalError):
    """Frequency response requested at a pole on the imaginary axis."""


class UnsupportedDelayError(ResmoothError):
    """State-space machinery asked to realize a pure delay directly."""


class UnsupportedRegimeError(ResmoothError):
    """Operation outside the regime its formula is valid in."""


class NotAPsdError(NumericalError):
    """Spectral factorization input is negative somewhere on the real axis."""


class RiccatiError(NumericalError):
    """No stabilizing Riccati solution, or residual above the gate."""


class ModelError(NumericalError):
    """Model fails a structural requirement (stabilizability, detectability)."""


class QuadratureError(NumericalError):
    """Adaptive quadrature did not converge.

    Carries the best available value in ``partial``.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class DegenerateBandError(NumericalError):
    """Signal and noise spectra both vanish on some frequency band."""


class DivergenceError(ResmoothError):
    """Closed-loop simulation state grew without bound.

    Carries the sample index and the seed of the failing run.
    """

    def __init__(self, message, time_index=None, seed=None):
        super().__init__(message)
        self.time_index = time_index
        self.seed = seed
