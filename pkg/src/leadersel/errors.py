"""Exception hierarchy shared by every module."""


class LeaderSelError(Exception):
    """Base class for all library errors."""


class DimensionError(LeaderSelError, ValueError):
    pass


class ConfigurationError(LeaderSelError, ValueError):
    pass


class NumericalError(LeaderSelError, ArithmeticError):
    pass


class SingularityError(NumericalError):
    pass


class SpectralClashError(NumericalError):
    pass


class ScalingError(NumericalError):
    pass


class CapabilityError(LeaderSelError):
    """Requested computation exceeds a size guard."""


class SynthesisError(LeaderSelError):
    """No stabilizing gain exists for the requested leader set."""


class DegenerateInstanceError(LeaderSelError):
    """Selection is vacuous: every shifted open-loop mode is already Hurwitz."""


class GenerationError(LeaderSelError):
    pass


class DomainError(LeaderSelError, ValueError):
    pass


class ConstructionError(LeaderSelError):
    """A Lyapunov matrix family left the open box ``0 < P < I``."""
