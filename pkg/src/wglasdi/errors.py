class WglasdiError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(WglasdiError, ValueError):
    pass


class DomainError(WglasdiError, ValueError):
    pass


class FormatError(WglasdiError, ValueError):
    pass


class NumericalError(WglasdiError, RuntimeError):
    """Numerical failure: non-convergence, blow-up, NaN."""


class SolverError(NumericalError):
    pass


class InstabilityError(NumericalError):
    pass


class TrainingError(NumericalError):
    pass
