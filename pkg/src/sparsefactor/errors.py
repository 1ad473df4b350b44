"""Exception hierarchy shared by the library and the CLI."""


class SparseFactorError(Exception):
    """Base class for all errors raised by sparsefactor."""


class InvalidDataError(SparseFactorError, ValueError):
    """Input data contain non-finite values or violate a structural requirement."""


class InsufficientDataError(InvalidDataError):
    """Too few observations to form a covariance matrix."""


class ParameterError(SparseFactorError, ValueError):
    """A tuning parameter is outside its admissible range."""


class NumericalError(SparseFactorError, ArithmeticError):
    """A numerical routine failed (factorization, non-finite intermediate)."""


class SingularModelError(NumericalError):
    """The implied covariance is numerically singular."""


class CalibrationError(NumericalError):
    """The penalty reparameterization could not bracket a root."""


class AscentViolationError(NumericalError):
    """The EM objective decreased beyond round-off; indicates a bug."""
