"""Exception hierarchy for circreg."""


class CircRegError(Exception):
    """Base class for all package errors."""


class InvalidInputError(CircRegError, ValueError):
    """Malformed, non-finite or inconsistent input."""


class InvalidBandwidthError(InvalidInputError):
    """Bandwidth matrix is not symmetric positive definite."""


class DomainError(InvalidInputError):
    """Argument outside the domain of a model formula."""


class SingularPointError(CircRegError):
    """Asymptotic formula evaluated where f(x) = 0 or l(x) = 0."""


class IndefiniteCurvatureError(CircRegError):
    """Bias matrix is indefinite, so the closed-form local bandwidth does not apply."""


class NoValidBandwidthError(CircRegError):
    """Every candidate bandwidth was fully penalized during cross-validation."""


class ProbeInvalidError(CircRegError):
    """A convergence-rate probe produced a degenerate (zero) error curve."""


class StudyFailedError(CircRegError):
    """Every replicate of a Monte-Carlo study failed."""


class SchemaError(InvalidInputError):
    """A required column is missing from a dataset file."""


class ParseError(InvalidInputError):
    """A dataset cell could not be parsed."""


class InsufficientDataError(InvalidInputError):
    """Too few observations for the requested operation."""
