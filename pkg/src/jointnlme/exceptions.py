"""Exception types used across the package."""


class JointNlmeError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameterError(JointNlmeError, ValueError):
    """A parameter value violates its mathematical domain (e.g. rho >= 1)."""


class NumericError(JointNlmeError, RuntimeError):
    """A numerical operation failed (singular covariance, failed factorization,
    non-positive-definite curvature).  Carries the offending individual id
    when the failure is individual-specific."""

    def __init__(self, message, individual_id=None):
        if individual_id is not None:
            message = f"{message} (individual {individual_id!r})"
        super().__init__(message)
        self.individual_id = individual_id


class DataError(JointNlmeError, ValueError):
    """Input data violates a contract (orphan ids, duplicate times,
    non-numeric cells, outcomes outside the family's support)."""


class ConfigError(JointNlmeError, ValueError):
    """A configuration file or FitConfig invariant is violated."""
