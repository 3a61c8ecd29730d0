"""Exception hierarchy.

Every error carries the process exit code the command line maps it to:
2 for configuration problems, 3 for violated physical invariants and
4 for numerical failures.
"""

from __future__ import annotations


class ShelvingError(Exception):
    exit_code = 1


class ConfigError(ShelvingError, ValueError):
    exit_code = 2


class ParameterError(ConfigError):
    """A SystemParams value lies outside the supported regime."""


class InvalidRegime(ParameterError):
    pass


class NonPositive(ParameterError):
    pass


class PerturbationViolation(ParameterError):
    pass


class PhotonDepleted(ParameterError):
    pass


class InvariantViolation(ShelvingError):
    exit_code = 3


class PhantomChosen(InvariantViolation):
    pass


class DepletedField(InvariantViolation):
    pass


class TimeBeforeCycleStart(InvariantViolation, ValueError):
    pass


class NumericalError(ShelvingError):
    exit_code = 4


class NegativeTime(NumericalError, ValueError):
    pass


class BadInterval(NumericalError, ValueError):
    pass


class QuadratureFailure(NumericalError):
    pass


class BudgetExceeded(NumericalError):
    pass
