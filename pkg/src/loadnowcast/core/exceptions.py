"""Generic but not necessarily abstract exception types for the project."""
from loadnowcast.core.consts import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL


class LoadNowcastException(Exception):
    """
    Load nowcasting miscellaneous exception. Used to distinguish all
    exceptions raised and handled in this code base from those raised in
    external code.

    While all exceptions are derived from this type, a generic
    `LoadNowcastException` should only be raised when a forseeable exception
    occurs, and both of the below are true of the exception:
    - Generally doesn't occur commonly enough to be its own subtype.
    - Should be displayed, not handled
        (i.e. human-readable message payload only).
    """

    exit_code: int = EXIT_DATA


class DataException(LoadNowcastException):
    """
    Input data is malformed, incomplete or inconsistent.
    Parse, gap, duplicate, alignment and range problems derive from this.
    """

    exit_code = EXIT_DATA


class NumericalException(LoadNowcastException):
    """
    A numerical procedure could not produce a valid result
    (singular design, non-convergence, non-factorizable covariance, ...).
    """

    exit_code = EXIT_NUMERICAL


class ConfigException(LoadNowcastException):
    """An invalid configuration, model specification or missing file."""

    exit_code = EXIT_CONFIG


class UnreachableCode(LoadNowcastException):
    """
    A fatal exception to satisfy the type checker, and for annotating program
    logic. Like AssertionError, but derives from LoadNowcastException.

    Used to assert code paths that should be logically impossible,
    or signal invalid function arguments passed to a private function.
    Should never be excepted for any reason, even in testing!
    """
