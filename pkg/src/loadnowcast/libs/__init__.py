"""Shared libraries for the project."""
from typing import Any, Collection, Optional

import numpy as np
import numpy.typing as npt

from loadnowcast.core.exceptions import ConfigException, DataException


class ValueRangeException(DataException):
    """
    An exception for `assert_values_in_range` which returns the index and
    offending value.

    Should be handled to convert the data to a nicer format, e.g. a date.
    """

    i: int
    value: float

    def __init__(self, i: int, value: float, *args: object) -> None:
        self.i = i
        self.value = value
        super().__init__(*args)


def assert_values_in_range(
    values: npt.ArrayLike,
    low: float = -np.inf,
    high: float = np.inf,
    *,
    strict_low: bool = False,
) -> None:
    """
    Checks that every value is finite and inside `[low, high]`
    (or `(low, high]` if `strict_low`).

    Parameters
    ----------
    values : array_like
        One dimensional values to check.

    low, high : float
        Inclusive bounds, infinite by default.

    strict_low : bool
        Whether `low` itself is excluded. Used for strictly positive loads.

    Raises
    ------
    ValueRangeException
        For the first offending value.
    """
    arr: npt.NDArray[np.float64] = np.asarray(values, dtype=np.float64)
    ok = np.isfinite(arr) & (arr <= high)
    ok &= arr > low if strict_low else arr >= low
    if not ok.all():
        i = int(np.argmin(ok))
        raise ValueRangeException(
            i,
            float(arr[i]),
            f"Value {arr[i]!r} at index {i} is outside "
            + f"{'(' if strict_low else '['}{low}, {high}]\n",
        )


def assert_keys_are_subset(
    json_name: str, test_keys: Any, allowed_keys: Collection[str]
):
    """
    A DRY-compliant way of asserting the keys of a json object should be
    from a specific set.

    Parameters
    ----------
    json_name : str
        The name of the json object to help specify the error context.

    test_keys : Iterable[str]
        A json object (iterator should yield keys)

    allowed_keys : Collection[str]
        The allowed set of keys.

    Raises
    ------
    ConfigException
    """
    i_bad_name: Optional[tuple[int, str]] = next(
        (
            (i, name)
            for i, name in enumerate(test_keys)
            if name not in allowed_keys
        ),
        None,
    )
    if i_bad_name is not None:
        i, bad_name = i_bad_name
        raise ConfigException(
            f'During the parsing of "{json_name}", '
            + f"got unexpected key in (index {i}): {bad_name}\n"
        )
