"""Common items for the test suite."""
import datetime as dt
import os
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import pandas as pd
import pytest

from loadnowcast.core.exceptions import LoadNowcastException
from loadnowcast.libs.libload.series import DailySeries

tests_path = Path(os.path.dirname(os.path.abspath(__file__)))
data_path = tests_path.joinpath("data")
hourly_load_path = data_path.joinpath("hourly_load_small.csv")
temperature_c_path = data_path.joinpath("temperature_small_c.csv")
holidays_path = data_path.joinpath("holidays_small.csv")
plain_text_path = data_path.joinpath("plain_text.txt")


def make_series(
    start: str = "2019-01-01",
    days: int = 14,
    load: Optional[Any] = None,
    temp: Optional[Any] = None,
) -> DailySeries:
    """A small consecutive series with simple default values."""
    dates = np.arange(
        np.datetime64(start, "D"), np.datetime64(start, "D") + days
    )
    load = np.linspace(1000.0, 1100.0, days) if load is None else load
    temp = np.linspace(40.0, 80.0, days) if temp is None else temp
    return DailySeries(
        dates, np.asarray(load, dtype=float), np.asarray(temp, dtype=float)
    )


def write_bundle(
    directory: Path,
    series: DailySeries,
    drop_hours: Sequence[tuple[dt.date, int]] = (),
) -> dict[str, Path]:
    """
    Writes `series` as raw inputs: an hourly load CSV (1-24 convention,
    24 equal hours per day) and a Fahrenheit temperature CSV.

    `drop_hours` lists `(date, hour)` rows to omit; dropping two hours of
    one day makes it incomplete.
    """
    directory.mkdir(parents=True, exist_ok=True)
    dates = [d.astype(dt.date) for d in series.dates]
    rows = [
        (d.isoformat(), h, load / 24.0)
        for d, load in zip(dates, series.load)
        for h in range(1, 25)
        if (d, h) not in drop_hours
    ]
    load_path = directory / "load.csv"
    pd.DataFrame(rows, columns=["date", "hour", "quantity_mwh"]).to_csv(
        load_path, index=False, lineterminator="\n", float_format="%.17g"
    )
    temp_path = directory / "temperature.csv"
    pd.DataFrame(
        {"date": [d.isoformat() for d in dates], "temp": series.temp}
    ).to_csv(temp_path, index=False, lineterminator="\n", float_format="%.17g")
    return {"load": load_path, "temperature": temp_path}


def assert_fails(f: Any, errors: list[type]):
    """
    A DRY-compliant abstraction for asserting that
    a function raises the provided chain of exception types.

    Does not catch non-LoadNowcastException types.

    Parameters
    ----------
    f : Callable[[], None]
        A callable taking no arguments (most commonly a `functools.partial`).
        Expected to raise `LoadNowcastException` at the top.

    errors : list[type]
        A list of exception types, where the first exception types to be raised
        are the last exception types in the list.

    Raises
    ------
    AssertionErrors

    Note
    ----
    Ignores exception class hierarchy; `DataException` does not match a
        raised `GapException`.
    """
    try:
        f()
        assert False, f"Call to {f} did not raise any of the expected errors!"
    except LoadNowcastException as e:
        for n, exception_type in enumerate(errors):
            assert (
                type(e) is exception_type  # noqa: E501, pylint: disable=unidiomatic-typecheck,line-too-long
            ), (
                f"Expected error type {exception_type.__name__} at index {n}, "
                + f"got {type(e).__name__} instead."
            )
            assert e is not None, f"Expected error at index {n}, got None"
            e = e.__cause__  # type: ignore
        assert e is None, (
            "Expected no more errors at end of cause chain, "
            + f"got {type(e).__name__}"
        )


def test_assert_fails():
    """Tests `assert_fails`, above. Run with `> pytest tests/__init__.py`."""

    def f():
        try:
            raise KeyError("x")
        except KeyError as e:
            raise LoadNowcastException from e

    assert_fails(f, [LoadNowcastException, KeyError])

    # Cause chain not fully unwrapped.
    with pytest.raises(AssertionError):
        assert_fails(f, [LoadNowcastException])

    # Wrong type at the top.
    with pytest.raises(AssertionError):
        assert_fails(f, [KeyError, LoadNowcastException])

    def g():
        raise ValueError()

    # Native errors at the top are not handled.
    with pytest.raises(ValueError):
        assert_fails(g, [ValueError])

    # Fails if nothing is raised.
    with pytest.raises(AssertionError):
        assert_fails(lambda: None, [LoadNowcastException])
