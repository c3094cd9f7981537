"""
Validated daily series and the holiday calendar.

A `DailySeries` is the only thing the regression code accepts, so every
invariant the model relies on (no gaps, positive load, sane temperatures)
is checked once, here.
"""

import datetime as dt
import logging
import pprint
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Mapping, Union

import numpy as np
import numpy.typing as npt
import pandas as pd

from loadnowcast.core.consts import (
    HOLIDAY_CATEGORIES,
    HOLIDAY_MAJOR,
    HOLIDAY_MINOR,
    TEMP_BAND_F,
)
from loadnowcast.core.exceptions import DataException
from loadnowcast.libs import ValueRangeException, assert_values_in_range


logger = logging.getLogger(__name__)

CsvSource = Union[str, Path, IO[str], IO[bytes]]
DAILY_COLUMNS = ["date", "load_mwh", "temp_f"]


@dataclass(frozen=True)
class HourlyLoadRecord:
    """One hour of traded energy. `hour` is always 0-based internally."""

    date: dt.date
    hour: int
    quantity: float


def to_datetime64(dates: Iterable[dt.date]) -> npt.NDArray[np.datetime64]:
    """Converts dates to a `datetime64[D]` array."""
    return np.array([np.datetime64(d, "D") for d in dates], dtype="M8[D]")


@dataclass(frozen=True, eq=False)
class DailySeries:
    """
    Aligned daily observations of load (MWh/day) and temperature (°F).

    Construction validates that dates are strictly consecutive, that every
    load is strictly positive and that every temperature is finite and inside
    `TEMP_BAND_F`.
    """

    dates: npt.NDArray[np.datetime64]
    load: npt.NDArray[np.float64]
    temp: npt.NDArray[np.float64]

    def __post_init__(self) -> None:
        dates = np.asarray(self.dates, dtype="M8[D]")
        load = np.asarray(self.load, dtype=np.float64)
        temp = np.asarray(self.temp, dtype=np.float64)
        if not len(dates) == len(load) == len(temp):
            raise DataException(
                "DailySeries columns have different lengths: "
                + f"{len(dates)} dates, {len(load)} loads, {len(temp)} temps\n"
            )
        if len(dates) == 0:
            raise DataException("A DailySeries needs at least one day.\n")
        steps = np.diff(dates).astype(np.int64)
        if (steps != 1).any():
            i = int(np.argmax(steps != 1))
            raise DataException(
                "DailySeries dates must be strictly consecutive, got "
                + f"{dates[i]} followed by {dates[i + 1]}\n"
            )
        try:
            assert_values_in_range(load, 0.0, strict_low=True)
        except ValueRangeException as e:
            raise DataException(
                f"Load on {dates[e.i]} must be positive and finite, "
                + f"got {e.value!r}\n"
            ) from e
        try:
            assert_values_in_range(temp, *TEMP_BAND_F)
        except ValueRangeException as e:
            raise DataException(
                f"Temperature on {dates[e.i]} is outside the sanity band "
                + f"{TEMP_BAND_F} °F: {e.value!r}\n"
            ) from e
        for name, arr in (("dates", dates), ("load", load), ("temp", temp)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def first(self) -> dt.date:
        """First date of the series."""
        return self.dates[0].astype(dt.date)

    @property
    def last(self) -> dt.date:
        """Last date of the series."""
        return self.dates[-1].astype(dt.date)

    @property
    def years(self) -> npt.NDArray[np.int64]:
        """Calendar year of every row."""
        return self.dates.astype("M8[Y]").astype(np.int64) + 1970

    def to_frame(self) -> pd.DataFrame:
        """The canonical daily table."""
        return pd.DataFrame(
            {
                "date": np.datetime_as_string(self.dates, unit="D"),
                "load_mwh": self.load,
                "temp_f": self.temp,
            }
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DailySeries):
            return NotImplemented
        return (
            np.array_equal(self.dates, other.dates)
            and np.array_equal(self.load, other.load)
            and np.array_equal(self.temp, other.temp)
        )


def write_daily_csv(series: DailySeries, path: CsvSource) -> None:
    """Writes the canonical daily CSV `date,load_mwh,temp_f`."""
    series.to_frame().to_csv(path, index=False, lineterminator="\n")


def read_daily_csv(path: CsvSource) -> DailySeries:
    """
    Reads the canonical daily CSV back into a `DailySeries`.

    Floats are parsed with round-trip precision, so writing and re-reading a
    series reproduces it bit for bit.

    Raises
    ------
    DataException
        If the header is wrong or the rows violate `DailySeries` invariants.
    """
    try:
        frame = pd.read_csv(
            path, dtype={"date": str}, float_precision="round_trip"
        )
    except (
        OSError,
        UnicodeDecodeError,
        pd.errors.ParserError,
        pd.errors.EmptyDataError,
    ) as e:
        raise DataException(f"Could not read daily CSV {path}\n") from e
    if list(frame.columns) != DAILY_COLUMNS:
        raise DataException(
            f"Daily CSV header must be {','.join(DAILY_COLUMNS)}, "
            + f"got {','.join(map(str, frame.columns))}\n"
        )
    try:
        dates = pd.to_datetime(frame["date"], format="%Y-%m-%d")
    except ValueError as e:
        raise DataException(f"Bad date in daily CSV {path}\n") from e
    try:
        load = frame["load_mwh"].to_numpy(dtype=np.float64)
        temp = frame["temp_f"].to_numpy(dtype=np.float64)
    except (ValueError, TypeError) as e:
        raise DataException(f"Non-numeric value in daily CSV {path}\n") from e
    return DailySeries(dates.to_numpy(dtype="M8[D]"), load, temp)


@dataclass(frozen=True)
class HolidayCalendar:
    """
    Calendar date to holiday category (`major` or `minor`).

    `major` rows feed the first holiday dummy (official public holidays),
    `minor` rows the second (other observances).
    """

    entries: Mapping[dt.date, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        bad = {
            d: c
            for d, c in self.entries.items()
            if c not in HOLIDAY_CATEGORIES
        }
        if bad:
            raise DataException(
                f"Holiday categories must be one of {HOLIDAY_CATEGORIES}, "
                + f"got:\n{pprint.pformat(bad)}\n"
            )

    @classmethod
    def from_pairs(
        cls, pairs: Iterable[tuple[dt.date, str]]
    ) -> "HolidayCalendar":
        """
        Builds a calendar from `(date, category)` pairs.

        Raises
        ------
        DataException
            If a date appears twice.
        """
        entries: dict[dt.date, str] = {}
        for date, category in pairs:
            if date in entries:
                raise DataException(
                    f"Holiday date {date} appears more than once\n"
                )
            entries[date] = category
        return cls(entries)

    def within(self, first: dt.date, last: dt.date) -> "HolidayCalendar":
        """Drops entries outside `[first, last]`, warning about them."""
        outside = sorted(d for d in self.entries if not first <= d <= last)
        if outside:
            logger.warning(
                "Ignoring %d holiday entries outside %s..%s (first: %s)",
                len(outside),
                first,
                last,
                outside[0],
            )
        return HolidayCalendar(
            {d: c for d, c in self.entries.items() if first <= d <= last}
        )

    def mask(
        self, dates: npt.NDArray[np.datetime64], category: str
    ) -> npt.NDArray[np.float64]:
        """0/1 indicator of `category` for every date."""
        if category not in (HOLIDAY_MAJOR, HOLIDAY_MINOR):
            raise DataException(f"Unknown holiday category {category!r}\n")
        chosen = to_datetime64(
            d for d, c in self.entries.items() if c == category
        )
        return np.isin(dates, chosen).astype(np.float64)
