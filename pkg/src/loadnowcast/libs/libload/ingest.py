"""
Parsers for the raw input files and their assembly into a `DailySeries`.

Hourly market quantities are summed into daily load, the two station
temperature series are averaged, and both are aligned over the sample span
under the configured missing-data policy.
"""

import datetime as dt
import logging
import math
import pprint
from collections import defaultdict
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from loadnowcast.core.consts import (
    FILL_POLICIES,
    HOLIDAY_CATEGORIES,
    HOUR_CONVENTIONS,
    REFERENCE_N,
    REFERENCE_SPAN,
    TEMP_UNITS,
    VALID_DAY_HOURS,
)
from loadnowcast.core.exceptions import ConfigException, DataException
from loadnowcast.libs.libload.series import (
    CsvSource,
    DailySeries,
    HolidayCalendar,
    HourlyLoadRecord,
    to_datetime64,
)


logger = logging.getLogger(__name__)

DatedValues = Sequence[tuple[dt.date, float]]

# Longest run of consecutive missing temperatures the interpolation bridges.
MAX_INTERPOLATED_GAP = 2


class ParseException(DataException):
    """A malformed CSV row. `line` is the 1-based line in the file."""

    line: int

    def __init__(self, line: int, *args: object) -> None:
        self.line = line
        super().__init__(*args)


class DuplicateKeyException(DataException):
    """The same key (a date, or a `(date, hour)` pair) was seen twice."""

    key: object

    def __init__(self, key: object, *args: object) -> None:
        self.key = key
        super().__init__(*args)


class IncompleteDayException(DataException):
    """A date whose hour count is not one of `VALID_DAY_HOURS`."""

    date: dt.date
    hours: int

    def __init__(self, date: dt.date, hours: int) -> None:
        self.date = date
        self.hours = hours
        super().__init__(
            f"Incomplete day {date}: {hours} hours present, expected one of "
            + f"{VALID_DAY_HOURS}\n"
        )


class GapException(DataException):
    """Dates of the span missing from an input after the fill policy."""

    missing: list[dt.date]

    def __init__(self, source: str, missing: list[dt.date]) -> None:
        self.missing = missing
        super().__init__(
            f"{len(missing)} dates missing from {source}:\n"
            + f"{pprint.pformat([d.isoformat() for d in missing[:20]])}"
            + (" ..." if len(missing) > 20 else "")
            + "\n"
        )


class AlignmentException(DataException):
    """Two series that should share their dates do not."""


def _read_table(
    file: CsvSource, header: list[str], what: str
) -> pd.DataFrame:
    """Reads a CSV as strings and checks its header."""
    try:
        frame = pd.read_csv(file, dtype=str, keep_default_na=False)
    except (
        OSError,
        UnicodeDecodeError,
        pd.errors.ParserError,
        pd.errors.EmptyDataError,
    ) as e:
        raise DataException(f"Could not read {what} file {file}\n") from e
    if [c.strip() for c in frame.columns] != header:
        raise ParseException(
            1,
            f"{what} header must be {','.join(header)}, "
            + f"got {','.join(map(str, frame.columns))}\n",
        )
    return frame


def _parse_dates(column: pd.Series, what: str) -> list[dt.date]:
    """ISO dates; `ParseException` names the line of the first bad one."""
    parsed = pd.to_datetime(
        column.str.strip(), format="%Y-%m-%d", errors="coerce"
    )
    bad = parsed.isna().to_numpy()
    if bad.any():
        i = int(np.argmax(bad))
        raise ParseException(
            i + 2, f"Bad date {column.iloc[i]!r} in {what} line {i + 2}\n"
        )
    return [ts.date() for ts in parsed]


def _parse_numbers(column: pd.Series, what: str) -> np.ndarray:
    """Finite floats, raising `ParseException` on the first bad cell."""
    parsed = pd.to_numeric(column.str.strip(), errors="coerce").to_numpy(
        dtype=np.float64
    )
    bad = ~np.isfinite(parsed)
    if bad.any():
        i = int(np.argmax(bad))
        raise ParseException(
            i + 2, f"Bad number {column.iloc[i]!r} in {what} line {i + 2}\n"
        )
    return parsed


def parse_hourly_load(
    file: CsvSource, convention: str = "1-24"
) -> list[HourlyLoadRecord]:
    """
    Parses an hourly load CSV with header `date,hour,quantity_mwh`.

    Parameters
    ----------
    file : path or file-like
        The CSV to read.

    convention : str
        `"1-24"` (market operator style, hour 1 is 00:00-01:00) or `"0-23"`.
        Hours are stored 0-based. One extra hour past the nominal range is
        accepted for the 25-hour day at the end of daylight saving time.

    Returns
    -------
    list[HourlyLoadRecord]
        One record per row, in file order.

    Raises
    ------
    ParseException
        Malformed row, hour out of range or negative quantity.

    DuplicateKeyException
        Repeated `(date, hour)`.

    ConfigException
        Unknown convention.
    """
    if convention not in HOUR_CONVENTIONS:
        raise ConfigException(
            f"Unknown hour convention {convention!r}, expected one of "
            + f"{list(HOUR_CONVENTIONS)}\n"
        )
    lowest, highest = HOUR_CONVENTIONS[convention]
    frame = _read_table(file, ["date", "hour", "quantity_mwh"], "hourly load")
    dates = _parse_dates(frame["date"], "hourly load")
    hours = _parse_numbers(frame["hour"], "hourly load")
    quantities = _parse_numbers(frame["quantity_mwh"], "hourly load")

    bad_hour = (hours != np.floor(hours)) | (hours < lowest) | (hours > highest)
    if bad_hour.any():
        i = int(np.argmax(bad_hour))
        raise ParseException(
            i + 2,
            f"Hour {frame['hour'].iloc[i]!r} on line {i + 2} is outside the "
            + f"{convention} convention\n",
        )
    if (quantities < 0).any():
        i = int(np.argmax(quantities < 0))
        raise ParseException(
            i + 2, f"Negative quantity {quantities[i]} on line {i + 2}\n"
        )

    records: list[HourlyLoadRecord] = []
    seen: dict[tuple[dt.date, int], int] = {}
    for i, (date, hour, quantity) in enumerate(zip(dates, hours, quantities)):
        key = (date, int(hour) - lowest)
        if key in seen:
            raise DuplicateKeyException(
                key,
                f"Duplicate hour {int(hour)} on {date} "
                + f"(lines {seen[key] + 2} and {i + 2})\n",
            )
        seen[key] = i
        records.append(HourlyLoadRecord(date, key[1], float(quantity)))
    logger.info("Parsed %d hourly load records", len(records))
    return records


def aggregate_daily(
    records: Iterable[HourlyLoadRecord],
) -> list[tuple[dt.date, float]]:
    """
    Sums hourly quantities into daily load (MWh/day).

    The sum is exactly rounded (`math.fsum`), so the result does not depend
    on the order of the hours within a day.

    Raises
    ------
    IncompleteDayException
        A date with an hour count other than 23, 24 or 25.

    DuplicateKeyException
        The same hour given twice for a date.
    """
    by_date: dict[dt.date, dict[int, float]] = defaultdict(dict)
    for record in records:
        day = by_date[record.date]
        if record.hour in day:
            raise DuplicateKeyException(
                (record.date, record.hour),
                f"Duplicate hour {record.hour} on {record.date}\n",
            )
        day[record.hour] = record.quantity
    daily: list[tuple[dt.date, float]] = []
    for date in sorted(by_date):
        hours = by_date[date]
        if len(hours) not in VALID_DAY_HOURS:
            raise IncompleteDayException(date, len(hours))
        daily.append((date, math.fsum(hours.values())))
    return daily


def parse_temperature(
    file: CsvSource, unit: str = "F"
) -> list[tuple[dt.date, float]]:
    """
    Parses a daily temperature CSV with header `date,temp`.

    Celsius input (`unit="C"`) is converted to Fahrenheit, the unit used
    everywhere downstream.

    Raises
    ------
    ParseException, DuplicateKeyException, ConfigException
    """
    if unit not in TEMP_UNITS:
        raise ConfigException(
            f"Temperature unit must be one of {TEMP_UNITS}, got {unit!r}\n"
        )
    frame = _read_table(file, ["date", "temp"], "temperature")
    dates = _parse_dates(frame["date"], "temperature")
    temps = _parse_numbers(frame["temp"], "temperature")
    if unit == "C":
        temps = temps * 9.0 / 5.0 + 32.0
    _assert_unique_dates(dates, "temperature file")
    return [(d, float(t)) for d, t in zip(dates, temps)]


def parse_holidays(file: CsvSource) -> HolidayCalendar:
    """
    Parses a holiday CSV with header `date,category`, category `major` or
    `minor` (case-insensitive).
    """
    frame = _read_table(file, ["date", "category"], "holiday")
    dates = _parse_dates(frame["date"], "holiday")
    categories = frame["category"].str.strip().str.lower()
    bad = ~categories.isin(HOLIDAY_CATEGORIES).to_numpy()
    if bad.any():
        i = int(np.argmax(bad))
        raise ParseException(
            i + 2,
            f"Holiday category {frame['category'].iloc[i]!r} on line {i + 2} "
            + f"is not one of {HOLIDAY_CATEGORIES}\n",
        )
    _assert_unique_dates(dates, "holiday file")
    return HolidayCalendar.from_pairs(zip(dates, categories))


def _assert_unique_dates(dates: Sequence[dt.date], what: str) -> None:
    seen: set[dt.date] = set()
    for date in dates:
        if date in seen:
            raise DuplicateKeyException(
                date, f"Date {date} appears twice in the {what}\n"
            )
        seen.add(date)


def average_station_temps(
    series_a: DatedValues, series_b: DatedValues
) -> list[tuple[dt.date, float]]:
    """
    Pointwise mean of two station temperature series.

    Raises
    ------
    AlignmentException
        If the two series do not cover exactly the same dates.

    DuplicateKeyException
        If a date appears twice in either series.
    """
    _assert_unique_dates([d for d, _ in series_a], "first station series")
    _assert_unique_dates([d for d, _ in series_b], "second station series")
    a = dict(series_a)
    b = dict(series_b)
    if a.keys() != b.keys():
        only_a = sorted(a.keys() - b.keys())
        only_b = sorted(b.keys() - a.keys())
        raise AlignmentException(
            "Station temperature series cover different dates.\n"
            + f"Only in the first: {pprint.pformat(only_a[:10])}\n"
            + f"Only in the second: {pprint.pformat(only_b[:10])}\n"
        )
    return [(d, (a[d] + b[d]) / 2.0) for d in sorted(a)]


def span_dates(first: dt.date, last: dt.date) -> list[dt.date]:
    """Every date from `first` to `last` inclusive."""
    if last < first:
        raise DataException(f"Empty span {first}..{last}\n")
    return [
        first + dt.timedelta(days=i) for i in range((last - first).days + 1)
    ]


def interpolate_temperature(
    temps: dict[dt.date, float], span: list[dt.date]
) -> dict[dt.date, float]:
    """
    Fills interior temperature gaps of at most `MAX_INTERPOLATED_GAP` days by
    linear interpolation between the neighbouring observations.

    Raises
    ------
    GapException
        Gaps at either end of the span or longer than the limit.
    """
    missing = [d for d in span if d not in temps]
    if not missing:
        return temps
    present = [d for d in span if d in temps]
    runs: list[list[dt.date]] = []
    for d in missing:
        if runs and (d - runs[-1][-1]).days == 1:
            runs[-1].append(d)
        else:
            runs.append([d])
    unfillable = [
        d
        for run in runs
        if len(run) > MAX_INTERPOLATED_GAP
        or not present
        or run[0] < present[0]
        or run[-1] > present[-1]
        for d in run
    ]
    if unfillable:
        raise GapException("temperature (not interpolable)", unfillable)
    known_x = np.array([d.toordinal() for d in present], dtype=np.float64)
    known_y = np.array([temps[d] for d in present], dtype=np.float64)
    filled = np.interp([d.toordinal() for d in missing], known_x, known_y)
    logger.warning(
        "Interpolated %d missing temperature days (first: %s)",
        len(missing),
        missing[0],
    )
    result = dict(temps)
    result.update(zip(missing, (float(v) for v in filled)))
    return result


def merge_series(
    load: DatedValues,
    temp: DatedValues,
    span: tuple[dt.date, dt.date],
    fill_policy: str = "error",
) -> DailySeries:
    """
    Aligns daily load and temperature over `span` into a `DailySeries`.

    Records outside the span are dropped. Load is never filled. Temperature
    gaps are an error unless `fill_policy` is `"interpolate-linear"`.

    Raises
    ------
    GapException
        Dates of the span missing from either input after the fill policy.

    ConfigException
        Unknown fill policy.

    DuplicateKeyException
        A date appearing twice in either input.
    """
    if fill_policy not in FILL_POLICIES:
        raise ConfigException(
            f"Fill policy must be one of {FILL_POLICIES}, got {fill_policy!r}\n"
        )
    _assert_unique_dates([d for d, _ in load], "daily load")
    _assert_unique_dates([d for d, _ in temp], "daily temperature")
    dates = span_dates(*span)
    load_map = {d: v for d, v in load if span[0] <= d <= span[1]}
    temp_map = {d: v for d, v in temp if span[0] <= d <= span[1]}

    missing_load = [d for d in dates if d not in load_map]
    if missing_load:
        raise GapException("load", missing_load)
    if fill_policy == "interpolate-linear":
        temp_map = interpolate_temperature(temp_map, dates)
    missing_temp = [d for d in dates if d not in temp_map]
    if missing_temp:
        raise GapException("temperature", missing_temp)

    series = DailySeries(
        to_datetime64(dates),
        np.array([load_map[d] for d in dates], dtype=np.float64),
        np.array([temp_map[d] for d in dates], dtype=np.float64),
    )
    logger.info(
        "Merged daily series %s..%s with N = %d", span[0], span[1], len(series)
    )
    return series


def span_length_note(series: DailySeries) -> Optional[str]:
    """
    Describes the sample size, flagging the reference span whose quoted
    observation count (1979) is one more than its day count (1978).
    """
    reference = tuple(dt.date.fromisoformat(d) for d in REFERENCE_SPAN)
    if (series.first, series.last) != reference:
        return None
    note = (
        f"Computed N = {len(series)} for "
        + f"{REFERENCE_SPAN[0]}..{REFERENCE_SPAN[1]}; "
        + f"the reference estimates quote N = {REFERENCE_N}."
    )
    logger.warning(note)
    return note
