"""
Design matrix of the log-load regression.

Columns, in order:
  intercept, six weekday dummies, two holiday dummies, the piecewise
  temperature pair (optional), week-of-year fixed effects (first week present
  is the baseline) and week x treatment-year interactions.

Weeks are seven-day blocks counted from January 1, with the last one or two
days of the year folded into week 52.
"""

import datetime as dt
import logging
import pprint
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Union

import numpy as np
import numpy.typing as npt
import pandas as pd
from scipy.linalg import qr  # type: ignore

from loadnowcast.core.consts import (
    DAYS_PER_WEEK,
    DEFAULT_HAC_MAX_LAG,
    DEFAULT_INTERACTION_WEEKS,
    DEFAULT_KINK_F,
    DEFAULT_TREATMENT_WEEKS,
    DEFAULT_TREATMENT_YEAR,
    ERROR_MODELS,
    HOLIDAY_MAJOR,
    HOLIDAY_MINOR,
    INTERCEPT,
    RANK_TOLERANCE,
    TEMP_BAND_F,
    WEEKDAYS,
    WEEKS_PER_YEAR,
)
from loadnowcast.core.exceptions import ConfigException, NumericalException
from loadnowcast.libs.libload.series import DailySeries, HolidayCalendar


logger = logging.getLogger(__name__)

HOLIDAY_COLUMNS = {
    HOLIDAY_MAJOR: "holiday_major",
    HOLIDAY_MINOR: "holiday_minor",
}
TEMP_COLUMNS = ("temp", "temp_hinge")


class CollinearityException(NumericalException):
    """The design has all-zero, duplicated or linearly dependent columns."""

    columns: list[str]

    def __init__(self, columns: list[str], *args: object) -> None:
        self.columns = columns
        super().__init__(*args)


def _week_range(name: str, value: Any) -> tuple[int, int]:
    try:
        low, high = (int(v) for v in value)
    except (TypeError, ValueError) as e:
        raise ConfigException(
            f"{name} must be a pair of week numbers, got {value!r}\n"
        ) from e
    if not 1 <= low <= high <= WEEKS_PER_YEAR:
        raise ConfigException(
            f"{name} must satisfy 1 <= first <= last <= {WEEKS_PER_YEAR}, "
            + f"got {value!r}\n"
        )
    return low, high


@dataclass(frozen=True)
class ModelSpec:
    """Everything that defines one regression variant."""

    include_temperature: bool = True
    kink_k: float = DEFAULT_KINK_F
    error_model: str = "iid"
    hac_max_lag: int = DEFAULT_HAC_MAX_LAG
    treatment_year: int = DEFAULT_TREATMENT_YEAR
    interaction_weeks: tuple[int, int] = DEFAULT_INTERACTION_WEEKS
    """Inclusive week range carrying interaction columns."""
    treatment_weeks: tuple[int, int] = DEFAULT_TREATMENT_WEEKS
    """Inclusive week range zeroed in the counterfactual."""
    baseline_weekday: str = WEEKDAYS[0]

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "interaction_weeks",
            _week_range("interaction_weeks", self.interaction_weeks),
        )
        object.__setattr__(
            self,
            "treatment_weeks",
            _week_range("treatment_weeks", self.treatment_weeks),
        )
        if not (
            self.interaction_weeks[0]
            <= self.treatment_weeks[0]
            <= self.treatment_weeks[1]
            <= self.interaction_weeks[1]
        ):
            raise ConfigException(
                f"treatment_weeks {self.treatment_weeks} must lie inside "
                + f"interaction_weeks {self.interaction_weeks}\n"
            )
        if self.error_model not in ERROR_MODELS:
            raise ConfigException(
                f"error_model must be one of {ERROR_MODELS}, "
                + f"got {self.error_model!r}\n"
            )
        if int(self.hac_max_lag) != self.hac_max_lag or self.hac_max_lag < 0:
            raise ConfigException(
                f"hac_max_lag must be a non-negative integer, "
                + f"got {self.hac_max_lag!r}\n"
            )
        if not TEMP_BAND_F[0] <= self.kink_k <= TEMP_BAND_F[1]:
            raise ConfigException(
                f"kink_k = {self.kink_k} is outside {TEMP_BAND_F} °F\n"
            )
        if self.baseline_weekday not in WEEKDAYS:
            raise ConfigException(
                f"baseline_weekday must be one of {WEEKDAYS}, "
                + f"got {self.baseline_weekday!r}\n"
            )

    @classmethod
    def preset(cls, model: int, **overrides: Any) -> "ModelSpec":
        """
        The three standard variants: 1 base (OLS), 2 no temperature (OLS),
        3 AR(1) errors by maximum likelihood.
        """
        presets: dict[int, dict[str, Any]] = {
            1: {"include_temperature": True, "error_model": "iid"},
            2: {"include_temperature": False, "error_model": "iid"},
            3: {"include_temperature": True, "error_model": "ar1"},
        }
        if model not in presets:
            raise ConfigException(f"Model must be 1, 2 or 3, got {model!r}\n")
        merged = {**overrides, **presets[model]}
        # HAC only swaps the covariance, so it may replace iid for Models 1-2.
        if model != 3 and overrides.get("error_model") == "hac":
            merged["error_model"] = "hac"
        return cls(**merged)

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready representation."""
        result = asdict(self)
        result["interaction_weeks"] = list(self.interaction_weeks)
        result["treatment_weeks"] = list(self.treatment_weeks)
        return result

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelSpec":
        """Inverse of `to_dict`."""
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigException(
                f"Invalid model spec:\n{pprint.pformat(data)}\n"
            ) from e


def day_of_year(
    dates: npt.NDArray[np.datetime64],
) -> npt.NDArray[np.int64]:
    """1-based day of year of every date."""
    dates = np.asarray(dates, dtype="M8[D]")
    return (dates - dates.astype("M8[Y]")).astype(np.int64) + 1


def week_indices(
    dates: npt.NDArray[np.datetime64],
) -> npt.NDArray[np.int64]:
    """Vectorised `week_index`."""
    weeks = (day_of_year(dates) - 1) // DAYS_PER_WEEK + 1
    return np.minimum(weeks, WEEKS_PER_YEAR)


def week_index(date: dt.date) -> int:
    """
    Seven-day block of the year containing `date`, counted from January 1.
    Days 365 and 366 fold into week 52.

    >>> week_index(dt.date(2020, 3, 10))
    10
    """
    return int(week_indices(np.array([date], dtype="M8[D]"))[0])


def weekday_indices(
    dates: npt.NDArray[np.datetime64],
) -> npt.NDArray[np.int64]:
    """0 = Monday ... 6 = Sunday. 1970-01-01 was a Thursday."""
    return (np.asarray(dates, dtype="M8[D]").astype(np.int64) + 3) % 7


def piecewise_temperature(
    temp: Union[float, npt.NDArray[np.float64]], k: float = DEFAULT_KINK_F
) -> tuple[Any, Any]:
    """
    The V-shaped temperature term as `(temp, max(temp - k, 0))`.

    Works on scalars and arrays alike.
    """
    return temp, np.maximum(np.asarray(temp, dtype=np.float64) - k, 0.0)[()]


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Response `y = ln(load)` and named regressors, row-aligned to `dates`."""

    dates: npt.NDArray[np.datetime64]
    y: npt.NDArray[np.float64]
    X: npt.NDArray[np.float64]
    columns: tuple[str, ...]
    spec: ModelSpec
    interaction_columns: dict[int, int] = field(default_factory=dict)
    """Week number to column index, for every interaction present."""

    @property
    def n(self) -> int:
        """Number of observations."""
        return self.X.shape[0]

    @property
    def p(self) -> int:
        """Number of regressors."""
        return self.X.shape[1]

    def index(self, name: str) -> int:
        """Column index of `name`."""
        try:
            return self.columns.index(name)
        except ValueError as e:
            raise ConfigException(
                f"No design column named {name!r}\n"
            ) from e

    @property
    def treatment_columns(self) -> list[int]:
        """Column indices of the interactions zeroed in the counterfactual."""
        low, high = self.spec.treatment_weeks
        return [
            col
            for week, col in sorted(self.interaction_columns.items())
            if low <= week <= high
        ]

    def column_groups(self) -> dict[str, list[str]]:
        """Equation term to the design columns that estimate it."""
        groups: dict[str, list[str]] = {
            "intercept": [],
            "weekday": [],
            "holiday": [],
            "temperature": [],
            "week_fe": [],
            "interaction": [],
        }
        interactions = {
            self.columns[c] for c in self.interaction_columns.values()
        }
        for name in self.columns:
            if name == INTERCEPT:
                groups["intercept"].append(name)
            elif name in WEEKDAYS:
                groups["weekday"].append(name)
            elif name in HOLIDAY_COLUMNS.values():
                groups["holiday"].append(name)
            elif name in TEMP_COLUMNS:
                groups["temperature"].append(name)
            elif name in interactions:
                groups["interaction"].append(name)
            else:
                groups["week_fe"].append(name)
        return groups

    def to_frame(self) -> pd.DataFrame:
        """Dates, response and every regressor under its column name."""
        frame = pd.DataFrame(self.X, columns=list(self.columns))
        frame.insert(0, "y", self.y)
        frame.insert(0, "date", np.datetime_as_string(self.dates, unit="D"))
        return frame

    def to_csv(self, path: Union[str, Path]) -> None:
        """Debug dump with a named header."""
        self.to_frame().to_csv(path, index=False, lineterminator="\n")


def interaction_name(week: int, year: int) -> str:
    """Column name of the week x treatment-year interaction."""
    return f"week_{week}_x_{year}"


def build_design_matrix(
    series: DailySeries,
    holidays: HolidayCalendar,
    spec: ModelSpec,
    *,
    validate: bool = True,
) -> DesignMatrix:
    """
    Builds the regression design for `series`.

    Parameters
    ----------
    series : DailySeries
        Validated daily data; its load is strictly positive.

    holidays : HolidayCalendar
        Entries outside the series span are ignored with a warning.

    spec : ModelSpec
        Temperature switch, kink, treatment year and week ranges.

    validate : bool
        Check for all-zero, duplicated and linearly dependent columns.
        Defaults to `True`.

    Raises
    ------
    CollinearityException
        Naming the offending columns.
    """
    dates = series.dates
    n = len(series)
    columns: list[str] = [INTERCEPT]
    blocks: list[npt.NDArray[np.float64]] = [np.ones(n)]

    weekday = weekday_indices(dates)
    baseline = WEEKDAYS.index(spec.baseline_weekday)
    for i, name in enumerate(WEEKDAYS):
        if i != baseline:
            columns.append(name)
            blocks.append((weekday == i).astype(np.float64))

    calendar = holidays.within(series.first, series.last)
    for category, name in HOLIDAY_COLUMNS.items():
        columns.append(name)
        blocks.append(calendar.mask(dates, category))

    if spec.include_temperature:
        linear, hinge = piecewise_temperature(series.temp, spec.kink_k)
        columns.extend(TEMP_COLUMNS)
        blocks.extend([np.asarray(linear, dtype=np.float64), hinge])

    weeks = week_indices(dates)
    present = np.unique(weeks)
    for week in present[1:]:
        columns.append(f"week_{week}")
        blocks.append((weeks == week).astype(np.float64))

    treated = series.years == spec.treatment_year
    interaction_columns: dict[int, int] = {}
    low, high = spec.interaction_weeks
    for week in range(low, high + 1):
        indicator = (treated & (weeks == week)).astype(np.float64)
        if indicator.any():
            interaction_columns[week] = len(columns)
            columns.append(interaction_name(week, spec.treatment_year))
            blocks.append(indicator)

    design = DesignMatrix(
        dates=dates,
        y=np.log(series.load),
        X=np.column_stack(blocks),
        columns=tuple(columns),
        spec=spec,
        interaction_columns=interaction_columns,
    )
    if validate:
        assert_full_rank(design)
    logger.info(
        "Built design matrix: n = %d, p = %d, %d interactions",
        design.n,
        design.p,
        len(interaction_columns),
    )
    return design


def assert_full_rank(design: DesignMatrix) -> None:
    """
    Checks the design for all-zero columns, identical columns and, through a
    column-pivoted QR decomposition, linear dependence.

    Raises
    ------
    CollinearityException
    """
    X = design.X
    zero = [name for name, col in zip(design.columns, X.T) if not col.any()]
    if zero:
        raise CollinearityException(
            zero, f"All-zero design columns: {pprint.pformat(zero)}\n"
        )
    seen: dict[bytes, str] = {}
    for name, col in zip(design.columns, X.T):
        key = np.ascontiguousarray(col).tobytes()
        if key in seen:
            raise CollinearityException(
                [seen[key], name],
                f"Identical design columns: {seen[key]} and {name}\n",
            )
        seen[key] = name
    if design.n < design.p:
        raise CollinearityException(
            [],
            f"Design has more columns ({design.p}) than rows ({design.n})\n",
        )
    R, pivots = qr(X, mode="r", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > RANK_TOLERANCE * diag[0]))
    if rank < design.p:
        offending = [design.columns[j] for j in pivots[rank:]]
        raise CollinearityException(
            offending,
            f"Design has rank {rank} < {design.p} columns; dependent columns:\n"
            + f"{pprint.pformat(offending)}\n",
        )
