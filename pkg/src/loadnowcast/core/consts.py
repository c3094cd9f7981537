"""Literal constants for the project."""
from typing import Final


WEEKDAYS: Final[list[str]] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"]
WEEKS_PER_YEAR: Final[int] = 52
DAYS_PER_WEEK: Final[int] = 7

HOLIDAY_MAJOR: Final[str] = "major"
HOLIDAY_MINOR: Final[str] = "minor"
HOLIDAY_CATEGORIES: Final[list[str]] = [HOLIDAY_MAJOR, HOLIDAY_MINOR]

# Hours per day accepted by the aggregation (DST transitions give 23/25).
VALID_DAY_HOURS: Final[list[int]] = [23, 24, 25]
HOUR_CONVENTIONS: Final[dict[str, tuple[int, int]]] = {
    "1-24": (1, 25),
    "0-23": (0, 24),
}

TEMP_BAND_F: Final[tuple[float, float]] = (-40.0, 130.0)
TEMP_UNITS: Final[list[str]] = ["F", "C"]
FILL_POLICIES: Final[list[str]] = ["error", "interpolate-linear"]

DEFAULT_KINK_F: Final[float] = 62.0
DEFAULT_HAC_MAX_LAG: Final[int] = 7
DEFAULT_TREATMENT_YEAR: Final[int] = 2020
DEFAULT_INTERACTION_WEEKS: Final[tuple[int, int]] = (1, 22)
DEFAULT_TREATMENT_WEEKS: Final[tuple[int, int]] = (11, 22)
DEFAULT_PLACEBO_WEEKS: Final[tuple[int, int]] = (1, 10)
ERROR_MODELS: Final[list[str]] = ["iid", "hac", "ar1"]

RANK_TOLERANCE: Final[float] = 1e-10
PSD_TOLERANCE: Final[float] = 1e-12
AR1_BOUND: Final[float] = 0.999
AR1_XTOL: Final[float] = 1e-6

DEFAULT_RESIDENTIAL_SHARE: Final[float] = 22.4
# Residential consumption up 40% during the lockdown months.
LOCKDOWN_UPLIFT: Final[float] = 1.4
DEFAULT_LOCKDOWN_MONTHS: Final[list[int]] = [3, 4]
DEFAULT_DRAWS: Final[int] = 5000
DEFAULT_CI_LEVEL: Final[float] = 0.95
DEFAULT_SIGNIFICANCE: Final[float] = 0.05
SIGNIFICANCE_STARS: Final[list[tuple[float, str]]] = [
    (0.001, "***"),
    (0.01, "**"),
    (0.05, "*"),
]
# Table-style reporting multiplies every coefficient except the intercept.
REPORT_SCALE: Final[float] = 100.0
INTERCEPT: Final[str] = "intercept"

# Reference span quoted with N = 1979 although it holds 1978 days.
REFERENCE_SPAN: Final[tuple[str, str]] = ("2015-01-01", "2020-05-31")
REFERENCE_N: Final[int] = 1979

EXIT_OK: Final[int] = 0
EXIT_DATA: Final[int] = 1
EXIT_NUMERICAL: Final[int] = 2
EXIT_CONFIG: Final[int] = 3
