"""
Specification checks and descriptive plot data.

The in-time placebo test looks only at the interactions of weeks before the
treatment: under a correct specification they are not distinguishable from
zero.
"""

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, solve  # type: ignore
from scipy.stats import chi2, norm, pearsonr  # type: ignore

from loadnowcast.core.consts import (
    DEFAULT_PLACEBO_WEEKS,
    DEFAULT_SIGNIFICANCE,
    WEEKDAYS,
)
from loadnowcast.core.exceptions import ConfigException, DataException
from loadnowcast.libs.libload.series import DailySeries
from loadnowcast.libs.libregress.estimator import (
    FittedModel,
    significance_stars,
)
from loadnowcast.libs.libregress.features import (
    ModelSpec,
    interaction_name,
    week_indices,
    weekday_indices,
)


logger = logging.getLogger(__name__)

# Weeks of the "before" and "during" windows of the weekday profile export.
DEFAULT_WINDOWS: dict[str, tuple[int, int]] = {
    "before": (5, 9),
    "during": (12, 16),
}


@dataclass(frozen=True)
class PlaceboWeek:
    """Two-sided test of one pre-treatment interaction."""

    week: int
    coefficient: float
    std_error: float
    t_stat: float
    p_value: float


@dataclass(frozen=True)
class PlaceboReport:
    """
    Per-week placebo tests and the overall verdict.

    `passed` holds iff every p-value is at least `level`. The joint Wald
    statistic over all pre-treatment weeks is an additional, stricter check
    that is not part of that verdict.
    """

    weeks: list[PlaceboWeek]
    passed: bool
    level: float
    wald_stat: float
    wald_df: int
    wald_p_value: float

    @property
    def wald_passed(self) -> bool:
        """Joint test verdict at `level`."""
        return self.wald_p_value >= self.level

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready representation."""
        return {
            "level": self.level,
            "passed": self.passed,
            "weeks": [asdict(week) for week in self.weeks],
            "joint_wald": {
                "note": "extension: joint chi-square test over all "
                + "pre-treatment interactions",
                "statistic": self.wald_stat,
                "df": self.wald_df,
                "p_value": self.wald_p_value,
                "passed": self.wald_passed,
            },
        }

    def to_json(self, path: Union[str, Path]) -> None:
        """Writes `to_dict` as stable, sorted JSON."""
        with open(path, "wt", encoding="utf-8") as file:
            json.dump(self.to_dict(), file, indent=2, sort_keys=True)
            file.write("\n")

    def table(self) -> str:
        """Human-readable table, coefficients x100."""
        lines = [f"{'week':>6}{'coef':>10}{'se':>9}{'t':>8}{'p':>9}"]
        for week in self.weeks:
            lines.append(
                f"{week.week:>6}{100 * week.coefficient:>10.2f}"
                + f"{100 * week.std_error:>9.2f}{week.t_stat:>8.2f}"
                + f"{week.p_value:>9.3f}{significance_stars(week.p_value)}"
            )
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"Placebo at level {self.level}: {verdict}")
        lines.append(
            f"Joint Wald (extension): chi2({self.wald_df}) = "
            + f"{self.wald_stat:.2f}, p = {self.wald_p_value:.3f}"
        )
        return "\n".join(lines) + "\n"


def placebo_test(
    model: FittedModel,
    spec: ModelSpec,
    pre_weeks: tuple[int, int] = DEFAULT_PLACEBO_WEEKS,
    level: float = DEFAULT_SIGNIFICANCE,
) -> PlaceboReport:
    """
    Tests every pre-treatment interaction against zero with the normal
    approximation, plus a joint Wald test over the same block.

    Raises
    ------
    ConfigException
        If `pre_weeks` leaves the interaction range, overlaps the treatment
        weeks, or names a week without an interaction column.
    """
    low, high = pre_weeks
    i_low, i_high = spec.interaction_weeks
    t_low, t_high = spec.treatment_weeks
    if not i_low <= low <= high <= i_high:
        raise ConfigException(
            f"Placebo weeks {pre_weeks} are not inside the interaction "
            + f"weeks {spec.interaction_weeks}\n"
        )
    if low <= t_high and t_low <= high:
        raise ConfigException(
            f"Placebo weeks {pre_weeks} overlap the treatment weeks "
            + f"{spec.treatment_weeks}\n"
        )
    names = [
        interaction_name(w, spec.treatment_year) for w in range(low, high + 1)
    ]
    missing = [name for name in names if name not in model.columns]
    if missing:
        raise ConfigException(
            f"No interaction column for placebo weeks: {missing}\n"
        )
    idx = [model.index(name) for name in names]
    beta = model.beta[idx]
    se = model.std_errors[idx]
    t_stats = np.divide(beta, se, out=np.zeros_like(beta), where=se > 0)
    p_values = 2.0 * norm.sf(np.abs(t_stats))
    weeks = [
        PlaceboWeek(w, float(b), float(s), float(t), float(p))
        for w, b, s, t, p in zip(
            range(low, high + 1), beta, se, t_stats, p_values
        )
    ]
    block = model.cov[np.ix_(idx, idx)]
    try:
        wald = float(beta @ solve(block, beta, assume_a="pos"))
    except LinAlgError:
        wald = float(beta @ np.linalg.pinv(block) @ beta)
    report = PlaceboReport(
        weeks=weeks,
        passed=bool(np.all(p_values >= level)),
        level=level,
        wald_stat=wald,
        wald_df=len(idx),
        wald_p_value=float(chi2.sf(wald, len(idx))),
    )
    logger.info(
        "Placebo weeks %d-%d: %s",
        low,
        high,
        "pass" if report.passed else "fail",
    )
    return report


def first_diff_correlation(
    annual_a: Sequence[tuple[int, float]],
    annual_b: Sequence[tuple[int, float]],
) -> float:
    """
    Pearson correlation of the year-on-year first differences of two annual
    series over their common, consecutive years.

    Raises
    ------
    DataException
        Fewer than 3 common years, non-consecutive common years, or a
        constant difference series.
    """
    a, b = dict(annual_a), dict(annual_b)
    years = sorted(a.keys() & b.keys())
    if len(years) < 3:
        raise DataException(
            f"Need at least 3 overlapping years, got {len(years)}\n"
        )
    if np.any(np.diff(years) != 1):
        raise DataException(
            f"Overlapping years must be consecutive, got {years}\n"
        )
    diff_a = np.diff([a[y] for y in years])
    diff_b = np.diff([b[y] for y in years])
    if np.ptp(diff_a) == 0 or np.ptp(diff_b) == 0:
        raise DataException("First differences are constant\n")
    return float(pearsonr(diff_a, diff_b)[0])


def read_annual_csv(
    path: Union[str, Path], column: str
) -> list[tuple[int, float]]:
    """Reads `(year, value)` pairs from a CSV with a `year` column."""
    try:
        frame = pd.read_csv(path)
    except (
        OSError,
        UnicodeDecodeError,
        pd.errors.ParserError,
        pd.errors.EmptyDataError,
    ) as e:
        raise DataException(f"Could not read annual CSV {path}\n") from e
    if "year" not in frame.columns or column not in frame.columns:
        raise DataException(f"Annual CSV {path} needs columns year,{column}\n")
    try:
        return [
            (int(y), float(v)) for y, v in zip(frame["year"], frame[column])
        ]
    except (ValueError, TypeError) as e:
        raise DataException(f"Non-numeric value in annual CSV {path}\n") from e


def year_overlay(series: DailySeries, years: Sequence[int]) -> pd.DataFrame:
    """Daily load of each year side by side, indexed by day of year."""
    frame = series.to_frame()
    frame["year"] = series.years
    frame["day_of_year"] = (
        series.dates - series.dates.astype("M8[Y]")
    ).astype(np.int64) + 1
    table = frame[frame["year"].isin(years)].pivot(
        index="day_of_year", columns="year", values="load_mwh"
    )
    table.columns = [f"load_{year}" for year in table.columns]
    return table.reset_index()


def weekday_profile(
    series: DailySeries,
    years: Sequence[int],
    windows: Optional[dict[str, tuple[int, int]]] = None,
) -> pd.DataFrame:
    """Mean load per weekday, for every year and week window."""
    windows = DEFAULT_WINDOWS if windows is None else windows
    weeks = week_indices(series.dates)
    weekdays = weekday_indices(series.dates)
    rows = []
    for year in years:
        for name, (low, high) in windows.items():
            mask = (series.years == year) & (weeks >= low) & (weeks <= high)
            for day, label in enumerate(WEEKDAYS):
                selected = series.load[mask & (weekdays == day)]
                rows.append(
                    {
                        "year": year,
                        "window": name,
                        "weekday": label,
                        "mean_load_mwh": (
                            float(selected.mean()) if selected.size else np.nan
                        ),
                    }
                )
    return pd.DataFrame(
        rows, columns=["year", "window", "weekday", "mean_load_mwh"]
    )


def weekend_drop(series: DailySeries, year: int) -> float:
    """Percentage by which mean weekend load falls below mean weekday load."""
    mask = series.years == year
    if not mask.any():
        raise DataException(f"Year {year} is not in the series\n")
    weekend = weekday_indices(series.dates) >= 5
    working = series.load[mask & ~weekend].mean()
    resting = series.load[mask & weekend].mean()
    return float(100.0 * (working - resting) / working)


def temperature_scatter(series: DailySeries) -> pd.DataFrame:
    """One `(date, temp_f, load_mwh)` row per day."""
    frame = series.to_frame()
    return frame[["date", "temp_f", "load_mwh"]]


def descriptive_exports(
    series: DailySeries,
    out_dir: Union[str, Path],
    years: Sequence[int] = (2019, 2020),
    windows: Optional[dict[str, tuple[int, int]]] = None,
) -> dict[str, Path]:
    """
    Writes the plot data: year overlay, weekday profile per window and the
    temperature/load scatter.

    Returns
    -------
    dict[str, Path]
        Export name to written file.

    Raises
    ------
    DataException
        If a requested year is not in the series.
    """
    present = set(series.years.tolist())
    missing = [year for year in years if year not in present]
    if missing:
        raise DataException(
            f"Years {missing} are not covered by the series "
            + f"({series.first}..{series.last})\n"
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "year_overlay": out / "year_overlay.csv",
        "weekday_averages": out / "weekday_averages.csv",
        "temperature_scatter": out / "temperature_scatter.csv",
    }
    year_overlay(series, years).to_csv(
        paths["year_overlay"], index=False, lineterminator="\n"
    )
    weekday_profile(series, years, windows).to_csv(
        paths["weekday_averages"], index=False, lineterminator="\n"
    )
    temperature_scatter(series).to_csv(
        paths["temperature_scatter"], index=False, lineterminator="\n"
    )
    return paths
