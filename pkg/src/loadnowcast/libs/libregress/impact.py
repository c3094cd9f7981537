"""
Counterfactual impacts of the treatment on load and their GDP translation.

The counterfactual prediction sets the treatment-week interaction
coefficients to zero. Levels are retransformed from logs under the Gaussian
assumption, `exp(yhat + s^2/2)`; the factor cancels in every ratio below.
"""

import calendar
import datetime as dt
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import numpy.typing as npt
import pandas as pd
from scipy.linalg import eigh  # type: ignore
from scipy.stats import norm  # type: ignore

from loadnowcast.core.consts import (
    DEFAULT_CI_LEVEL,
    DEFAULT_LOCKDOWN_MONTHS,
    DEFAULT_RESIDENTIAL_SHARE,
    LOCKDOWN_UPLIFT,
    PSD_TOLERANCE,
)
from loadnowcast.core.exceptions import (
    ConfigException,
    DataException,
    NumericalException,
)
from loadnowcast.libs.libregress.estimator import FittedModel, repair_psd
from loadnowcast.libs.libregress.features import DesignMatrix


logger = logging.getLogger(__name__)

Vector = npt.NDArray[np.float64]
WEIGHTINGS = ["energy", "mean"]
# Monte Carlo draws processed together; bounds peak memory at n x chunk.
MC_CHUNK = 250


class AlignmentException(ConfigException):
    """A fitted model applied to a design with different columns."""


class DomainException(NumericalException):
    """An argument outside the domain of a formula."""


class CovarianceException(NumericalException):
    """A coefficient covariance that cannot be factorized."""


@dataclass(frozen=True)
class Period:
    """A labelled inclusive date range."""

    label: str
    start: dt.date
    end: dt.date


@dataclass(frozen=True, eq=False)
class ImpactSeries:
    """
    Per-day fitted and counterfactual levels (MWh), impact (%) and CI bounds.
    Without a Monte Carlo run the bounds equal the point estimate.
    """

    dates: npt.NDArray[np.datetime64]
    fitted: Vector
    counterfactual: Vector
    impact: Vector
    ci_lo: Vector
    ci_hi: Vector

    def with_bounds(self, ci_lo: Vector, ci_hi: Vector) -> "ImpactSeries":
        """Same point estimates, new bounds."""
        return ImpactSeries(
            self.dates,
            self.fitted,
            self.counterfactual,
            self.impact,
            ci_lo,
            ci_hi,
        )

    def to_frame(self) -> pd.DataFrame:
        """The impact CSV table."""
        return pd.DataFrame(
            {
                "date": np.datetime_as_string(self.dates, unit="D"),
                "fitted_mwh": self.fitted,
                "counterfactual_mwh": self.counterfactual,
                "impact_pct": self.impact,
                "ci_lo": self.ci_lo,
                "ci_hi": self.ci_hi,
            }
        )

    def to_csv(self, path: Union[str, Path]) -> None:
        """
        Writes `date,fitted_mwh,counterfactual_mwh,impact_pct,ci_lo,ci_hi`.
        """
        self.to_frame().to_csv(path, index=False, lineterminator="\n")


@dataclass(frozen=True)
class GdpImpact:
    """Electricity impact of one period and both GDP rescalings, in percent."""

    label: str
    electricity: float
    electricity_ci: tuple[float, float]
    gdp1: float
    gdp1_ci: tuple[float, float]
    gdp2: float
    gdp2_ci: tuple[float, float]
    residential_share: float
    preferred: str
    """`gdp1` or `gdp2`."""


@dataclass(frozen=True)
class MonteCarloResult:
    """Percentile bounds per day and per period from coefficient draws."""

    daily_lo: Vector
    daily_hi: Vector
    periods: dict[str, tuple[float, float]]
    draws: int
    level: float


def _check_alignment(model: FittedModel, X: DesignMatrix) -> None:
    if model.columns != X.columns:
        raise AlignmentException(
            "Fitted model and design matrix have different columns "
            + f"({len(model.columns)} vs {len(X.columns)})\n"
        )


def _treatment_mask(X: DesignMatrix) -> npt.NDArray[np.bool_]:
    mask = np.zeros(X.p, dtype=bool)
    mask[X.treatment_columns] = True
    return mask


def predict_level(
    model: FittedModel, X: DesignMatrix, zero_treatment: bool = False
) -> Vector:
    """
    Predicted load levels `exp(x_t' beta + s^2/2)` in MWh, with `s^2` the
    marginal error variance (s^2 for OLS, sigma^2/(1 - phi^2) for AR(1)).

    With `zero_treatment` the treatment-week interaction coefficients are
    set to zero, giving the counterfactual.

    Raises
    ------
    AlignmentException
        If model and design columns differ.
    """
    _check_alignment(model, X)
    beta = model.beta.copy()
    if zero_treatment:
        beta[_treatment_mask(X)] = 0.0
    return np.exp(X.X @ beta + model.marginal_variance / 2.0)


def treatment_shift(model: FittedModel, X: DesignMatrix) -> Vector:
    """Active treatment-interaction contribution to the log prediction."""
    _check_alignment(model, X)
    cols = X.treatment_columns
    return X.X[:, cols] @ model.beta[cols]


def daily_impact(model: FittedModel, X: DesignMatrix) -> ImpactSeries:
    """
    Percentage impact `100 (Y - Y*) / Y*` of every day, point estimates
    only (the CI bounds equal the point).
    """
    fitted = predict_level(model, X)
    counterfactual = predict_level(model, X, zero_treatment=True)
    impact = 100.0 * (fitted - counterfactual) / counterfactual
    return ImpactSeries(X.dates, fitted, counterfactual, impact, impact, impact)


def impact_by_interactions(model: FittedModel, X: DesignMatrix) -> Vector:
    """The same impact as `100 (exp(delta) - 1)` of the treatment shift."""
    return 100.0 * np.expm1(treatment_shift(model, X))


def _period_mask(
    dates: npt.NDArray[np.datetime64], period: Period
) -> npt.NDArray[np.bool_]:
    start = np.datetime64(period.start, "D")
    end = np.datetime64(period.end, "D")
    return (dates >= start) & (dates <= end)


def aggregate_impact(
    series: ImpactSeries, period: Period, weighting: str = "energy"
) -> float:
    """
    Impact over a period in percent.

    `energy` weighting (default) compares total fitted and counterfactual
    energy, `100 (sum Y - sum Y*) / sum Y*`; `mean` averages the daily
    percentages.

    Raises
    ------
    DataException
        If no series day falls in the period.
    """
    if weighting not in WEIGHTINGS:
        raise ConfigException(
            f"Weighting must be one of {WEIGHTINGS}, got {weighting!r}\n"
        )
    mask = _period_mask(series.dates, period)
    if not mask.any():
        raise DataException(
            f"Period {period.label} ({period.start}..{period.end}) has no "
            + "days in the impact series\n"
        )
    if weighting == "mean":
        return float(series.impact[mask].mean())
    fitted = series.fitted[mask].sum()
    counterfactual = series.counterfactual[mask].sum()
    return float(100.0 * (fitted - counterfactual) / counterfactual)


def gdp_impact(
    load_impact: float,
    r: float = DEFAULT_RESIDENTIAL_SHARE,
    residential_uplift: float = 1.0,
) -> float:
    """
    Rescales a load impact to the productive sectors:
    `load_impact * 100 / (100 - uplift * r)`.

    Raises
    ------
    DomainException
        If `100 - uplift * r <= 0`.
    """
    denominator = 100.0 - residential_uplift * r
    if denominator <= 0:
        raise DomainException(
            f"100 - uplift * r must be positive, got {denominator} "
            + f"(r = {r}, uplift = {residential_uplift})\n"
        )
    return load_impact * 100.0 / denominator


def semi_elasticity(coefficient: float) -> float:
    """Percentage effect `100 (exp(c) - 1)` of a dummy in a log model."""
    return float(100.0 * np.expm1(coefficient))


def _coefficient_factor(
    cov: npt.NDArray[np.float64],
) -> npt.NDArray[np.float64]:
    """Symmetric square root of the PSD-repaired covariance."""
    if not np.all(np.isfinite(cov)):
        raise CovarianceException("Covariance has non-finite entries\n")
    cov = repair_psd(cov, "coefficient covariance")
    values, vectors = eigh(cov)
    if values.min() < -PSD_TOLERANCE:
        raise CovarianceException(
            "Covariance still indefinite after repair: "
            + f"min eigenvalue {values.min()}\n"
        )
    return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.T


def monte_carlo_ci(  # pylint: disable=too-many-arguments,too-many-locals
    model: FittedModel,
    X: DesignMatrix,
    draws: int,
    seed: int,
    periods: Sequence[Period] = (),
    *,
    level: float = DEFAULT_CI_LEVEL,
    weighting: str = "energy",
    workers: int = 1,
) -> MonteCarloResult:
    """
    Percentile confidence bounds of daily and period impacts.

    Coefficient vectors are drawn from N(beta, V) through the symmetric
    square root of V; scale parameters stay at their point estimates. Each
    draw has its own generator spawned from `seed`, so the result does not
    depend on `workers` or on chunking.

    Raises
    ------
    ConfigException
        If `draws < 1` or `level` is not in (0, 1).

    CovarianceException
        If V cannot be factorized.
    """
    _check_alignment(model, X)
    if draws < 1:
        raise ConfigException(f"Monte Carlo needs draws >= 1, got {draws}\n")
    if not 0 < level < 1:
        raise ConfigException(f"CI level must be in (0, 1), got {level}\n")
    if weighting not in WEIGHTINGS:
        raise ConfigException(
            f"Weighting must be one of {WEIGHTINGS}, got {weighting!r}\n"
        )
    factor = _coefficient_factor(model.cov)
    streams = np.random.SeedSequence(seed).spawn(draws)
    treat = _treatment_mask(X)
    masks = [_period_mask(X.dates, period) for period in periods]
    for period, mask in zip(periods, masks):
        if not mask.any():
            raise DataException(f"Period {period.label} has no days\n")

    def run(chunk: range) -> tuple[Vector, Vector]:
        normals = np.stack(
            [
                np.random.default_rng(streams[i]).standard_normal(X.p)
                for i in chunk
            ]
        )
        betas = model.beta + normals @ factor
        log_fit = betas @ X.X.T
        log_cf = log_fit - betas[:, treat] @ X.X[:, treat].T
        daily = 100.0 * np.expm1(log_fit - log_cf)
        aggregates = np.empty((len(chunk), len(masks)))
        for j, mask in enumerate(masks):
            if weighting == "mean":
                aggregates[:, j] = daily[:, mask].mean(axis=1)
            else:
                fit = np.exp(log_fit[:, mask]).sum(axis=1)
                cf = np.exp(log_cf[:, mask]).sum(axis=1)
                aggregates[:, j] = 100.0 * (fit - cf) / cf
        return daily, aggregates

    chunks = [
        range(i, min(i + MC_CHUNK, draws))
        for i in range(0, draws, MC_CHUNK)
    ]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(chunk) for chunk in chunks]
    daily = np.concatenate([r[0] for r in results])
    aggregates = np.concatenate([r[1] for r in results])

    tail = 100.0 * (1.0 - level) / 2.0
    quantiles = [tail, 100.0 - tail]
    daily_lo, daily_hi = np.percentile(
        daily, quantiles, axis=0, method="linear"
    )
    period_bounds: dict[str, tuple[float, float]] = {}
    for j, period in enumerate(periods):
        lo, hi = np.percentile(aggregates[:, j], quantiles, method="linear")
        period_bounds[period.label] = (float(lo), float(hi))
    logger.info("Ran %d Monte Carlo draws (seed %d)", draws, seed)
    return MonteCarloResult(daily_lo, daily_hi, period_bounds, draws, level)


def month_period(year: int, month: int) -> Period:
    """The calendar month as a period labelled like `2020-03`."""
    last = calendar.monthrange(year, month)[1]
    return Period(
        f"{year}-{month:02d}",
        dt.date(year, month, 1),
        dt.date(year, month, last),
    )


def default_periods(X: DesignMatrix) -> list[Period]:
    """
    Every treatment-year month from the one holding the first treatment
    day to the last sample date (months clipped to the sample), plus the
    first quarter when the sample covers it.
    """
    year = X.spec.treatment_year
    first_week = X.spec.treatment_weeks[0]
    first_day = dt.date(year, 1, 1) + dt.timedelta(days=7 * (first_week - 1))
    last_sample = X.dates[-1].astype(dt.date)
    first_sample = X.dates[0].astype(dt.date)
    periods: list[Period] = []
    quarter = Period(f"{year}-Q1", dt.date(year, 1, 1), dt.date(year, 3, 31))
    if first_sample <= quarter.start and quarter.end <= last_sample:
        periods.append(quarter)
    for month in range(first_day.month, 13):
        period = month_period(year, month)
        if period.start > last_sample:
            break
        periods.append(
            Period(period.label, period.start, min(period.end, last_sample))
        )
    return periods


def preferred_measure(
    period: Period, lockdown_months: Sequence[int] = DEFAULT_LOCKDOWN_MONTHS
) -> str:
    """
    `gdp2` (residential use up during lockdown) when the period overlaps a
    lockdown month of its year, otherwise `gdp1`.
    """
    day = period.start
    while day <= period.end:
        if day.month in lockdown_months:
            return "gdp2"
        day = (day.replace(day=1) + dt.timedelta(days=32)).replace(day=1)
    return "gdp1"


def period_report(  # pylint: disable=too-many-arguments
    series: ImpactSeries,
    periods: Sequence[Period],
    bounds: Optional[dict[str, tuple[float, float]]] = None,
    *,
    r: float = DEFAULT_RESIDENTIAL_SHARE,
    uplift: float = LOCKDOWN_UPLIFT,
    lockdown_months: Sequence[int] = DEFAULT_LOCKDOWN_MONTHS,
    weighting: str = "energy",
) -> list[GdpImpact]:
    """
    Electricity and GDP impacts of every period. GDP rescalings are applied
    to the point estimate and to both bounds.
    """
    report: list[GdpImpact] = []
    for period in periods:
        point = aggregate_impact(series, period, weighting)
        lo, hi = (bounds or {}).get(period.label, (point, point))
        if not lo <= point <= hi:
            logger.warning(
                "%s: Monte Carlo bounds (%.4f, %.4f) exclude the point "
                + "estimate %.4f; widened to include it",
                period.label,
                lo,
                hi,
                point,
            )
        lo, hi = min(lo, point), max(hi, point)
        report.append(
            GdpImpact(
                label=period.label,
                electricity=point,
                electricity_ci=(lo, hi),
                gdp1=gdp_impact(point, r, 1.0),
                gdp1_ci=(gdp_impact(lo, r, 1.0), gdp_impact(hi, r, 1.0)),
                gdp2=gdp_impact(point, r, uplift),
                gdp2_ci=(gdp_impact(lo, r, uplift), gdp_impact(hi, r, uplift)),
                residential_share=r,
                preferred=preferred_measure(period, lockdown_months),
            )
        )
    return report


def report_frame(report: Sequence[GdpImpact]) -> pd.DataFrame:
    """
    Period report with columns
    `period,electricity_pct,ci,gdp1_pct,ci,gdp2_pct,ci,preferred`.
    """
    rows = [
        [
            row.label,
            row.electricity,
            _format_ci(row.electricity_ci),
            row.gdp1,
            _format_ci(row.gdp1_ci),
            row.gdp2,
            _format_ci(row.gdp2_ci),
            row.preferred,
        ]
        for row in report
    ]
    return pd.DataFrame(
        rows,
        columns=[
            "period",
            "electricity_pct",
            "ci",
            "gdp1_pct",
            "ci",
            "gdp2_pct",
            "ci",
            "preferred",
        ],
    )


def _format_ci(bounds: tuple[float, float]) -> str:
    return f"[{bounds[0]:.1f}; {bounds[1]:.1f}]"


def weekly_impacts(
    model: FittedModel, X: DesignMatrix, level: float = DEFAULT_CI_LEVEL
) -> pd.DataFrame:
    """
    Semi-elasticity of every treatment-week interaction with a normal CI
    on the coefficient mapped through `100 (exp(c) - 1)`.
    """
    _check_alignment(model, X)
    z = float(norm.ppf(0.5 + level / 2.0))
    low, high = X.spec.treatment_weeks
    rows = []
    for week, col in sorted(X.interaction_columns.items()):
        if not low <= week <= high:
            continue
        c, se = model.beta[col], model.std_errors[col]
        rows.append(
            {
                "week": week,
                "coefficient": float(c),
                "std_error": float(se),
                "impact_pct": semi_elasticity(c),
                "ci_lo": semi_elasticity(c - z * se),
                "ci_hi": semi_elasticity(c + z * se),
            }
        )
    return pd.DataFrame(
        rows,
        columns=[
            "week",
            "coefficient",
            "std_error",
            "impact_pct",
            "ci_lo",
            "ci_hi",
        ],
    )


def attach_bounds(
    series: ImpactSeries, result: MonteCarloResult
) -> ImpactSeries:
    """
    Daily Monte Carlo bounds on `series`, widened where needed so that every
    bound brackets its point estimate.
    """
    outside = (result.daily_lo > series.impact) | (
        result.daily_hi < series.impact
    )
    if outside.any():
        logger.warning(
            "Monte Carlo bounds exclude the point estimate on %d days "
            + "(first: %s); widened to include it",
            int(outside.sum()),
            series.dates[int(np.argmax(outside))],
        )
    return series.with_bounds(
        np.minimum(result.daily_lo, series.impact),
        np.maximum(result.daily_hi, series.impact),
    )
