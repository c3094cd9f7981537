"""
Synthetic daily load series with known coefficients.

The generator writes down the log-load equation term by term, without going
through the design matrix code, so that fitting a noiseless series and
reading back the coefficients checks both sides at once.
"""

import datetime as dt
import json
import logging
import pprint
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import numpy.typing as npt
import pandas as pd
from scipy.signal import lfilter  # type: ignore

from loadnowcast.core.consts import (
    DAYS_PER_WEEK,
    DEFAULT_INTERACTION_WEEKS,
    DEFAULT_KINK_F,
    DEFAULT_TREATMENT_WEEKS,
    DEFAULT_TREATMENT_YEAR,
    HOLIDAY_MAJOR,
    HOLIDAY_MINOR,
    INTERCEPT,
    TEMP_BAND_F,
    WEEKDAYS,
    WEEKS_PER_YEAR,
)
from loadnowcast.core.exceptions import ConfigException, LoadNowcastException
from loadnowcast.libs import assert_keys_are_subset
from loadnowcast.libs.libload.series import DailySeries, HolidayCalendar
from loadnowcast.libs.libregress.estimator import FittedModel, fit_model
from loadnowcast.libs.libregress.features import (
    HOLIDAY_COLUMNS,
    DesignMatrix,
    ModelSpec,
    build_design_matrix,
    interaction_name,
    week_indices,
)
from loadnowcast.libs.libregress.impact import (
    ImpactSeries,
    aggregate_impact,
    default_periods,
    monte_carlo_ci,
)


logger = logging.getLogger(__name__)

Vector = npt.NDArray[np.float64]

# Natural-scale magnitudes of the base model on the reference data.
DEFAULT_WEEKDAY_EFFECTS: dict[str, float] = {
    "Tue": 0.0400,
    "Wed": 0.0474,
    "Thu": 0.0459,
    "Fri": 0.0371,
    "Sat": -0.1191,
    "Sun": -0.2370,
}
DEFAULT_HOLIDAY_EFFECTS: dict[str, float] = {
    HOLIDAY_MAJOR: -0.2134,
    HOLIDAY_MINOR: -0.0542,
}
DEFAULT_TREATMENT_EFFECTS: dict[int, float] = {
    11: -0.0815,
    12: -0.1871,
    13: -0.2384,
    14: -0.2253,
    15: -0.2558,
    16: -0.1830,
    17: -0.1082,
    18: -0.1138,
    19: -0.1085,
    20: -0.0913,
    21: -0.0730,
    22: -0.0513,
}
AUGUST_BREAK_WEEKS = (32, 33)


def default_week_effects(
    amplitude: float = 0.06, august_dip: float = -0.18
) -> dict[int, float]:
    """
    Annual cosine with its maximum in week 1, plus a dip for the August
    break. Week 1 is exactly 0.
    """
    effects = {
        week: amplitude * (np.cos(2 * np.pi * (week - 1) / WEEKS_PER_YEAR) - 1)
        for week in range(1, WEEKS_PER_YEAR + 1)
    }
    for week in AUGUST_BREAK_WEEKS:
        effects[week] += august_dip
    return {week: float(value) for week, value in effects.items()}


@dataclass(frozen=True)
class SyntheticSpec:  # pylint: disable=too-many-instance-attributes
    """True parameters of a synthetic series and of its temperature path."""

    start: dt.date = dt.date(2015, 1, 1)
    end: dt.date = dt.date(2020, 5, 31)
    intercept: float = 10.47
    weekday_effects: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_WEEKDAY_EFFECTS)
    )
    """Monday is the reference day and has no entry."""
    holiday_effects: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_HOLIDAY_EFFECTS)
    )
    temp_slope: float = -0.0021
    temp_hinge: float = 0.0083
    kink_k: float = DEFAULT_KINK_F
    week_effects: dict[int, float] = field(default_factory=default_week_effects)
    treatment_effects: dict[int, float] = field(
        default_factory=lambda: dict(DEFAULT_TREATMENT_EFFECTS)
    )
    treatment_year: int = DEFAULT_TREATMENT_YEAR
    interaction_weeks: tuple[int, int] = DEFAULT_INTERACTION_WEEKS
    treatment_weeks: tuple[int, int] = DEFAULT_TREATMENT_WEEKS
    sigma: float = 0.03
    phi: float = 0.6
    temp_mean: float = 60.0
    temp_amplitude: float = 18.0
    temp_noise: float = 4.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ConfigException(
                f"Synthetic span is empty: {self.start} > {self.end}\n"
            )
        if not abs(self.phi) < 1:
            raise ConfigException(f"|phi| must be < 1, got {self.phi}\n")
        if self.sigma < 0 or self.temp_noise < 0:
            raise ConfigException(
                f"Noise scales must be >= 0, got sigma = {self.sigma}, "
                + f"temp_noise = {self.temp_noise}\n"
            )
        assert_keys_are_subset(
            "weekday_effects", self.weekday_effects, WEEKDAYS[1:]
        )
        assert_keys_are_subset(
            "holiday_effects", self.holiday_effects, list(HOLIDAY_COLUMNS)
        )
        bad_weeks = [
            w for w in self.week_effects if not 1 <= w <= WEEKS_PER_YEAR
        ]
        if bad_weeks:
            raise ConfigException(f"Week effects outside 1..52: {bad_weeks}\n")
        low, high = self.interaction_weeks
        outside = [
            w
            for w, effect in self.treatment_effects.items()
            if effect != 0 and not low <= w <= high
        ]
        if outside:
            raise ConfigException(
                "Treatment effects must be zero outside the interaction weeks "
                + f"{self.interaction_weeks}, got:\n"
                + pprint.pformat(
                    {w: self.treatment_effects[w] for w in outside}
                )
                + "\n"
            )
        # Validates the week ranges the same way the regression does.
        self.model_spec(1)

    @property
    def marginal_variance(self) -> float:
        """Stationary variance of the AR(1) error."""
        return self.sigma**2 / (1.0 - self.phi**2)

    def model_spec(self, model: int) -> ModelSpec:
        """Preset `model` over this series' kink, treatment year and weeks."""
        return ModelSpec.preset(
            model,
            kink_k=self.kink_k,
            treatment_year=self.treatment_year,
            interaction_weeks=self.interaction_weeks,
            treatment_weeks=self.treatment_weeks,
        )

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready representation; integer week keys become strings."""
        result = asdict(self)
        result["start"] = self.start.isoformat()
        result["end"] = self.end.isoformat()
        result["week_effects"] = {
            str(k): v for k, v in self.week_effects.items()
        }
        result["treatment_effects"] = {
            str(k): v for k, v in self.treatment_effects.items()
        }
        result["interaction_weeks"] = list(self.interaction_weeks)
        result["treatment_weeks"] = list(self.treatment_weeks)
        return result

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SyntheticSpec":
        """
        Builds a spec from a flat JSON object; absent keys keep their
        defaults.

        Raises
        ------
        ConfigException
        """
        allowed = list(cls.__dataclass_fields__)  # pylint: disable=no-member
        assert_keys_are_subset("synthetic config", data, allowed)
        kwargs = dict(data)
        try:
            for key in ("start", "end"):
                if key in kwargs:
                    kwargs[key] = dt.date.fromisoformat(kwargs[key])
            for key in ("week_effects", "treatment_effects"):
                if key in kwargs:
                    kwargs[key] = {
                        int(k): float(v) for k, v in kwargs[key].items()
                    }
            for key in ("interaction_weeks", "treatment_weeks"):
                if key in kwargs:
                    kwargs[key] = tuple(kwargs[key])
        except (TypeError, ValueError, AttributeError) as e:
            raise ConfigException(
                f"Invalid synthetic config:\n{pprint.pformat(data)}\n"
            ) from e
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "SyntheticSpec":
        """Reads a synthetic config file."""
        try:
            with open(path, "rt", encoding="utf-8") as file:
                data = json.load(file)
        except (FileNotFoundError, json.JSONDecodeError) as e:
            raise ConfigException(
                f"Could not load synthetic config {path}\n"
            ) from e
        if not isinstance(data, dict):
            raise ConfigException(f"Synthetic config {path} is not an object\n")
        return cls.from_dict(data)


@dataclass(frozen=True)
class _Calendar:
    dates: npt.NDArray[np.datetime64]
    years: npt.NDArray[np.int64]
    weeks: npt.NDArray[np.int64]
    weekdays: npt.NDArray[np.int64]
    day_of_year: npt.NDArray[np.int64]


def _calendar(spec: SyntheticSpec) -> _Calendar:
    index = pd.date_range(spec.start, spec.end, freq="D")
    doy = index.dayofyear.to_numpy().astype(np.int64)
    weeks = np.minimum((doy - 1) // DAYS_PER_WEEK + 1, WEEKS_PER_YEAR)
    return _Calendar(
        dates=index.to_numpy().astype("M8[D]"),
        years=index.year.to_numpy().astype(np.int64),
        weeks=weeks,
        weekdays=index.dayofweek.to_numpy().astype(np.int64),
        day_of_year=doy,
    )


def _treatment_shift(
    spec: SyntheticSpec, cal: _Calendar, weeks: tuple[int, int]
) -> Vector:
    """Treatment-year effects of the weeks in `weeks`, per day."""
    shift = np.zeros(len(cal.dates))
    treated = cal.years == spec.treatment_year
    for week, effect in spec.treatment_effects.items():
        if weeks[0] <= week <= weeks[1]:
            shift[treated & (cal.weeks == week)] = effect
    return shift


def generate_series(
    spec: SyntheticSpec, holidays: HolidayCalendar
) -> tuple[DailySeries, ImpactSeries]:
    """
    Simulates temperature and log load, and the true impact path.

    The log load is the sum of the intercept, weekday, holiday, piecewise
    temperature, week and treatment terms plus stationary AR(1) Gaussian
    noise. The true impact is `100 (exp(effect) - 1)` on treatment days and
    does not depend on the noise draw.
    """
    cal = _calendar(spec)
    n = len(cal.dates)
    temp_stream, noise_stream = np.random.SeedSequence(spec.seed).spawn(2)

    temp_rng = np.random.default_rng(temp_stream)
    # Seasonal peak in late July.
    temp = spec.temp_mean + spec.temp_amplitude * np.cos(
        2 * np.pi * (cal.day_of_year - 200) / 365.25
    )
    temp = temp + spec.temp_noise * temp_rng.standard_normal(n)
    temp = np.clip(temp, *TEMP_BAND_F)

    y = np.full(n, spec.intercept)
    for day, effect in spec.weekday_effects.items():
        y[cal.weekdays == WEEKDAYS.index(day)] += effect
    calendar = holidays.within(spec.start, spec.end)
    for category, effect in spec.holiday_effects.items():
        y += effect * calendar.mask(cal.dates, category)
    y += spec.temp_slope * temp
    y += spec.temp_hinge * np.maximum(temp - spec.kink_k, 0.0)
    y += np.array([spec.week_effects.get(int(w), 0.0) for w in cal.weeks])
    y += _treatment_shift(spec, cal, spec.interaction_weeks)

    noise = np.zeros(n)
    if spec.sigma > 0:
        noise_rng = np.random.default_rng(noise_stream)
        shocks = spec.sigma * noise_rng.standard_normal(n)
        # Stationary start: u_0 ~ N(0, sigma^2 / (1 - phi^2)).
        shocks[0] /= np.sqrt(1.0 - spec.phi**2)
        noise = lfilter([1.0], [1.0, -spec.phi], shocks)

    series = DailySeries(cal.dates, np.exp(y + noise), temp)

    effect = _treatment_shift(spec, cal, spec.treatment_weeks)
    fitted = np.exp(y + spec.marginal_variance / 2.0)
    counterfactual = fitted * np.exp(-effect)
    impact = 100.0 * np.expm1(effect)
    truth = ImpactSeries(
        cal.dates, fitted, counterfactual, impact, impact, impact
    )
    logger.info(
        "Generated %d synthetic days (seed %d, sigma %g, phi %g)",
        n,
        spec.seed,
        spec.sigma,
        spec.phi,
    )
    return series, truth


def true_coefficients(
    spec: SyntheticSpec, design: DesignMatrix
) -> dict[str, float]:
    """
    True value of every design column. The reference weekday and the first
    week present in the design are absorbed into the intercept.

    Raises
    ------
    ConfigException
        If the design has a column the synthetic equation does not know.
    """
    weekday = {day: spec.weekday_effects.get(day, 0.0) for day in WEEKDAYS}
    base_day = weekday[design.spec.baseline_weekday]
    week_names = {f"week_{w}": w for w in range(1, WEEKS_PER_YEAR + 1)}
    base_week = int(week_indices(design.dates).min())
    base_effect = spec.week_effects.get(base_week, 0.0)
    interactions = {
        interaction_name(w, spec.treatment_year): w
        for w in range(spec.interaction_weeks[0], spec.interaction_weeks[1] + 1)
    }
    holiday_names = {name: cat for cat, name in HOLIDAY_COLUMNS.items()}

    truth: dict[str, float] = {}
    for name in design.columns:
        if name == INTERCEPT:
            truth[name] = spec.intercept + base_day + base_effect
        elif name in weekday:
            truth[name] = weekday[name] - base_day
        elif name in holiday_names:
            truth[name] = spec.holiday_effects.get(holiday_names[name], 0.0)
        elif name == "temp":
            truth[name] = spec.temp_slope
        elif name == "temp_hinge":
            truth[name] = spec.temp_hinge
        elif name in week_names:
            week_effect = spec.week_effects.get(week_names[name], 0.0)
            truth[name] = week_effect - base_effect
        elif name in interactions:
            truth[name] = spec.treatment_effects.get(interactions[name], 0.0)
        else:
            raise ConfigException(f"No true value for design column {name!r}\n")
    return truth


@dataclass(frozen=True)
class ModelRecovery:
    """Recovery statistics of one model variant across replications."""

    fits: int
    bias: dict[str, float]
    rmse: dict[str, float]
    mean_se: dict[str, float]
    coverage: dict[str, float]
    """Share of replications whose CI contains the true period aggregate."""
    phi_mean: Optional[float] = None


@dataclass(frozen=True)
class RecoverySummary:
    """Per-model recovery statistics plus the recorded failures."""

    replications: int
    draws: int
    models: dict[str, ModelRecovery]
    failures: list[dict[str, Any]]

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready representation."""
        return {
            "replications": self.replications,
            "draws": self.draws,
            "models": {name: asdict(rec) for name, rec in self.models.items()},
            "failures": self.failures,
        }

    def to_json(self, path: Union[str, Path]) -> None:
        """Writes `to_dict` as stable, sorted JSON."""
        with open(path, "wt", encoding="utf-8") as file:
            json.dump(self.to_dict(), file, indent=2, sort_keys=True)
            file.write("\n")


@dataclass
class _Replication:
    estimates: dict[int, dict[str, tuple[float, float]]]
    truth: dict[int, dict[str, float]]
    covered: dict[int, dict[str, bool]]
    phi: dict[int, float]
    failures: list[dict[str, Any]]


MODELS = (1, 2, 3)


def _replicate(
    spec: SyntheticSpec, holidays: HolidayCalendar, draws: int, index: int
) -> _Replication:
    rep = _Replication({}, {}, {}, {}, [])
    series, truth = generate_series(spec, holidays)
    for model in MODELS:
        try:
            design = build_design_matrix(
                series, holidays, spec.model_spec(model)
            )
            fitted: FittedModel = fit_model(design)
            se = fitted.std_errors
            rep.estimates[model] = {
                name: (float(fitted.beta[j]), float(se[j]))
                for j, name in enumerate(fitted.columns)
            }
            rep.truth[model] = true_coefficients(spec, design)
            if model == 3:
                rep.phi[model] = fitted.phi
            if draws > 0:
                periods = default_periods(design)
                bounds = monte_carlo_ci(
                    fitted, design, draws, spec.seed, periods
                ).periods
                rep.covered[model] = {
                    p.label: bounds[p.label][0]
                    <= aggregate_impact(truth, p)
                    <= bounds[p.label][1]
                    for p in periods
                }
        except LoadNowcastException as e:
            logger.warning(
                "Replication %d, model %d failed: %s", index, model, e
            )
            rep.failures.append(
                {
                    "replication": index,
                    "model": model,
                    "error": type(e).__name__,
                    "message": str(e).strip(),
                }
            )
    return rep


def _summarize(reps: list[_Replication], model: int) -> ModelRecovery:
    fits = [r for r in reps if model in r.estimates]
    names = list(fits[0].estimates[model]) if fits else []
    bias: dict[str, float] = {}
    rmse: dict[str, float] = {}
    mean_se: dict[str, float] = {}
    for name in names:
        errors = np.array(
            [r.estimates[model][name][0] - r.truth[model][name] for r in fits]
        )
        bias[name] = float(errors.mean())
        rmse[name] = float(np.sqrt(np.mean(errors**2)))
        mean_se[name] = float(
            np.mean([r.estimates[model][name][1] for r in fits])
        )
    coverage: dict[str, float] = {}
    covered = [r.covered[model] for r in fits if model in r.covered]
    for label in covered[0] if covered else []:
        coverage[label] = float(np.mean([c[label] for c in covered]))
    phis = [r.phi[model] for r in fits if model in r.phi]
    return ModelRecovery(
        fits=len(fits),
        bias=bias,
        rmse=rmse,
        mean_se=mean_se,
        coverage=coverage,
        phi_mean=float(np.mean(phis)) if phis else None,
    )


def recovery_study(
    spec: SyntheticSpec,
    holidays: HolidayCalendar,
    replications: int,
    draws: int = 200,
    workers: int = 1,
) -> RecoverySummary:
    """
    Fits Models 1-3 to `replications` independent synthetic series and
    tabulates coefficient bias, RMSE, mean standard error, mean phi and the
    Monte Carlo CI coverage of the true period aggregates.

    Every replication gets its own seed spawned from `spec.seed`, so the
    summary does not depend on `workers`. Fit failures are recorded and
    skipped. `draws = 0` skips the coverage computation.

    Raises
    ------
    ConfigException
        If `replications < 1` or `draws < 0`.
    """
    if replications < 1:
        raise ConfigException(
            f"Recovery study needs replications >= 1, got {replications}\n"
        )
    if draws < 0:
        raise ConfigException(f"draws must be >= 0, got {draws}\n")
    children = np.random.SeedSequence(spec.seed).spawn(replications)
    specs = [
        replace(spec, seed=int(child.generate_state(1)[0]))
        for child in children
    ]

    def run(i: int) -> _Replication:
        return _replicate(specs[i], holidays, draws, i)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reps = list(pool.map(run, range(replications)))
    else:
        reps = [run(i) for i in range(replications)]
    summary = RecoverySummary(
        replications=replications,
        draws=draws,
        models={f"model{m}": _summarize(reps, m) for m in MODELS},
        failures=[f for r in reps for f in r.failures],
    )
    logger.info(
        "Recovery study: %d replications, %d failures",
        replications,
        len(summary.failures),
    )
    return summary
