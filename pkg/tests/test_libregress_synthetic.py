"""Tests for `libs.libregress.synthetic`."""

import datetime as dt
import json
from functools import partial

import numpy as np
import pytest

from loadnowcast.core.exceptions import ConfigException
from loadnowcast.libs.libload import default_holidays_path
from loadnowcast.libs.libload.ingest import parse_holidays
from loadnowcast.libs.libload.series import HolidayCalendar
from loadnowcast.libs.libregress.diagnostics import placebo_test
from loadnowcast.libs.libregress.estimator import (
    FittedModel,
    fit_model,
    fit_ols,
)
from loadnowcast.libs.libregress.features import (
    ModelSpec,
    build_design_matrix,
    week_indices,
)
from loadnowcast.libs.libregress.synthetic import (
    SyntheticSpec,
    default_week_effects,
    generate_series,
    recovery_study,
    true_coefficients,
)

from . import assert_fails


D = dt.date


@pytest.fixture(scope="module", name="holidays")
def fixture_holidays() -> HolidayCalendar:
    return parse_holidays(default_holidays_path)


def _short(**kwargs) -> SyntheticSpec:
    """2019-01-01 to 2020-05-31."""
    return SyntheticSpec(start=D(2019, 1, 1), **kwargs)


def test_default_week_effects():
    effects = default_week_effects()
    assert sorted(effects) == list(range(1, 53))
    assert effects[1] == 0.0
    assert effects[27] == pytest.approx(-0.12, abs=1e-3)
    assert effects[32] < effects[31] - 0.1
    assert default_week_effects(august_dip=0.0)[32] == pytest.approx(
        0.06 * (np.cos(2 * np.pi * 31 / 52) - 1)
    )


def test_generate_series(holidays: HolidayCalendar):
    spec = _short()
    series, truth = generate_series(spec, holidays)
    assert len(series) == 517
    assert series.first == D(2019, 1, 1) and series.last == D(2020, 5, 31)
    assert np.all(series.load > 0)
    assert np.all(truth.dates == series.dates)
    # No impact outside the treatment weeks of the treatment year.
    weeks = week_indices(series.dates)
    treated = (series.years == 2020) & (weeks >= 11) & (weeks <= 22)
    assert np.all(truth.impact[~treated] == 0.0)
    np.testing.assert_allclose(
        truth.impact[treated & (weeks == 13)], 100.0 * np.expm1(-0.2384)
    )
    np.testing.assert_allclose(
        truth.fitted / truth.counterfactual, 1.0 + truth.impact / 100.0
    )


def test_generate_series_is_deterministic(holidays: HolidayCalendar):
    a, _ = generate_series(_short(seed=4), holidays)
    b, _ = generate_series(_short(seed=4), holidays)
    c, _ = generate_series(_short(seed=5), holidays)
    assert a == b
    assert not np.array_equal(a.load, c.load)


def test_noiseless_series_is_exact(holidays: HolidayCalendar):
    """Without noise the log load is the equation itself."""
    spec = _short(sigma=0.0, temp_noise=0.0)
    series, truth = generate_series(spec, holidays)
    np.testing.assert_allclose(truth.fitted, series.load, rtol=1e-12)
    sunday = series.dates == np.datetime64("2019-01-13")
    monday = series.dates == np.datetime64("2019-01-14")
    # Both in week 2, no holidays, both below the kink.
    assert np.all(series.temp[sunday | monday] < spec.kink_k)
    expected = -0.2370 + spec.temp_slope * (
        series.temp[sunday] - series.temp[monday]
    )
    np.testing.assert_allclose(
        np.log(series.load[sunday]) - np.log(series.load[monday]), expected
    )


def test_noiseless_model_1_recovers_truth(holidays: HolidayCalendar):
    """The OLS fit of a noiseless series returns the true coefficients."""
    spec = _short(sigma=0.0)
    series, _ = generate_series(spec, holidays)
    design = build_design_matrix(series, holidays, spec.model_spec(1))
    model = fit_ols(design)
    truth = true_coefficients(spec, design)
    assert list(truth) == list(design.columns)
    np.testing.assert_allclose(
        model.beta, [truth[name] for name in design.columns], atol=1e-8
    )
    assert model.r_squared == pytest.approx(1.0)


def test_single_week_effect_impact(holidays: HolidayCalendar):
    """A lone -0.25 in week 13 is a -22.12% impact on those days only."""
    spec = _short(sigma=0.0, treatment_effects={13: -0.25})
    series, truth = generate_series(spec, holidays)
    design = build_design_matrix(series, holidays, spec.model_spec(1))
    model = fit_ols(design)
    assert model.coefficient("week_13_x_2020") == pytest.approx(
        -0.25, abs=1e-8
    )
    assert model.coefficient("week_14_x_2020") == pytest.approx(0.0, abs=1e-8)
    week_13 = (series.years == 2020) & (week_indices(series.dates) == 13)
    np.testing.assert_allclose(truth.impact[week_13], -22.1199, atol=1e-4)
    assert np.count_nonzero(truth.impact) == 7


def test_true_coefficients_baseline(holidays: HolidayCalendar):
    """Sunday baseline and a pre-treatment design starting in week 2."""
    spec = SyntheticSpec(start=D(2018, 1, 8), end=D(2018, 12, 31), sigma=0.0)
    series, _ = generate_series(spec, holidays)
    design = build_design_matrix(
        series, holidays, ModelSpec.preset(1, baseline_weekday="Sun")
    )
    assert "week_1" not in design.columns and "week_2" not in design.columns
    assert not design.interaction_columns
    truth = true_coefficients(spec, design)
    week_2 = spec.week_effects[2]
    assert truth["intercept"] == pytest.approx(10.47 - 0.2370 + week_2)
    assert truth["Mon"] == pytest.approx(0.2370)
    assert truth["Sat"] == pytest.approx(-0.1191 + 0.2370)
    assert truth["week_3"] == pytest.approx(spec.week_effects[3] - week_2)
    model = fit_ols(design)
    np.testing.assert_allclose(
        model.beta, [truth[name] for name in design.columns], atol=1e-8
    )


@pytest.mark.parametrize(
    "kwargs,errors",
    [
        ({"start": D(2021, 1, 1)}, [ConfigException]),
        ({"phi": 1.0}, [ConfigException]),
        ({"phi": -1.2}, [ConfigException]),
        ({"sigma": -0.1}, [ConfigException]),
        ({"temp_noise": -1.0}, [ConfigException]),
        ({"weekday_effects": {"Mon": 0.1}}, [ConfigException]),
        ({"holiday_effects": {"bank": -0.1}}, [ConfigException]),
        ({"week_effects": {53: 0.1}}, [ConfigException]),
        ({"treatment_effects": {30: -0.1}}, [ConfigException]),
        ({"interaction_weeks": (12, 22)}, [ConfigException]),
    ],
)
def test_synthetic_spec_fails(kwargs: dict, errors: list[type]):
    assert_fails(partial(SyntheticSpec, **kwargs), errors)


def test_synthetic_spec_zero_effect_outside_weeks():
    spec = SyntheticSpec(treatment_effects={13: -0.2, 30: 0.0})
    assert spec.treatment_effects[30] == 0.0


def test_synthetic_spec_dict(tmp_path):
    spec = _short(seed=9, phi=0.3, treatment_effects={12: -0.1, 13: -0.2})
    assert SyntheticSpec.from_dict(spec.to_dict()) == spec
    path = tmp_path / "synthetic.json"
    path.write_text(json.dumps(spec.to_dict()))
    assert SyntheticSpec.from_json(path) == spec
    partial_spec = SyntheticSpec.from_dict({"sigma": 0.01, "end": "2020-04-30"})
    assert partial_spec.sigma == 0.01
    assert partial_spec.end == D(2020, 4, 30)
    assert partial_spec.intercept == 10.47


def test_synthetic_spec_dict_fails(tmp_path):
    assert_fails(
        partial(SyntheticSpec.from_dict, {"colour": "blue"}), [ConfigException]
    )
    assert_fails(
        partial(SyntheticSpec.from_dict, {"start": "2019-13-01"}),
        [ConfigException, ValueError],
    )
    assert_fails(
        partial(SyntheticSpec.from_dict, {"week_effects": {"x": 0.1}}),
        [ConfigException, ValueError],
    )
    (tmp_path / "list.json").write_text("[1, 2]")
    assert_fails(
        partial(SyntheticSpec.from_json, tmp_path / "list.json"),
        [ConfigException],
    )
    assert_fails(
        partial(SyntheticSpec.from_json, tmp_path / "missing.json"),
        [ConfigException, FileNotFoundError],
    )


def test_recovery_study_fails(holidays: HolidayCalendar):
    assert_fails(
        partial(recovery_study, _short(), holidays, 0), [ConfigException]
    )
    assert_fails(
        partial(recovery_study, _short(), holidays, 1, -1), [ConfigException]
    )


def test_recovery_study_records_failures(holidays: HolidayCalendar):
    """A treatment-year-only span cannot identify the interactions."""
    spec = SyntheticSpec(start=D(2020, 1, 1))
    summary = recovery_study(spec, holidays, 1, draws=0)
    assert len(summary.failures) == 3
    assert {f["error"] for f in summary.failures} == {"CollinearityException"}
    assert all(rec.fits == 0 for rec in summary.models.values())
    assert summary.models["model3"].phi_mean is None


@pytest.mark.slow
def test_recovery_study(holidays: HolidayCalendar, tmp_path):
    spec = _short(seed=21)
    summary = recovery_study(spec, holidays, 3, draws=0)
    assert summary.replications == 3 and not summary.failures
    assert set(summary.models) == {"model1", "model2", "model3"}
    model_3 = summary.models["model3"]
    assert model_3.fits == 3
    assert 0.4 < model_3.phi_mean < 0.8
    assert abs(model_3.bias["week_13_x_2020"]) < 0.08
    assert model_3.rmse["temp_hinge"] < 0.005
    assert "temp" not in summary.models["model2"].bias
    assert summary.models["model1"].phi_mean is None
    assert model_3.coverage == {}
    summary.to_json(tmp_path / "recovery.json")
    data = json.loads((tmp_path / "recovery.json").read_text())
    assert data["models"]["model3"]["fits"] == 3


@pytest.mark.slow
def test_recovery_study_coverage_is_deterministic(holidays: HolidayCalendar):
    """Seeds are spawned per replication; workers do not change results."""
    spec = _short(seed=2)
    a = recovery_study(spec, holidays, 2, draws=50)
    b = recovery_study(spec, holidays, 2, draws=50, workers=2)
    assert a == b
    coverage = a.models["model3"].coverage
    assert set(coverage) == {"2020-Q1", "2020-03", "2020-04", "2020-05"}
    assert set(coverage.values()) <= {0.0, 0.5, 1.0}


@pytest.mark.slow
def test_recovery_study_march_coverage(holidays: HolidayCalendar):
    summary = recovery_study(
        SyntheticSpec(seed=8), holidays, 40, draws=200, workers=4
    )
    assert not summary.failures
    model_3 = summary.models["model3"]
    assert model_3.coverage["2020-03"] >= 0.85
    assert 0.45 < model_3.phi_mean < 0.75


NullFit = tuple[FittedModel, dict[str, float]]


@pytest.fixture(scope="module", name="null_fits")
def fixture_null_fits(holidays: HolidayCalendar) -> list[NullFit]:
    """Model 3 on full-span series without any treatment, one per seed."""
    fits = []
    for seed in range(40):
        spec = SyntheticSpec(treatment_effects={}, seed=seed)
        series, _ = generate_series(spec, holidays)
        design = build_design_matrix(series, holidays, spec.model_spec(3))
        fits.append((fit_model(design), true_coefficients(spec, design)))
    return fits


@pytest.mark.slow
def test_standard_errors_cover_true_coefficients(null_fits: list[NullFit]):
    inside = [
        abs(model.beta[j] - truth[name]) <= 3.0 * model.std_errors[j]
        for model, truth in null_fits
        for j, name in enumerate(model.columns)
    ]
    assert np.mean(inside) >= 0.99


@pytest.mark.slow
def test_placebo_rejection_rate_without_treatment(null_fits: list[NullFit]):
    reports = [placebo_test(model, model.spec) for model, _ in null_fits]
    rejected = [week.p_value < 0.05 for r in reports for week in r.weeks]
    assert 0.02 <= np.mean(rejected) <= 0.10
    assert np.mean([not r.wald_passed for r in reports]) <= 0.175
