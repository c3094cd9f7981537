"""Tests for `libs.libregress.estimator`."""

import json
from functools import partial
from typing import Optional

import numpy as np
import pytest
import statsmodels.api as sm  # type: ignore
import statsmodels.stats.sandwich_covariance as sw  # type: ignore
from scipy.linalg import toeplitz  # type: ignore
from scipy.signal import lfilter  # type: ignore

from loadnowcast.core.exceptions import ConfigException
from loadnowcast.libs.libestapi import EstimatorAPI
from loadnowcast.libs.libload import default_holidays_path
from loadnowcast.libs.libload.ingest import parse_holidays
from loadnowcast.libs.libregress.estimator import (
    AR1Estimator,
    FittedModel,
    HACEstimator,
    InsufficientDataException,
    LagException,
    OLSEstimator,
    SingularMatrixException,
    StationarityException,
    ar1_profile_loglik,
    ar1_whiten,
    bartlett_weights,
    coefficient_table,
    fit_ar1_ml,
    fit_model,
    fit_ols,
    hac_covariance,
    model_statistics,
    repair_psd,
    side_by_side_table,
    significance_stars,
    white_covariance,
)
from loadnowcast.libs.libregress.features import (
    DesignMatrix,
    ModelSpec,
    build_design_matrix,
)

from . import assert_fails, make_series


def _design(
    X: np.ndarray, y: np.ndarray, spec: Optional[ModelSpec] = None
) -> DesignMatrix:
    """Wraps a plain regression problem; column 0 is the intercept."""
    n, p = X.shape
    return DesignMatrix(
        dates=np.datetime64("2019-01-01") + np.arange(n),
        y=y,
        X=X,
        columns=("intercept",) + tuple(f"x{j}" for j in range(1, p)),
        spec=spec or ModelSpec(),
    )


def _regression(
    n: int = 200, p: int = 4, phi: float = 0.0, seed: int = 3
) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
    errors = lfilter([1.0], [1.0, -phi], rng.normal(scale=0.1, size=n))
    return X, X @ np.arange(1.0, p + 1.0) / 10.0 + errors


@pytest.fixture(scope="module", name="real_design")
def fixture_real_design() -> DesignMatrix:
    """Calendar design over 2019-01-01 to 2020-05-31 with AR(1) noise."""
    days = 517
    rng = np.random.default_rng(11)
    temp = 60.0 + 18.0 * np.cos(2 * np.pi * (np.arange(days) - 200) / 365.25)
    noise = lfilter([1.0], [1.0, -0.6], rng.normal(scale=0.03, size=days))
    series = make_series("2019-01-01", days, np.exp(13.0 + noise), temp)
    return build_design_matrix(
        series, parse_holidays(default_holidays_path), ModelSpec.preset(1)
    )


def test_fit_ols_matches_statsmodels():
    X, y = _regression()
    model = fit_ols(_design(X, y))
    reference = sm.OLS(y, X).fit()
    np.testing.assert_allclose(model.beta, reference.params, rtol=1e-10)
    np.testing.assert_allclose(model.std_errors, reference.bse, rtol=1e-10)
    np.testing.assert_allclose(model.s2, reference.scale, rtol=1e-10)
    assert model.r_squared == pytest.approx(reference.rsquared, rel=1e-10)
    assert model.log_likelihood == pytest.approx(reference.llf, rel=1e-10)
    # The error variance counts as a parameter.
    assert model.aic == pytest.approx(reference.aic + 2.0, rel=1e-10)
    assert model.error_model == "iid"
    assert model.phi == 0.0


def test_hac_matches_statsmodels():
    X, y = _regression(phi=0.5)
    reference = sm.OLS(y, X).fit()
    np.testing.assert_allclose(
        hac_covariance(X, reference.resid, 7),
        sw.cov_hac(reference, nlags=7, use_correction=False),
        rtol=1e-8,
    )


def test_white_matches_statsmodels():
    X, y = _regression()
    reference = sm.OLS(y, X).fit()
    expected = sw.cov_white_simple(reference, use_correction=False)
    np.testing.assert_allclose(
        white_covariance(X, reference.resid), expected, rtol=1e-8
    )
    np.testing.assert_allclose(
        hac_covariance(_design(X, y), reference.resid, 0), expected, rtol=1e-8
    )


def test_hac_standard_errors():
    """Close to OLS under independent errors, larger under persistent ones."""
    X, y = _regression(n=5000, seed=9)
    ols = fit_ols(_design(X, y))
    hac = hac_covariance(X, y - X @ ols.beta, 7)
    np.testing.assert_allclose(np.sqrt(np.diag(hac)), ols.std_errors, rtol=0.1)
    X, y = _regression(n=5000, phi=0.8, seed=9)
    ols = fit_ols(_design(X, y))
    hac = hac_covariance(X, y - X @ ols.beta, 7)
    assert np.sqrt(hac[0, 0]) > ols.std_errors[0]


def test_hac_estimator():
    X, y = _regression(phi=0.5)
    design = _design(X, y, ModelSpec(error_model="hac", hac_max_lag=5))
    model = fit_model(design)
    ols = fit_ols(design)
    np.testing.assert_array_equal(model.beta, ols.beta)
    assert model.error_model == "hac" and model.hac_max_lag == 5
    np.testing.assert_allclose(
        model.cov, hac_covariance(design, y - X @ ols.beta, 5), rtol=1e-12
    )
    assert HACEstimator(max_lag=2)(design).hac_max_lag == 2


def test_bartlett_weights():
    np.testing.assert_allclose(
        bartlett_weights(7), np.arange(8, 0, -1) / 8
    )
    np.testing.assert_allclose(bartlett_weights(0), [1.0])


@pytest.mark.parametrize("max_lag", [-1, 200, 500])
def test_hac_lag_fails(max_lag: int):
    X, y = _regression()
    assert_fails(partial(hac_covariance, X, y, max_lag), [LagException])


def test_repair_psd():
    indefinite = np.array([[1.0, 2.0], [2.0, 1.0]])
    repaired = repair_psd(indefinite)
    assert np.linalg.eigvalsh(repaired).min() >= -1e-12
    np.testing.assert_allclose(repaired, [[1.5, 1.5], [1.5, 1.5]], atol=1e-12)
    definite = np.array([[2.0, 0.5], [0.5, 1.0]])
    np.testing.assert_allclose(repair_psd(definite), definite)


def test_ar1_whiten():
    phi = 0.5
    np.testing.assert_allclose(
        ar1_whiten([2.0, 3.0, 5.0], phi), [2.0 * np.sqrt(0.75), 2.0, 3.5]
    )
    assert ar1_whiten(np.ones((4, 2)), 0.0).tolist() == np.ones((4, 2)).tolist()


def _dense_ar1_loglik(X: np.ndarray, y: np.ndarray, phi: float) -> float:
    """Exact concentrated likelihood from the full AR(1) covariance."""
    n = len(y)
    omega = toeplitz(phi ** np.arange(n)) / (1.0 - phi**2)
    omega_inv = np.linalg.inv(omega)
    beta = np.linalg.solve(X.T @ omega_inv @ X, X.T @ omega_inv @ y)
    e = y - X @ beta
    sigma2 = e @ omega_inv @ e / n
    _, logdet = np.linalg.slogdet(omega)
    return -0.5 * n * (np.log(2 * np.pi) + np.log(sigma2) + 1.0) - 0.5 * logdet


@pytest.mark.parametrize("phi", [-0.7, -0.2, 0.0, 0.35, 0.8, 0.95])
def test_ar1_profile_loglik_is_exact(phi: float):
    X, y = _regression(n=50, phi=0.4)
    loglik, beta, sigma2 = ar1_profile_loglik(_design(X, y), phi)
    assert loglik == pytest.approx(_dense_ar1_loglik(X, y, phi), rel=1e-9)
    assert sigma2 > 0 and beta.shape == (4,)


def test_ar1_profile_loglik_at_zero_is_ols():
    X, y = _regression()
    design = _design(X, y)
    loglik, beta, _ = ar1_profile_loglik(design, 0.0)
    ols = fit_ols(design)
    assert loglik == pytest.approx(ols.log_likelihood, rel=1e-12)
    np.testing.assert_allclose(beta, ols.beta, rtol=1e-10)


@pytest.mark.parametrize("phi", [1.0, -1.0, 1.5])
def test_ar1_profile_loglik_fails(phi: float):
    X, y = _regression()
    assert_fails(
        partial(ar1_profile_loglik, _design(X, y), phi), [StationarityException]
    )


def test_fit_ar1_ml_recovers_phi():
    X, y = _regression(n=3000, phi=0.6, seed=5)
    design = _design(X, y, ModelSpec(error_model="ar1"))
    model = fit_ar1_ml(design)
    assert model.phi == pytest.approx(0.6, abs=0.05)
    np.testing.assert_allclose(model.beta, [0.1, 0.2, 0.3, 0.4], atol=0.02)
    assert model.error_model == "ar1"
    assert model.n_params == 6
    assert model.aic == pytest.approx(2 * 6 - 2 * model.log_likelihood)
    assert model.marginal_variance == pytest.approx(
        model.sigma2 / (1.0 - model.phi**2)
    )
    # The estimate is a local maximum of the profile.
    for step in (-1e-3, 1e-3):
        nearby = ar1_profile_loglik(design, model.phi + step)[0]
        assert nearby <= model.log_likelihood
    assert fit_model(design).phi == pytest.approx(model.phi)


@pytest.mark.slow
def test_whitened_residuals_are_uncorrelated():
    X, y = _regression(n=2500, phi=0.6, seed=8)
    model = fit_ar1_ml(_design(X, y, ModelSpec(error_model="ar1")))
    whitened = ar1_whiten(y - X @ model.beta, model.phi)
    rho = (whitened[1:] @ whitened[:-1]) / (whitened @ whitened)
    assert abs(rho) < 0.05


@pytest.mark.slow
def test_fit_ar1_ml_without_autocorrelation():
    spec = ModelSpec(error_model="ar1")
    for seed in range(20):
        X, y = _regression(n=5000, seed=seed)
        assert abs(fit_ar1_ml(_design(X, y, spec)).phi) <= 0.05


def test_ar1_covariance_is_gls():
    X, y = _regression(phi=0.3)
    model = AR1Estimator()(_design(X, y))
    Xw = ar1_whiten(X, model.phi)
    np.testing.assert_allclose(
        model.cov, model.sigma2 * np.linalg.inv(Xw.T @ Xw), rtol=1e-8
    )


def test_fit_ols_singular():
    X, y = _regression()
    X = np.column_stack([X, 2.0 * X[:, 1]])
    assert_fails(partial(fit_ols, _design(X, y)), [SingularMatrixException])


def test_fit_ols_insufficient_data():
    X, y = _regression(n=4, p=4)
    assert_fails(partial(fit_ols, _design(X, y)), [InsufficientDataException])


def test_fit_ols_exact_fit():
    """A noiseless response: huge likelihood, vanishing covariance."""
    X, _ = _regression()
    y = X @ np.array([1.0, -0.5, 0.25, 2.0])
    model = fit_ols(_design(X, y))
    np.testing.assert_allclose(model.beta, [1.0, -0.5, 0.25, 2.0], atol=1e-12)
    assert model.log_likelihood > 1e3
    assert model.std_errors.max() < 1e-6


@pytest.mark.parametrize(
    "p_value,stars",
    [(0.0005, "***"), (0.005, "**"), (0.03, "*"), (0.05, ""), (0.2, "")],
)
def test_significance_stars(p_value: float, stars: str):
    assert significance_stars(p_value) == stars


def test_estimator_registry():
    assert isinstance(EstimatorAPI.for_error_model("iid"), OLSEstimator)
    assert isinstance(EstimatorAPI.for_error_model("hac"), HACEstimator)
    assert isinstance(EstimatorAPI.for_error_model("ar1"), AR1Estimator)
    assert_fails(
        partial(EstimatorAPI.for_error_model, "garch"), [ConfigException]
    )


def test_fitted_model_json(tmp_path):
    X, y = _regression(phi=0.3)
    model = fit_ar1_ml(_design(X, y, ModelSpec(error_model="ar1")))
    model.to_json(tmp_path / "model.json")
    loaded = FittedModel.from_json(tmp_path / "model.json")
    np.testing.assert_array_equal(loaded.beta, model.beta)
    np.testing.assert_array_equal(loaded.cov, model.cov)
    assert loaded.phi == model.phi
    assert loaded.spec == model.spec
    assert loaded.columns == model.columns
    data = model.to_dict()
    # Reporting scale: x100 everywhere but the intercept.
    assert data["coefficients"]["intercept"] == pytest.approx(model.beta[0])
    assert data["coefficients"]["x1"] == pytest.approx(100.0 * model.beta[1])
    se = data["std_errors"]["x2"]
    assert se == pytest.approx(100.0 * model.std_errors[2])


def test_fitted_model_json_fails(tmp_path):
    assert_fails(
        partial(FittedModel.from_json, tmp_path / "missing.json"),
        [ConfigException, FileNotFoundError],
    )
    (tmp_path / "bad.json").write_text("{not json")
    assert_fails(
        partial(FittedModel.from_json, tmp_path / "bad.json"),
        [ConfigException, json.JSONDecodeError],
    )
    (tmp_path / "partial.json").write_text('{"columns": ["intercept"]}')
    assert_fails(
        partial(FittedModel.from_json, tmp_path / "partial.json"),
        [ConfigException, KeyError],
    )


@pytest.mark.parametrize(
    "p,error_model,loglik,aic",
    [
        (84, "iid", 3884.95, -7597.89),
        (82, "iid", 3753.55, -7339.09),
        (84, "ar1", 4259.99, -8345.97),
    ],
)
def test_aic_parameter_count(
    p: int, error_model: str, loglik: float, aic: float
):
    """Reference fits count one parameter more than these designs hold."""
    model = FittedModel(
        columns=("intercept",),
        beta=np.zeros(1),
        cov=np.zeros((1, 1)),
        error_model=error_model,
        n=517,
        p=p + 1,
        s2=1.0,
        sigma2=1.0,
        phi=0.0,
        r_squared=0.0,
        log_likelihood=loglik,
        aic=0.0,
    )
    assert 2.0 * model.n_params - 2.0 * loglik == pytest.approx(aic, abs=0.02)


def test_ols_residuals_are_orthogonal(real_design: DesignMatrix):
    model = fit_ols(real_design)
    residuals = real_design.y - real_design.X @ model.beta
    scores = np.abs(real_design.X.T @ residuals) / real_design.n
    assert scores.max() < 1e-8


def test_model_statistics(real_design: DesignMatrix):
    for model in (fit_ols(real_design), fit_ar1_ml(real_design)):
        r2, loglik, aic = model_statistics(model, real_design)
        assert r2 == pytest.approx(model.r_squared, rel=1e-10)
        assert loglik == pytest.approx(model.log_likelihood, rel=1e-10)
        assert aic == pytest.approx(model.aic, rel=1e-10)


def test_model_statistics_fails(real_design: DesignMatrix):
    X, y = _regression()
    assert_fails(
        partial(model_statistics, fit_ols(_design(X, y)), real_design),
        [ConfigException],
    )


def test_real_design_fits(real_design: DesignMatrix):
    """AR(1) noise makes the AR(1) likelihood dominate."""
    ols = fit_ols(real_design)
    ar1 = fit_ar1_ml(real_design)
    assert ar1.log_likelihood > ols.log_likelihood
    assert ar1.aic < ols.aic
    assert 0.4 < ar1.phi < 0.8
    assert ols.n == 517 and ols.p == 84


def test_coefficient_table(real_design: DesignMatrix):
    table = coefficient_table(fit_ols(real_design))
    lines = table.splitlines()
    assert lines[1].startswith("intercept")
    assert any(line.startswith("temp_hinge") for line in lines)
    assert not any(line.startswith("week_5 ") for line in lines)
    assert any(line.startswith("week_13_x_2020") for line in lines)
    phi_line = next(line for line in lines if line.startswith("phi"))
    assert phi_line.split()[-1] == "NO"
    table = coefficient_table(fit_ols(real_design), include_week_fe=True)
    assert "week_5 " in table


def test_side_by_side_table(real_design: DesignMatrix):
    ar1 = fit_ar1_ml(real_design)
    no_temp = DesignMatrix(
        dates=real_design.dates,
        y=real_design.y,
        X=np.delete(real_design.X, [9, 10], axis=1),
        columns=real_design.columns[:9] + real_design.columns[11:],
        spec=ModelSpec.preset(2),
    )
    table = side_by_side_table({"Model 2": fit_ols(no_temp), "Model 3": ar1})
    lines = table.splitlines()
    assert "Model 2" in lines[0] and "Model 3" in lines[0]
    temp_line = next(line for line in lines if line.startswith("temp "))
    assert temp_line.split()[1] == "-"
    phi_line = next(line for line in lines if line.startswith("phi"))
    assert phi_line.split()[1:] == ["NO", f"{ar1.phi:.2f}"]
    n_line = next(line for line in lines if line.startswith("N "))
    assert n_line.split()[1:] == ["517", "517"]
