"""
Estimators for the log-load regression and the fitted-model container.

Three variants share one design:
  - OLS with the classical covariance s^2 (X'X)^-1,
  - OLS with a Newey-West (Bartlett kernel) HAC covariance,
  - regression with stationary AR(1) errors by exact maximum likelihood,
    concentrated over the coefficients and the innovation variance.

All least-squares solves go through an orthogonal (QR) decomposition.
Log-likelihoods use the ML variance convention SSR/n.
"""

import json
import logging
import pprint
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import numpy.typing as npt
from scipy.linalg import eigh, qr, solve_triangular  # type: ignore
from scipy.optimize import minimize_scalar  # type: ignore
from scipy.stats import norm  # type: ignore

from loadnowcast.core.consts import (
    AR1_BOUND,
    AR1_XTOL,
    INTERCEPT,
    PSD_TOLERANCE,
    RANK_TOLERANCE,
    REPORT_SCALE,
    SIGNIFICANCE_STARS,
)
from loadnowcast.core.exceptions import ConfigException, NumericalException
from loadnowcast.libs.libestapi import EstimatorAPI
from loadnowcast.libs.libregress.features import DesignMatrix, ModelSpec


logger = logging.getLogger(__name__)

Matrix = npt.NDArray[np.float64]
Vector = npt.NDArray[np.float64]
LOG_2PI = float(np.log(2.0 * np.pi))


class SingularMatrixException(NumericalException):
    """The design (or whitened design) is rank deficient."""


class InsufficientDataException(NumericalException):
    """Not more observations than parameters."""


class StationarityException(NumericalException):
    """An autoregressive parameter with |phi| >= 1."""


class LagException(NumericalException):
    """A HAC lag that is negative or not smaller than the sample size."""


class ConvergenceException(NumericalException):
    """The likelihood optimizer failed. `trace` holds `(phi, loglik)` pairs."""

    trace: list[tuple[float, float]]

    def __init__(self, trace: list[tuple[float, float]], *args: object) -> None:
        self.trace = trace
        super().__init__(*args)


@dataclass(frozen=True, eq=False)
class FittedModel:  # pylint: disable=too-many-instance-attributes
    """
    Coefficients, covariance, scale parameters and fit statistics of one
    fitted variant, aligned to the design `columns`.
    """

    columns: tuple[str, ...]
    beta: Vector
    cov: Matrix
    error_model: str
    n: int
    p: int
    s2: float
    """Residual variance SSR/(n - p) on the original scale."""
    sigma2: float
    """ML innovation variance: SSR/n (OLS) or whitened SSR/n (AR(1))."""
    phi: float
    r_squared: float
    log_likelihood: float
    aic: float
    spec: ModelSpec = field(default_factory=ModelSpec)
    hac_max_lag: Optional[int] = None

    @property
    def n_params(self) -> int:
        """Parameters counted by the AIC, variance and phi included."""
        return self.p + (2 if self.error_model == "ar1" else 1)

    @property
    def marginal_variance(self) -> float:
        """Variance of the regression error u_t used for retransformation."""
        if self.error_model == "ar1":
            return self.sigma2 / (1.0 - self.phi**2)
        return self.s2

    @property
    def std_errors(self) -> Vector:
        """Square roots of the covariance diagonal."""
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    @property
    def z_stats(self) -> Vector:
        """Coefficient over standard error (0 where the error is 0)."""
        se = self.std_errors
        return np.divide(
            self.beta, se, out=np.zeros_like(self.beta), where=se > 0
        )

    @property
    def p_values(self) -> Vector:
        """Two-sided p-values under the normal approximation."""
        return 2.0 * norm.sf(np.abs(self.z_stats))

    def index(self, name: str) -> int:
        """Position of coefficient `name`."""
        try:
            return self.columns.index(name)
        except ValueError as e:
            raise ConfigException(f"No coefficient named {name!r}\n") from e

    def coefficient(self, name: str) -> float:
        """Natural-scale estimate of `name`."""
        return float(self.beta[self.index(name)])

    def to_dict(self) -> dict[str, Any]:
        """
        JSON-ready representation. `coefficients` follows the reporting
        convention (x100 except the intercept); `estimates` keeps the
        natural scale at full precision and is what `from_dict` reads.
        """
        scale = np.where(np.array(self.columns) == INTERCEPT, 1.0, REPORT_SCALE)
        return {
            "error_model": self.error_model,
            "coefficient_scale": {
                "multiplier": REPORT_SCALE,
                "except": [INTERCEPT],
            },
            "coefficients": dict(
                zip(self.columns, (self.beta * scale).tolist())
            ),
            "std_errors": dict(
                zip(self.columns, (self.std_errors * scale).tolist())
            ),
            "columns": list(self.columns),
            "estimates": self.beta.tolist(),
            "covariance": self.cov.tolist(),
            "n": self.n,
            "p": self.p,
            "s2": self.s2,
            "sigma2": self.sigma2,
            "phi": self.phi,
            "r_squared": self.r_squared,
            "log_likelihood": self.log_likelihood,
            "aic": self.aic,
            "hac_max_lag": self.hac_max_lag,
            "spec": self.spec.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "FittedModel":
        """Inverse of `to_dict`."""
        try:
            return cls(
                columns=tuple(data["columns"]),
                beta=np.array(data["estimates"], dtype=np.float64),
                cov=np.array(data["covariance"], dtype=np.float64),
                error_model=data["error_model"],
                n=int(data["n"]),
                p=int(data["p"]),
                s2=float(data["s2"]),
                sigma2=float(data["sigma2"]),
                phi=float(data["phi"]),
                r_squared=float(data["r_squared"]),
                log_likelihood=float(data["log_likelihood"]),
                aic=float(data["aic"]),
                spec=ModelSpec.from_dict(data["spec"]),
                hac_max_lag=data.get("hac_max_lag"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigException(
                "Fitted model JSON is missing or has invalid fields\n"
            ) from e

    def to_json(self, path: Union[str, Path]) -> None:
        """Writes `to_dict` as stable, sorted JSON."""
        with open(path, "wt", encoding="utf-8") as file:
            json.dump(self.to_dict(), file, indent=2, sort_keys=True)
            file.write("\n")

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "FittedModel":
        """Reads a model written by `to_json`."""
        try:
            with open(path, "rt", encoding="utf-8") as file:
                data: Any = json.load(file)
        except FileNotFoundError as e:
            raise ConfigException(f"Could not open file at {path}\n") from e
        except json.JSONDecodeError as e:
            raise ConfigException(f"Could not decode JSON at {path}\n") from e
        return cls.from_dict(data)


def significance_stars(p_value: float) -> str:
    """`***`, `**`, `*` at 0.001, 0.01, 0.05; empty otherwise."""
    return next(
        (stars for level, stars in SIGNIFICANCE_STARS if p_value < level), ""
    )


def _qr_factor(X: Matrix) -> tuple[Matrix, Matrix]:
    """Economic QR, raising on a numerically singular R."""
    Q, R = qr(X, mode="economic")
    diag = np.abs(np.diag(R))
    if diag.size and diag.min() <= RANK_TOLERANCE * diag.max():
        raise SingularMatrixException(
            "Design is numerically singular: smallest |R_ii| = "
            + f"{diag.min():.3e}, largest = {diag.max():.3e}\n"
        )
    return Q, R


def _inverse_gram(R: Matrix) -> Matrix:
    """(X'X)^-1 = R^-1 R^-T from the triangular factor."""
    R_inv = solve_triangular(R, np.eye(R.shape[0]))
    return R_inv @ R_inv.T


def _least_squares(X: Matrix, y: Vector) -> tuple[Vector, Vector, Matrix]:
    """Coefficients, residuals and (X'X)^-1."""
    n, p = X.shape
    if n <= p:
        raise InsufficientDataException(
            f"Need more observations than parameters: n = {n}, p = {p}\n"
        )
    Q, R = _qr_factor(X)
    beta = solve_triangular(R, Q.T @ y)
    return beta, y - X @ beta, _inverse_gram(R)


def gaussian_loglik(ssr: float, n: int) -> float:
    """Concentrated Gaussian log-likelihood with sigma^2 = SSR/n."""
    return -0.5 * n * (LOG_2PI + np.log(ssr / n) + 1.0)


def _r_squared(y: Vector, residuals: Vector) -> float:
    tss = float(np.sum((y - y.mean()) ** 2))
    ssr = float(residuals @ residuals)
    return 1.0 - ssr / tss if tss > 0 else 1.0


def fit_ols(design: DesignMatrix) -> FittedModel:
    """
    Ordinary least squares with the classical covariance s^2 (X'X)^-1,
    s^2 = SSR/(n - p).

    Raises
    ------
    SingularMatrixException
        If the design is rank deficient.

    InsufficientDataException
        If n <= p.
    """
    X, y = design.X, design.y
    beta, residuals, gram_inv = _least_squares(X, y)
    n, p = X.shape
    ssr = float(residuals @ residuals)
    s2 = ssr / (n - p)
    loglik = gaussian_loglik(ssr, n) if ssr > 0 else np.inf
    cov = s2 * gram_inv
    model = FittedModel(
        columns=design.columns,
        beta=beta,
        cov=(cov + cov.T) / 2.0,
        error_model="iid",
        n=n,
        p=p,
        s2=s2,
        sigma2=ssr / n,
        phi=0.0,
        r_squared=_r_squared(y, residuals),
        log_likelihood=loglik,
        aic=2.0 * (p + 1) - 2.0 * loglik,
        spec=design.spec,
    )
    logger.info(
        "OLS fit: n = %d, p = %d, R2 = %.4f, loglik = %.2f",
        n,
        p,
        model.r_squared,
        loglik,
    )
    return model


def bartlett_weights(max_lag: int) -> Vector:
    """Kernel weights 1 - j/(max_lag + 1) for j = 0..max_lag."""
    return 1.0 - np.arange(max_lag + 1) / (max_lag + 1.0)


def repair_psd(cov: Matrix, what: str = "covariance") -> Matrix:
    """
    Symmetrizes `cov` and, when it has eigenvalues below `-PSD_TOLERANCE`,
    clips the negative ones to zero with a warning.
    """
    cov = (cov + cov.T) / 2.0
    values, vectors = eigh(cov)
    if values.min() < -PSD_TOLERANCE:
        logger.warning(
            "%s has %d negative eigenvalues (min %.3e); clipping to zero",
            what,
            int(np.sum(values < 0)),
            values.min(),
        )
        cov = (vectors * np.clip(values, 0.0, None)) @ vectors.T
        cov = (cov + cov.T) / 2.0
    return cov


def _as_matrix(X: Union[DesignMatrix, Matrix]) -> Matrix:
    return X.X if isinstance(X, DesignMatrix) else np.asarray(X, np.float64)


def hac_covariance(
    X: Union[DesignMatrix, Matrix], residuals: Vector, max_lag: int
) -> Matrix:
    """
    Newey-West sandwich (X'X)^-1 S (X'X)^-1 with
    S = sum_j w_j (G_j + G_j') over Bartlett weights, G_0 counted once.

    `max_lag = 0` gives White's heteroscedasticity-robust covariance.

    Raises
    ------
    LagException
        If `max_lag` is negative or not smaller than n.
    """
    X = _as_matrix(X)
    residuals = np.asarray(residuals, dtype=np.float64)
    n = X.shape[0]
    if max_lag < 0 or max_lag >= n:
        raise LagException(
            f"HAC max_lag must be in [0, {n - 1}], got {max_lag}\n"
        )
    _, R = _qr_factor(X)
    bread = _inverse_gram(R)
    scores = X * residuals[:, None]
    weights = bartlett_weights(max_lag)
    meat = scores.T @ scores
    for j in range(1, max_lag + 1):
        gamma = scores[j:].T @ scores[:-j]
        meat += weights[j] * (gamma + gamma.T)
    return repair_psd(bread @ meat @ bread, "HAC covariance")


def white_covariance(
    X: Union[DesignMatrix, Matrix], residuals: Vector
) -> Matrix:
    """Heteroscedasticity-robust (HC0) covariance."""
    return hac_covariance(X, residuals, 0)


def ar1_whiten(M: npt.ArrayLike, phi: float) -> npt.NDArray[np.float64]:
    """
    Prais-Winsten transform: the first row scaled by sqrt(1 - phi^2),
    every later row quasi-differenced.
    """
    M = np.asarray(M, dtype=np.float64)
    out = np.empty_like(M)
    out[0] = np.sqrt(1.0 - phi**2) * M[0]
    out[1:] = M[1:] - phi * M[:-1]
    return out


def _ar1_profile(
    y: Vector, X: Matrix, phi: float
) -> tuple[float, Vector, float, Matrix]:
    """Log-likelihood, beta, sigma^2 and (X~'X~)^-1 at `phi`."""
    if not -1.0 < phi < 1.0:
        raise StationarityException(
            f"AR(1) parameter must satisfy |phi| < 1, got {phi}\n"
        )
    beta, residuals, gram_inv = _least_squares(
        ar1_whiten(X, phi), ar1_whiten(y, phi)
    )
    n = len(y)
    sigma2 = float(residuals @ residuals) / n
    loglik = gaussian_loglik(sigma2 * n, n) + 0.5 * np.log(1.0 - phi**2)
    return float(loglik), beta, sigma2, gram_inv


def ar1_profile_loglik(
    X: DesignMatrix, phi: float
) -> tuple[float, Vector, float]:
    """
    Exact Gaussian log-likelihood of the regression with stationary AR(1)
    errors at `phi`, concentrated over beta and sigma^2.

    Returns
    -------
    tuple[float, ndarray, float]
        Log-likelihood, beta(phi) and sigma^2(phi).

    Raises
    ------
    StationarityException
        If |phi| >= 1.
    """
    loglik, beta, sigma2, _ = _ar1_profile(X.y, X.X, phi)
    return loglik, beta, sigma2


def fit_ar1_ml(design: DesignMatrix) -> FittedModel:
    """
    Maximum likelihood with AR(1) errors.

    phi is found by a coarse grid over (-0.999, 0.999) followed by bounded
    Brent refinement around the best grid point (tolerance 1e-6). The
    coefficient covariance is the GLS covariance sigma^2 (X~'X~)^-1 at phi.

    Raises
    ------
    ConvergenceException
        If the bounded optimizer reports failure; carries the evaluation trace.
    """
    y, X = design.y, design.X
    trace: list[tuple[float, float]] = []

    def negative(phi: float) -> float:
        loglik = _ar1_profile(y, X, phi)[0]
        trace.append((float(phi), loglik))
        return -loglik

    grid = np.linspace(-AR1_BOUND, AR1_BOUND, 41)
    best = int(np.argmin([negative(phi) for phi in grid]))
    low = grid[max(best - 1, 0)]
    high = grid[min(best + 1, len(grid) - 1)]
    result = minimize_scalar(
        negative,
        bounds=(low, high),
        method="bounded",
        options={"xatol": AR1_XTOL},
    )
    logger.debug("AR(1) likelihood trace:\n%s", pprint.pformat(trace))
    if not result.success:
        raise ConvergenceException(
            trace,
            f"AR(1) likelihood maximization failed: {result.message}\n"
            + f"Last evaluations:\n{pprint.pformat(trace[-10:])}\n",
        )
    phi = float(result.x)
    if abs(phi) > AR1_BOUND - 10 * AR1_XTOL:
        logger.warning("AR(1) estimate phi = %.6f is at the search bound", phi)
    loglik, beta, sigma2, gram_inv = _ar1_profile(y, X, phi)
    n, p = X.shape
    residuals = y - X @ beta
    cov = sigma2 * gram_inv
    model = FittedModel(
        columns=design.columns,
        beta=beta,
        cov=(cov + cov.T) / 2.0,
        error_model="ar1",
        n=n,
        p=p,
        s2=float(residuals @ residuals) / (n - p),
        sigma2=sigma2,
        phi=phi,
        r_squared=_r_squared(y, residuals),
        log_likelihood=loglik,
        aic=2.0 * (p + 2) - 2.0 * loglik,
        spec=design.spec,
    )
    logger.info("AR(1) fit: phi = %.4f, loglik = %.2f", phi, loglik)
    return model


def model_statistics(
    model: FittedModel, X: DesignMatrix
) -> tuple[float, float, float]:
    """
    Recomputes `(r_squared, log_likelihood, aic)` of `model` on `X`.

    R^2 is always measured on the original (unwhitened) scale, so for the
    AR(1) variant it is not comparable with the OLS ones.
    """
    if model.columns != X.columns:
        raise ConfigException("Model and design columns do not match\n")
    residuals = X.y - X.X @ model.beta
    r_squared = _r_squared(X.y, residuals)
    if model.error_model == "ar1":
        whitened = ar1_whiten(residuals, model.phi)
        ssr = float(whitened @ whitened)
        loglik = gaussian_loglik(ssr, X.n) + 0.5 * np.log(1.0 - model.phi**2)
    else:
        ssr = float(residuals @ residuals)
        loglik = gaussian_loglik(ssr, X.n) if ssr > 0 else np.inf
    return r_squared, float(loglik), 2.0 * model.n_params - 2.0 * float(loglik)


class OLSEstimator(EstimatorAPI[DesignMatrix, FittedModel]):
    """OLS with the classical covariance."""

    error_model = "iid"

    def fit(self, design: DesignMatrix) -> FittedModel:
        return fit_ols(design)


class HACEstimator(EstimatorAPI[DesignMatrix, FittedModel]):
    """OLS coefficients with a Newey-West covariance."""

    error_model = "hac"

    def __init__(self, max_lag: Optional[int] = None) -> None:
        self.max_lag = max_lag

    def fit(self, design: DesignMatrix) -> FittedModel:
        model = fit_ols(design)
        max_lag = (
            design.spec.hac_max_lag if self.max_lag is None else self.max_lag
        )
        residuals = design.y - design.X @ model.beta
        return replace(
            model,
            cov=hac_covariance(design, residuals, max_lag),
            error_model="hac",
            hac_max_lag=max_lag,
        )


class AR1Estimator(EstimatorAPI[DesignMatrix, FittedModel]):
    """AR(1) errors by exact maximum likelihood."""

    error_model = "ar1"

    def fit(self, design: DesignMatrix) -> FittedModel:
        return fit_ar1_ml(design)


def fit_model(design: DesignMatrix) -> FittedModel:
    """Fits `design` with the estimator its spec names."""
    return EstimatorAPI.for_error_model(design.spec.error_model)(design)


def coefficient_table(model: FittedModel, include_week_fe: bool = False) -> str:
    """
    Coefficient table in the reporting convention: values and standard
    errors x100 (except the intercept) with significance stars, followed by
    phi (AR(1) only), R^2, log-likelihood and AIC.
    """
    return side_by_side_table({"Model": model}, include_week_fe)


def side_by_side_table(
    models: dict[str, FittedModel], include_week_fe: bool = False
) -> str:
    """Several fitted models as adjacent columns of one table."""
    names: list[str] = []
    for model in models.values():
        for name in model.columns:
            keep = include_week_fe or not (
                name.startswith("week_") and "_x_" not in name
            )
            if keep and name not in names:
                names.append(name)
    width = 22
    lines = [
        f"{'':<16}" + "".join(f"{label:>{width}}" for label in models),
    ]
    for name in names:
        cells = []
        for model in models.values():
            if name not in model.columns:
                cells.append(f"{'-':>{width}}")
                continue
            i = model.index(name)
            scale = 1.0 if name == INTERCEPT else REPORT_SCALE
            cell = (
                f"{model.beta[i] * scale:.2f}"
                + f"{significance_stars(model.p_values[i]):<3}"
                + f" ({model.std_errors[i] * scale:.2f})"
            )
            cells.append(f"{cell:>{width}}")
        lines.append(f"{name:<16}" + "".join(cells))
    footer: list[tuple[str, list[str]]] = [
        (
            "phi",
            [
                f"{m.phi:.2f}" if m.error_model == "ar1" else "NO"
                for m in models.values()
            ],
        ),
        ("R2", [f"{m.r_squared:.3f}" for m in models.values()]),
        ("Log-lik", [f"{m.log_likelihood:.2f}" for m in models.values()]),
        ("AIC", [f"{m.aic:.2f}" for m in models.values()]),
        ("N", [str(m.n) for m in models.values()]),
    ]
    for label, cells in footer:
        lines.append(f"{label:<16}" + "".join(f"{c:>{width}}" for c in cells))
    lines.append(
        "Coefficients and standard errors x100 except the intercept; "
        + "* p<0.05, ** p<0.01, *** p<0.001 (normal approximation)."
    )
    return "\n".join(lines) + "\n"
