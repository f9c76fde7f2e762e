import logging
from functools import partial
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from src.goodies import derive_rng
from src.kernel_smoothing import KernelSpec, default_bandwidth_grid, loo_cv_bandwidth, nw_weights, rate_bandwidths
from src.user_errors import (
    DegenerateWindowError,
    FitFailureError,
    InvalidArgumentError,
    RankDeficiencyError,
)
from src.user_types import NullModelFit, Sample, TestConfig, make_sample

log = logging.getLogger(__name__)

RESTARTS = 5
RESTART_SEED = 20100315  # fixed: refits must be deterministic


def _require(sample: Sample, k: int = 1, min_d: int = 1):
    if sample.k != k:
        raise InvalidArgumentError(f"This null model needs {k} response column, got {sample.k}.")
    if sample.d < min_d:
        raise InvalidArgumentError(f"This null model needs at least {min_d} covariates, got {sample.d}.")


def _check_fitted(kind: str, fitted: np.ndarray) -> np.ndarray:
    bad = np.flatnonzero(~np.all(np.isfinite(fitted), axis=1))
    if bad.size:
        raise FitFailureError(f"The {kind} fit has non-finite values at {bad.size} observations.", bad)
    return fitted


def _smoother(X: np.ndarray, points: np.ndarray, b: float, spec: KernelSpec) -> np.ndarray:
    """Row-normalized NW weights, failing with the indices of the empty windows."""
    W = nw_weights(X, points, b, spec)
    totals = W.sum(axis=1)
    empty = np.flatnonzero(totals <= 0)
    if empty.size:
        raise FitFailureError(
            f"Empty nuisance windows at bandwidth {b} for {empty.size} points.", empty
        )
    return W / totals[:, None]


# Fully parametric linear null


def fit_parametric_linear(sample: Sample) -> NullModelFit:
    """Ordinary least squares of Y on (1, X)."""
    _require(sample)
    design = np.column_stack([np.ones(sample.n), sample.X])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise RankDeficiencyError(f"The linear design of rank < {design.shape[1]} is singular.")
    theta = np.linalg.lstsq(design, sample.Y[:, 0], rcond=None)[0]
    fitted = _check_fitted("linear", (design @ theta)[:, None])
    return NullModelFit("linear", theta, None, fitted, fit_parametric_linear, None, 1)


# Partially linear null: Y = θ₀ + θ₁ᵀX_lin + g(X_d)


def _partially_linear_curve(x_d, X_d, residual, b, spec, centre) -> np.ndarray:
    W = _smoother(X_d, np.reshape(x_d, (-1, 1)), b, spec)
    return W @ residual - centre


def fit_partially_linear(sample: Sample, b: float, spec: KernelSpec) -> NullModelFit:
    """
    Profile least squares for the partially linear model, the last covariate being nonparametric.

    The nuisance estimate ĝ(x, θ) = Σᵢ Wᵢ(x)(Yᵢ - θ₁ᵀXᵢ) is recentred so that its sample mean
    vanishes. Since it is affine in θ, minimizing the profiled sum of squares is an ordinary least
    squares problem on the partialled-out responses and regressors.
    """
    _require(sample, min_d=2)
    (X_lin, X_d) = (sample.X[:, :-1], sample.X[:, -1:])
    y = sample.Y[:, 0]
    S = _smoother(X_d, X_d, b, spec)
    (S_y, S_X) = (S @ y, S @ X_lin)
    y_tilde = y - S_y + S_y.mean()
    X_tilde = X_lin - S_X + S_X.mean(axis=0)
    design = np.column_stack([np.ones(sample.n), X_tilde])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise RankDeficiencyError("The partialled-out linear design is singular.")
    theta = np.linalg.lstsq(design, y_tilde, rcond=None)[0]
    residual = y - X_lin @ theta[1:]
    h_at_sample = S @ residual
    g_hat = partial(_partially_linear_curve, X_d=X_d, residual=residual, b=b, spec=spec, centre=h_at_sample.mean())
    g_values = h_at_sample - h_at_sample.mean()
    fitted = _check_fitted("partially linear", (theta[0] + X_lin @ theta[1:] + g_values)[:, None])
    refit = partial(fit_partially_linear, b=b, spec=spec)
    return NullModelFit("plm", theta, g_hat, fitted, refit, b, 1)


# Single-index null: Y = g(θᵀX), ‖θ‖ = 1


def _unit_vector(angles: np.ndarray) -> np.ndarray:
    """Hyperspherical coordinates to a point of the unit sphere."""
    angles = np.atleast_1d(angles)
    sines = np.concatenate([[1.0], np.cumprod(np.sin(angles))])
    cosines = np.concatenate([np.cos(angles), [1.0]])
    return sines * cosines


def _angles(theta: np.ndarray) -> np.ndarray:
    theta = theta / np.linalg.norm(theta)
    angles = []
    for j in range(len(theta) - 1):
        angles.append(np.arctan2(np.linalg.norm(theta[j + 1 :]), theta[j]))
    if len(theta) > 1 and theta[-1] < 0:
        angles[-1] = 2 * np.pi - angles[-1]
    return np.array(angles)


def _fix_sign(theta: np.ndarray) -> np.ndarray:
    nonzero = np.flatnonzero(np.abs(theta) > 1e-15)
    if nonzero.size and theta[nonzero[0]] < 0:
        theta = -theta
    return theta / np.linalg.norm(theta)


def _index_curve(u, index, y, b, spec) -> np.ndarray:
    W = _smoother(index, np.reshape(u, (-1, 1)), b, spec)
    return W @ y


def _index_loss(angles: np.ndarray, X: np.ndarray, y: np.ndarray, b: float, spec: KernelSpec) -> float:
    index = X @ _unit_vector(angles)
    W = nw_weights(index, index, b, spec)
    predictions = W @ y / W.sum(axis=1)
    return float(np.sum((y - predictions) ** 2))


def _ols_direction(sample: Sample) -> np.ndarray:
    design = np.column_stack([np.ones(sample.n), sample.X])
    slope = np.linalg.lstsq(design, sample.Y[:, 0], rcond=None)[0][1:]
    if not np.linalg.norm(slope) > 0:
        slope = np.eye(sample.d)[0]
    return _fix_sign(slope)


def fit_single_index(sample: Sample, b: float, spec: KernelSpec, restarts: int = RESTARTS) -> NullModelFit:
    """
    Minimize Σᵢ(Yᵢ - ĝ(θᵀXᵢ, θ))² over the unit sphere, ĝ being the NW smooth of Y on the index.

    The search runs Nelder–Mead on the d - 1 angular coordinates of θ, started from the OLS
    direction and from random angles drawn from a fixed stream.

    Raises:
        FitFailureError: no start converges.
    """
    _require(sample, min_d=2)
    y = sample.Y[:, 0]
    rng = derive_rng(RESTART_SEED, sample.d)
    starts = [_angles(_ols_direction(sample))]
    starts += [rng.uniform(0, np.pi, sample.d - 1) for _ in range(restarts - 1)]
    best = None
    for start in starts:
        result = minimize(
            _index_loss,
            start,
            args=(sample.X, y, b, spec),
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 2000 * sample.d},
        )
        if result.success and np.isfinite(result.fun) and (best is None or result.fun < best.fun):
            best = result
    if best is None:
        raise FitFailureError(f"The single-index search did not converge from {len(starts)} starts.")
    theta = _fix_sign(_unit_vector(best.x))
    index = sample.X @ theta
    g_hat = partial(_index_curve, index=index, y=y, b=b, spec=spec)
    fitted = _check_fitted("single-index", g_hat(index)[:, None])
    refit = partial(fit_single_index, b=b, spec=spec, restarts=restarts)
    return NullModelFit("single-index", theta, g_hat, fitted, refit, b, 1)


# Variable selection null: E(Y|X) depends on the first d1 covariates only


def _selected_curve(x, X_1, y, b, spec) -> np.ndarray:
    W = _smoother(X_1, np.reshape(x, (-1, X_1.shape[1])), b, spec)
    return W @ y


def fit_variable_selection_null(sample: Sample, d1: int, b: float, spec: KernelSpec) -> NullModelFit:
    _require(sample)
    if not 1 <= d1 <= sample.d:
        raise InvalidArgumentError(f"Expected 1 <= d1 <= {sample.d}, got {d1}.")
    X_1 = sample.X[:, :d1]
    y = sample.Y[:, 0]
    g_hat = partial(_selected_curve, X_1=X_1, y=y, b=b, spec=spec)
    fitted = _check_fitted("variable selection", g_hat(X_1)[:, None])
    refit = partial(fit_variable_selection_null, d1=d1, b=b, spec=spec)
    return NullModelFit("varsel", np.empty(0), g_hat, fitted, refit, b, 1)


# Joint mean and variance null: responses (Z, vec ZZᵀ)


def constant_variance(residuals: np.ndarray) -> np.ndarray:
    """Σ̂ = n⁻¹ Σᵢ ε̂ᵢε̂ᵢᵀ."""
    residuals = np.reshape(residuals, (len(residuals), -1))
    sigma = residuals.T @ residuals / len(residuals)
    if not np.all(np.isfinite(sigma)):
        raise FitFailureError("The residual second moments are not finite.")
    return sigma


def mean_variance_responses(Z: np.ndarray) -> np.ndarray:
    """(Zᵢ, vec ZᵢZᵢᵀ), vec stacking the columns."""
    Z = np.reshape(Z, (len(Z), -1))
    outer = np.einsum("ni,nj->nji", Z, Z).reshape(len(Z), -1)
    return np.column_stack([Z, outer])


def _mean_variance_fitted(r: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    second = sigma.T.ravel()[None, :] + np.einsum("ni,nj->nji", r, r).reshape(len(r), -1)
    return np.column_stack([r, second])


def _refit_mean_variance(sample: Sample, inner_refit: Callable, variance_model: Callable, k1: int) -> NullModelFit:
    inner = inner_refit(make_sample(sample.X, sample.Y[:, :k1]))
    return build_mean_variance_model(make_sample(sample.X, sample.Y[:, :k1]), inner, variance_model)[1]


def build_mean_variance_model(
    sample_scalar: Sample,
    inner_fit: NullModelFit,
    variance_model: Callable[[np.ndarray], np.ndarray] = constant_variance,
) -> Tuple[Sample, NullModelFit]:
    """
    Stack a mean null r and a variance null Σ into the joint null m = (r, vec{Σ + rrᵀ}).

    Returns:
        The sample with responses (Z, vec ZZᵀ) and the matching fit. Bootstrap resamples act on
        the k₁ columns of Z, the remaining responses being rebuilt by `response_map`.
    """
    Z = sample_scalar.Y
    k1 = Z.shape[1]
    r = inner_fit.fitted
    sigma = np.atleast_2d(variance_model(Z - r))
    fitted = _mean_variance_fitted(r, sigma)
    if not np.all(np.isfinite(fitted)):
        raise FitFailureError("The mean-variance fitted values are not finite.")
    sample = Sample(sample_scalar.X, mean_variance_responses(Z))
    refit = partial(_refit_mean_variance, inner_refit=inner_fit.refit, variance_model=variance_model, k1=k1)
    fit = NullModelFit(
        kind="mean-variance",
        theta_hat=np.concatenate([inner_fit.theta_hat, sigma.T.ravel()]),
        g_hat=inner_fit.g_hat,
        fitted=fitted,
        refit=refit,
        nuisance_bandwidth=inner_fit.nuisance_bandwidth,
        base_columns=k1,
        response_map=mean_variance_responses,
    )
    return (sample, fit)


# Dispatch


def select_nuisance_bandwidth(sample: Sample, kind: str, spec: KernelSpec, d1: int = 1, grid_size: int = 20) -> Optional[float]:
    """LOO-CV bandwidth of the response on the covariates the nuisance curve depends on."""
    if kind == "linear":
        return None
    if kind in ("plm", "mean-variance"):
        if sample.d < 2:
            return None
        covariates = sample.X[:, -1:]
    elif kind == "varsel":
        covariates = sample.X[:, :d1]
    elif kind == "single-index":
        covariates = (sample.X @ _ols_direction(sample))[:, None]
    else:
        raise InvalidArgumentError(f"Unknown model kind '{kind}'.")
    grid = default_bandwidth_grid(covariates, grid_size)
    try:
        return loo_cv_bandwidth(covariates, sample.Y[:, 0], spec, grid)
    except DegenerateWindowError as e:
        raise FitFailureError(str(e))


def check_bandwidth_rates(h: float, b: Optional[float], d: int, n: int) -> List[str]:
    """Warn when hᵈ/b or b/h is too large for the nuisance estimate to be negligible."""
    if b is None:
        return []
    violations = []
    if h**d / b > 1:
        violations.append(f"h^d/b = {h**d / b:.3g} exceeds 1")
    if b / h > n ** (1 / 10):
        violations.append(f"b/h = {b / h:.3g} exceeds n^(1/10) = {n ** (1 / 10):.3g}")
    if violations:
        (h_rate, b_rate) = rate_bandwidths(n, d)
        for violation in violations:
            log.warning(
                f"Bandwidth rates (h={h}, b={b}, n={n}): {violation}. "
                f"Rate-guided orders are h ~ {h_rate:.3g} and b ~ {b_rate:.3g}."
            )
    return violations


def fit_null(sample: Sample, kind: str, config: TestConfig, spec: KernelSpec) -> Tuple[Sample, NullModelFit]:
    """
    Fit the null model of the given kind.

    Returns:
        The sample the test runs on (for mean-variance, responses become (Z, vec ZZᵀ)) and the fit.
    """
    b = config.b
    if b is None:
        b = select_nuisance_bandwidth(sample, kind, spec, config.d1, config.cv_grid)
        log.info(f"Nuisance bandwidth selected by cross-validation: {b}.")
    if kind == "linear":
        return (sample, fit_parametric_linear(sample))
    if kind == "plm":
        return (sample, fit_partially_linear(sample, b, spec))
    if kind == "single-index":
        return (sample, fit_single_index(sample, b, spec))
    if kind == "varsel":
        return (sample, fit_variable_selection_null(sample, config.d1, b, spec))
    if kind == "mean-variance":
        if sample.k != 1:
            raise InvalidArgumentError(f"The mean-variance null needs one response column, got {sample.k}.")
        inner = fit_partially_linear(sample, b, spec) if b is not None else fit_parametric_linear(sample)
        return build_mean_variance_model(sample, inner)
    raise InvalidArgumentError(f"Unknown model kind '{kind}'.")
