import logging
from math import sqrt
from typing import Iterable, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from src.empirical_likelihood import bandwidth_grid, quadrature_grid, sup_statistic
from src.goodies import derive_rng, plural, upper_rank
from src.kernel_smoothing import KernelSpec, loo_cv_bandwidth, nw_fit
from src.null_models import check_bandwidth_rates, fit_null
from src.user_errors import (
    BootstrapReplicateError,
    CalibrationUnreliableError,
    InputError,
    InvalidArgumentError,
    NumericalError,
)
from src.user_types import (
    BandwidthVector,
    BootstrapConfig,
    BootstrapResult,
    NullModelFit,
    QuadratureGrid,
    Sample,
    TestConfig,
    TestOutcome,
    WeightFunction,
)

log = logging.getLogger(__name__)

MAX_FAILURE_SHARE = 0.05

# Mammen's two-point law: mean 0, variance 1, third moment 1.
MAMMEN_LOW = (1 - sqrt(5)) / 2
MAMMEN_HIGH = (1 + sqrt(5)) / 2
MAMMEN_P_LOW = (sqrt(5) + 1) / (2 * sqrt(5))


def wild_multipliers(n: int, k: int, cfg: BootstrapConfig, rep_index: int) -> np.ndarray:
    """
    n×k i.i.d. multipliers with mean 0 and variance 1.

    The stream depends on (seed, rep_index) only, so that replicates can run in any order.
    """
    if n < 1 or k < 1:
        raise InvalidArgumentError(f"Expected positive dimensions, got n={n} and k={k}.")
    rng = derive_rng(cfg.seed, rep_index)
    if cfg.multiplier == "mammen":
        return np.where(rng.random((n, k)) < MAMMEN_P_LOW, MAMMEN_LOW, MAMMEN_HIGH)
    return rng.integers(0, 2, size=(n, k)) * 2.0 - 1.0


def nonparametric_residuals(sample: Sample, h: float, spec: KernelSpec) -> np.ndarray:
    """ε̂ᵢ = Yᵢ - m̂(Xᵢ), m̂ being the NW regression of Y on X."""
    return sample.Y - nw_fit(sample.X, sample.Y, sample.X, h, spec)


def bootstrap_statistic(
    sample: Sample,
    fit: NullModelFit,
    residuals_hat: np.ndarray,
    h_grid: Iterable[BandwidthVector],
    spec: KernelSpec,
    pi: WeightFunction,
    quad: Optional[QuadratureGrid],
    cfg: BootstrapConfig,
    rep_index: int,
) -> float:
    """
    Sup statistic on the wild-bootstrap resample Yᵢ* = m(Xᵢ, θ̂, ĝ) + ε̂ᵢ∘Gᵢ.

    For derived-response nulls, the resample is drawn on the first `fit.base_columns` responses
    and the remaining ones are rebuilt through `fit.response_map`.

    Raises:
        BootstrapReplicateError: the refit or the statistic failed on the resample.
    """
    base = fit.base_columns
    G = wild_multipliers(sample.n, base, cfg, rep_index)
    Y_star = fit.fitted[:, :base] + residuals_hat[:, :base] * G
    if fit.response_map is not None:
        Y_star = fit.response_map(Y_star)
    resample = Sample(sample.X, Y_star)
    try:
        fit_star = fit.refit(resample)
        return sup_statistic(resample, fit_star, h_grid, spec, pi, quad).value
    except (NumericalError, InputError) as e:
        raise BootstrapReplicateError(f"Replicate {rep_index}: {e}") from e


def _replicate(*args) -> Tuple[Optional[float], str]:
    try:
        return (bootstrap_statistic(*args), "")
    except BootstrapReplicateError as e:
        return (None, str(e))


def calibrate(xi_star, observed: float, alpha: float) -> BootstrapResult:
    """
    Upper-α bootstrap quantile, p-value and decision.

    q̂ is the ⌈N(1-α)⌉-th smallest replicate and p = (1 + #{ξ* ≥ observed}) / (N + 1).
    """
    xi_star = np.asarray(xi_star, dtype=float)
    N = len(xi_star)
    if N < 1:
        raise InvalidArgumentError("No bootstrap replicate to calibrate on.")
    q_hat = float(np.sort(xi_star)[upper_rank(N, alpha) - 1])
    p_value = (1 + int(np.sum(xi_star >= observed))) / (N + 1)
    return BootstrapResult(xi_star, q_hat, p_value, bool(observed > q_hat))


def run_replicates(
    sample: Sample,
    fit: NullModelFit,
    residuals_hat: np.ndarray,
    h_grid: List[BandwidthVector],
    spec: KernelSpec,
    pi: WeightFunction,
    quad: QuadratureGrid,
    cfg: BootstrapConfig,
    workers: int = 1,
) -> Tuple[np.ndarray, int]:
    """
    Run the N replicates, possibly in parallel, and gather them in replicate order.

    Returns:
        The successful ξ* and the number of dropped replicates.

    Raises:
        CalibrationUnreliableError: more than 5% of the replicates failed.
    """
    results = Parallel(n_jobs=workers)(
        delayed(_replicate)(sample, fit, residuals_hat, h_grid, spec, pi, quad, cfg, rep_index)
        for rep_index in range(cfg.N)
    )
    xi_star = np.array([value for (value, _) in results if value is not None])
    failures = cfg.N - len(xi_star)
    for (_, message) in results:
        if message:
            log.warning(f"Dropped bootstrap replicate. {message}")
    if failures > MAX_FAILURE_SHARE * cfg.N or not len(xi_star):
        raise CalibrationUnreliableError(
            f"{plural(failures, 'bootstrap replicate')} out of {cfg.N} failed."
        )
    return (xi_star, failures)


def run_test(sample: Sample, model_kind: str, config: TestConfig) -> TestOutcome:
    """
    Fit the null, compute the observed sup statistic and calibrate it by the wild bootstrap.

    The bandwidths (h-grid and nuisance bandwidth b) are held fixed across replicates. The
    residuals feeding the bootstrap come from a NW regression whose bandwidth is selected by
    leave-one-out cross-validation among the h-grid baselines.
    """
    spec = KernelSpec.named(config.kernel)
    log.info(f"Fitting the {model_kind} null on {sample.n} observations.")
    (test_sample, fit) = fit_null(sample, model_kind, config, spec)
    log.info(f"Fitting the {model_kind} null done: theta={fit.theta_hat}, b={fit.nuisance_bandwidth}.")
    check_bandwidth_rates(config.h0, fit.nuisance_bandwidth, test_sample.d, test_sample.n)
    pi = WeightFunction.box(config.pi_lo, config.pi_hi, test_sample.d, config.normalize_pi)
    h_grid = bandwidth_grid(config.h0, config.h1, config.h_grid, test_sample.k, config.beta)
    quad = quadrature_grid(pi, test_sample.X, h_grid, spec, config.nodes_per_axis)
    log.info(f"Computing the observed statistic on {plural(len(h_grid), 'bandwidth')}.")
    observed = sup_statistic(test_sample, fit, h_grid, spec, pi, quad)
    log.info(f"Observed sup statistic {observed.value} at h={observed.h_vec.h}.")
    base = fit.base_columns
    residual_bandwidth = loo_cv_bandwidth(test_sample.X, test_sample.Y[:, :base], spec, [h.h for h in h_grid])
    residuals_hat = nonparametric_residuals(test_sample, residual_bandwidth, spec)
    cfg = config.bootstrap()
    log.info(f"Running {plural(cfg.N, 'bootstrap replicate')} (workers={config.workers}).")
    (xi_star, failures) = run_replicates(
        test_sample, fit, residuals_hat, h_grid, spec, pi, quad, cfg, config.workers
    )
    result = calibrate(xi_star, observed.value, cfg.alpha)
    log.info(f"Bootstrap done: q={result.q_hat}, p={result.p_value}, reject={result.reject}.")
    return TestOutcome(
        model_kind=model_kind,
        theta_hat=fit.theta_hat,
        nuisance_bandwidth=fit.nuisance_bandwidth,
        h_values=tuple(s.h_vec.h for s in observed.statistics),
        lambda_n=tuple(s.lambda_n for s in observed.statistics),
        standardized=tuple(s.standardized for s in observed.statistics),
        sup_statistic=observed.value,
        argmax_h=observed.h_vec.h,
        residual_bandwidth=residual_bandwidth,
        bootstrap=result,
        failures=failures,
        n_boot=cfg.N,
    )
