import logging
from functools import lru_cache, partial
from typing import Callable, Dict, Iterable, NamedTuple, Sequence, Tuple

import numpy as np
from scipy.integrate import simpson

from src.goodies import log_spaced
from src.user_errors import DegenerateWindowError, InvalidArgumentError, NoFeasibleBandwidthError
from src.user_types import KernelConstants

log = logging.getLogger(__name__)

PANELS = 2**12  # Simpson panels per smooth piece for the outer integrals
INNER_PANELS = 2**8  # per smooth piece for the convolution K⁽²⁾


def _triangular(u):
    return np.where(np.abs(u) <= 1, 1 - np.abs(u), 0.0)


def _epanechnikov(u):
    return np.where(np.abs(u) <= 1, 0.75 * (1 - u**2), 0.0)


def _biweight(u):
    return np.where(np.abs(u) <= 1, 15 / 16 * (1 - u**2) ** 2, 0.0)


def _triweight(u):
    return np.where(np.abs(u) <= 1, 35 / 32 * (1 - u**2) ** 3, 0.0)


def _epanechnikov4(u):
    return np.where(np.abs(u) <= 1, 15 / 32 * (3 - 10 * u**2 + 7 * u**4), 0.0)


class KernelShape(NamedTuple):
    function: Callable[[np.ndarray], np.ndarray]
    order: int
    kinks: Tuple[float, ...]  # interior points where the derivative jumps


KERNELS: Dict[str, KernelShape] = {
    "triangular": KernelShape(_triangular, 2, (0.0,)),
    "epanechnikov": KernelShape(_epanechnikov, 2, ()),
    "biweight": KernelShape(_biweight, 2, ()),
    "triweight": KernelShape(_triweight, 2, ()),
    "epanechnikov4": KernelShape(_epanechnikov4, 4, ()),
}


class KernelSpec(NamedTuple):
    """Univariate base kernel k on [-1, 1]; the d-dimensional kernel is its product."""

    base: str = "triangular"
    order: int = 2

    @classmethod
    def named(cls, name: str) -> "KernelSpec":
        try:
            return cls(name, KERNELS[name].order)
        except KeyError:
            raise InvalidArgumentError(
                f"Unknown kernel '{name}'. Known kernels: {', '.join(KERNELS)}."
            )

    @property
    def shape(self) -> KernelShape:
        return KERNELS[self.base]

    def k(self, u) -> np.ndarray:
        return self.shape.function(np.asarray(u, dtype=float))

    def validate(self, tol: float = 1e-8) -> float:
        """
        Check unit mass, symmetry and the vanishing moments below the order.

        Returns:
            The r-th moment k_r, which must not vanish.

        Raises:
            InvalidArgumentError: an invariant is violated.
        """
        if self.base not in KERNELS or self.order != self.shape.order or self.order < 2:
            raise InvalidArgumentError(f"Inconsistent kernel specification {self}.")
        u = np.linspace(-1, 1, 2001)
        if not np.allclose(self.k(u), self.k(-u), rtol=0, atol=1e-14):
            raise InvalidArgumentError(f"The kernel '{self.base}' is not symmetric.")
        if self.k(np.array([1.5, -1.5])).any():
            raise InvalidArgumentError(f"The kernel '{self.base}' is not supported on [-1, 1].")
        breakpoints = _pieces(-1.0, 1.0, self.shape.kinks)
        for j in range(self.order):
            moment = integrate_pieces(lambda v: v**j * self.k(v), breakpoints)
            if abs(moment - (j == 0)) > tol:
                raise InvalidArgumentError(
                    f"The kernel '{self.base}' has moment {j} equal to {moment}, not {int(j == 0)}."
                )
        k_r = integrate_pieces(lambda v: v**self.order * self.k(v), breakpoints)
        if abs(k_r) <= tol:
            raise InvalidArgumentError(f"The kernel '{self.base}' is not of order {self.order}.")
        return k_r


def _pieces(lo: float, hi: float, cuts: Iterable[float]) -> np.ndarray:
    inner = [c for c in cuts if lo < c < hi]
    return np.unique([lo, *inner, hi])


def integrate_pieces(f: Callable, breakpoints: Sequence[float], panels: int = PANELS) -> float:
    """Composite Simpson rule on each interval between consecutive breakpoints."""
    total = 0.0
    for (a, b) in zip(breakpoints[:-1], breakpoints[1:]):
        u = np.linspace(a, b, panels + 1)
        total += simpson(f(u), x=u)
    return float(total)


def kernel_eval(spec: KernelSpec, u, h: float):
    """
    Scaled product kernel K_h(u) = h^{-d} ∏_j k(u_j / h).

    Args:
        u: a d-vector, or an array whose last axis has length d.
        h: the bandwidth.

    Returns:
        A nonnegative scalar for a single d-vector, an array over the leading axes otherwise.
    """
    if not h > 0:
        raise InvalidArgumentError(f"The bandwidth must be positive, got {h}.")
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        return spec.k(u / h) / h
    d = u.shape[-1]
    return np.prod(spec.k(u / h), axis=-1) / h**d


def nw_weights(X: np.ndarray, points: np.ndarray, h: float, spec: KernelSpec) -> np.ndarray:
    """Kernel weights K_h(x - X_i) as an m×n matrix, one row per evaluation point."""
    X = _as_matrix(X)
    points = np.asarray(points, dtype=float).reshape(-1, X.shape[1])
    return kernel_eval(spec, points[:, None, :] - X[None, :, :], h)


def nw_estimate(X: np.ndarray, y: np.ndarray, x, h: float, spec: KernelSpec) -> float:
    X = _as_matrix(X)
    weights = kernel_eval(spec, np.reshape(x, (1, -1)) - X, h)
    total = weights.sum()
    if total <= 0:
        raise DegenerateWindowError(f"No observation within bandwidth {h} of {x}.", point=x)
    return float(weights @ np.asarray(y, dtype=float) / total)


def smooth_null_curve(model_values: np.ndarray, X: np.ndarray, x, h_l: float, spec: KernelSpec) -> float:
    """m̃_l(x): the fitted null values smoothed exactly like the responses."""
    return nw_estimate(X, model_values, x, h_l, spec)


def nw_fit(X: np.ndarray, y: np.ndarray, points: np.ndarray, h: float, spec: KernelSpec) -> np.ndarray:
    """Nadaraya–Watson estimates at many points (y may be n or n×k)."""
    weights = nw_weights(X, points, h, spec)
    totals = weights.sum(axis=1)
    empty = np.flatnonzero(totals <= 0)
    if empty.size:
        point = np.asarray(points, dtype=float).reshape(len(totals), -1)[empty[0]]
        raise DegenerateWindowError(
            f"No observation within bandwidth {h} of {point} ({empty.size} empty windows).",
            point=point,
        )
    return (weights @ np.asarray(y, dtype=float)) / (totals if np.ndim(y) == 1 else totals[:, None])


def loo_cv_bandwidth(X: np.ndarray, y: np.ndarray, spec: KernelSpec, grid: Iterable[float]) -> float:
    """
    Select the grid bandwidth minimizing the leave-one-out squared prediction error.

    Observations whose leave-one-out window is empty are skipped, and the error is averaged over
    the remaining ones so that bandwidths skipping many points are not favoured. Ties go to the
    smallest bandwidth.

    Raises:
        InvalidArgumentError: empty grid or fewer than three observations.
        NoFeasibleBandwidthError: no grid value gives any observation a window.
    """
    X = _as_matrix(X)
    y = _as_matrix(y)  # n×k: errors are summed over the columns
    grid = sorted(set(float(h) for h in grid))
    if not grid:
        raise InvalidArgumentError("The bandwidth grid is empty.")
    if len(y) < 3:
        raise InvalidArgumentError(f"Cross-validation needs at least 3 observations, got {len(y)}.")
    tie = 1e-12 * float(np.mean(np.sum(y**2, axis=1)) + 1e-300)
    (best_h, best_score) = (None, np.inf)
    for h in grid:
        weights = nw_weights(X, X, h, spec)
        np.fill_diagonal(weights, 0.0)
        totals = weights.sum(axis=1)
        ok = totals > 0
        if not ok.any():
            continue
        predictions = weights[ok] @ y / totals[ok, None]
        score = float(np.mean(np.sum((y[ok] - predictions) ** 2, axis=1)))
        if score < best_score - tie:
            (best_h, best_score) = (h, score)
    if best_h is None:
        raise NoFeasibleBandwidthError(f"No bandwidth among {grid} leaves any point a window.")
    log.debug(f"Cross-validated bandwidth {best_h} (score {best_score}).")
    return best_h


def default_bandwidth_grid(values: np.ndarray, size: int = 20) -> np.ndarray:
    """Logarithmic grid spanning [0.05, 0.5] of the data range (geometric mean over coordinates)."""
    values = _as_matrix(values)
    ranges = np.ptp(values, axis=0)
    if not np.all(ranges > 0):
        raise InvalidArgumentError("Cannot build a bandwidth grid for a constant covariate.")
    scale = float(np.exp(np.mean(np.log(ranges))))
    return log_spaced(0.05 * scale, 0.5 * scale, size)


def rate_bandwidths(n: int, d: int) -> Tuple[float, float]:
    """Rate-optimal orders h ∼ n^{-1/(d+4)} and b ∼ n^{-1/5}."""
    return (n ** (-1 / (d + 4)), n ** (-1 / 5))


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


# Kernel constants


def _overlap(spec: KernelSpec, t: float) -> float:
    """Univariate ∫k(u)k(tu)du, integrated on [0, min(1, 1/t)] by symmetry."""
    if not t > 0:
        raise InvalidArgumentError(f"R(t) needs t > 0, got {t}.")
    end = min(1.0, 1.0 / t)
    cuts = [c for c in spec.shape.kinks] + [c / t for c in spec.shape.kinks]
    return 2 * integrate_pieces(lambda u: spec.k(u) * spec.k(t * u), _pieces(0.0, end, cuts))


def _autoconvolution(spec: KernelSpec, u, panels: int = INNER_PANELS) -> np.ndarray:
    """Univariate k⁽²⁾(u) = ∫k(v)k(u+v)dv, vectorized over u."""
    u = np.abs(np.atleast_1d(np.asarray(u, dtype=float)))
    (lo, hi) = (-np.ones_like(u), 1.0 - u)
    cuts = [np.full_like(u, c) for c in spec.shape.kinks] + [c - u for c in spec.shape.kinks]
    ends = np.sort(np.column_stack([lo, hi, *[np.clip(c, lo, np.maximum(hi, lo)) for c in cuts]]), axis=1)
    ends = np.maximum(ends, lo[:, None])
    t = np.linspace(0.0, 1.0, panels + 1)
    total = np.zeros_like(u)
    for j in range(ends.shape[1] - 1):
        (a, b) = (ends[:, j], np.maximum(ends[:, j + 1], ends[:, j]))
        v = a[:, None] + (b - a)[:, None] * t[None, :]
        total += (b - a) * simpson(spec.k(v) * spec.k(u[:, None] + v), x=t, axis=1)
    return np.where(u < 2, total, 0.0)


def _product_overlap(t: float, spec: KernelSpec, d: int) -> float:
    return _overlap(spec, t) ** d


def _product_autoconvolution(u, spec: KernelSpec, d: int) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    values = _autoconvolution(spec, u.ravel()).reshape(u.shape)
    if d > 1:
        return np.prod(values, axis=-1)
    return values if u.ndim else float(values)


@lru_cache(maxsize=None)
def kernel_constants(spec: KernelSpec, d: int) -> KernelConstants:
    """
    Constants of the d-dimensional product kernel.

    Every univariate integral is split at the points where the integrand loses smoothness,
    so that Simpson's rule is exact on piecewise polynomials of degree three or less and
    accurate to rounding error otherwise. Product-kernel constants are powers of the
    univariate ones.
    """
    if d < 1:
        raise InvalidArgumentError(f"The covariate dimension must be at least 1, got {d}.")
    k_r = spec.validate()
    R_1 = _overlap(spec, 1.0)
    K4_1 = 2 * integrate_pieces(lambda u: _autoconvolution(spec, u) ** 2, [0.0, 1.0, 2.0])
    return KernelConstants(
        R_K=R_1**d,
        R_of_t=partial(_product_overlap, spec=spec, d=d),
        K2=partial(_product_autoconvolution, spec=spec, d=d),
        K4_0=K4_1**d,
        k_r=k_r,
    )
