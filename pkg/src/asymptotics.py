"""
Asymptotic constants of the integrated EL statistic.

Under the null, h^{-d/2}(Λₙ - k) is asymptotically N(0, σ²(K, Σ)); under the local alternatives
m + cₙΓ with cₙ = n^{-1/2}h^{-d/4}, its mean shifts by β(f, K, Σ, Γ).
"""

import logging
from functools import lru_cache, partial
from itertools import product
from typing import Callable, NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy.integrate import simpson
from scipy.stats import norm

from src.empirical_likelihood import midpoint_grid
from src.kernel_smoothing import INNER_PANELS, KernelSpec, integrate_pieces, kernel_constants
from src.user_errors import IllConditionedFieldError, InvalidArgumentError
from src.user_types import WeightFunction

log = logging.getLogger(__name__)

MAX_CONDITION = 1e12
OUTER_PANELS = 2**8
X_NODES = 64  # per axis, for the integrals over the support of π


class CovarianceField(NamedTuple):
    sigma: Callable[[np.ndarray], np.ndarray]  # m×d points to m×k×k matrices Σ(x)
    f: Callable[[np.ndarray], np.ndarray]  # covariate density
    gamma: Callable[[np.ndarray], np.ndarray]  # inverse of (β_j^{-d} R(β_l/β_j) σ_lj(x))


class AlternativeShift(NamedTuple):
    Gamma: Callable[[np.ndarray], np.ndarray]  # m×d points to m×k directions
    c_n: float

    @classmethod
    def make(cls, Gamma: Callable, n: int, h: float, d: int) -> "AlternativeShift":
        return cls(Gamma, local_alternative_rate(n, h, d))

    def apply(self, m: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
        """Regression function of the local alternative: m(x) + cₙΓ(x)."""
        return m(x) + self.c_n * self.Gamma(x)


def local_alternative_rate(n: int, h: float, d: int) -> float:
    return n ** (-1 / 2) * h ** (-d / 4)


def weight_square_integral(pi: WeightFunction) -> float:
    """∫π² for a (normalized) box indicator."""
    return pi.height**2 * pi.volume


def pivotal_sigma2(spec: KernelSpec, d: int, k: int, pi: WeightFunction) -> float:
    """σ² = 2k·K⁽⁴⁾(0)·R(K)⁻²·∫π², the limit variance when all bandwidths are equal."""
    constants = kernel_constants(spec, d)
    return 2 * k * constants.K4_0 / constants.R_K**2 * weight_square_integral(pi)


# Covariance fields


def _constant_matrices(points: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    return np.broadcast_to(matrix, (len(np.atleast_2d(points)), *matrix.shape))


def _constant_density(points: np.ndarray, value: float) -> np.ndarray:
    return np.full(len(np.atleast_2d(points)), value)


def _gamma(points: np.ndarray, sigma: Callable, R_of_t: Callable, beta: np.ndarray, d: int) -> np.ndarray:
    k = len(beta)
    scale = np.array([[beta[j] ** (-d) * R_of_t(beta[l] / beta[j]) for j in range(k)] for l in range(k)])
    A = scale[None, :, :] * sigma(points)
    condition = np.linalg.cond(A)
    worst = int(np.argmax(condition))
    if not condition[worst] <= MAX_CONDITION:
        raise IllConditionedFieldError(
            f"The scaled covariance at {np.atleast_2d(points)[worst]} has condition number {condition[worst]:.3g}."
        )
    return np.linalg.inv(A)


def make_covariance_field(
    sigma: Union[np.ndarray, Callable],
    f: Union[float, Callable],
    spec: KernelSpec,
    d: int,
    beta: Optional[Sequence[float]] = None,
) -> CovarianceField:
    """
    Build a covariance field from Σ(x) and f(x), constants being accepted for either.

    The matrix γ(x) depends on the kernel and on the bandwidth ratios through R(t).
    """
    if not callable(sigma):
        matrix = np.atleast_2d(np.asarray(sigma, dtype=float))
        if not np.allclose(matrix, matrix.T):
            raise InvalidArgumentError("The covariance matrix is not symmetric.")
        sigma = partial(_constant_matrices, matrix=matrix)
    if not callable(f):
        f = partial(_constant_density, value=float(f))
    k = sigma(np.zeros((1, d))).shape[-1]
    beta = np.asarray(beta if beta is not None else (1.0,) * k, dtype=float)
    if len(beta) != k:
        raise InvalidArgumentError(f"{len(beta)} bandwidth ratios for {k} response curves.")
    gamma = partial(_gamma, sigma=sigma, R_of_t=kernel_constants(spec, d).R_of_t, beta=beta, d=d)
    return CovarianceField(sigma, f, gamma)


# The ω constants


def _overlap_curve(spec: KernelSpec, z: np.ndarray, slope: float, scale: float) -> np.ndarray:
    """∫k(u)k(slope·z + scale·u)du, vectorized over z, split where either factor has a kink."""
    centre = slope * z
    lo = np.maximum(-1.0, (-1.0 - centre) / scale)
    hi = np.maximum(np.minimum(1.0, (1.0 - centre) / scale), lo)
    cuts = [np.full_like(z, c) for c in spec.shape.kinks] + [(c - centre) / scale for c in spec.shape.kinks]
    ends = np.sort(np.column_stack([lo, hi, *[np.clip(c, lo, hi) for c in cuts]]), axis=1)
    t = np.linspace(0.0, 1.0, INNER_PANELS + 1)
    total = np.zeros_like(z)
    for j in range(ends.shape[1] - 1):
        (a, b) = (ends[:, j], ends[:, j + 1])
        u = a[:, None] + (b - a)[:, None] * t[None, :]
        total += (b - a) * simpson(spec.k(u) * spec.k(centre[:, None] + scale * u), x=t, axis=1)
    return total


@lru_cache(maxsize=None)
def univariate_omega(spec: KernelSpec, a: float, b: float, c: float) -> float:
    """
    ∫∫∫ k(u)k(v)k(bz + au)k(z + cv) du dv dz.

    The inner integrals are curves in z; the outer integral is split at every z where one of them
    changes its polynomial piece.
    """
    knots = (-1.0, *spec.shape.kinks, 1.0)
    edge = 1.0 + c
    breakpoints = {-edge, edge}
    breakpoints |= {(p - a * q) / b for p in knots for q in knots}
    breakpoints |= {p - c * q for p in knots for q in knots}
    breakpoints = sorted(z for z in breakpoints if -edge <= z <= edge)
    return integrate_pieces(
        lambda z: _overlap_curve(spec, z, b, a) * _overlap_curve(spec, z, 1.0, c),
        breakpoints,
        OUTER_PANELS,
    )


def omega(spec: KernelSpec, d: int, beta: Sequence[float], l1: int, l2: int, j1: int, j2: int) -> float:
    """ω_{l₁l₂j₁j₂}(β, K) of the product kernel: β_{l₂}^{-d} times the univariate value to the d."""
    value = univariate_omega(spec, beta[l1] / beta[l2], beta[j2] / beta[l2], beta[j1] / beta[j2])
    return beta[l2] ** (-d) * value**d


def general_sigma2(
    spec: KernelSpec,
    d: int,
    beta: Sequence[float],
    field: CovarianceField,
    pi: WeightFunction,
    nodes_per_axis: int = X_NODES,
) -> float:
    """
    σ²(K, Σ) = 2 Σ_{l₁l₂j₁j₂} β_{l₂}^{-d} ω_{l₁l₂j₁j₂} ∫γ_{l₁j₁}γ_{l₂j₂}σ_{l₁l₂}σ_{j₁j₂}π².

    Raises:
        IllConditionedFieldError: the matrix inverted into γ is nearly singular somewhere.
    """
    beta = np.asarray(beta, dtype=float)
    quad = midpoint_grid(pi, 1.0, nodes_per_axis)
    S = field.sigma(quad.nodes)
    G = field.gamma(quad.nodes)
    mass = quad.weights * pi(quad.nodes) ** 2
    moments = np.einsum("mac,mbd,mab,mcd,m->abcd", G, G, S, S, mass)
    k = len(beta)
    total = 0.0
    for (l1, l2, j1, j2) in product(range(k), repeat=4):
        total += beta[l2] ** (-d) * omega(spec, d, beta, l1, l2, j1, j2) * moments[l1, l2, j1, j2]
    return 2 * total


def shift_beta(
    field: CovarianceField,
    Gamma: Callable[[np.ndarray], np.ndarray],
    pi: WeightFunction,
    nodes_per_axis: int = X_NODES,
) -> float:
    """β(f, K, Σ, Γ) = ∫ΓᵀV⁻¹Γ f²π = Σ_{lj}∫Γ_lΓ_jγ_lj f π."""
    quad = midpoint_grid(pi, 1.0, nodes_per_axis)
    directions = np.reshape(Gamma(quad.nodes), (len(quad.nodes), -1))
    forms = np.einsum("ml,mlj,mj->m", directions, field.gamma(quad.nodes), directions)
    return max(0.0, float(np.sum(quad.weights * forms * field.f(quad.nodes) * pi(quad.nodes))))


def asymptotic_power(beta: float, sigma2: float, alpha: float) -> float:
    """Φ((β - σΦ⁻¹(1-α))/σ): the limit rejection probability under a local alternative."""
    if not sigma2 > 0:
        raise InvalidArgumentError(f"The variance must be positive, got {sigma2}.")
    if not 0 < alpha < 1:
        raise InvalidArgumentError(f"The significance level must lie in (0, 1), got {alpha}.")
    sigma = np.sqrt(sigma2)
    return float(norm.cdf((beta - sigma * norm.ppf(1 - alpha)) / sigma))
