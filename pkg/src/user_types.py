from dataclasses import dataclass
from math import prod
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from src.goodies import upper_rank
from src.user_errors import ConfigError, InvalidArgumentError, InvalidWeightError

MODEL_KINDS = ("linear", "plm", "single-index", "varsel", "mean-variance")

MULTIPLIERS = ("rademacher", "mammen")

CONVERGED = "converged"
CAPPED_INFEASIBLE = "capped_infeasible"
DEGENERATE = "degenerate"
NOT_CONVERGED = "not_converged"


class Sample(NamedTuple):
    X: np.ndarray  # n×d covariates
    Y: np.ndarray  # n×k responses

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def k(self) -> int:
        return self.Y.shape[1]


def make_sample(X, Y) -> Sample:
    """Coerce covariates and responses to 2-d float arrays with matching row counts."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0]:
        raise InvalidArgumentError(f"{X.shape[0]} covariate rows but {Y.shape[0]} response rows.")
    return Sample(X, Y)


class BandwidthVector(NamedTuple):
    h: float  # baseline bandwidth
    beta: Tuple[float, ...]  # ratios h_l / h, one per response curve

    @classmethod
    def equal(cls, h: float, k: int) -> "BandwidthVector":
        return cls.make(h, (1.0,) * k)

    @classmethod
    def make(cls, h: float, beta) -> "BandwidthVector":
        beta = tuple(float(b) for b in beta)
        if h <= 0 or not beta or min(beta) <= 0:
            raise InvalidArgumentError(f"Bandwidths must be positive: h={h}, beta={beta}.")
        return cls(float(h), beta)

    @property
    def h_l(self) -> np.ndarray:
        return self.h * np.asarray(self.beta)

    @property
    def k(self) -> int:
        return len(self.beta)

    def check_ratios(self, c0: float, c1: float):
        if not 0 < c0 <= min(self.beta) <= max(self.beta) <= c1:
            raise InvalidArgumentError(
                f"Bandwidth ratios {self.beta} fall outside [{c0}, {c1}]."
            )


class WeightFunction(NamedTuple):
    """Indicator of an axis-aligned box, optionally divided by the box volume."""

    lo: Tuple[float, ...]
    hi: Tuple[float, ...]
    normalize: bool = True

    @classmethod
    def box(cls, lo: float, hi: float, d: int, normalize: bool = True) -> "WeightFunction":
        return cls((float(lo),) * d, (float(hi),) * d, normalize)

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return prod(max(b - a, 0.0) for (a, b) in zip(self.lo, self.hi))

    @property
    def height(self) -> float:
        volume = self.volume
        if volume <= 0:
            raise InvalidWeightError(f"The support [{self.lo}, {self.hi}] has zero measure.")
        return 1.0 / volume if self.normalize else 1.0

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        inside = np.all((points >= self.lo) & (points <= self.hi), axis=1)
        return np.where(inside, self.height, 0.0)


class QuadratureGrid(NamedTuple):
    nodes: np.ndarray  # m×d
    weights: np.ndarray  # m cell volumes


class KernelConstants(NamedTuple):
    R_K: float
    R_of_t: Callable[[float], float]
    K2: Callable[[np.ndarray], np.ndarray]
    K4_0: float
    k_r: float


class LocalResidualSet(NamedTuple):
    Q: np.ndarray  # n×k
    x: np.ndarray
    h_vec: BandwidthVector


class ELSolution(NamedTuple):
    lambda_: np.ndarray
    weights: np.ndarray
    log_ratio: float
    status: str
    iterations: int = 0


class GlobalStatistic(NamedTuple):
    lambda_n: float
    standardized: float
    grid: QuadratureGrid
    per_node_logratio: np.ndarray
    h_vec: BandwidthVector
    dropped_nodes: int = 0
    capped_nodes: int = 0
    unconverged_nodes: int = 0


class NullModelFit(NamedTuple):
    """
    A fitted hypothesized model.

    `refit` maps a resampled Sample (same covariates, test-level responses) to a new fit.
    For derived-response models (joint mean and variance), the bootstrap noise lives on the
    `base_columns` first response columns and `response_map` rebuilds the test-level responses
    from them.
    """

    kind: str
    theta_hat: np.ndarray
    g_hat: Optional[Callable]
    fitted: np.ndarray
    refit: Callable[[Sample], "NullModelFit"]
    nuisance_bandwidth: Optional[float]
    base_columns: int
    response_map: Optional[Callable[[np.ndarray], np.ndarray]] = None


class BootstrapResult(NamedTuple):
    xi_star: np.ndarray
    q_hat: float
    p_value: float
    reject: bool


class TestOutcome(NamedTuple):
    __test__ = False  # not a pytest class

    model_kind: str
    theta_hat: np.ndarray
    nuisance_bandwidth: Optional[float]
    h_values: Tuple[float, ...]
    lambda_n: Tuple[float, ...]
    standardized: Tuple[float, ...]
    sup_statistic: float
    argmax_h: float
    residual_bandwidth: float
    bootstrap: BootstrapResult
    failures: int
    n_boot: int

    @property
    def reject(self) -> bool:
        return self.bootstrap.reject

    @property
    def p_value(self) -> float:
        return self.bootstrap.p_value


class RejectionRow(NamedTuple):
    model: str
    g1: str
    g2: str
    a: float
    c: float
    n: int
    reps: int
    reject_rate: float
    mc_se: float
    failures: int = 0
    unreliable: bool = False


RejectionTable = List[RejectionRow]


class RunManifest(NamedTuple):
    command: str
    config_digest: str
    seed: int
    version: str
    started: str
    finished: str
    outputs: Tuple[str, ...]


@dataclass(frozen=True)
class BootstrapConfig:
    N: int = 199
    multiplier: str = "rademacher"
    alpha: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.N < 1:
            raise ConfigError(f"The bootstrap count must be at least 1, got {self.N}.")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"The significance level must lie in (0, 1), got {self.alpha}.")
        if upper_rank(self.N, self.alpha) > self.N:
            raise ConfigError(f"No order statistic for N={self.N} and alpha={self.alpha}.")
        if self.multiplier not in MULTIPLIERS:
            raise ConfigError(f"Unknown multiplier '{self.multiplier}'.")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"The seed must be a 64-bit unsigned integer, got {self.seed}.")


@dataclass(frozen=True)
class TestConfig:
    __test__ = False  # not a pytest class

    alpha: float = 0.05
    boot: int = 199
    multiplier: str = "rademacher"
    seed: int = 0
    h0: float = 0.22
    h1: float = 0.28
    h_grid: int = 4
    pi_lo: float = 0.1
    pi_hi: float = 0.9
    normalize_pi: bool = True
    workers: int = 1
    b: Optional[float] = None
    d1: int = 1
    nodes_per_axis: Optional[int] = None
    cv_grid: int = 20
    beta: Optional[Tuple[float, ...]] = None
    c0: float = 0.5
    c1: float = 2.0
    kernel: str = "triangular"

    def __post_init__(self):
        if not 0 < self.h0 <= self.h1:
            raise ConfigError(f"Expected 0 < h0 <= h1, got h0={self.h0}, h1={self.h1}.")
        if self.h_grid < 1:
            raise ConfigError(f"The bandwidth grid needs at least one value, got {self.h_grid}.")
        if not self.pi_lo < self.pi_hi:
            raise ConfigError(f"Expected pi_lo < pi_hi, got {self.pi_lo} and {self.pi_hi}.")
        if self.b is not None and self.b <= 0:
            raise ConfigError(f"The nuisance bandwidth must be positive, got {self.b}.")
        if self.cv_grid < 1:
            raise ConfigError("The cross-validation grid needs at least one value.")
        if not 0 < self.c0 <= 1 <= self.c1:
            raise ConfigError(f"Expected 0 < c0 <= 1 <= c1, got c0={self.c0}, c1={self.c1}.")
        if self.beta is not None:
            try:
                BandwidthVector.make(1.0, self.beta).check_ratios(self.c0, self.c1)
            except InvalidArgumentError as e:
                raise ConfigError(str(e))
        self.bootstrap()  # validates alpha, boot, multiplier and seed

    def bootstrap(self) -> BootstrapConfig:
        return BootstrapConfig(self.boot, self.multiplier, self.alpha, self.seed)


@dataclass(frozen=True)
class StudyConfig:
    name: str = "study"
    model: str = "model_51"
    n: Tuple[int, ...] = (100,)
    h0: Tuple[float, ...] = (0.22,)
    h1: Tuple[float, ...] = (0.28,)
    a: Tuple[float, ...] = (0.0,)
    c: Tuple[float, ...] = (0.0,)
    g1: Tuple[str, ...] = ("square",)
    g2: Tuple[str, ...] = ("exp",)
    reps: int = 200
    boot: int = 199
    h_grid: int = 4
    alpha: float = 0.05
    seed: int = 0
    workers: int = 1
    multiplier: str = "rademacher"
    pi_lo: float = 0.1
    pi_hi: float = 0.9
    normalize_pi: bool = True
    kernel: str = "triangular"

    def __post_init__(self):
        if self.model not in ("model_51", "model_52"):
            raise ConfigError(f"Unknown study model '{self.model}'.")
        if self.reps < 1 or self.boot < 1:
            raise ConfigError(f"reps and boot must be at least 1, got {self.reps} and {self.boot}.")
        if not len(self.n) == len(self.h0) == len(self.h1):
            raise ConfigError("The keys n, h0 and h1 must list the same number of values.")
        for (h0, h1) in zip(self.h0, self.h1):
            if not 0 < h0 < h1:
                raise ConfigError(f"Expected 0 < h0 < h1, got h0={h0}, h1={h1}.")
        if self.model == "model_52" and len(self.a) != len(self.c):
            raise ConfigError("For model_52 the keys a and c are paired and must have equal lengths.")

    def cells(self) -> List[Dict]:
        """Enumerate the table cells, each a dict of generator arguments and bandwidth range."""
        ranges = list(zip(self.n, self.h0, self.h1))
        if self.model == "model_51":
            return [
                {"g1": g1, "g2": g2, "a": a, "c": 0.0, "n": n, "h0": h0, "h1": h1}
                for g1 in self.g1
                for g2 in self.g2
                for a in self.a
                for (n, h0, h1) in ranges
            ]
        return [
            {"g1": "", "g2": "", "a": a, "c": c, "n": n, "h0": h0, "h1": h1}
            for (a, c) in zip(self.a, self.c)
            for (n, h0, h1) in ranges
        ]

    def test_config(self, h0: float, h1: float) -> TestConfig:
        return TestConfig(
            alpha=self.alpha,
            boot=self.boot,
            multiplier=self.multiplier,
            seed=self.seed,
            h0=h0,
            h1=h1,
            h_grid=self.h_grid,
            pi_lo=self.pi_lo,
            pi_hi=self.pi_hi,
            normalize_pi=self.normalize_pi,
            workers=1,
            kernel=self.kernel,
        )


class SupStatistic(NamedTuple):
    value: float
    h_vec: BandwidthVector
    statistics: Tuple[GlobalStatistic, ...]
