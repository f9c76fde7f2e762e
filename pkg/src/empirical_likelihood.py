import logging
from math import ceil, log as ln, prod
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy.optimize import linprog

from src.goodies import plural
from src.kernel_smoothing import KernelSpec, nw_weights
from src.user_errors import (
    DegenerateWindowError,
    InvalidArgumentError,
    InvalidWeightError,
    UnreliableIntegrationError,
)
from src.user_types import (
    CAPPED_INFEASIBLE,
    CONVERGED,
    DEGENERATE,
    NOT_CONVERGED,
    BandwidthVector,
    ELSolution,
    GlobalStatistic,
    LocalResidualSet,
    NullModelFit,
    QuadratureGrid,
    Sample,
    SupStatistic,
    WeightFunction,
)

log = logging.getLogger(__name__)

MAX_ITERATIONS = 50
MAX_HALVINGS = 60
TOLERANCE = 1e-9  # on the Newton decrement, the dual gradient norm in the local metric
ARMIJO = 1e-4
FULL_STEP = 1e-6  # Newton decrement below which the full step is taken without line search
SEPARATION = 1e-12
HULL_TOLERANCE = 1e-9
MAX_DEGENERATE_SHARE = 0.10
MIN_NODES_PER_AXIS = 64
POINTS_PER_PIECE = 3
MAX_NODES = 2**14
CHUNK = 1024


def _pseudo_log(z: np.ndarray, eps: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Logarithm continued below `eps` by its second-order Taylor polynomial.

    Returns the value and the first two derivatives. The continuation keeps the dual finite
    and convex on the whole space, so Newton steps never leave the domain.
    """
    inside = z >= eps
    safe = np.where(inside, z, eps)
    value = np.where(inside, np.log(safe), ln(eps) - 1.5 + 2 * z / eps - z**2 / (2 * eps**2))
    first = np.where(inside, 1 / safe, 2 / eps - z / eps**2)
    second = np.where(inside, -1 / safe**2, -1 / eps**2)
    return (value, first, second)


def _newton_step(hessian: np.ndarray, gradient: np.ndarray) -> np.ndarray:
    k = gradient.shape[1]
    ridge = 1e-12 * (np.trace(hessian, axis1=1, axis2=2) / k + 1e-300)[:, None, None] * np.eye(k)
    try:
        step = np.linalg.solve(hessian + ridge, -gradient[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        step = -np.einsum("mkj,mj->mk", np.linalg.pinv(hessian), gradient)
    bad = ~(np.isfinite(step).all(axis=1) & np.isfinite(hessian).all(axis=(1, 2)))
    step[bad] = -gradient[bad]  # steepest descent
    return step


def _column_scales(Q: np.ndarray) -> np.ndarray:
    """Root mean square of each response column over the nonzero rows, 1 for a zero column."""
    rows = np.maximum(np.any(Q != 0, axis=2).sum(axis=1), 1)
    scale = np.sqrt(np.einsum("mnk,mnk->mk", Q, Q) / rows[:, None])
    return np.where(scale > 0, scale, 1.0)


def _separates(Q: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """True where λᵀQᵢ ≥ 0 for every row and > 0 for some: zero is then off the hull interior."""
    s = np.einsum("mnk,mk->mn", Q, lam)
    return (s.min(axis=1) >= 0) & (s.max(axis=1) > SEPARATION * np.abs(lam).sum(axis=1))


def hull_interior(Q: np.ndarray) -> bool:
    """
    Whether zero is a convex combination of the rows of Q with every weight positive.

    Solves max t subject to Σpᵢ Qᵢ = 0, Σpᵢ = 1 and pᵢ ≥ t; the answer is t* > 0.
    """
    Q = np.asarray(Q, dtype=float)
    Q = Q[np.any(Q != 0, axis=1)]
    (n, k) = Q.shape
    if not n:
        return True
    cost = np.zeros(n + 1)
    cost[-1] = -1.0
    A_eq = np.zeros((k + 1, n + 1))
    A_eq[:k, :n] = Q.T / _column_scales(Q[None])[0][:, None]
    A_eq[k, :n] = 1.0
    b_eq = np.zeros(k + 1)
    b_eq[k] = 1.0
    A_ub = np.hstack([-np.eye(n), np.ones((n, 1))])
    bounds = [(0, None)] * n + [(None, 1)]
    result = linprog(cost, A_ub=A_ub, b_ub=np.zeros(n), A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if result.status != 0:
        return False
    return -result.fun > HULL_TOLERANCE / n


def solve_lambda_batch(Q: np.ndarray, n: Optional[int] = None) -> Dict[str, np.ndarray]:
    """
    Minimize the EL dual -Σᵢ log(1 + λᵀQᵢ) at many evaluation points at once.

    Each point is solved on its columns divided by their root mean square, so that the
    result does not depend on the units of the responses. A point is infeasible as soon as
    an iterate separates zero from its rows. A point still moving at the iteration cap is
    settled by a linear program: infeasible if zero is off the hull interior, not converged
    otherwise.

    Args:
        Q: m×n'×k local residuals, one slice per evaluation point. Rows that are zero may have
            been dropped, in which case `n` gives the original sample size.
        n: the sample size defining the feasibility threshold 1/n and the cap 2n·log(n).

    Returns:
        A dict of arrays indexed by evaluation point: "lambda" (m×k), "z" (m×n', the values
        1 + λᵀQᵢ), "log_ratio", "status" and "iterations".
    """
    (m, width, k) = Q.shape
    n = n or width
    eps = 1.0 / n
    scale = _column_scales(Q)
    Qs = Q / scale[:, None, :]
    lam = np.zeros((m, k))
    iterations = np.zeros(m, dtype=int)
    degenerate = ~np.any(Q != 0, axis=(1, 2))
    converged = np.zeros(m, dtype=bool)
    separated = np.zeros(m, dtype=bool)
    done = degenerate.copy()

    def dual(lam_, Q_):
        z = 1 + np.einsum("mnk,mk->mn", Q_, lam_)
        (value, first, second) = _pseudo_log(z, eps)
        return (-value.sum(axis=1), first, second)

    for iteration in range(MAX_ITERATIONS):
        idx = np.flatnonzero(~done)
        if not idx.size:
            break
        (Qa, la) = (Qs[idx], lam[idx])
        (F, first, second) = dual(la, Qa)
        gradient = -np.einsum("mn,mnk->mk", first, Qa)
        hessian = np.einsum("mn,mnk,mnj->mkj", -second, Qa, Qa)
        step = _newton_step(hessian, gradient)
        decrement = np.maximum(-(gradient * step).sum(axis=1), 0.0)
        small = np.sqrt(decrement) <= TOLERANCE
        converged[idx[small]] = True
        lam[idx[small]] = la[small] + step[small]
        done[idx[small]] = True
        iterations[idx] = iteration
        moving = ~small
        if not moving.any():
            continue
        (Qm, lm, Fm, sm, dm) = (Qa[moving], la[moving], F[moving], step[moving], decrement[moving])
        t = np.ones(len(lm))
        for _ in range(MAX_HALVINGS):
            trial = dual(lm + t[:, None] * sm, Qm)[0]
            accepted = (trial <= Fm - ARMIJO * t * dm) | ((dm <= FULL_STEP) & (t == 1))
            if accepted.all():
                break
            t = np.where(accepted, t, t / 2)
        lm = lm + t[:, None] * sm
        lam[idx[moving]] = lm
        iterations[idx[moving]] = iteration + 1
        apart = _separates(Qm, lm)
        separated[idx[moving][apart]] = True
        done[idx[moving][apart]] = True

    for i in np.flatnonzero(~done):
        separated[i] = not hull_interior(Q[i])
    stalled = ~done & ~separated
    if stalled.any():
        log.debug(f"{plural(int(stalled.sum()), 'evaluation point')} did not converge.")

    z = 1 + np.einsum("mnk,mk->mn", Qs, lam)
    lam = lam / scale
    infeasible = ~degenerate & (separated | (converged & (z.min(axis=1) <= eps)))
    log_ratio = 2 * np.log(np.where(z > 0, z, 1.0)).sum(axis=1)
    log_ratio = np.where(degenerate, 0.0, np.maximum(log_ratio, 0.0))
    log_ratio = np.where(infeasible, 2 * n * ln(n), log_ratio)
    status = np.where(stalled, NOT_CONVERGED, CONVERGED)
    status = np.where(degenerate, DEGENERATE, np.where(infeasible, CAPPED_INFEASIBLE, status))
    return {"lambda": lam, "z": z, "log_ratio": log_ratio, "status": status, "iterations": iterations}


def solve_lambda(residuals: LocalResidualSet) -> ELSolution:
    """
    Lagrange multiplier, EL weights and -2 log EL ratio at a single evaluation point.

    Statuses:
        converged: the weights are positive, sum to one and balance the residuals.
        capped_infeasible: zero is not inside the convex hull of the nonzero residuals;
            the log ratio is capped at 2n·log(n).
        degenerate: all residuals vanish; the log ratio is 0.
        not_converged: zero is inside the hull but Newton stopped at the iteration cap;
            the log ratio is the last iterate's and the weights are uniform.
    """
    Q = np.asarray(residuals.Q, dtype=float)
    n = Q.shape[0]
    result = solve_lambda_batch(Q[None, :, :])
    (lam, z, status) = (result["lambda"][0], result["z"][0], str(result["status"][0]))
    if status == CONVERGED:
        weights = 1 / (n * z)
    else:
        weights = np.full(n, 1.0 / n)
    return ELSolution(lam, weights, float(result["log_ratio"][0]), status, int(result["iterations"][0]))


def _check_shapes(sample: Sample, fit: NullModelFit, h_vec: BandwidthVector):
    if fit.fitted.shape != sample.Y.shape:
        raise InvalidArgumentError(
            f"Fitted values of shape {fit.fitted.shape} do not match responses {sample.Y.shape}."
        )
    if h_vec.k != sample.k:
        raise InvalidArgumentError(f"{h_vec.k} bandwidths for {sample.k} response curves.")


def _residual_tensor(
    sample: Sample,
    fitted: np.ndarray,
    points: np.ndarray,
    h_vec: BandwidthVector,
    spec: KernelSpec,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Local residuals at many points.

    Returns:
        Q (m×n×k) and, per point, the index of the first response curve with an empty window
        (-1 when every window is populated).
    """
    m = len(points)
    Q = np.empty((m, sample.n, sample.k))
    empty_curve = np.full(m, -1)
    weights_by_h: Dict[float, np.ndarray] = {}
    for (l, h) in enumerate(h_vec.h_l):
        if h not in weights_by_h:
            weights_by_h[h] = nw_weights(sample.X, points, h, spec)
        W = weights_by_h[h]
        totals = W.sum(axis=1)
        hole = totals <= 0
        empty_curve = np.where(hole & (empty_curve < 0), l, empty_curve)
        smoothed = np.divide(W @ fitted[:, l], totals, out=np.zeros(m), where=~hole)
        Q[:, :, l] = W * (sample.Y[None, :, l] - smoothed[:, None])
    return (Q, empty_curve)


def local_residuals(
    sample: Sample,
    fit: NullModelFit,
    x,
    h_vec: BandwidthVector,
    spec: KernelSpec,
) -> LocalResidualSet:
    _check_shapes(sample, fit, h_vec)
    x = np.reshape(np.asarray(x, dtype=float), (1, -1))
    (Q, empty_curve) = _residual_tensor(sample, fit.fitted, x, h_vec, spec)
    if empty_curve[0] >= 0:
        l = int(empty_curve[0])
        raise DegenerateWindowError(
            f"Empty window for response {l + 1} at {x[0]} (bandwidth {h_vec.h_l[l]}).",
            point=x[0],
            response=l,
        )
    return LocalResidualSet(Q[0], x[0], h_vec)


def midpoint_grid(pi: WeightFunction, h_min: float, nodes_per_axis: Optional[int] = None) -> QuadratureGrid:
    """Tensor midpoint rule on the support of π, spacing at most h_min/4 per axis by default."""
    if pi.volume <= 0:
        raise InvalidWeightError(f"The support [{pi.lo}, {pi.hi}] has zero measure.")
    if not h_min > 0:
        raise InvalidArgumentError(f"The bandwidth must be positive, got {h_min}.")
    widths = np.subtract(pi.hi, pi.lo)
    if nodes_per_axis:
        counts = [int(nodes_per_axis)] * pi.d
    else:
        counts = [max(MIN_NODES_PER_AXIS, ceil(4 * w / h_min)) for w in widths]
    axes = [lo + (np.arange(c) + 0.5) * w / c for (lo, w, c) in zip(pi.lo, widths, counts)]
    nodes = np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=1)
    weights = np.full(len(nodes), float(np.prod(widths / np.asarray(counts))))
    return QuadratureGrid(nodes, weights)


def _axis_breaks(lo: float, hi: float, x: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Sorted cut points of [lo, hi] at every xᵢ + offset falling strictly inside."""
    cuts = (x[:, None] + offsets[None, :]).ravel()
    cuts = cuts[(cuts > lo) & (cuts < hi)]
    breaks = np.unique(np.concatenate([[lo, hi], cuts]))
    keep = np.concatenate([[True], np.diff(breaks) > 1e-12 * (hi - lo)])
    breaks = breaks[keep]
    breaks[-1] = hi
    return breaks


def _offsets(bandwidths: Iterable[float], spec: KernelSpec) -> np.ndarray:
    """Positions, relative to an observation, where the kernel or its derivative jumps."""
    knots = np.array([-1.0, *spec.shape.kinks, 1.0])
    return np.unique(np.concatenate([h * knots for h in bandwidths]))


def breakpoint_grid(
    pi: WeightFunction,
    X: np.ndarray,
    bandwidths: Iterable[float],
    spec: KernelSpec,
    points_per_piece: int = 3,
) -> QuadratureGrid:
    """
    Tensor Gauss–Legendre rule on the support of π, with each axis split wherever a kernel
    window edge or kink Xᵢⱼ + h·c lands, for every bandwidth h in `bandwidths`.

    The local statistic is smooth between these cuts, so the rule converges at the Gauss rate.
    """
    if pi.volume <= 0:
        raise InvalidWeightError(f"The support [{pi.lo}, {pi.hi}] has zero measure.")
    X = np.reshape(np.asarray(X, dtype=float), (len(X), -1))
    offsets = _offsets(bandwidths, spec)
    (u, w) = np.polynomial.legendre.leggauss(points_per_piece)
    axes = []
    axis_weights = []
    for (j, (lo, hi)) in enumerate(zip(pi.lo, pi.hi)):
        breaks = _axis_breaks(lo, hi, X[:, j], offsets)
        (a, b) = (breaks[:-1, None], breaks[1:, None])
        axes.append(((a + b) / 2 + (b - a) / 2 * u).ravel())
        axis_weights.append(((b - a) / 2 * w).ravel())
    nodes = np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=1)
    weights = np.prod(np.stack([a.ravel() for a in np.meshgrid(*axis_weights, indexing="ij")], axis=1), axis=1)
    return QuadratureGrid(nodes, weights)


def quadrature_grid(
    pi: WeightFunction,
    X: np.ndarray,
    h_grid: Iterable[BandwidthVector],
    spec: KernelSpec,
    nodes_per_axis: Optional[int] = None,
) -> QuadratureGrid:
    """
    Default quadrature shared by every bandwidth of a grid.

    The breakpoint rule is used unless `nodes_per_axis` asks for a midpoint grid, or the
    breakpoint rule would exceed MAX_NODES (typically in two or more dimensions), in which
    case the midpoint grid at spacing h_min/4 is used.
    """
    bandwidths = sorted({float(h) for h_vec in h_grid for h in h_vec.h_l})
    if not bandwidths:
        raise InvalidArgumentError("The bandwidth grid is empty.")
    if nodes_per_axis:
        return midpoint_grid(pi, bandwidths[0], nodes_per_axis)
    X = np.reshape(np.asarray(X, dtype=float), (len(X), -1))
    offsets = _offsets(bandwidths, spec)
    pieces = [len(_axis_breaks(lo, hi, X[:, j], offsets)) - 1 for (j, (lo, hi)) in enumerate(zip(pi.lo, pi.hi))]
    size = prod(max(p, 1) * POINTS_PER_PIECE for p in pieces)
    if size > MAX_NODES:
        log.debug(f"Breakpoint rule needs {size} nodes; using the midpoint grid instead.")
        return midpoint_grid(pi, bandwidths[0])
    return breakpoint_grid(pi, X, bandwidths, spec, POINTS_PER_PIECE)


def _compress(Q: np.ndarray) -> np.ndarray:
    """Move the nonzero rows of each slice first and cut the zero rows common to all slices."""
    active = np.any(Q != 0, axis=2)
    width = max(int(active.sum(axis=1).max()), 1)
    order = np.argsort(~active, axis=1, kind="stable")[:, :width]
    return np.take_along_axis(Q, order[:, :, None], axis=1)


def global_statistic(
    sample: Sample,
    fit: NullModelFit,
    h_vec: BandwidthVector,
    spec: KernelSpec,
    pi: WeightFunction,
    quad: Optional[QuadratureGrid] = None,
) -> GlobalStatistic:
    """
    Integrated EL statistic Λₙ(h⃗) = ∫ℓ(x)π(x)dx and its standardization h^{-d/2}(Λₙ - k).

    Nodes whose kernel window is empty for some response are dropped and the remaining
    quadrature weights are rescaled to the same total mass.

    Raises:
        InvalidWeightError: π has a support of zero measure or vanishes on every node.
        UnreliableIntegrationError: the dropped nodes carry more than 10% of the π-mass.
    """
    _check_shapes(sample, fit, h_vec)
    quad = quad or quadrature_grid(pi, sample.X, [h_vec], spec)
    mass = quad.weights * pi(quad.nodes)
    if not np.any(mass > 0):
        raise InvalidWeightError("The weight function vanishes on every quadrature node.")
    m = len(quad.nodes)
    ell = np.full(m, np.nan)
    empty = np.zeros(m, dtype=bool)
    (capped, unconverged) = (0, 0)
    for start in range(0, m, CHUNK):
        chunk = slice(start, min(start + CHUNK, m))
        (Q, empty_curve) = _residual_tensor(sample, fit.fitted, quad.nodes[chunk], h_vec, spec)
        hole = empty_curve >= 0
        empty[chunk] = hole
        if (~hole).any():
            result = solve_lambda_batch(_compress(Q[~hole]), n=sample.n)
            ell[chunk][~hole] = result["log_ratio"]
            capped += int((result["status"] == CAPPED_INFEASIBLE).sum())
            unconverged += int((result["status"] == NOT_CONVERGED).sum())
    considered = mass > 0
    dropped = int((empty & considered).sum())
    dropped_mass = mass[empty & considered].sum()
    if dropped_mass > MAX_DEGENERATE_SHARE * mass[considered].sum():
        raise UnreliableIntegrationError(
            f"{dropped} of {int(considered.sum())} quadrature nodes, carrying "
            f"{dropped_mass / mass[considered].sum():.1%} of the weight, have an empty kernel window "
            f"at bandwidth {h_vec.h}."
        )
    kept = considered & ~empty
    if dropped:
        log.warning(f"Dropped {plural(dropped, 'quadrature node')} with an empty window at h={h_vec.h}.")
    if capped:
        log.debug(f"{plural(capped, 'quadrature node')} capped as infeasible at h={h_vec.h}.")
    if unconverged:
        log.warning(f"{plural(unconverged, 'quadrature node')} did not converge at h={h_vec.h}.")
    scale = mass[considered].sum() / mass[kept].sum()
    lambda_n = float(np.sum(mass[kept] * ell[kept]) * scale)
    standardized = (lambda_n - sample.k) / h_vec.h ** (sample.d / 2)
    return GlobalStatistic(lambda_n, standardized, quad, ell, h_vec, dropped, capped, unconverged)


def bandwidth_grid(h0: float, h1: float, size: int, k: int, beta: Optional[Iterable[float]] = None) -> List[BandwidthVector]:
    """`size` equally spaced baseline bandwidths on [h0, h1], endpoints included."""
    beta = tuple(beta) if beta else (1.0,) * k
    if len(beta) != k:
        raise InvalidArgumentError(f"{len(beta)} bandwidth ratios for {k} response curves.")
    values = np.linspace(h0, h1, size) if size > 1 else np.array([h0])
    return [BandwidthVector.make(float(h), beta) for h in values]


def sup_statistic(
    sample: Sample,
    fit: NullModelFit,
    h_grid: Iterable[BandwidthVector],
    spec: KernelSpec,
    pi: WeightFunction,
    quad: Optional[QuadratureGrid] = None,
) -> SupStatistic:
    """Maximum of the standardized statistic over a bandwidth grid, with its maximizer."""
    h_grid = list(dict.fromkeys(h_grid))
    if not h_grid:
        raise InvalidArgumentError("The bandwidth grid is empty.")
    quad = quad or quadrature_grid(pi, sample.X, h_grid, spec)
    statistics = tuple(global_statistic(sample, fit, h, spec, pi, quad) for h in h_grid)
    best = max(range(len(statistics)), key=lambda i: statistics[i].standardized)
    return SupStatistic(statistics[best].standardized, h_grid[best], statistics)
