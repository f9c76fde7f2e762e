import logging
from dataclasses import replace
from math import sqrt
from typing import Dict, Optional, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from src.bootstrap import run_test
from src.goodies import derive_rng, plural
from src.user_errors import InvalidArgumentError, NumericalError
from src.user_types import RejectionRow, RejectionTable, Sample, StudyConfig, make_sample

log = logging.getLogger(__name__)

MAX_FAILURE_SHARE = 0.05

Seed = Union[int, np.random.Generator, np.random.SeedSequence]


def _square(x):
    return x**2


def _log(x):
    return 2 * np.log(x + 0.5)


def _inverse(x):
    return 2 / (x + 1)


G1 = {"square": _square, "log": _log}
G2 = {"exp": np.exp, "inv": _inverse}


def _named(table: Dict, name: str):
    try:
        return table[name]
    except KeyError:
        raise InvalidArgumentError(f"Unknown function '{name}'. Known: {', '.join(table)}.")


def gen_model_51(n: int, a: float, g1_name: str, g2_name: str, seed: Seed) -> Sample:
    """
    Y = 1 + 0.5X₁ + a·g₁(X₁) + g₂(X₂) + ε, X uniform on [0, 1]², ε normal with standard
    deviation (1.5 + X₁ + X₂)/10. The partially linear null holds for a = 0.
    """
    (g1, g2) = (_named(G1, g1_name), _named(G2, g2_name))
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, 2))
    noise = rng.standard_normal(n) * (1.5 + X[:, 0] + X[:, 1]) / 10
    Y = 1 + 0.5 * X[:, 0] + a * g1(X[:, 0]) + g2(X[:, 1]) + noise
    return make_sample(X, Y)


def gen_model_52(n: int, a: float, c: float, seed: Seed) -> Sample:
    """
    Z = 1 + 0.5X₁ + aX₁² + exp(X₂) + 0.15·exp(cX₁)·e, e standard normal. The homoscedastic
    partially linear null holds for a = c = 0.
    """
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, 2))
    noise = 0.15 * np.exp(c * X[:, 0]) * rng.standard_normal(n)
    Z = 1 + 0.5 * X[:, 0] + a * X[:, 0] ** 2 + np.exp(X[:, 1]) + noise
    return make_sample(X, Z)


def generate(cfg: StudyConfig, cell: Dict, seed: Seed) -> Tuple[Sample, str]:
    """Draw a sample for a table cell, with the kind of null model it is tested against."""
    if cfg.model == "model_51":
        return (gen_model_51(cell["n"], cell["a"], cell["g1"], cell["g2"], seed), "plm")
    return (gen_model_52(cell["n"], cell["a"], cell["c"], seed), "mean-variance")


def _run_rep(cfg: StudyConfig, cell: Dict, cell_index: int, rep: int) -> Tuple[Optional[bool], str]:
    rng = derive_rng(cfg.seed, cell_index, rep)
    (sample, kind) = generate(cfg, cell, rng)
    config = replace(cfg.test_config(cell["h0"], cell["h1"]), seed=int(rng.integers(2**63)))
    try:
        return (run_test(sample, kind, config).reject, "")
    except NumericalError as e:
        return (None, f"rep {rep}: {type(e).__name__}: {e}")


def run_cell(cfg: StudyConfig, cell: Dict, cell_index: int) -> RejectionRow:
    outcomes = Parallel(n_jobs=cfg.workers)(
        delayed(_run_rep)(cfg, cell, cell_index, rep) for rep in range(cfg.reps)
    )
    decisions = [reject for (reject, _) in outcomes if reject is not None]
    for (_, message) in outcomes:
        if message:
            log.warning(f"Cell {cell_index}: failed {message}")
    failures = cfg.reps - len(decisions)
    if decisions:
        rate = float(np.mean(decisions))
        se = sqrt(rate * (1 - rate) / cfg.reps)
    else:
        (rate, se) = (float("nan"), float("nan"))
    return RejectionRow(
        model=cfg.model,
        g1=cell["g1"],
        g2=cell["g2"],
        a=cell["a"],
        c=cell["c"],
        n=cell["n"],
        reps=cfg.reps,
        reject_rate=rate,
        mc_se=se,
        failures=failures,
        unreliable=failures > MAX_FAILURE_SHARE * cfg.reps,
    )


def run_study(cfg: StudyConfig) -> RejectionTable:
    """
    Monte Carlo rejection rates of the sup-over-bandwidth EL test, one row per table cell.

    Every repetition draws its data and its bootstrap seed from a stream keyed by
    (seed, cell index, repetition index), so the table does not depend on the worker count.
    """
    cells = cfg.cells()
    log.info(f"Study '{cfg.name}': {plural(len(cells), 'cell')} of {plural(cfg.reps, 'repetition')}.")
    table: RejectionTable = []
    for (cell_index, cell) in enumerate(cells):
        log.info(f"Cell {cell_index}: {cell}.")
        row = run_cell(cfg, cell, cell_index)
        log.info(f"Cell {cell_index} done: rate {row.reject_rate} (SE {row.mc_se}), {plural(row.failures, 'failure')}.")
        if row.unreliable:
            log.warning(f"Cell {cell_index} is unreliable: {row.failures} of {cfg.reps} repetitions failed.")
        table.append(row)
    return table
