from math import sqrt

import numpy as np
import pytest

__import__("sys").path[0:0] = "."
import src.simulations as simulations_module
from src.simulations import *


def test_model_51_draws():
    first = gen_model_51(50, 1.0, "log", "inv", 7)
    second = gen_model_51(50, 1.0, "log", "inv", 7)
    assert (first.n, first.d, first.k) == (50, 2, 1)
    assert np.array_equal(first.X, second.X) and np.array_equal(first.Y, second.Y)
    assert not np.array_equal(first.Y, gen_model_51(50, 1.0, "log", "inv", 8).Y)


def test_model_51_covariates_are_uniform():
    sample = gen_model_51(10_000, 0.0, "square", "exp", 1)
    assert abs(sample.X[:, 0].mean() - 0.5) < 3 / np.sqrt(12 * 10_000)
    assert sample.X.min() >= 0 and sample.X.max() <= 1


def test_model_51_noise():
    sample = gen_model_51(100_000, 0.0, "square", "exp", 2)
    (x1, x2) = sample.X.T
    noise = sample.Y[:, 0] - (1 + 0.5 * x1 + np.exp(x2))
    standardized = noise / ((1.5 + x1 + x2) / 10)
    assert standardized.mean() == pytest.approx(0.0, abs=0.02)
    assert standardized.std() == pytest.approx(1.0, abs=0.02)


@pytest.mark.parametrize("g1_name, g1", [("square", lambda x: x**2), ("log", lambda x: 2 * np.log(x + 0.5))])
def test_model_51_alternatives(g1_name, g1):
    null = gen_model_51(200, 0.0, g1_name, "exp", 3)
    alternative = gen_model_51(200, 1.5, g1_name, "exp", 3)
    assert alternative.Y[:, 0] - null.Y[:, 0] == pytest.approx(1.5 * g1(null.X[:, 0]))


def test_unknown_function():
    with pytest.raises(InvalidArgumentError, match="cube"):
        gen_model_51(10, 0.0, "cube", "exp", 0)


def test_model_52_homoscedastic_noise():
    sample = gen_model_52(100_000, 0.0, 0.0, 4)
    (x1, x2) = sample.X.T
    noise = sample.Y[:, 0] - (1 + 0.5 * x1 + np.exp(x2))
    assert noise.std() == pytest.approx(0.15, rel=0.02)
    assert noise[x1 > 0.9].std() == pytest.approx(0.15, rel=0.05)


def test_model_52_variance_grows_with_c():
    sample = gen_model_52(100_000, 3.0, 2.0, 5)
    (x1, x2) = sample.X.T
    noise = sample.Y[:, 0] - (1 + 0.5 * x1 + 3 * x1**2 + np.exp(x2))
    window = x1 > 0.98
    print(window.sum(), noise[window].var())
    assert noise[window].var() == pytest.approx(0.15**2 * np.exp(4), rel=0.1)


def test_generate():
    (sample, kind) = generate(StudyConfig(), {"n": 30, "a": 0.0, "g1": "square", "g2": "exp"}, 0)
    assert (sample.n, kind) == (30, "plm")
    (sample, kind) = generate(StudyConfig(model="model_52"), {"n": 30, "a": 0.0, "c": 1.0}, 0)
    assert (sample.k, kind) == (1, "mean-variance")


def small_study(**changes):
    values = dict(n=(60,), h0=(0.3,), h1=(0.4,), reps=2, boot=9, h_grid=2, seed=6)
    values.update(changes)
    return StudyConfig(**values)


def test_run_study():
    table = run_study(small_study(a=(0.0, 1.0)))
    print(table)
    assert len(table) == 2
    for row in table:
        assert row.reject_rate in (0.0, 0.5, 1.0)
        assert row.mc_se == pytest.approx(np.sqrt(row.reject_rate * (1 - row.reject_rate) / 2))
        assert row.failures == 0 and not row.unreliable


def test_run_study_with_one_repetition():
    [row] = run_study(small_study(model="model_52", reps=1))
    assert row.reject_rate in (0.0, 1.0)
    assert row.mc_se == 0.0


def test_run_study_does_not_depend_on_the_worker_count():
    assert run_study(small_study(workers=1)) == run_study(small_study(workers=2))


# Monte Carlo acceptance runs


def rejection_rates(**changes):
    values = dict(n=(100,), h0=(0.22,), h1=(0.28,), reps=200, boot=199, h_grid=4, seed=20100315, workers=-1)
    values.update(changes)
    return [row.reject_rate for row in run_study(StudyConfig(**values))]


@pytest.mark.slow
def test_size_of_the_partially_linear_test():
    [rate] = rejection_rates(a=(0.0,), g1=("square",), g2=("exp",))
    print(rate)
    assert 0.02 <= rate <= 0.10


@pytest.mark.slow
def test_power_of_the_partially_linear_test():
    rates = rejection_rates(a=(0.0, 0.5, 1.0), g1=("square",), g2=("exp",))
    print(rates)
    se = [np.sqrt(p * (1 - p) / 200) for p in rates]
    for i in range(2):
        assert rates[i + 1] - rates[i] > np.hypot(se[i], se[i + 1])
    assert rates[2] >= 0.25


@pytest.mark.slow
def test_size_and_power_of_the_mean_variance_test():
    (size, power) = rejection_rates(model="model_52", a=(0.0, 3.0), c=(0.0, 6.0))
    print(size, power)
    assert 0.02 <= size <= 0.10
    assert power >= 0.60


def test_monte_carlo_standard_error_uses_the_repetition_count(monkeypatch):
    def fake_rep(cfg, cell, cell_index, rep):
        if rep == 3:
            return (None, f"rep {rep}: FitFailureError: no fit")
        return (rep % 2 == 0, "")

    monkeypatch.setattr(simulations_module, "_run_rep", fake_rep)
    cfg = StudyConfig(reps=10)
    row = run_cell(cfg, cfg.cells()[0], 0)
    print(row)
    assert row.failures == 1
    assert row.reject_rate == pytest.approx(5 / 9)
    assert row.mc_se == pytest.approx(sqrt(5 / 9 * 4 / 9 / 10))
    assert row.unreliable  # 1 failure in 10 repetitions exceeds 5%


if __name__ == "__main__":  # pragma: no cover
    pytest.main(["-qq", __import__("sys").argv[0]])
