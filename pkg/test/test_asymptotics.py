import numpy as np
import pytest

__import__("sys").path[0:0] = "."
from src.asymptotics import *
from src.kernel_smoothing import KernelSpec, kernel_constants
from src.user_errors import IllConditionedFieldError, InvalidArgumentError

SPEC = KernelSpec()
PI = WeightFunction.box(0.1, 0.9, 1)


def test_local_alternative_rate():
    assert local_alternative_rate(100, 0.25, 2) == pytest.approx(0.1 * 0.25 ** (-0.5))


def test_alternative_shift():
    shift = AlternativeShift.make(lambda x: np.ones((len(x), 1)), 400, 1.0, 1)
    x = np.array([[0.2], [0.7]])
    assert shift.c_n == pytest.approx(0.05)
    assert shift.apply(lambda x: 2 * x, x) == pytest.approx(2 * x + 0.05)


weight_square_data = [
    (WeightFunction.box(0.1, 0.9, 1), 1 / 0.8),
    (WeightFunction.box(0.1, 0.9, 2), 1 / 0.64),
    (WeightFunction.box(0.1, 0.9, 1, normalize=False), 0.8),
    (WeightFunction.box(0.0, 2.0, 3, normalize=False), 8.0),
]


@pytest.mark.parametrize("pi, expected", weight_square_data)
def test_weight_square_integral(pi, expected):
    assert weight_square_integral(pi) == pytest.approx(expected)


def test_pivotal_sigma2_triangular():
    K4_0 = kernel_constants(SPEC, 1).K4_0
    assert pivotal_sigma2(SPEC, 1, 1, PI) == pytest.approx(2 * K4_0 * (9 / 4) * (1 / 0.8), rel=1e-12)
    assert pivotal_sigma2(SPEC, 1, 1, PI) == pytest.approx(2 * (151 / 315) * (9 / 4) / 0.8, rel=1e-9)
    assert pivotal_sigma2(SPEC, 1, 3, PI) == pytest.approx(3 * pivotal_sigma2(SPEC, 1, 1, PI))


@pytest.mark.parametrize("name", ["triangular", "epanechnikov"])
def test_equal_ratios_omega_is_the_fourth_order_constant(name):
    spec = KernelSpec.named(name)
    assert univariate_omega(spec, 1.0, 1.0, 1.0) == pytest.approx(kernel_constants(spec, 1).K4_0, rel=1e-7)
    assert omega(spec, 2, (1.0, 1.0), 0, 1, 1, 0) == pytest.approx(kernel_constants(spec, 2).K4_0, rel=1e-7)


def test_omega_scales_with_the_reference_ratio():
    beta = (1.0, 2.0)
    ratio = omega(SPEC, 2, beta, 0, 1, 0, 1) / univariate_omega(SPEC, 0.5, 1.0, 0.5) ** 2
    assert ratio == pytest.approx(2.0**-2)


@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("k", [1, 2])
def test_general_sigma2_reduces_to_the_pivotal_value(d, k):
    pi = WeightFunction.box(0.1, 0.9, d)
    sigma = np.eye(k) + 0.3 * (1 - np.eye(k))
    field = make_covariance_field(sigma, 1.0, SPEC, d)
    general = general_sigma2(SPEC, d, (1.0,) * k, field, pi, nodes_per_axis=8)
    print(general, pivotal_sigma2(SPEC, d, k, pi))
    assert general == pytest.approx(pivotal_sigma2(SPEC, d, k, pi), rel=1e-3)


def test_general_sigma2_with_varying_covariance():
    def sigma(points):
        scale = 1 + np.atleast_2d(points)[:, 0]
        return np.stack([np.diag([s, 2 * s]) for s in scale])

    field = make_covariance_field(sigma, lambda x: np.ones(len(x)), SPEC, 1)
    value = general_sigma2(SPEC, 1, (1.0, 1.0), field, PI)
    assert value == pytest.approx(pivotal_sigma2(SPEC, 1, 2, PI), rel=1e-3)


def test_general_sigma2_with_unequal_ratios_is_positive():
    field = make_covariance_field(np.diag([1.0, 0.5]), 1.0, SPEC, 1, beta=(1.0, 1.5))
    value = general_sigma2(SPEC, 1, (1.0, 1.5), field, PI, nodes_per_axis=8)
    print(value)
    assert np.isfinite(value) and value > 0


def test_asymmetric_covariance():
    with pytest.raises(InvalidArgumentError):
        make_covariance_field(np.array([[1.0, 0.2], [0.0, 1.0]]), 1.0, SPEC, 1)


def test_ratio_count_mismatch():
    with pytest.raises(InvalidArgumentError):
        make_covariance_field(np.eye(2), 1.0, SPEC, 1, beta=(1.0,))


def test_singular_covariance():
    field = make_covariance_field(np.ones((2, 2)), 1.0, SPEC, 1)
    with pytest.raises(IllConditionedFieldError):
        general_sigma2(SPEC, 1, (1.0, 1.0), field, PI, nodes_per_axis=4)


shift_data = [
    (1.0, 1.0, 1.0),
    (2.0, 0.5, 3.0),
    (0.25, 1.0, -1.0),
]


@pytest.mark.parametrize("s, f, g", shift_data)
def test_shift_beta_with_constant_integrands(s, f, g):
    field = make_covariance_field(np.array([[s]]), f, SPEC, 1)
    value = shift_beta(field, lambda x: np.full((len(x), 1), g), PI)
    R_K = kernel_constants(SPEC, 1).R_K
    assert value == pytest.approx(g**2 * f / (R_K * s), rel=1e-12)


def test_shift_beta_vanishes_without_alternative():
    field = make_covariance_field(np.eye(2), 1.0, SPEC, 1)
    assert shift_beta(field, lambda x: np.zeros((len(x), 2)), PI) == 0.0


def test_power_at_the_null_is_the_level():
    for alpha in (0.01, 0.05, 0.1):
        assert asymptotic_power(0.0, 2.3, alpha) == pytest.approx(alpha, abs=1e-9)


def test_power_at_the_critical_value():
    assert asymptotic_power(1.6449, 1.0, 0.05) == pytest.approx(0.5, abs=1e-4)


def test_power_increases_with_the_shift():
    powers = [asymptotic_power(beta, 1.7, 0.05) for beta in np.linspace(0, 10, 21)]
    assert all(np.diff(powers) > 0)
    assert powers[-1] > 0.99


@pytest.mark.parametrize("sigma2, alpha", [(0.0, 0.05), (1.0, 0.0), (1.0, 1.0)])
def test_power_invalid_arguments(sigma2, alpha):
    with pytest.raises(InvalidArgumentError):
        asymptotic_power(1.0, sigma2, alpha)


if __name__ == "__main__":  # pragma: no cover
    pytest.main(["-qq", __import__("sys").argv[0]])
