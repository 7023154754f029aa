import math

import numpy as np
import pytest

from cocoa.rates import RateInputs, aggregation_bounds, averaged_iterate, lipschitz_rounds, smooth_rounds_dual, smooth_rounds_gap
from models.errors import InvalidArgumentError


def _smooth(**overrides):
    fields = dict(lam=1.0, n=10, sigma_prime=2.0, gamma=1.0, sigma_max=5.0)
    fields.update(overrides)
    return RateInputs(**fields)


def _lipschitz(**overrides):
    fields = dict(lam=1.0, n=8, sigma_prime=2.0, nu=1.0, theta=0.0, lipschitz=1.0, sigma=20.0, epsilon_gap=0.625)
    fields.update(overrides)
    return RateInputs(**fields)


def test_smooth_rounds_examples():
    assert smooth_rounds_dual(_smooth(epsilon_dual=math.exp(-3.0))) == pytest.approx(6.0)
    assert smooth_rounds_gap(_smooth(epsilon_gap=2.0 * math.exp(-3.0))) == pytest.approx(6.0)


def test_smooth_rounds_scale_with_local_quality():
    exact = smooth_rounds_dual(_smooth(epsilon_dual=1e-4))
    half = smooth_rounds_dual(_smooth(epsilon_dual=1e-4, theta=0.5))
    damped = smooth_rounds_dual(_smooth(epsilon_dual=1e-4, nu=0.25))

    assert half == pytest.approx(2.0 * exact)
    assert damped == pytest.approx(4.0 * exact)
    assert smooth_rounds_dual(_smooth(epsilon_dual=1e-4, theta=1.0)) == math.inf


def test_smooth_rounds_random_inputs():
    rng = np.random.default_rng(0)
    for _ in range(50):
        lam, gamma, sigma_max, sigma_prime = rng.uniform(0.01, 2.0, 4)
        n = int(rng.integers(1, 1000))
        eps = float(rng.uniform(1e-8, 1e-1))
        inputs = RateInputs(lam=lam, n=n, gamma=gamma, sigma_max=sigma_max, sigma_prime=sigma_prime, epsilon_dual=eps, epsilon_gap=eps)
        factor = (lam * gamma * n + sigma_max * sigma_prime) / (lam * gamma * n)

        assert smooth_rounds_dual(inputs) == pytest.approx(factor * math.log(1.0 / eps), rel=1e-12)
        assert smooth_rounds_gap(inputs) >= smooth_rounds_dual(inputs)


def test_lipschitz_rounds_example():
    assert lipschitz_rounds(_lipschitz()) == (18.0, 14.0, 0.0)
    assert lipschitz_rounds(_lipschitz(dual_suboptimality=5.0)) == (20.0, 16.0, 2.0)


def test_lipschitz_rounds_without_coupling():
    T, T0, t0 = lipschitz_rounds(_lipschitz(sigma=0.0))
    assert (T, T0, t0) == (1.0, 0.0, 0.0)


def test_missing_inputs_are_reported():
    with pytest.raises(InvalidArgumentError):
        smooth_rounds_dual(_smooth())
    with pytest.raises(InvalidArgumentError):
        smooth_rounds_gap(RateInputs(lam=1.0, n=4, sigma_prime=1.0, sigma_max=1.0, epsilon_gap=0.1))
    with pytest.raises(InvalidArgumentError):
        lipschitz_rounds(_lipschitz(lipschitz=None))


@pytest.mark.parametrize("field, value", [("lam", 0.0), ("n", 0), ("sigma_prime", -1.0), ("nu", 1.5), ("theta", -0.1)])
def test_rate_inputs_validation(field, value):
    fields = dict(lam=1.0, n=4, sigma_prime=1.0)
    fields[field] = value
    with pytest.raises(ValueError):
        RateInputs(**fields)


@pytest.mark.parametrize("K", [1, 2, 8, 64])
def test_adding_bound_never_exceeds_averaging(K):
    bounds = aggregation_bounds(_smooth(epsilon_dual=1e-6, epsilon_gap=1e-6, sigma_max=3.0), K)

    assert set(bounds) == {"adding", "averaging"}
    for key in ("smooth_rounds_dual", "smooth_rounds_gap"):
        assert bounds["adding"][key] <= bounds["averaging"][key] + 1e-9
    if K == 1:
        assert bounds["adding"] == bounds["averaging"]


def test_aggregation_bounds_include_lipschitz_estimate():
    bounds = aggregation_bounds(_lipschitz(), 4)
    assert bounds["adding"]["lipschitz_rounds"] == lipschitz_rounds(_lipschitz(nu=1.0, sigma_prime=4.0))[0]
    assert "smooth_rounds_dual" not in bounds["adding"]


def test_averaged_iterate_window():
    history = [np.full(2, float(t)) for t in range(6)]

    np.testing.assert_array_equal(averaged_iterate(history, 0, 5), [3.0, 3.0])
    np.testing.assert_array_equal(averaged_iterate(history, 3, 5), [4.5, 4.5])
    np.testing.assert_array_equal(averaged_iterate(history, 4, 5), [5.0, 5.0])


@pytest.mark.parametrize("T0, T", [(3, 3), (4, 2), (-1, 2), (0, 6)])
def test_averaged_iterate_rejects_bad_windows(T0, T):
    history = [np.zeros(2) for _ in range(6)]
    with pytest.raises(InvalidArgumentError):
        averaged_iterate(history, T0, T)


def test_lipschitz_rounds_only_for_lipschitz_losses():
    with pytest.raises(InvalidArgumentError):
        lipschitz_rounds(_lipschitz(loss="quadratic"))
    with pytest.raises(InvalidArgumentError):
        lipschitz_rounds(_lipschitz(loss="sqhinge"))
    assert lipschitz_rounds(_lipschitz(loss="hinge")) == lipschitz_rounds(_lipschitz())
