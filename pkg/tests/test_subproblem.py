import numpy as np
import pytest
import scipy.sparse as sp

from cocoa.losses import get_loss
from cocoa.problem import dual_value, f_value, shared_vector
from cocoa.subproblem import (
    block_quadratic,
    local_conjugate_sum,
    local_gradient_smooth_part,
    local_objective,
    local_smooth_part,
    lower_bound_check,
    lower_bound_slack,
    safe_sigma_prime,
    sigma_k,
    sigma_prime_min,
    theory_params,
    view_from_problem,
)
from cocoa.verify import finite_difference_grad, oracle_sigma_prime_min, orthogonal_instance, random_feasible
from models.dataset import Dataset, Partition
from models.errors import DomainError, InvalidArgumentError
from models.problem import DualState, ProblemSpec

from conftest import make_problem, random_dataset


def _state(spec, alpha):
    return DualState(alpha=alpha, v=shared_vector(spec, alpha))


@pytest.mark.parametrize("loss_id", ["quadratic", "hinge", "sqhinge", "logistic"])
def test_local_objectives_sum_to_dual(loss_id):
    spec, parts = make_problem(loss_id, n=15, K=4)
    rng = np.random.default_rng(1)
    for _ in range(10):
        state = _state(spec, random_feasible(loss_id, spec.dataset.labels, rng))
        total = sum(
            local_objective(view_from_problem(spec, parts, k, state, 4.0), np.zeros(parts.sizes[k]))
            for k in range(parts.K)
        )
        assert total == pytest.approx(dual_value(spec, state), abs=1e-9)


def test_objective_at_zero_is_reference_value(quadratic_problem):
    spec, parts = quadratic_problem
    state = _state(spec, np.linspace(-1.0, 1.0, spec.n))
    view = view_from_problem(spec, parts, 1, state, 3.0)
    expected = -f_value(spec, state.alpha) / parts.K - local_conjugate_sum(view, np.zeros(view.size))

    assert local_objective(view, np.zeros(view.size)) == pytest.approx(expected, abs=1e-12)


def test_objective_matches_term_by_term_evaluation():
    spec, parts = make_problem("quadratic", n=8, d=3, K=2)
    alpha = np.random.default_rng(3).standard_normal(spec.n)
    h = np.random.default_rng(4).standard_normal(4)
    state = _state(spec, alpha)
    view = view_from_problem(spec, parts, 0, state, sigma_prime=2.0)

    dense = spec.dataset.X.toarray()
    block = parts.block(0)
    v = dense @ alpha / (spec.lam * spec.n)
    f = 0.5 * spec.lam * float(v @ v)
    grad = dense[:, block].T @ v / spec.n
    Xh = dense[:, block] @ h / (spec.lam * spec.n)
    beta = alpha[block] + h
    labels = spec.dataset.labels[block]
    R = sum(0.5 * b * b - y * b for b, y in zip(beta, labels)) / spec.n
    expected = -f / 2 - grad @ h - spec.lam * 2.0 / 2 * float(Xh @ Xh) - R

    assert local_objective(view, h) == pytest.approx(expected, rel=1e-12)


def test_objective_outside_domain(hinge_problem):
    spec, parts = hinge_problem
    view = view_from_problem(spec, parts, 0, _state(spec, np.zeros(spec.n)), 3.0)
    with pytest.raises(DomainError):
        local_objective(view, -3.0 * view.labels)


def test_gradient_at_zero(quadratic_problem):
    spec, parts = quadratic_problem
    view = view_from_problem(spec, parts, 2, _state(spec, np.ones(spec.n)), 3.0)
    np.testing.assert_array_equal(local_gradient_smooth_part(view, np.zeros(view.size)), -view.grad_block)


def test_gradient_on_unit_column():
    dataset = Dataset(X=sp.identity(3, format="csc"), labels=[1.0, -1.0, 1.0])
    spec = ProblemSpec(dataset=dataset, loss=get_loss("quadratic"), lam=0.5)
    parts = Partition.from_sizes([1, 1, 1])
    view = view_from_problem(spec, parts, 0, _state(spec, np.array([0.2, 0.1, -0.4])), 3.0)

    expected = -view.grad_block - 3.0 / (0.5 * 9)
    np.testing.assert_allclose(local_gradient_smooth_part(view, np.ones(1)), expected, rtol=1e-14)


def test_gradient_matches_finite_differences(quadratic_problem):
    spec, parts = quadratic_problem
    view = view_from_problem(spec, parts, 0, _state(spec, np.ones(spec.n)), 3.0)
    h = np.random.default_rng(6).standard_normal(view.size)
    analytic = local_gradient_smooth_part(view, h)
    numeric = finite_difference_grad(lambda x: -local_smooth_part(view, x), h)

    assert np.linalg.norm(analytic - numeric) <= 1e-6 * max(1.0, np.linalg.norm(analytic))


def test_safe_sigma_prime():
    assert safe_sigma_prime(1.0, 4) == 4.0
    assert safe_sigma_prime(0.25, 4) == 1.0
    assert safe_sigma_prime(1.0, 1) == 1.0
    for nu in (0.0, 1.5):
        with pytest.raises(InvalidArgumentError):
            safe_sigma_prime(nu, 2)


def test_sigma_prime_min_single_machine():
    dataset = random_dataset(8, 3, seed=2)
    assert sigma_prime_min(dataset, Partition.from_sizes([8]), 0.5) == pytest.approx(0.5, abs=1e-10)


def test_sigma_prime_min_orthogonal_shards():
    spec, parts = orthogonal_instance(n=9, K=3)
    assert sigma_prime_min(spec.dataset, parts, 1.0) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("nu", [0.5, 1.0])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_sigma_prime_min_within_safe_range(nu, seed):
    dataset = random_dataset(8, 5, seed=seed)
    parts = Partition.from_sizes([4, 4])
    value = sigma_prime_min(dataset, parts, nu)

    assert nu - 1e-10 <= value <= 2 * nu + 1e-8
    assert value == pytest.approx(oracle_sigma_prime_min(dataset, parts, nu), abs=1e-8)


def test_sigma_prime_min_refuses_large_instances():
    dataset = random_dataset(30, 3, seed=0)
    with pytest.raises(InvalidArgumentError):
        sigma_prime_min(dataset, Partition.from_sizes([15, 15]), 1.0, max_n=20)


def test_sigma_k_examples():
    x = np.array([[0.3], [0.4], [0.0]])
    single = Dataset(X=sp.csc_matrix(x), labels=[1.0])
    assert sigma_k(single, Partition.from_sizes([1]), 0) == pytest.approx(0.25, rel=1e-10)

    orthonormal = Dataset(X=sp.csc_matrix(np.array([[0.6, -0.8], [0.8, 0.6]])), labels=[1.0, 1.0])
    assert sigma_k(orthonormal, Partition.from_sizes([2]), 0) == pytest.approx(1.0, rel=1e-10)

    dense = np.random.default_rng(5).standard_normal((8, 5))
    block = Dataset(X=sp.csc_matrix(dense), labels=np.ones(5))
    expected = np.linalg.eigvalsh(dense.T @ dense)[-1]
    assert sigma_k(block, Partition.from_sizes([5]), 0) == pytest.approx(expected, rel=1e-8)


def test_sigma_k_of_zero_shard():
    empty = Dataset(X=sp.csc_matrix((3, 2)), labels=[1.0, -1.0])
    assert sigma_k(empty, Partition.from_sizes([2]), 0) == 0.0


def test_theory_params_bounds():
    dataset = random_dataset(20, 6, seed=7)
    parts = Partition.from_sizes([7, 7, 6])
    params = theory_params(dataset, parts, nu=1.0, with_sigma_prime_min=True)

    assert params.sigma_max == max(params.sigma_k)
    assert params.sigma_max <= max(parts.sizes) + 1e-9
    assert params.sigma == pytest.approx(sum(s * size for s, size in zip(params.sigma_k, parts.sizes)))
    assert params.sigma <= sum(size * size for size in parts.sizes)
    assert params.sigma_prime_min <= 3.0 + 1e-8


def test_block_quadratic_sums_local_norms():
    dataset = random_dataset(6, 3, seed=1)
    parts = Partition.from_sizes([2, 4])
    h = np.arange(1.0, 7.0)
    dense = dataset.X.toarray()
    expected = np.sum((dense[:, :2] @ h[:2]) ** 2) + np.sum((dense[:, 2:] @ h[2:]) ** 2)

    assert block_quadratic(dataset, parts, h) == pytest.approx(expected, rel=1e-12)


def test_lower_bound_is_tight_at_zero(quadratic_problem):
    spec, parts = quadratic_problem
    alpha = np.linspace(-0.5, 0.5, spec.n)
    slack = lower_bound_slack(spec, parts, 1.0, 3.0, alpha, np.zeros(spec.n))
    assert abs(slack) <= 1e-12


@pytest.mark.parametrize("nu", [1.0 / 3.0, 1.0])
def test_lower_bound_holds_with_safe_sigma_prime(nu):
    spec, parts = make_problem("quadratic", n=12, d=4, K=3, seed=12)
    rng = np.random.default_rng(13)
    for _ in range(200):
        alpha, h = rng.standard_normal(spec.n), rng.standard_normal(spec.n)
        assert lower_bound_check(spec, parts, nu, nu * parts.K, alpha, h)
