import numpy as np
import pytest
import scipy.sparse as sp

from cocoa.losses import get_loss
from cocoa.problem import shared_vector
from cocoa.solvers import (
    CoordinateDescentSolver,
    LocalUpdate,
    cd_step,
    check_compatibility,
    create_solver,
    exact_local_solution,
    measure_theta,
    solve_local,
)
from cocoa.subproblem import local_objective, view_from_problem
from cocoa.verify import random_feasible, theta_estimate
from config import config
from models.dataset import Dataset, Partition
from models.errors import ConfigurationError, InvalidArgumentError
from models.problem import DualState, ProblemSpec
from models.run_config import SolverConfig

from conftest import make_problem

ALL_SOLVERS = ("cd", "gd", "cg", "lbfgs", "bb", "fista")


def _view(spec, parts, k=0, alpha=None, sigma_prime=None, round_index=1):
    alpha = np.zeros(spec.n) if alpha is None else alpha
    state = DualState(alpha=alpha, v=shared_vector(spec, alpha))
    sigma_prime = float(parts.K) if sigma_prime is None else sigma_prime
    return view_from_problem(spec, parts, k, state, sigma_prime, round_index=round_index)


def _identity_problem(labels, lam=0.5, sizes=None):
    n = len(labels)
    dataset = Dataset(X=sp.identity(n, format="csc"), labels=labels)
    spec = ProblemSpec(dataset=dataset, loss=get_loss("quadratic"), lam=lam)
    return spec, Partition.from_sizes(sizes or [1] * n)


def test_zero_budget_is_rejected():
    with pytest.raises(ValueError):
        SolverConfig(local_iters=0)
    with pytest.raises(ValueError):
        SolverConfig(memory=0)
    with pytest.raises(ValueError):
        SolverConfig(shrink=1.0)


def test_single_cd_step_on_one_point_shard():
    spec, parts = _identity_problem([0.7, -1.0, 2.0], lam=0.5)
    view = _view(spec, parts, k=0, sigma_prime=3.0)
    update = solve_local(view, SolverConfig(id="cd", local_iters=1))

    s = 3.0 / (0.5 * 3)
    assert update.h_local[0] == pytest.approx(0.7 / (1.0 + s), rel=1e-14)


def test_long_cd_run_is_near_exact():
    spec, parts = make_problem("quadratic", n=10, d=4, K=2)
    view = _view(spec, parts, alpha=np.linspace(-1.0, 1.0, spec.n))
    update = solve_local(view, SolverConfig(id="cd", local_iters=10000))

    assert measure_theta(view, update.h_local) <= 1e-6


@pytest.mark.parametrize("solver_id", ALL_SOLVERS)
@pytest.mark.parametrize("budget", [1, 3, 40])
def test_no_worsening_on_quadratic(solver_id, budget):
    spec, parts = make_problem("quadratic", n=12, K=2)
    view = _view(spec, parts, alpha=np.random.default_rng(budget).standard_normal(spec.n))
    update = solve_local(view, SolverConfig(id=solver_id, local_iters=budget))

    assert local_objective(view, update.h_local) >= local_objective(view, np.zeros(view.size)) - 1e-12


@pytest.mark.parametrize("loss_id", ["hinge", "sqhinge", "logistic"])
@pytest.mark.parametrize("solver_id", ["cd", "fista"])
def test_no_worsening_on_margin_losses(loss_id, solver_id):
    spec, parts = make_problem(loss_id, n=12, K=2)
    alpha = random_feasible(loss_id, spec.dataset.labels, np.random.default_rng(0))
    view = _view(spec, parts, alpha=alpha)
    update = solve_local(view, SolverConfig(id=solver_id, local_iters=25))

    assert np.all(spec.loss.feasible(view.labels, view.alpha_local + update.h_local))
    assert local_objective(view, update.h_local) >= local_objective(view, np.zeros(view.size)) - 1e-12


@pytest.mark.parametrize("solver_id", ["cg", "lbfgs"])
def test_quasi_newton_solvers_reach_local_optimum(solver_id):
    spec, parts = make_problem("quadratic", n=12, K=2)
    view = _view(spec, parts, alpha=np.linspace(-1.0, 1.0, spec.n))
    update = solve_local(view, SolverConfig(id=solver_id, local_iters=60))

    assert measure_theta(view, update.h_local) <= 1e-6


@pytest.mark.parametrize("solver_id", ["gd", "bb", "fista"])
def test_first_order_solvers_make_progress(solver_id):
    spec, parts = make_problem("quadratic", n=12, K=2)
    view = _view(spec, parts, alpha=np.linspace(-1.0, 1.0, spec.n))
    short = measure_theta(view, solve_local(view, SolverConfig(id=solver_id, local_iters=2)).h_local)
    long = measure_theta(view, solve_local(view, SolverConfig(id=solver_id, local_iters=500)).h_local)

    assert long < 1.0
    assert long <= short + 1e-12
    assert long <= 1e-4


def test_fista_keeps_hinge_iterates_in_box():
    spec, parts = make_problem("hinge", n=16, K=2)
    view = _view(spec, parts, alpha=0.5 * spec.dataset.labels)
    update = solve_local(view, SolverConfig(id="fista", local_iters=100))
    u = view.labels * (view.alpha_local + update.h_local)

    assert np.all((u >= -1e-12) & (u <= 1.0 + 1e-12))


@pytest.mark.parametrize("solver_id", ["gd", "cg", "lbfgs", "bb"])
def test_batch_solvers_reject_non_smooth_losses(solver_id):
    with pytest.raises(ConfigurationError):
        check_compatibility(solver_id, get_loss("hinge"))
    spec, parts = make_problem("hinge")
    with pytest.raises(ConfigurationError):
        create_solver(SolverConfig(id=solver_id)).solve(_view(spec, parts))


def test_unknown_solver():
    with pytest.raises(InvalidArgumentError):
        check_compatibility("sgd", get_loss("quadratic"))


def test_update_carries_shared_vector_delta():
    spec, parts = make_problem("quadratic", n=12, K=3)
    view = _view(spec, parts, k=1)
    update = solve_local(view, SolverConfig(id="cd", local_iters=30))
    expected = spec.dataset.X[:, parts.block(1)] @ update.h_local / (spec.lam * spec.n)

    np.testing.assert_allclose(update.delta_v, expected, atol=1e-10)
    assert update.local_iters == 30


def test_cd_on_zero_column_uses_conjugate_only():
    dataset = Dataset(X=sp.csc_matrix((2, 3)), labels=[0.4, -1.2, 3.0])
    spec = ProblemSpec(dataset=dataset, loss=get_loss("quadratic"), lam=1.0)
    view = _view(spec, Partition.from_sizes([3]), alpha=np.array([0.1, 0.0, -2.0]))

    assert cd_step(view, 2, np.zeros(3)) == pytest.approx(5.0)


def test_cd_at_hinge_boundary_does_not_move():
    dataset = Dataset(X=sp.csc_matrix((2, 2)), labels=[1.0, -1.0])
    spec = ProblemSpec(dataset=dataset, loss=get_loss("hinge"), lam=1.0)
    view = _view(spec, Partition.from_sizes([2]), alpha=np.array([1.0, -1.0]))

    assert cd_step(view, 0, np.zeros(2)) == 0.0
    assert cd_step(view, 1, np.zeros(2)) == 0.0


def test_cd_step_matches_one_dimensional_maximizer():
    spec, parts = make_problem("quadratic", n=12, K=2, seed=21)
    view = _view(spec, parts, alpha=np.random.default_rng(1).standard_normal(spec.n))
    h = np.random.default_rng(2).standard_normal(view.size) * 0.1
    for j in range(view.size):
        e = np.zeros(view.size)
        e[j] = 1.0
        # Сужение G_k на координату j квадратично, восстанавливаем его по трем точкам
        center, right, left = (local_objective(view, h + t * e) for t in (0.0, 1.0, -1.0))
        slope, curvature = (right - left) / 2.0, center - (right + left) / 2.0
        expected = slope / (2.0 * curvature)
        assert cd_step(view, j, h) == pytest.approx(expected, abs=1e-8)


def test_theta_endpoints():
    spec, parts = make_problem("quadratic", n=10, K=2)
    view = _view(spec, parts)
    h_star = exact_local_solution(view)

    assert measure_theta(view, h_star, h_star) == 0.0
    assert measure_theta(view, np.zeros(view.size), h_star) == pytest.approx(1.0)


def test_theta_is_zero_when_start_is_optimal():
    spec, parts = _identity_problem([1.0, -1.0], sizes=[2])
    alpha = exact_local_solution(_view(spec, parts))
    view = _view(spec, parts, alpha=alpha, sigma_prime=1.0)

    assert measure_theta(view, np.zeros(2)) == 0.0


@pytest.mark.parametrize("loss_id", ["hinge", "logistic"])
def test_exact_solution_for_margin_losses(loss_id):
    spec, parts = make_problem(loss_id, n=8, K=2)
    view = _view(spec, parts)
    h_star = exact_local_solution(view)
    update = solve_local(view, SolverConfig(id="cd", local_iters=40))

    assert local_objective(view, h_star) >= local_objective(view, update.h_local) - 1e-10


def test_theta_monte_carlo_estimate():
    spec, parts = make_problem("quadratic", n=12, K=2, seed=4)
    view = _view(spec, parts, alpha=np.linspace(-1.0, 1.0, spec.n))
    h_star = exact_local_solution(view)
    budget = SolverConfig(id="cd", local_iters=2 * view.size)

    short_run = theta_estimate(view, budget, range(400), h_star)
    long_run = theta_estimate(view, budget, range(1000, 3000), h_star)

    assert 0.0 < short_run < 1.0
    assert abs(short_run - long_run) <= config.verify.theta_tolerance


def test_theta_decreases_with_budget():
    spec, parts = make_problem("quadratic", n=24, K=2, seed=6)
    view = _view(spec, parts, alpha=np.linspace(-1.0, 1.0, spec.n))
    h_star = exact_local_solution(view)
    seeds = range(30)

    means = [theta_estimate(view, SolverConfig(id="cd", local_iters=H), seeds, h_star) for H in (3, 12, 48)]

    assert means[0] >= means[1] >= means[2]


def test_cd_is_seed_deterministic():
    spec, parts = make_problem("quadratic", n=12, K=2)
    view = _view(spec, parts, round_index=5)
    first = CoordinateDescentSolver(SolverConfig(local_iters=20, seed=3)).solve(view)
    second = CoordinateDescentSolver(SolverConfig(local_iters=20, seed=3)).solve(view)

    np.testing.assert_array_equal(first.h_local, second.h_local)


class _OvershootingSolver(CoordinateDescentSolver):
    def _solve(self, view):
        return np.full(view.size, 1e3), 1


def test_worsening_step_falls_back_to_zero():
    spec, parts = make_problem("quadratic", n=12, K=2)
    update = _OvershootingSolver(SolverConfig()).solve(_view(spec, parts))

    np.testing.assert_array_equal(update.h_local, 0.0)
    np.testing.assert_array_equal(update.delta_v, 0.0)


def test_step_outside_domain_falls_back_to_zero():
    spec, parts = make_problem("hinge", n=12, K=2)
    update = _OvershootingSolver(SolverConfig()).solve(_view(spec, parts))

    assert isinstance(update, LocalUpdate)
    np.testing.assert_array_equal(update.h_local, 0.0)
