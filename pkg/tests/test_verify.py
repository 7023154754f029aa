import numpy as np
import pytest
import scipy.sparse as sp

from cocoa.losses import get_loss
from cocoa.problem import duality_gap, shared_vector
from cocoa.subproblem import sigma_prime_min
from cocoa.verify import (
    InstanceGenerator,
    SuiteReport,
    boundary_hinge_instance,
    correlated_instance,
    geometric_decrease_check,
    oracle_dense_dual_opt,
    orthogonal_instance,
    property_suite,
    random_feasible,
    spectral_norm_check,
)
from models.dataset import Dataset
from models.errors import InvalidArgumentError
from models.problem import DualState, ProblemSpec
from utils.file_manager import FileManager

from conftest import make_problem, random_dataset


def test_dense_oracle_on_single_example():
    x = np.array([0.6, 0.0, 0.8])
    dataset = Dataset(X=sp.csc_matrix(x.reshape(-1, 1)), labels=[2.0])
    spec = ProblemSpec(dataset=dataset, loss=get_loss("quadratic"), lam=0.5)
    alpha, _ = oracle_dense_dual_opt(spec)

    assert alpha[0] == pytest.approx(2.0 / (1.0 + 1.0 / 0.5), rel=1e-10)


@pytest.mark.parametrize("loss_id", ["quadratic", "hinge", "sqhinge", "logistic"])
def test_dense_oracle_closes_the_gap(loss_id):
    spec, _ = make_problem(loss_id, n=10, d=4, K=2)
    alpha, _ = oracle_dense_dual_opt(spec)
    state = DualState(alpha=alpha, v=shared_vector(spec, alpha))

    assert duality_gap(spec, state) <= 1e-10
    assert np.all(spec.loss.feasible(spec.dataset.labels, alpha))


def test_dense_oracle_refuses_large_instances():
    spec, _ = make_problem("quadratic", n=50, d=3, K=2)
    with pytest.raises(InvalidArgumentError):
        oracle_dense_dual_opt(spec)


def test_boundary_hinge_optimum_sits_on_the_box_edge():
    spec, _ = boundary_hinge_instance(K=3)
    alpha, dual = oracle_dense_dual_opt(spec)

    np.testing.assert_allclose(spec.dataset.labels * alpha, 1.0, atol=1e-9)
    assert dual == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("loss_id", ["quadratic", "sqhinge"])
@pytest.mark.parametrize("nu", [0.5, 1.0])
def test_exact_rounds_decrease_geometrically(loss_id, nu):
    spec, parts = make_problem(loss_id, n=12, d=4, K=3, lam=0.5)
    assert geometric_decrease_check(spec, parts, nu, nu * parts.K, rounds=15)


def test_geometric_check_needs_smooth_loss(hinge_problem):
    spec, parts = hinge_problem
    with pytest.raises(InvalidArgumentError):
        geometric_decrease_check(spec, parts, 1.0, 3.0)


def test_power_method_matches_dense_norm(small_instance):
    spec, parts = small_instance
    assert spectral_norm_check(spec.dataset, parts)
    assert spectral_norm_check(random_dataset(30, 8, seed=3), InstanceGenerator(n=30, K=4).generate()[1])


def test_instance_generator_invariants():
    generator = InstanceGenerator(n=25, d=6, K=3, density=0.4, loss="hinge", lam=0.05, seed=8)
    spec, parts = generator.generate()
    again, _ = generator.generate()

    assert spec.dataset.equals(again.dataset)
    assert np.all(spec.dataset.column_norms() <= 1.0 + 1e-12)
    assert set(np.unique(spec.dataset.labels)) <= {-1.0, 1.0}
    assert parts.K == 3
    np.testing.assert_array_equal(np.sort(np.concatenate(parts.blocks)), np.arange(25))


def test_special_instances():
    spec, parts = correlated_instance(n=24, K=3)
    assert sigma_prime_min(spec.dataset, parts, 1.0) >= 0.8 * parts.K

    spec, parts = orthogonal_instance(n=6, K=2, loss="hinge")
    assert spec.n == 6 and parts.K == 2
    spec.loss.validate_labels(spec.dataset.labels)


@pytest.mark.parametrize("loss_id", ["quadratic", "hinge", "sqhinge", "logistic"])
def test_random_feasible_points(loss_id):
    labels = np.array([1.0, -1.0, 1.0, -1.0])
    alpha = random_feasible(loss_id, labels, np.random.default_rng(0))
    assert np.all(get_loss(loss_id).feasible(labels, alpha))


def test_empty_suite_passes():
    report = property_suite(seed=0, trials=0)
    assert isinstance(report, SuiteReport)
    assert report.passed
    assert report.checks == []


def test_suite_passes_on_random_instances():
    report = property_suite(seed=1, trials=3, pairs=3)
    summary = report.summary()

    assert report.passed, [check.detail for check in report.failures]
    assert summary["lower_bound"] == {"passed": 3, "failed": 0}
    assert summary["subproblem_coincidence"]["passed"] == 3
    assert "monotone_cd" in summary
    assert summary["f_smoothness"] == {"passed": 3, "failed": 0}
    assert summary["theta_monotone"] == {"passed": 3, "failed": 0}


def test_negative_control_breaks_lower_bound(tmp_path):
    report = property_suite(seed=2, trials=2, sigma_prime_factor=0.5, pairs=2, dump_dir=str(tmp_path))

    assert not report.passed
    assert {check.name for check in report.failures} == {"lower_bound"}
    assert report.summary()["lower_bound"]["failed"] == 2

    dumped = report.failures[0].counterexample
    description = FileManager.load_report(dumped["config"])
    assert (tmp_path / "trial0_lower_bound.libsvm").exists()
    assert description["check"] == "lower_bound"
    assert description["sigma_prime_factor"] == 0.5


def test_theta_growth_beyond_tolerance_is_reported(tmp_path):
    report = property_suite(seed=3, trials=1, pairs=1, theta_tolerance=-1.0, dump_dir=str(tmp_path))

    assert {check.name for check in report.failures} == {"theta_monotone"}
    assert "Θ(H)" in report.failures[0].detail
    assert (tmp_path / "trial0_theta_monotone.libsvm").exists()
