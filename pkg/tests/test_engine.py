import socket
import threading

import numpy as np
import pytest

from cocoa.data import concatenate_shards, normalize_examples, partition
from cocoa.engine import (
    CocoaEngine,
    aggregate,
    assemble_alpha,
    equivalence_check,
    rounds_nonincreasing,
    run,
    sweep_machines,
    sweep_run,
)
from cocoa.losses import get_loss
from cocoa.problem import is_consistent
from cocoa.transport import TcpCoordinator, TcpWorker, frame_size
from cocoa.verify import InstanceGenerator, boundary_hinge_instance, correlated_instance
from cocoa.worker import Worker
from models.dataset import Partition
from models.errors import ConfigurationError, DivergenceError, ProtocolError
from models.metrics import SweepEntry
from models.problem import ProblemSpec
from models.run_config import RunConfig, SolverConfig
from utils.libsvm_loader import DatasetLoader

from conftest import make_problem, random_dataset


def _config(K, rounds=10, H=20, solver="cd", **kwargs):
    return RunConfig(machines=K, rounds=rounds, solver=SolverConfig(id=solver, local_iters=H), **kwargs)


def _free_port():
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def test_aggregate_adds_scaled_updates():
    v = np.array([1.0, 2.0])
    updates = [np.array([1.0, 0.0]), np.array([0.0, 3.0])]

    np.testing.assert_array_equal(aggregate(v, updates, 1.0), [2.0, 5.0])
    np.testing.assert_array_equal(aggregate(v, updates, 0.5), [1.5, 3.5])
    np.testing.assert_array_equal(aggregate(v, {1: updates[1], 0: updates[0]}, 1.0, K=2), [2.0, 5.0])


def test_aggregate_rejects_missing_or_malformed_updates():
    v = np.zeros(2)
    with pytest.raises(ProtocolError):
        aggregate(v, [np.zeros(2)], 1.0, K=2)
    with pytest.raises(ProtocolError):
        aggregate(v, {0: np.zeros(2)}, 1.0, K=2)
    with pytest.raises(ProtocolError):
        aggregate(v, [np.zeros(3)], 1.0)


def test_assemble_alpha_places_blocks():
    parts = Partition(blocks=[[2, 0], [1]], n=3)
    alpha = assemble_alpha(parts, [np.array([5.0, 6.0]), np.array([7.0])])
    np.testing.assert_array_equal(alpha, [6.0, 7.0, 5.0])


def test_zero_rounds_reports_initial_state(quadratic_problem):
    spec, parts = quadratic_problem
    result = run(spec, parts, _config(parts.K, rounds=0))

    assert [row.round for row in result.metrics] == [0]
    assert result.rounds_run == 0
    assert result.final.dual == 0.0
    np.testing.assert_array_equal(result.state.alpha, 0.0)


def test_single_machine_converges_quickly():
    spec, parts = make_problem("quadratic", n=12, K=1)
    result = run(spec, parts, _config(1, rounds=3, H=5000, gap_tol=1e-10))

    assert result.final_gap < 1e-10
    assert result.status == "converged"
    assert result.rounds_run <= 3


@pytest.mark.parametrize("loss_id", ["quadratic", "hinge", "logistic"])
def test_safe_run_keeps_state_consistent_and_dual_monotone(loss_id):
    spec, parts = make_problem(loss_id, n=24, K=3)
    result = run(spec, parts, _config(3, rounds=15, H=10))
    duals = [row.dual for row in result.metrics]

    assert is_consistent(spec, result.state)
    assert all(later >= earlier - 1e-12 for earlier, later in zip(duals, duals[1:]))
    assert all(row.gap >= -1e-9 for row in result.metrics)
    assert result.metrics[-1].gap < result.metrics[0].gap


@pytest.mark.parametrize("loss_id, solver_id", [("quadratic", "cd"), ("quadratic", "lbfgs"), ("hinge", "cd")])
def test_incremental_and_recomputed_formulations_agree(loss_id, solver_id):
    spec, parts = make_problem(loss_id, n=15, K=3)
    assert equivalence_check(spec, parts, _config(3, rounds=6, H=8, solver=solver_id))


def test_adding_reaches_hinge_boundary():
    spec, parts = boundary_hinge_instance(K=2)
    result = run(spec, parts, RunConfig.adding(2, rounds=5, solver=SolverConfig(local_iters=50)))
    margins = spec.dataset.labels * result.state.alpha

    assert np.all(margins >= 1.0 - 1e-6)
    assert result.final_gap <= 1e-9


def test_averaging_stays_inside_hinge_box_after_one_round():
    spec, parts = boundary_hinge_instance(K=2)
    result = run(spec, parts, RunConfig(machines=2, nu=0.5, rounds=1, solver=SolverConfig(local_iters=50)))

    assert np.max(spec.dataset.labels * result.state.alpha) < 1.0


def test_incompatible_solver_is_rejected(hinge_problem):
    spec, parts = hinge_problem
    with pytest.raises(ConfigurationError):
        CocoaEngine(spec, parts, _config(parts.K, solver="gd"))
    with pytest.raises(ConfigurationError):
        Worker.from_problem(spec, parts, 0, np.zeros(spec.n), 1.0, 3.0, SolverConfig(id="gd"))


def test_partition_must_match_config(quadratic_problem):
    spec, parts = quadratic_problem
    with pytest.raises(ConfigurationError):
        CocoaEngine(spec, parts, _config(parts.K + 1))


def test_unsafe_sigma_prime_diverges():
    spec, parts = correlated_instance()
    config = _config(parts.K, rounds=50, H=100, sigma_prime=0.01)

    with pytest.raises(DivergenceError) as info:
        run(spec, parts, config)
    assert info.value.round_index >= 1

    entry, result = sweep_run("sigma_prime", 0.01, spec, parts, config, target_gap=1e-6)
    assert entry.status == "diverged"
    assert result is None


def test_gap_is_measured_every_r_rounds_and_at_the_end(quadratic_problem):
    spec, parts = quadratic_problem
    result = run(spec, parts, _config(parts.K, rounds=5, gap_every=2))
    assert [row.round for row in result.metrics] == [0, 2, 4, 5]


def test_traffic_and_iteration_accounting(quadratic_problem):
    spec, parts = quadratic_problem
    H = 7
    result = run(spec, parts, _config(parts.K, rounds=4, H=H), record_time=False)

    for row in result.metrics:
        assert row.bytes_per_machine == row.round * (20 + 8 * spec.d)
        assert row.bytes_per_machine == row.round * frame_size(spec.d)
        assert row.local_iters_total == row.round * H * parts.K
        assert row.elapsed_ms == 0.0


def test_metrics_sink_receives_every_row(quadratic_problem):
    spec, parts = quadratic_problem
    seen = []
    result = run(spec, parts, _config(parts.K, rounds=3), on_metrics=seen.append)
    assert seen == result.metrics


def test_history_window_is_kept(quadratic_problem):
    spec, parts = quadratic_problem
    result = run(spec, parts, _config(parts.K, rounds=4, gap_every=3, keep_history=True))

    assert len(result.history) == 5
    np.testing.assert_array_equal(result.history[-1], result.state.alpha)


def test_runs_are_seed_deterministic(quadratic_problem):
    spec, parts = quadratic_problem
    first = run(spec, parts, _config(parts.K, rounds=4, seed=9), record_time=False)
    second = run(spec, parts, _config(parts.K, rounds=4, seed=9), record_time=False)

    assert [row.csv_row() for row in first.metrics] == [row.csv_row() for row in second.metrics]


def test_tcp_transport_matches_in_process(tmp_path):
    loader = DatasetLoader()
    raw = random_dataset(12, 5, seed=13)
    base = tmp_path / "train.libsvm"
    loader.save_shards(raw, partition(12, 3, strategy="contiguous"), base)

    raw_shards = [loader.load_shard(base, k) for k in range(3)]
    shards = [normalize_examples(shard) for shard in raw_shards]
    dataset = normalize_examples(concatenate_shards(raw_shards))
    spec = ProblemSpec(dataset=dataset, loss=get_loss("quadratic"), lam=0.1)
    parts = Partition.from_sizes([shard.n for shard in shards])
    config = _config(3, rounds=4, H=6, seed=2, gap_every=2)

    expected = run(spec, parts, config, record_time=False)

    address = f"127.0.0.1:{_free_port()}"
    engine = CocoaEngine(spec, parts, config)
    coordinator = TcpCoordinator(address, parts.K, spec.n, config.nu, engine.sigma_prime, timeout=30.0)
    workers = [
        TcpWorker(address, Worker.from_shard(k, shards[k], spec.loss, spec.lam, config.solver), connect_timeout=30.0)
        for k in range(3)
    ]
    threads = [threading.Thread(target=worker.run, daemon=True) for worker in workers]
    for thread in threads:
        thread.start()
    result = engine.run(transport=coordinator, record_time=False)
    for thread in threads:
        thread.join(timeout=30.0)

    assert [row.csv_row() for row in result.metrics] == [row.csv_row() for row in expected.metrics]
    np.testing.assert_array_equal(result.state.alpha, expected.state.alpha)
    assert all(worker.rounds_done == 4 for worker in workers)


@pytest.mark.parametrize("seed", [4, 5, 6])
def test_adding_needs_fewer_rounds_than_averaging(seed):
    spec, _ = InstanceGenerator(n=48, d=30, density=0.1, loss="quadratic", lam=0.05, seed=seed).generate()
    config = _config(1, rounds=3000, H=40, gap_tol=1e-4, seed=seed)

    adding = sweep_machines(spec, [1, 4], config, target_gap=1e-4, adding=True)
    averaging = sweep_machines(spec, [1, 4], config, target_gap=1e-4, adding=False)

    assert [entry.value for entry in adding] == [1.0, 4.0]
    assert adding[0].rounds_to_target == averaging[0].rounds_to_target
    assert adding[1].rounds_to_target is not None
    assert averaging[1].rounds_to_target is not None
    assert adding[1].rounds_to_target < averaging[1].rounds_to_target


def _entry(H, rounds_to_target, status="converged"):
    return SweepEntry(parameter="H", value=H, status=status, rounds_run=50, final_gap=0.0, rounds_to_target=rounds_to_target)


def test_rounds_nonincreasing_over_budgets():
    assert rounds_nonincreasing([_entry(10, 5), _entry(1, 30), _entry(100, 5)])
    assert rounds_nonincreasing([_entry(1, None, "max_rounds"), _entry(10, None, "max_rounds")])
    assert rounds_nonincreasing([])

    assert not rounds_nonincreasing([_entry(1, 5), _entry(10, 8)])
    assert not rounds_nonincreasing([_entry(1, 20), _entry(10, None, "max_rounds")])
    assert not rounds_nonincreasing([_entry(1, 20), _entry(10, 3, "diverged")])
