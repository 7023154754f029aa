import time
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from cocoa.data import partition
from cocoa.problem import evaluate, initial_state, shared_vector
from cocoa.solvers import check_compatibility, create_solver
from cocoa.subproblem import view_from_problem
from cocoa.transport import InProcessTransport, Transport, frame_size
from cocoa.worker import Worker
from models.dataset import Partition
from models.errors import ConfigurationError, DivergenceError, ProtocolError
from models.metrics import RoundMetrics, RunResult, SweepEntry
from models.problem import DualState, ProblemSpec
from models.run_config import RunConfig
from utils.logger_config import log_performance

MetricsSink = Callable[[RoundMetrics], None]

# Допуск совпадения итераций двух эквивалентных формулировок
EQUIVALENCE_TOLERANCE = 1e-10


def aggregate(
    v: np.ndarray, updates: Union[Sequence[Optional[np.ndarray]], Dict[int, np.ndarray]], nu: float, K: Optional[int] = None
) -> np.ndarray:
    """
    v′ = v + ν Σ_k Δv_k со сложением строго по возрастанию k

    Args:
        v: Текущий общий вектор
        updates: Δv_k в виде списка или словаря {k: Δv_k}
        nu: Параметр агрегации ν
        K: Ожидаемое число машин (по умолчанию len(updates))

    Returns:
        Новый вектор v′
    """
    if isinstance(updates, dict):
        K = K if K is not None else (max(updates) + 1 if updates else 0)
        ordered = [updates.get(k) for k in range(K)]
    else:
        ordered = list(updates)
        K = K if K is not None else len(ordered)
        if len(ordered) != K:
            raise ProtocolError(f"Получено {len(ordered)} обновлений вместо {K}")

    total = np.zeros_like(v, dtype=np.float64)
    for k, delta in enumerate(ordered):
        if delta is None:
            raise ProtocolError(f"Нет обновления от машины {k}")
        if np.shape(delta) != np.shape(v):
            raise ProtocolError(f"Машина {k}: длина Δv {np.size(delta)} вместо {np.size(v)}")
        total += delta
    return v + nu * total


def assemble_alpha(parts: Partition, blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Собирает глобальный α из блоков α_[k]"""
    alpha = np.zeros(parts.n)
    for k, block in enumerate(blocks):
        indices = parts.block(k)
        if np.size(block) != indices.size:
            raise ProtocolError(f"Машина {k}: блок α длины {np.size(block)} вместо {indices.size}")
        alpha[indices] = block
    return alpha


class CocoaEngine:
    """Внешний цикл: локальные решения, сложение Δv, поддержка согласованного состояния"""

    def __init__(self, spec: ProblemSpec, parts: Partition, config: RunConfig):
        check_compatibility(config.solver.id, spec.loss)
        if parts.n != spec.n:
            raise ConfigurationError(f"Разбиение на {parts.n} примеров не подходит к n={spec.n}")
        if parts.K != config.machines:
            raise ConfigurationError(f"Разбиение на {parts.K} блоков, а в конфигурации K={config.machines}")

        self.spec = spec
        self.parts = parts
        self.config = config
        self.sigma_prime = config.effective_sigma_prime

        if not config.is_safe:
            logger.warning(
                f"σ′={self.sigma_prime:g} меньше безопасного νK={config.nu * config.machines:g}: "
                f"сходимость не гарантирована, возможна расходимость"
            )

    def build_transport(self, alpha: np.ndarray) -> InProcessTransport:
        workers = [
            Worker.from_problem(self.spec, self.parts, k, alpha, self.config.nu, self.sigma_prime, self.config.solver)
            for k in range(self.parts.K)
        ]
        return InProcessTransport(workers, self.spec.d)

    def _measure(
        self, round_index: int, state: DualState, started: float, sent: int, iterations: int, monitor: int, record_time: bool
    ) -> RoundMetrics:
        primal, dual, gap = evaluate(self.spec, state)
        return RoundMetrics(
            round=round_index,
            elapsed_ms=(time.perf_counter() - started) * 1000.0 if record_time else 0.0,
            primal=primal,
            dual=dual,
            gap=gap,
            bytes_per_machine=sent,
            local_iters_total=iterations,
            monitor_bytes_per_machine=monitor,
        )

    @log_performance("CocoaEngine.run")
    def run(
        self,
        alpha0: Optional[np.ndarray] = None,
        transport: Optional[Transport] = None,
        on_metrics: Optional[MetricsSink] = None,
        record_time: bool = True,
    ) -> RunResult:
        """
        Выполняет до T раундов или до зазора ≤ ε

        Args:
            alpha0: Начальное α⁰ (по умолчанию 0)
            transport: Транспорт координатора (по умолчанию потоковый)
            on_metrics: Вызывается для каждой измеренной строки метрик
            record_time: False записывает elapsed_ms = 0 (побайтно воспроизводимые трассы)

        Returns:
            RunResult с финальным состоянием и трассой
        """
        config = self.config
        spec = self.spec
        state = initial_state(spec, alpha0)
        alpha = state.alpha.copy()
        v = state.v
        transport = transport if transport is not None else self.build_transport(alpha)

        logger.info(
            f"Старт: {spec}, K={config.machines}, ν={config.nu:g}, σ′={self.sigma_prime:g}, "
            f"решатель {config.solver.id} (H={config.solver.local_iters}), T={config.rounds}"
        )

        metrics: List[RoundMetrics] = []
        history = [alpha.copy()] if config.keep_history else None
        update_frame = frame_size(spec.d)
        largest_block = max(self.parts.sizes)
        sent = monitor = iterations = 0
        status = "max_rounds"
        rounds_run = 0

        def record(row: RoundMetrics) -> None:
            metrics.append(row)
            if on_metrics is not None:
                on_metrics(row)

        started = time.perf_counter()
        with transport:
            blocks = transport.start(v)
            alpha_workers = assemble_alpha(self.parts, blocks)
            if not np.array_equal(alpha_workers, alpha):
                raise ProtocolError("Начальные α машин не совпадают с α⁰ координатора")

            row = self._measure(0, DualState(alpha=alpha, v=v), started, 0, 0, 0, record_time)
            record(row)
            previous_dual = row.dual
            finished = row.gap <= config.gap_tol
            if finished:
                status = "converged"

            for t in range(1, config.rounds + 1):
                if finished:
                    break
                updates, done = transport.collect_updates(t)
                iterations += done if done else config.solver.local_iters * config.machines
                sent += update_frame
                v_next = aggregate(v, updates, config.nu, config.machines)
                rounds_run = t

                if not np.all(np.isfinite(v_next)):
                    raise DivergenceError("нечисловые значения в v: расходимость при небезопасном σ′", t, metrics)

                last = t == config.rounds
                measured = last or t % config.gap_every == 0
                if measured or config.keep_history:
                    alpha = assemble_alpha(self.parts, transport.gather_alpha(t))
                    monitor += frame_size(largest_block)
                    if history is not None:
                        history.append(alpha.copy())

                if measured:
                    row = self._measure(t, DualState(alpha=alpha, v=v_next), started, sent, iterations, monitor, record_time)
                    record(row)
                    logger.debug(f"Раунд {t}: P={row.primal:.10g}, D={row.dual:.10g}, зазор={row.gap:.3e}")
                    if not np.isfinite(row.dual) or previous_dual - row.dual > config.divergence_threshold:
                        raise DivergenceError(
                            f"D упало с {previous_dual:.6g} до {row.dual:.6g}: расходимость при небезопасном σ′",
                            t,
                            metrics,
                        )
                    previous_dual = row.dual
                    if row.gap <= config.gap_tol:
                        status = "converged"
                        finished = True

                if not (finished or last):
                    transport.publish(v_next, t)
                v = v_next

        # Последний выполненный раунд всегда измеряется, поэтому alpha актуален
        final_state = DualState(alpha=alpha, v=v)
        logger.info(
            f"Завершено за {rounds_run} раундов ({status}), зазор {metrics[-1].gap:.3e}, "
            f"Δv-трафик {sent} байт на машину"
        )
        return RunResult(
            state=final_state,
            metrics=metrics,
            status=status,
            rounds_run=rounds_run,
            nu=config.nu,
            sigma_prime=self.sigma_prime,
            history=history,
        )


def run(spec: ProblemSpec, parts: Partition, config: RunConfig, **kwargs) -> RunResult:
    return CocoaEngine(spec, parts, config).run(**kwargs)


def equivalence_check(
    spec: ProblemSpec,
    parts: Partition,
    config: RunConfig,
    alpha0: Optional[np.ndarray] = None,
    tol: float = EQUIVALENCE_TOLERANCE,
) -> bool:
    """
    Сравнивает две формулировки по раундам: поддержка v приращениями
    и пересчет v = Xα/(λn) с нуля на каждом раунде
    """
    traced = config.model_copy(update={"keep_history": True, "gap_tol": 0.0})
    result = CocoaEngine(spec, parts, traced).run(alpha0=alpha0, record_time=False)

    sigma_prime = config.effective_sigma_prime
    solver = create_solver(traced.solver)
    alpha = initial_state(spec, alpha0).alpha
    for t in range(1, result.rounds_run + 1):
        state = DualState(alpha=alpha, v=shared_vector(spec, alpha))
        next_alpha = alpha.copy()
        for k in range(parts.K):
            view = view_from_problem(spec, parts, k, state, sigma_prime, round_index=t)
            update = solver.solve(view)
            next_alpha[parts.block(k)] += config.nu * update.h_local
        alpha = next_alpha
        deviation = float(np.max(np.abs(alpha - result.history[t]))) if alpha.size else 0.0
        if deviation > tol:
            logger.warning(f"Раунд {t}: формулировки разошлись на {deviation:.3e}")
            return False
    logger.info(f"Формулировки совпадают на {result.rounds_run} раундах")
    return True


def sweep_run(
    parameter: str,
    value: float,
    spec: ProblemSpec,
    parts: Partition,
    config: RunConfig,
    target_gap: float,
    on_metrics: Optional[MetricsSink] = None,
    record_time: bool = True,
) -> Tuple[SweepEntry, Optional[RunResult]]:
    """Один запуск перебора; срабатывание защиты записывается как diverged"""
    try:
        result = CocoaEngine(spec, parts, config).run(on_metrics=on_metrics, record_time=record_time)
    except DivergenceError as e:
        logger.warning(f"{parameter}={value:g}: {e}")
        last_gap = e.metrics[-1].gap if e.metrics else float("nan")
        entry = SweepEntry(parameter=parameter, value=value, status="diverged", rounds_run=e.round_index, final_gap=last_gap)
        return entry, None

    entry = SweepEntry(
        parameter=parameter,
        value=value,
        status=result.status,
        rounds_run=result.rounds_run,
        final_gap=result.final_gap,
        rounds_to_target=result.rounds_to_gap(target_gap),
        ms_to_target=result.time_to_gap(target_gap),
    )
    return entry, result


def sweep_machines(
    spec: ProblemSpec,
    machines: Sequence[int],
    config: RunConfig,
    target_gap: float,
    strategy: str = "random",
    adding: bool = True,
) -> List[SweepEntry]:
    """
    Масштабирование по числу машин: для каждого K свое разбиение и ν, σ′
    по схеме сложения (ν = 1, σ′ = K) или усреднения (ν = 1/K, σ′ = 1)
    """
    entries: List[SweepEntry] = []
    for K in machines:
        parts = partition(spec.n, K, strategy=strategy, seed=config.seed)
        nu, sigma_prime = (1.0, float(K)) if adding else (1.0 / K, 1.0)
        run_config = config.model_copy(update={"machines": K, "nu": nu, "sigma_prime": sigma_prime})
        entry, _ = sweep_run("K", K, spec, parts, run_config, target_gap)
        entries.append(entry)
    return entries


def rounds_nonincreasing(entries: Sequence[SweepEntry]) -> bool:
    """
    Больший параметр не требует больше раундов до целевого зазора;
    недостигнутая цель и расходимость считаются бесконечностью
    """
    ordered = sorted(entries, key=lambda entry: entry.value)
    rounds = [
        entry.rounds_to_target if entry.rounds_to_target is not None and entry.status != "diverged" else np.inf
        for entry in ordered
    ]
    violations = [(a.value, b.value) for a, b, r_a, r_b in zip(ordered, ordered[1:], rounds, rounds[1:]) if r_b > r_a]
    for smaller, larger in violations:
        logger.warning(f"{ordered[0].parameter}={larger:g} требует больше раундов, чем {smaller:g}")
    return not violations
