#!/usr/bin/env python3
"""
Командная строка фреймворка: обучение, переборы параметров, шардирование, оценки и проверки
"""

import argparse
import sys
from pathlib import Path
from typing import Callable, List, Optional, Tuple

# Добавляем текущую папку в путь для импортов
sys.path.append(str(Path(__file__).parent))

from loguru import logger  # noqa: E402

from config import config  # noqa: E402
from models.errors import CocoaError, InvalidArgumentError  # noqa: E402
from utils.logger_config import setup_logging  # noqa: E402

SOLVER_IDS = ("cd", "gd", "cg", "lbfgs", "bb", "fista")


def _number_list(cast: Callable[[str], float]) -> Callable[[str], List[float]]:
    def parse(value: str) -> List[float]:
        items = [item.strip() for item in value.split(",") if item.strip()]
        if not items:
            raise argparse.ArgumentTypeError("список значений пуст")
        try:
            return [cast(item) for item in items]
        except ValueError as e:
            raise argparse.ArgumentTypeError(f"неверный элемент списка: {e}") from None

    return parse


def parse_nu(value: str, machines: int, sigma_prime: Optional[str]) -> Tuple[float, Optional[float]]:
    """
    Разбирает `--nu add|avg|F` и `--sigma-prime auto|F`

    Returns:
        (ν, σ′); σ′ = None означает безопасное νK
    """
    explicit = None if sigma_prime in (None, "auto") else float(sigma_prime)
    if value == "add":
        return 1.0, explicit if explicit is not None else float(machines)
    if value == "avg":
        return 1.0 / machines, explicit if explicit is not None else 1.0
    try:
        nu = float(value)
    except ValueError:
        raise InvalidArgumentError(f"--nu ожидает add, avg или число, получено '{value}'") from None
    if not 0.0 < nu <= 1.0:
        raise InvalidArgumentError(f"--nu={nu} должно лежать в (0, 1]")
    return nu, explicit


def _add_problem_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", required=True, help="LIBSVM-файл (или база шардов в TCP-режиме)")
    parser.add_argument("--loss", default="quadratic", help="quadratic | hinge | sqhinge | logistic")
    parser.add_argument("--lambda", dest="lam", type=float, required=True, help="Параметр регуляризации λ")
    parser.add_argument("--features", type=int, default=None, help="Число признаков d (по умолчанию наибольший индекс в данных)")
    parser.add_argument("--machines", type=int, default=1, help="Число машин K")
    parser.add_argument("--partition", default=config.engine.partition_strategy, help="contiguous | round-robin | random")
    parser.add_argument("--seed", type=int, default=0)


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--nu", default="add", help="add | avg | число в (0, 1]")
    parser.add_argument("--sigma-prime", default="auto", help="auto | число")
    parser.add_argument("--solver", choices=SOLVER_IDS, default=config.solver.solver)
    parser.add_argument("--local-iters", type=int, default=config.solver.local_iters, help="Бюджет H")
    parser.add_argument("--memory", type=int, default=None, help="Память L-BFGS (по умолчанию H)")
    parser.add_argument("--rounds", type=int, default=config.engine.rounds, help="Число раундов T")
    parser.add_argument("--gap-tol", type=float, default=config.engine.gap_tol, help="Остановка при зазоре ≤ ε")
    parser.add_argument("--gap-every", type=int, default=config.engine.gap_every, help="Проверять зазор каждые R раундов")
    parser.add_argument("--no-timing", action="store_true", help="Записывать elapsed_ms = 0")


def _add_logging_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--log-level", default=config.logging.log_level)
    parser.add_argument("--log-file", action="store_true", help="Писать лог в logs/cocoa.log")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="run.py", description="Распределенная примально-двойственная оптимизация")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="Один запуск")
    _add_problem_flags(train)
    _add_run_flags(train)
    train.add_argument("--transport", choices=("inproc", "tcp"), default="inproc")
    train.add_argument("--listen", help="host:port координатора (TCP)")
    train.add_argument("--connect", help="host:port координатора для машины (TCP)")
    train.add_argument("--machine-id", type=int, help="Номер машины k (TCP)")
    train.add_argument("--metrics", help="CSV метрик")
    train.add_argument("--report", help="JSON-отчет (по умолчанию рядом с CSV)")
    train.add_argument("--average-from", type=int, default=None, help="T₀ для усредненной итерации")
    train.add_argument("--theory", action="store_true", help="Добавить σ_k, σ_max, σ в отчет")
    _add_logging_flags(train)

    sweep_h = commands.add_parser("sweep-h", help="Перебор бюджета H")
    _add_problem_flags(sweep_h)
    _add_run_flags(sweep_h)
    sweep_h.add_argument("--local-iters-list", type=_number_list(int), required=True)
    sweep_h.add_argument("--target-gap", type=float, default=1e-4)
    sweep_h.add_argument("--out-dir", default="sweeps")
    _add_logging_flags(sweep_h)

    sweep_sigma = commands.add_parser("sweep-sigma", help="Перебор σ′ при фиксированном ν")
    _add_problem_flags(sweep_sigma)
    _add_run_flags(sweep_sigma)
    sweep_sigma.add_argument("--sigma-list", type=_number_list(float), required=True)
    sweep_sigma.add_argument("--target-gap", type=float, default=1e-4)
    sweep_sigma.add_argument("--out-dir", default="sweeps")
    _add_logging_flags(sweep_sigma)

    sweep_k = commands.add_parser("sweep-k", help="Масштабирование по числу машин")
    _add_problem_flags(sweep_k)
    _add_run_flags(sweep_k)
    sweep_k.add_argument("--machines-list", type=_number_list(int), required=True)
    sweep_k.add_argument("--target-gap", type=float, default=1e-4)
    sweep_k.add_argument("--out-dir", default="sweeps")
    _add_logging_flags(sweep_k)

    shard = commands.add_parser("shard", help="Разбить набор на файлы `<base>.part<k>`")
    _add_problem_flags(shard)
    shard.add_argument("--out", required=True, help="База имен шардов")
    _add_logging_flags(shard)

    rates = commands.add_parser("rates", help="Оценки числа раундов")
    rates.add_argument("--lambda", dest="lam", type=float, required=True)
    rates.add_argument("--n", type=int, default=None)
    rates.add_argument("--loss", default=None, help="Взять γ и L из функции потерь")
    rates.add_argument("--gamma", type=float, default=None)
    rates.add_argument("--lipschitz", type=float, default=None)
    rates.add_argument("--sigma-max", type=float, default=None)
    rates.add_argument("--sigma", type=float, default=None)
    rates.add_argument("--machines", type=int, default=1)
    rates.add_argument("--nu", default="add")
    rates.add_argument("--sigma-prime", default="auto")
    rates.add_argument("--theta", type=float, default=0.0)
    rates.add_argument("--eps-dual", type=float, default=None)
    rates.add_argument("--eps-gap", type=float, default=None)
    rates.add_argument("--dual-subopt", type=float, default=None, help="Оценка D(α*) − D(α⁰)")
    rates.add_argument("--data", default=None, help="Вычислить n, σ_max, σ по данным")
    rates.add_argument("--features", type=int, default=None, help="Число признаков d для --data")
    rates.add_argument("--partition", default=config.engine.partition_strategy)
    rates.add_argument("--seed", type=int, default=0)
    _add_logging_flags(rates)

    verify = commands.add_parser("verify", help="Проверки свойств на случайных экземплярах")
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--trials", type=int, default=config.verify.trials)
    verify.add_argument("--pairs", type=int, default=config.verify.pairs_per_trial)
    verify.add_argument("--sigma-prime-factor", type=float, default=None, help="Отрицательный контроль: σ′ = factor·σ′_min")
    verify.add_argument("--dump-dir", default=config.verify.counterexample_dir)
    verify.add_argument("--report", default=None)
    _add_logging_flags(verify)
    return parser


def data_loader(args: argparse.Namespace):
    """Загрузчик LIBSVM с числом признаков из `--features`, если он задан"""
    from utils.libsvm_loader import DatasetLoader

    return DatasetLoader(n_features=getattr(args, "features", None))


def load_problem(args: argparse.Namespace):
    """Загружает и нормализует данные, строит задачу и разбиение"""
    from cocoa.data import normalize_examples, partition
    from cocoa.losses import get_loss
    from models.problem import ProblemSpec

    dataset = normalize_examples(data_loader(args).load(args.data))
    spec = ProblemSpec(dataset=dataset, loss=get_loss(args.loss), lam=args.lam)
    parts = partition(spec.n, args.machines, strategy=args.partition, seed=args.seed)
    return spec, parts


def build_run_config(args: argparse.Namespace, machines: Optional[int] = None, **overrides):
    from models.run_config import RunConfig, SolverConfig

    machines = machines if machines is not None else args.machines
    nu, sigma_prime = parse_nu(args.nu, machines, args.sigma_prime)
    solver = SolverConfig(
        id=args.solver,
        local_iters=overrides.pop("local_iters", args.local_iters),
        memory=args.memory,
        shrink=config.solver.shrink,
        armijo=config.solver.armijo,
        seed=args.seed,
    )
    fields = dict(
        machines=machines,
        nu=nu,
        sigma_prime=sigma_prime,
        rounds=args.rounds,
        gap_tol=args.gap_tol,
        gap_every=args.gap_every,
        solver=solver,
        transport=getattr(args, "transport", "inproc"),
        seed=args.seed,
        divergence_threshold=config.engine.divergence_threshold,
    )
    fields.update(overrides)
    return RunConfig(**fields)


def _run_tcp_worker(args: argparse.Namespace) -> int:
    from cocoa.data import normalize_examples
    from cocoa.losses import get_loss
    from cocoa.transport import TcpWorker
    from cocoa.worker import Worker
    from models.run_config import SolverConfig

    if args.machine_id is None:
        raise InvalidArgumentError("Для --connect требуется --machine-id")
    shard = normalize_examples(data_loader(args).load_shard(args.data, args.machine_id))
    solver = SolverConfig(
        id=args.solver,
        local_iters=args.local_iters,
        memory=args.memory,
        shrink=config.solver.shrink,
        armijo=config.solver.armijo,
        seed=args.seed,
    )
    worker = Worker.from_shard(args.machine_id, shard, get_loss(args.loss), args.lam, solver)
    rounds = TcpWorker(args.connect, worker, connect_timeout=config.engine.connect_timeout).run()
    print(f"rounds={rounds}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    """Один запуск: CSV метрик, итоговый зазор в stdout, JSON-отчет"""
    import numpy as np

    from cocoa.data import concatenate_shards, normalize_examples
    from cocoa.engine import CocoaEngine
    from cocoa.losses import get_loss
    from cocoa.problem import duality_gap, shared_vector
    from cocoa.rates import averaged_iterate
    from cocoa.subproblem import theory_params
    from cocoa.transport import TcpCoordinator
    from models.dataset import Partition
    from models.problem import DualState, ProblemSpec
    from utils.file_manager import FileManager, MetricsWriter

    if args.transport == "tcp" and args.connect:
        return _run_tcp_worker(args)

    transport = None
    if args.transport == "tcp":
        if not args.listen:
            raise InvalidArgumentError("В TCP-режиме нужен --listen (координатор) или --connect (машина)")
        loader = data_loader(args)
        shards = [loader.load_shard(args.data, k) for k in range(args.machines)]
        dataset = normalize_examples(concatenate_shards(shards))
        spec = ProblemSpec(dataset=dataset, loss=get_loss(args.loss), lam=args.lam)
        parts = Partition.from_sizes([shard.n for shard in shards])
    else:
        spec, parts = load_problem(args)

    keep_history = args.average_from is not None
    run_config = build_run_config(args, keep_history=keep_history)
    engine = CocoaEngine(spec, parts, run_config)
    if args.transport == "tcp":
        transport = TcpCoordinator(
            args.listen, parts.K, spec.n, run_config.nu, engine.sigma_prime, timeout=config.engine.accept_timeout
        )

    if args.metrics:
        with MetricsWriter(args.metrics) as writer:
            result = engine.run(transport=transport, on_metrics=writer, record_time=not args.no_timing)
    else:
        result = engine.run(transport=transport, record_time=not args.no_timing)

    print(f"final_gap={result.final_gap!r}")
    print(f"rounds={result.rounds_run}")
    print(f"status={result.status}")

    report = {
        "data": args.data,
        "loss": spec.loss.id,
        "lambda": spec.lam,
        "run_config": run_config.model_dump(),
        "sigma_prime": engine.sigma_prime,
        "status": result.status,
        "rounds": result.rounds_run,
        "final": result.final.model_dump() if result.final else None,
    }
    if keep_history:
        averaged = averaged_iterate(result.history, args.average_from, result.rounds_run)
        averaged_gap = duality_gap(spec, DualState(alpha=averaged, v=shared_vector(spec, averaged)))
        print(f"averaged_gap={averaged_gap!r}")
        report["averaged_gap"] = averaged_gap
    if args.theory:
        report["theory"] = theory_params(spec.dataset, parts).model_dump()

    report_path = args.report or (str(Path(args.metrics).with_suffix(".json")) if args.metrics else None)
    if report_path:
        report["alpha_norm"] = float(np.linalg.norm(result.state.alpha))
        FileManager().save_report(report, report_path)
    return 0


def _sweep(args: argparse.Namespace, parameter: str, values: List[float], configure: Callable) -> List:
    from cocoa.engine import sweep_run
    from utils.file_manager import FileManager, MetricsWriter

    spec, parts = load_problem(args)
    out_dir = Path(args.out_dir)
    entries = []
    for value in values:
        run_config = configure(value)
        path = out_dir / f"{parameter}_{value:g}.csv"
        with MetricsWriter(path) as writer:
            entry, _ = sweep_run(parameter, value, spec, parts, run_config, args.target_gap, writer, not args.no_timing)
        entry.metrics_path = str(path)
        entries.append(entry)
        print(
            f"{parameter}={value:g} status={entry.status} rounds={entry.rounds_run} "
            f"rounds_to_target={entry.rounds_to_target} ms_to_target={entry.ms_to_target} final_gap={entry.final_gap!r}"
        )
    FileManager().save_report(
        {"parameter": parameter, "target_gap": args.target_gap, "entries": [e.model_dump() for e in entries]},
        out_dir / f"summary_{parameter}.json",
    )
    return entries


def cmd_sweep_h(args: argparse.Namespace) -> int:
    from cocoa.engine import rounds_nonincreasing

    entries = _sweep(args, "H", args.local_iters_list, lambda H: build_run_config(args, local_iters=int(H)))
    monotone = rounds_nonincreasing(entries)
    print(f"rounds_monotone_in_H={'PASS' if monotone else 'FAIL'}")
    return 0 if monotone else 1


def cmd_sweep_sigma(args: argparse.Namespace) -> int:
    _sweep(args, "sigma_prime", args.sigma_list, lambda s: build_run_config(args, sigma_prime=float(s)))
    return 0


def cmd_sweep_k(args: argparse.Namespace) -> int:
    from cocoa.engine import sweep_machines
    from cocoa.data import normalize_examples
    from cocoa.losses import get_loss
    from models.problem import ProblemSpec
    from utils.file_manager import FileManager

    dataset = normalize_examples(data_loader(args).load(args.data))
    spec = ProblemSpec(dataset=dataset, loss=get_loss(args.loss), lam=args.lam)
    base = build_run_config(args, machines=1)
    summary = {}
    for scheme, adding in (("adding", True), ("averaging", False)):
        entries = sweep_machines(
            spec, [int(K) for K in args.machines_list], base, args.target_gap, strategy=args.partition, adding=adding
        )
        summary[scheme] = [entry.model_dump() for entry in entries]
        for entry in entries:
            print(
                f"scheme={scheme} K={entry.value:g} status={entry.status} "
                f"rounds_to_target={entry.rounds_to_target} ms_to_target={entry.ms_to_target}"
            )
    FileManager().save_report({"target_gap": args.target_gap, **summary}, Path(args.out_dir) / "summary_K.json")
    return 0


def cmd_shard(args: argparse.Namespace) -> int:
    from utils.file_manager import FileManager
    from utils.libsvm_loader import DatasetLoader

    spec, parts = load_problem(args)
    paths = DatasetLoader().save_shards(spec.dataset, parts, args.out)
    FileManager().save_report(
        {"source": args.data, "d": spec.d, "blocks": [parts.block(k).tolist() for k in range(parts.K)]},
        f"{args.out}.partition.json",
    )
    for path in paths:
        print(path)
    return 0


def cmd_rates(args: argparse.Namespace) -> int:
    from cocoa.losses import loss_constants
    from cocoa.rates import RateInputs, aggregation_bounds, lipschitz_rounds, smooth_rounds_dual, smooth_rounds_gap
    from cocoa.subproblem import theory_params

    gamma, lipschitz = args.gamma, args.lipschitz
    if args.loss:
        loss_gamma, loss_lipschitz = loss_constants(args.loss)
        if loss_lipschitz is None and lipschitz is not None:
            raise InvalidArgumentError(f"--lipschitz неприменим: потери {args.loss} не липшицевы")
        gamma = gamma if gamma is not None else (loss_gamma or None)
        lipschitz = lipschitz if lipschitz is not None else loss_lipschitz

    n, sigma_max, sigma = args.n, args.sigma_max, args.sigma
    if args.data:
        args.loss = args.loss or "quadratic"
        spec, parts = load_problem(args)
        params = theory_params(spec.dataset, parts)
        n, sigma_max, sigma = spec.n, params.sigma_max, params.sigma
        print(f"sigma_k={','.join(f'{value:.12g}' for value in params.sigma_k)}")
    if n is None:
        raise InvalidArgumentError("Нужен --n или --data")

    nu, sigma_prime = parse_nu(args.nu, args.machines, args.sigma_prime)
    inputs = RateInputs(
        lam=args.lam,
        n=n,
        sigma_prime=sigma_prime if sigma_prime is not None else nu * args.machines,
        nu=nu,
        theta=args.theta,
        gamma=gamma,
        sigma_max=sigma_max,
        sigma=sigma,
        lipschitz=lipschitz,
        epsilon_dual=args.eps_dual,
        epsilon_gap=args.eps_gap,
        dual_suboptimality=args.dual_subopt,
        loss=args.loss,
    )
    print(f"n={n}")
    print(f"sigma_max={sigma_max!r}")
    print(f"sigma={sigma!r}")
    if gamma and sigma_max is not None:
        if args.eps_dual:
            print(f"smooth_rounds_dual={smooth_rounds_dual(inputs)!r}")
        if args.eps_gap:
            print(f"smooth_rounds_gap={smooth_rounds_gap(inputs)!r}")
    if lipschitz and sigma is not None and args.eps_gap:
        T, T0, t0 = lipschitz_rounds(inputs)
        print(f"lipschitz_T={T!r}")
        print(f"lipschitz_T0={T0!r}")
        print(f"lipschitz_t0={t0!r}")
    for scheme, values in aggregation_bounds(inputs, args.machines).items():
        for key, value in values.items():
            print(f"{scheme}.{key}={value!r}")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    from cocoa.verify import property_suite
    from utils.file_manager import FileManager

    report = property_suite(
        seed=args.seed,
        trials=args.trials,
        sigma_prime_factor=args.sigma_prime_factor,
        pairs=args.pairs,
        dump_dir=args.dump_dir,
        theta_tolerance=config.verify.theta_tolerance,
    )
    for name, counts in sorted(report.summary().items()):
        print(f"{name}: passed={counts['passed']} failed={counts['failed']}")
    if args.report:
        FileManager().save_report(report.model_dump(), args.report)
    print(f"result={'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else 1


COMMANDS = {
    "train": cmd_train,
    "sweep-h": cmd_sweep_h,
    "sweep-sigma": cmd_sweep_sigma,
    "sweep-k": cmd_sweep_k,
    "shard": cmd_shard,
    "rates": cmd_rates,
    "verify": cmd_verify,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Главная функция запуска"""
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level, log_to_file=args.log_file or config.logging.log_to_file, log_dir=config.logging.log_dir)
    try:
        return COMMANDS[args.command](args)
    except (CocoaError, FileNotFoundError) as e:
        logger.error(f"{args.command}: {e}")
        return 2
    except ValueError as e:
        # Ошибки валидации pydantic (RunConfig, SolverConfig)
        logger.error(f"{args.command}: неверные параметры: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
