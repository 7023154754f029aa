from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from loguru import logger
from pydantic import BaseModel, Field
from scipy.optimize import brentq

from cocoa.data import normalize_examples, partition
from cocoa.losses import get_loss
from cocoa.problem import dual_value, duality_gap, f_gradient, f_value, shared_vector
from cocoa.solvers import create_solver, exact_local_solution, measure_theta
from cocoa.subproblem import (
    SubproblemView,
    largest_squared_singular_value,
    local_gradient_smooth_part,
    local_objective,
    local_smooth_part,
    lower_bound_slack,
    sigma_k,
    sigma_prime_min,
    view_from_problem,
)
from models.dataset import Dataset, Partition
from models.errors import InvalidArgumentError
from models.problem import DualState, ProblemSpec
from models.run_config import SolverConfig
from utils.file_manager import FileManager
from utils.logger_config import log_performance

LOSS_IDS = ("quadratic", "hinge", "sqhinge", "logistic")


class InstanceGenerator(BaseModel):
    """Случайный малый экземпляр задачи с нормализованными данными"""

    n: int = Field(default=20, description="Число примеров")
    d: int = Field(default=5, description="Число признаков")
    K: int = Field(default=2, description="Число машин")
    density: float = Field(default=0.5, description="Доля ненулевых элементов X")
    loss: str = Field(default="quadratic", description="Идентификатор функции потерь")
    lam: float = Field(default=0.1, description="λ")
    seed: int = 0
    strategy: str = "random"

    def dataset(self) -> Dataset:
        rng = np.random.default_rng(self.seed)
        matrix = sp.random(
            self.d, self.n, density=self.density, format="csc", random_state=rng, data_rvs=rng.standard_normal
        )
        if get_loss(self.loss).requires_binary_labels:
            labels = rng.choice([-1.0, 1.0], size=self.n)
        else:
            labels = rng.standard_normal(self.n)
        return normalize_examples(Dataset(X=matrix, labels=labels, name=f"random-{self.seed}"))

    def generate(self) -> Tuple[ProblemSpec, Partition]:
        spec = ProblemSpec(dataset=self.dataset(), loss=get_loss(self.loss), lam=self.lam)
        return spec, partition(self.n, self.K, strategy=self.strategy, seed=self.seed)


def correlated_instance(
    n: int = 40, d: int = 5, K: int = 4, loss: str = "quadratic", lam: float = 1e-2, noise: float = 0.05, seed: int = 0
) -> Tuple[ProblemSpec, Partition]:
    """Почти совпадающие неотрицательные примеры: σ′_min близко к νK"""
    rng = np.random.default_rng(seed)
    base = np.abs(rng.standard_normal(d)) + 0.1
    dense = base[:, None] + noise * rng.standard_normal((d, n))
    labels = rng.choice([-1.0, 1.0], size=n) if get_loss(loss).requires_binary_labels else rng.standard_normal(n)
    dataset = normalize_examples(Dataset(X=sp.csc_matrix(dense), labels=labels, name=f"correlated-{seed}"))
    spec = ProblemSpec(dataset=dataset, loss=get_loss(loss), lam=lam)
    return spec, partition(n, K, strategy="random", seed=seed)


def orthogonal_instance(n: int = 12, K: int = 3, loss: str = "quadratic", lam: float = 0.1, seed: int = 0) -> Tuple[ProblemSpec, Partition]:
    """Попарно ортогональные примеры (X = I): σ′_min = ν"""
    rng = np.random.default_rng(seed)
    labels = rng.choice([-1.0, 1.0], size=n) if get_loss(loss).requires_binary_labels else rng.standard_normal(n)
    dataset = Dataset(X=sp.identity(n, format="csc"), labels=labels, name="orthogonal")
    spec = ProblemSpec(dataset=dataset, loss=get_loss(loss), lam=lam)
    return spec, partition(n, K, strategy="round-robin")


def boundary_hinge_instance(K: int = 2, lam: float = 1.0) -> Tuple[ProblemSpec, Partition]:
    """
    Пары одинаковых примеров с противоположными метками на отдельных признаках

    Двойственный оптимум hinge: yα = 1 для всех примеров (w* = 0). Каждая пара
    целиком лежит на одной машине.
    """
    n = 2 * K
    rows = np.repeat(np.arange(K), 2)
    matrix = sp.csc_matrix((np.ones(n), (rows, np.arange(n))), shape=(K, n))
    labels = np.tile([1.0, -1.0], K)
    dataset = Dataset(X=matrix, labels=labels, name="boundary-hinge")
    spec = ProblemSpec(dataset=dataset, loss=get_loss("hinge"), lam=lam)
    return spec, Partition.from_sizes([2] * K)


def oracle_conjugate(
    loss_id: str,
    y: float,
    b: float,
    resolution: int = 2001,
    initial_radius: float = 10.0,
    max_radius: float = 1e8,
    zoom_steps: int = 80,
) -> float:
    """
    sup_a {ab − ℓ(a)} перебором по сетке с расширением и уточнением

    Сетка расширяется, пока максимум лежит на границе; рост на границе до max_radius
    означает неограниченный супремум (+∞), остановка роста означает асимптотический супремум.
    """
    loss = get_loss(loss_id)

    def objective(a: np.ndarray) -> np.ndarray:
        return a * b - loss.value(y, a)

    radius = initial_radius
    previous: Optional[float] = None
    while True:
        grid = np.linspace(-radius, radius, resolution)
        values = objective(grid)
        best_index = int(np.argmax(values))
        best = float(values[best_index])
        if 0 < best_index < resolution - 1:
            break
        if previous is not None and abs(best - previous) <= 1e-12 * (1.0 + abs(best)):
            return best
        if radius >= max_radius:
            return np.inf
        previous = best
        radius *= 4.0

    lo, hi = grid[best_index - 1], grid[best_index + 1]
    for _ in range(zoom_steps):
        grid = np.linspace(lo, hi, 201)
        values = objective(grid)
        best_index = int(np.argmax(values))
        best = max(best, float(values[best_index]))
        lo, hi = grid[max(best_index - 1, 0)], grid[min(best_index + 1, 200)]
        if hi - lo < 1e-13 * (1.0 + abs(grid[best_index])):
            break
    return best


def _best_dual_coordinate(loss_id: str, y: float, p: float, q: float, scale: float) -> float:
    """
    argmax_β −ℓ*(−β) − (pβ + qβ²/2)/(λn) для одной координаты двойственной задачи

    Записан в переменной u = yβ независимо от шагов локальных решателей.
    """
    if loss_id == "quadratic":
        return (y - p / scale) / (1.0 + q / scale)
    if loss_id == "hinge":
        if q == 0.0:
            return y * (1.0 if 1.0 - y * p / scale > 0.0 else 0.0)
        return y * min(1.0, max(0.0, (scale - y * p) / q))
    if loss_id == "sqhinge":
        return y * max(0.0, (1.0 - y * p / scale) / (0.5 + q / scale))

    def stationarity(u: float) -> float:
        return -np.log(u) + np.log1p(-u) - (y * p + u * q) / scale

    lo, hi = 1e-300, 1.0 - 1e-16
    if stationarity(lo) <= 0.0:
        return 0.0
    if stationarity(hi) >= 0.0:
        return y * 1.0
    return y * brentq(stationarity, lo, hi, xtol=1e-15, maxiter=500)


def oracle_dense_dual_opt(
    spec: ProblemSpec, tol: float = 1e-12, max_sweeps: int = 200000, max_n: int = 40
) -> Tuple[np.ndarray, float]:
    """
    Эталонный оптимум двойственной задачи циклическим точным покоординатным подъемом

    Returns:
        (α*, D(α*)); при исчерпании проходов пишет достигнутый зазор в лог
    """
    if spec.n > max_n:
        raise InvalidArgumentError(f"Эталонный оптимум считается только при n ≤ {max_n}, получено n={spec.n}")

    dense = spec.dataset.X.toarray()
    labels = spec.dataset.labels
    scale = spec.scale
    sq_norms = np.einsum("ij,ij->j", dense, dense)
    alpha = np.zeros(spec.n)
    residual = np.zeros(spec.d)
    gap = np.inf

    for sweep in range(max_sweeps):
        for i in range(spec.n):
            column = dense[:, i]
            p = float(column @ residual) - alpha[i] * sq_norms[i]
            beta = _best_dual_coordinate(spec.loss.id, labels[i], p, sq_norms[i], scale)
            residual += (beta - alpha[i]) * column
            alpha[i] = beta
        state = DualState(alpha=alpha, v=residual / scale)
        gap = duality_gap(spec, state)
        if gap < tol:
            logger.debug(f"Эталонный оптимум за {sweep + 1} проходов, зазор {gap:.3e}")
            return alpha.copy(), dual_value(spec, state)

    logger.warning(f"Эталонный оптимум: исчерпано {max_sweeps} проходов, достигнутый зазор {gap:.3e}")
    return alpha.copy(), dual_value(spec, DualState(alpha=alpha, v=residual / scale))


def _pencil_maximum(dataset: Dataset, parts: Partition, tol: float = 1e-10) -> Tuple[float, np.ndarray]:
    """max hᵀXᵀXh при hᵀGh = 1 и направление максимума (обобщенная задача на образе G)"""
    dense = dataset.X.toarray()
    gram = dense.T @ dense
    block_gram = np.zeros_like(gram)
    for k in range(parts.K):
        idx = parts.block(k)
        block_gram[np.ix_(idx, idx)] = gram[np.ix_(idx, idx)]

    eigenvalues, eigenvectors = scipy.linalg.eigh(block_gram)
    top = float(eigenvalues[-1]) if eigenvalues.size else 0.0
    if top <= 0.0:
        return 0.0, np.zeros(dataset.n)
    keep = eigenvalues > tol * top

    null_space = eigenvectors[:, ~keep]
    if null_space.size and np.linalg.norm(dense @ null_space) > np.sqrt(tol):
        return np.inf, np.zeros(dataset.n)

    whitening = eigenvectors[:, keep] / np.sqrt(eigenvalues[keep])
    reduced = whitening.T @ gram @ whitening
    values, vectors = scipy.linalg.eigh(reduced)
    return float(values[-1]), whitening @ vectors[:, -1]


def oracle_sigma_prime_min(dataset: Dataset, parts: Partition, nu: float) -> float:
    """σ′_min через пучок (XᵀX, G) с scipy.linalg.eigh"""
    value, _ = _pencil_maximum(dataset, parts)
    return nu * value


def finite_difference_grad(function: Callable[[np.ndarray], float], point: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Центральные разности"""
    point = np.asarray(point, dtype=np.float64)
    grad = np.zeros_like(point)
    for i in range(point.size):
        shift = np.zeros_like(point)
        shift[i] = step
        grad[i] = (function(point + shift) - function(point - shift)) / (2.0 * step)
    return grad


def random_feasible(loss_id: str, labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Случайная допустимая α внутри двойственного множества"""
    if loss_id == "quadratic":
        return rng.standard_normal(labels.size)
    if loss_id == "sqhinge":
        return labels * rng.uniform(0.0, 2.0, labels.size)
    return labels * rng.uniform(0.0, 1.0, labels.size)


def theta_estimate(view: SubproblemView, config: SolverConfig, seeds: Sequence[int], h_star: Optional[np.ndarray] = None) -> float:
    """Среднее Θ решателя по набору зерен (оценка ожидания Монте-Карло)"""
    if h_star is None:
        h_star = exact_local_solution(view)
    thetas = []
    for seed in seeds:
        update = create_solver(config.model_copy(update={"seed": int(seed)})).solve(view)
        thetas.append(measure_theta(view, update.h_local, h_star))
    return float(np.mean(thetas))


def geometric_decrease_check(
    spec: ProblemSpec, parts: Partition, nu: float, sigma_prime: float, rounds: int = 30, slack: float = 1e-10
) -> bool:
    """
    Раунды с точными локальными решениями: ε_D^{t+1} ≤ (1 − ν λγn/(λγn + σ_max σ′)) ε_D^t + slack
    до ε_D < 1e-12
    """
    gamma = spec.loss.gamma
    if gamma <= 0:
        raise InvalidArgumentError(f"Проверка требует гладкие потери, γ={gamma}")
    _, best = oracle_dense_dual_opt(spec)
    sigma_max = max(sigma_k(spec.dataset, parts, k) for k in range(parts.K))
    scaled = spec.lam * gamma * spec.n
    rate = 1.0 - nu * scaled / (scaled + sigma_max * sigma_prime)

    alpha = np.zeros(spec.n)
    suboptimality = best - dual_value(spec, DualState(alpha=alpha, v=shared_vector(spec, alpha)))
    for t in range(1, rounds + 1):
        if suboptimality < 1e-12:
            break
        state = DualState(alpha=alpha, v=shared_vector(spec, alpha))
        step = np.zeros(spec.n)
        for k in range(parts.K):
            view = view_from_problem(spec, parts, k, state, sigma_prime, round_index=t)
            step[parts.block(k)] = exact_local_solution(view)
        alpha = alpha + nu * step
        current = best - dual_value(spec, DualState(alpha=alpha, v=shared_vector(spec, alpha)))
        if current > rate * suboptimality + slack:
            logger.warning(f"Раунд {t}: ε_D={current:.3e} > {rate:.4f}·{suboptimality:.3e}")
            return False
        suboptimality = current
    return True


class CheckResult(BaseModel):
    name: str
    trial: int
    passed: bool
    detail: str = ""
    counterexample: Optional[Dict[str, str]] = None


class SuiteReport(BaseModel):
    """Итог набора проверок свойств"""

    seed: int
    trials: int
    checks: List[CheckResult] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def summary(self) -> Dict[str, Dict[str, int]]:
        counts: Dict[str, Dict[str, int]] = {}
        for check in self.checks:
            entry = counts.setdefault(check.name, {"passed": 0, "failed": 0})
            entry["passed" if check.passed else "failed"] += 1
        return counts


class _Trial:
    """Один случайный экземпляр и его проверки"""

    def __init__(
        self, index: int, seed: int, sigma_prime_factor: Optional[float], pairs: int, theta_tolerance: float = 0.02
    ):
        self.index = index
        self.rng = np.random.default_rng([seed, index])
        K = int(self.rng.integers(2, 5))
        self.generator = InstanceGenerator(
            n=int(self.rng.integers(K + 2, 31)),
            d=int(self.rng.integers(2, 9)),
            K=K,
            density=float(self.rng.uniform(0.3, 1.0)),
            loss=str(self.rng.choice(LOSS_IDS)),
            lam=float(10.0 ** self.rng.uniform(-3.0, 0.0)),
            seed=int(self.rng.integers(2**31)),
        )
        self.spec, self.parts = self.generator.generate()
        self.nu = 1.0 if sigma_prime_factor is not None else float(self.rng.choice([1.0 / K, 1.0]))
        self.sigma_prime_factor = sigma_prime_factor
        self.pairs = pairs
        self.theta_tolerance = theta_tolerance
        self.results: List[CheckResult] = []

    @property
    def labels(self) -> np.ndarray:
        return self.spec.dataset.labels

    def record(self, name: str, passed: bool, detail: str = "") -> None:
        self.results.append(CheckResult(name=name, trial=self.index, passed=bool(passed), detail=detail))

    def description(self) -> Dict[str, object]:
        return {
            "loss": self.spec.loss.id,
            "lambda": self.spec.lam,
            "machines": self.parts.K,
            "nu": self.nu,
            "sigma_prime_factor": self.sigma_prime_factor,
            "blocks": [self.parts.block(k).tolist() for k in range(self.parts.K)],
            "generator": self.generator.model_dump(),
        }

    def check_sigma_prime(self) -> float:
        computed = sigma_prime_min(self.spec.dataset, self.parts, self.nu)
        reference = oracle_sigma_prime_min(self.spec.dataset, self.parts, self.nu)
        safe = self.nu * self.parts.K
        self.record("sigma_prime_safety", computed <= safe + 1e-8, f"σ′_min={computed:.12g}, νK={safe:g}")
        self.record(
            "sigma_prime_min_oracle",
            abs(computed - reference) <= 1e-8 * (1.0 + reference),
            f"{computed:.12g} против {reference:.12g}",
        )
        return computed

    def _pair(self) -> Tuple[np.ndarray, np.ndarray]:
        alpha = random_feasible(self.spec.loss.id, self.labels, self.rng)
        target = random_feasible(self.spec.loss.id, self.labels, self.rng)
        return alpha, target - alpha

    def _worst_pair(self) -> Tuple[np.ndarray, np.ndarray]:
        _, direction = _pencil_maximum(self.spec.dataset, self.parts)
        largest = float(np.max(np.abs(direction))) if direction.size else 0.0
        h = 0.4 * direction / largest if largest > 0 else direction
        centers = {"quadratic": 0.0, "hinge": 0.5, "logistic": 0.5, "sqhinge": 1.0}
        return self.labels * centers[self.spec.loss.id], h

    def check_lower_bound(self, sigma_prime_min_value: float) -> None:
        if self.sigma_prime_factor is not None:
            sigma_prime = self.sigma_prime_factor * sigma_prime_min_value
        else:
            sigma_prime = self.nu * self.parts.K
        worst = min(
            lower_bound_slack(self.spec, self.parts, self.nu, sigma_prime, alpha, h)
            for alpha, h in [self._worst_pair()] + [self._pair() for _ in range(self.pairs)]
        )
        self.record("lower_bound", worst >= -1e-9, f"минимальный запас {worst:.3e} при σ′={sigma_prime:.6g}")

    def check_coincidence(self) -> None:
        alpha = random_feasible(self.spec.loss.id, self.labels, self.rng)
        state = DualState(alpha=alpha, v=shared_vector(self.spec, alpha))
        local_sum = sum(
            local_objective(view_from_problem(self.spec, self.parts, k, state, self.nu * self.parts.K), np.zeros(block.size))
            for k, block in enumerate(self.parts.blocks)
        )
        dual = dual_value(self.spec, state)
        self.record("subproblem_coincidence", abs(local_sum - dual) <= 1e-9, f"Σ G_k(0)={local_sum:.15g}, D={dual:.15g}")

    def check_gradients(self) -> None:
        alpha = random_feasible(self.spec.loss.id, self.labels, self.rng)
        analytic = f_gradient(self.spec, alpha)
        numeric = finite_difference_grad(lambda a: f_value(self.spec, a), alpha)
        error = np.linalg.norm(analytic - numeric) / max(1.0, np.linalg.norm(analytic))
        self.record("f_gradient", error <= 1e-6, f"относительная ошибка {error:.3e}")

        state = DualState(alpha=alpha, v=shared_vector(self.spec, alpha))
        view = view_from_problem(self.spec, self.parts, 0, state, self.nu * self.parts.K)
        h = self.rng.standard_normal(view.size)
        analytic = local_gradient_smooth_part(view, h)
        numeric = finite_difference_grad(lambda x: -local_smooth_part(view, x), h)
        error = np.linalg.norm(analytic - numeric) / max(1.0, np.linalg.norm(analytic))
        self.record("local_gradient", error <= 1e-6, f"относительная ошибка {error:.3e}")

    def check_conjugates(self, samples: int = 3) -> None:
        loss = self.spec.loss
        worst = 0.0
        for i in self.rng.choice(self.spec.n, size=min(samples, self.spec.n), replace=False):
            y = float(self.labels[i])
            alpha = float(random_feasible(loss.id, np.array([y]), self.rng)[0])
            closed = float(loss.conjugate(y, -alpha))
            worst = max(worst, abs(closed - oracle_conjugate(loss.id, y, -alpha)))
        self.record("conjugate_closed_form", worst <= 1e-6, f"наибольшее отклонение {worst:.3e}")

    def check_weak_duality(self) -> None:
        alpha = random_feasible(self.spec.loss.id, self.labels, self.rng)
        gap = duality_gap(self.spec, DualState(alpha=alpha, v=shared_vector(self.spec, alpha)))
        self.record("weak_duality", gap >= -1e-9, f"зазор {gap:.3e}")

    def check_solvers(self) -> None:
        alpha = random_feasible(self.spec.loss.id, self.labels, self.rng)
        state = DualState(alpha=alpha, v=shared_vector(self.spec, alpha))
        view = view_from_problem(self.spec, self.parts, 0, state, self.nu * self.parts.K, round_index=1)
        start = local_objective(view, np.zeros(view.size))
        solver_ids = ["cd", "fista"] + (["gd", "cg", "lbfgs", "bb"] if self.spec.loss.smooth_conjugate else [])
        for solver_id in solver_ids:
            config = SolverConfig(id=solver_id, local_iters=view.size, seed=self.index)
            update = create_solver(config).solve(view)
            feasible = bool(np.all(self.spec.loss.feasible(view.labels, view.alpha_local + update.h_local)))
            reached = local_objective(view, update.h_local) if feasible else -np.inf
            self.record(
                f"monotone_{solver_id}",
                feasible and reached >= start - 1e-12,
                f"G_k(0)={start:.12g}, G_k(h)={reached:.12g}",
            )
            if solver_id == "cd":
                theta = measure_theta(view, update.h_local)
                self.record("theta_range", 0.0 <= theta <= 1.0, f"Θ={theta:.4f}")

    def check_smoothness(self) -> None:
        X = self.spec.dataset.X
        curvature = 1.0 / (2.0 * self.spec.lam * self.spec.n ** 2)
        worst = np.inf
        for _ in range(max(1, self.pairs)):
            alpha, h = self._pair()
            Xh = np.asarray(X @ h).reshape(-1)
            bound = f_value(self.spec, alpha) + float(f_gradient(self.spec, alpha) @ h) + curvature * float(Xh @ Xh)
            worst = min(worst, bound - f_value(self.spec, alpha + h))
        self.record("f_smoothness", worst >= -1e-9, f"минимальный запас {worst:.3e}")

    def check_theta_monotone(self, seeds: int = 4, budgets: int = 4) -> None:
        alpha = random_feasible(self.spec.loss.id, self.labels, self.rng)
        state = DualState(alpha=alpha, v=shared_vector(self.spec, alpha))
        view = view_from_problem(self.spec, self.parts, 0, state, self.nu * self.parts.K, round_index=1)
        h_star = exact_local_solution(view)
        base = max(1, view.size // 2)
        local_iters = [base * 2 ** i for i in range(budgets)]
        thetas = [
            theta_estimate(view, SolverConfig(id="cd", local_iters=H, seed=self.index), range(seeds), h_star)
            for H in local_iters
        ]
        growth = max((later - earlier for earlier, later in zip(thetas, thetas[1:])), default=0.0)
        self.record(
            "theta_monotone",
            growth <= self.theta_tolerance,
            "Θ(H): " + ", ".join(f"{H}→{theta:.4f}" for H, theta in zip(local_iters, thetas)),
        )

    def run(self) -> List[CheckResult]:
        value = self.check_sigma_prime()
        self.check_lower_bound(value)
        self.check_coincidence()
        self.check_gradients()
        self.check_smoothness()
        self.check_conjugates()
        self.check_weak_duality()
        self.check_solvers()
        self.check_theta_monotone()
        return self.results


@log_performance("property_suite")
def property_suite(
    seed: int = 0,
    trials: int = 100,
    sigma_prime_factor: Optional[float] = None,
    pairs: int = 10,
    dump_dir: Optional[str] = None,
    theta_tolerance: float = 0.02,
) -> SuiteReport:
    """
    Прогоняет проверки свойств на `trials` случайных экземплярах

    Args:
        seed: Зерно набора
        trials: Число экземпляров
        sigma_prime_factor: Отрицательный контроль: σ′ = factor·σ′_min вместо νK (ν = 1)
        pairs: Случайных пар (α, h) на экземпляр для нижней оценки
        dump_dir: Папка для контрпримеров (LIBSVM + JSON)
        theta_tolerance: Допустимый рост средней Θ при удвоении H (погрешность Монте-Карло)
    """
    report = SuiteReport(seed=seed, trials=trials)
    manager = FileManager()
    for index in range(trials):
        trial = _Trial(index, seed, sigma_prime_factor, pairs, theta_tolerance)
        results = trial.run()
        for result in results:
            if not result.passed:
                logger.warning(f"Испытание {index}: проверка {result.name} не пройдена ({result.detail})")
                if dump_dir is not None:
                    description = trial.description()
                    description.update({"check": result.name, "detail": result.detail})
                    result.counterexample = manager.save_counterexample(
                        trial.spec.dataset, description, Path(dump_dir), f"trial{index}_{result.name}"
                    )
        report.checks.extend(results)

    logger.info(f"Проверки свойств: {len(report.checks) - len(report.failures)} из {len(report.checks)} пройдено")
    return report


def spectral_norm_check(dataset: Dataset, parts: Partition, tol: float = 1e-6) -> bool:
    """σ_k степенным методом совпадает с плотным SVD блока"""
    for k in range(parts.K):
        block = dataset.X[:, parts.block(k)]
        dense = np.linalg.norm(block.toarray(), ord=2) ** 2 if block.nnz else 0.0
        power = largest_squared_singular_value(block)
        if abs(power - dense) > tol * (1.0 + dense):
            return False
    return True
