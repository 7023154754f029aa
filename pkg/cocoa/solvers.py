from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass
from typing import Deque, Dict, FrozenSet, Optional, Tuple, Type

import numpy as np
from loguru import logger

from cocoa.losses import Loss
from cocoa.subproblem import (
    SubproblemView,
    largest_squared_singular_value,
    local_conjugate_sum,
    local_objective,
    local_smooth_part,
)
from models.errors import ConfigurationError, InvalidArgumentError
from models.run_config import SolverConfig

# Допуск контракта G_k(h) ≥ G_k(0)
MONOTONICITY_TOLERANCE = 1e-12
# Пары (s, y) с sᵀy не больше порога не попадают в память L-BFGS
CURVATURE_PAIR_THRESHOLD = 1e-12
# Знаменатель Θ, ниже которого 0 считается уже оптимальным
THETA_DENOMINATOR_FLOOR = 1e-14
MIN_STEP = 1e-20

ALL_LOSSES: FrozenSet[str] = frozenset({"quadratic", "hinge", "sqhinge", "logistic"})
SMOOTH_ONLY: FrozenSet[str] = frozenset({"quadratic"})

COMPATIBILITY: Dict[str, FrozenSet[str]] = {
    "cd": ALL_LOSSES,
    "fista": ALL_LOSSES,
    "gd": SMOOTH_ONLY,
    "cg": SMOOTH_ONLY,
    "lbfgs": SMOOTH_ONLY,
    "bb": SMOOTH_ONLY,
}


@dataclass
class LocalUpdate:
    """Результат локального решателя: h_[k] и Δv_k = X_[k]h_[k]/(λn)"""

    h_local: np.ndarray
    delta_v: np.ndarray
    local_iters: int = 0
    objective_gain: float = 0.0

    @classmethod
    def from_h(cls, view: SubproblemView, h_local: np.ndarray, local_iters: int = 0, gain: float = 0.0) -> "LocalUpdate":
        delta_v = np.asarray(view.X_local @ h_local).reshape(-1) / (view.lam * view.n)
        return cls(h_local=h_local, delta_v=delta_v, local_iters=local_iters, objective_gain=gain)


def check_compatibility(solver_id: str, loss: Loss) -> None:
    """Проверяет, что решатель определен для данной функции потерь"""
    if solver_id not in COMPATIBILITY:
        raise InvalidArgumentError(f"Неизвестный решатель '{solver_id}', ожидается один из {sorted(COMPATIBILITY)}")
    if loss.id not in COMPATIBILITY[solver_id]:
        raise ConfigurationError(
            f"Решатель {solver_id} требует гладкую подзадачу и не работает с потерями {loss.id}; "
            f"используйте cd или fista"
        )


def _column(view: SubproblemView, j: int) -> Tuple[np.ndarray, np.ndarray]:
    start, end = view.X_local.indptr[j], view.X_local.indptr[j + 1]
    return view.X_local.indices[start:end], view.X_local.data[start:end]


def cd_step(view: SubproblemView, j: int, h_local: np.ndarray, u: Optional[np.ndarray] = None) -> float:
    """
    Точный шаг подъема по координате j локальной подзадачи

    Args:
        view: Локальная подзадача
        j: Локальный индекс координаты
        h_local: Текущее h_[k]
        u: X_[k]h_[k]; вычисляется заново, если не передан

    Returns:
        Приращение δ координаты j
    """
    if u is None:
        u = np.asarray(view.X_local @ h_local).reshape(-1)
    rows, values = _column(view, j)
    scale = view.sigma_prime / (view.lam * view.n)
    a0 = view.alpha_local[j] + h_local[j]
    c = view.n * view.grad_block[j] + scale * float(np.dot(values, u[rows]))
    s = scale * view.col_sq_norms[j]
    beta = float(view.loss.coordinate_argmin(a0, c, s, view.labels[j]))
    return beta - a0


class LocalSolver(ABC):
    """Базовый класс: решатели минимизируют −G_k, контракт формулируется для G_k"""

    solver_id: str = ""

    def __init__(self, config: SolverConfig):
        self.config = config

    @abstractmethod
    def _solve(self, view: SubproblemView) -> Tuple[np.ndarray, int]:
        """Возвращает (h_[k], число выполненных внутренних итераций)"""

    def solve(self, view: SubproblemView) -> LocalUpdate:
        check_compatibility(self.solver_id, view.loss)
        if view.size == 0:
            return LocalUpdate.from_h(view, np.zeros(0))

        h, iterations = self._solve(view)
        start = local_objective(view, np.zeros(view.size))
        try:
            reached = local_objective(view, h)
        except ValueError as e:
            logger.warning(f"Машина {view.machine}: решатель {self.solver_id} вышел из области ({e}), h = 0")
            return LocalUpdate.from_h(view, np.zeros(view.size), iterations)

        if not np.isfinite(reached) or reached < start - MONOTONICITY_TOLERANCE:
            logger.warning(
                f"Машина {view.machine}, раунд {view.round_index}: {self.solver_id} ухудшил G_k "
                f"({start:.6e} → {reached:.6e}), возвращаем h = 0"
            )
            return LocalUpdate.from_h(view, np.zeros(view.size), iterations)
        return LocalUpdate.from_h(view, h, iterations, gain=reached - start)


class CoordinateDescentSolver(LocalSolver):
    """Случайный покоординатный подъем, H одиночных обновлений"""

    solver_id = "cd"

    def _solve(self, view):
        rng = np.random.default_rng([self.config.seed, view.machine, view.round_index])
        h = np.zeros(view.size)
        u = np.zeros(view.X_local.shape[0])
        for j in rng.integers(0, view.size, size=self.config.local_iters):
            delta = cd_step(view, int(j), h, u)
            if delta != 0.0:
                h[j] += delta
                rows, values = _column(view, int(j))
                u[rows] += delta * values
        return h, self.config.local_iters


class _SmoothObjective:
    """φ(h) = −G_k(h) − f_share для гладкой сопряженной; градиент по h"""

    def __init__(self, view: SubproblemView):
        self.view = view

    def value(self, h: np.ndarray) -> float:
        return local_smooth_part(self.view, h) + local_conjugate_sum(self.view, h)

    def gradient(self, h: np.ndarray) -> np.ndarray:
        view = self.view
        u = np.asarray(view.X_local @ h).reshape(-1)
        smooth = view.grad_block + view.curvature * np.asarray(view.X_local.T @ u).reshape(-1)
        return smooth + view.loss.neg_conjugate_gradient(view.labels, view.alpha_local + h) / view.n

    def diagonal_bound(self) -> float:
        """Наибольший диагональный элемент гессиана, нижняя оценка его нормы"""
        view = self.view
        top = float(np.max(view.col_sq_norms)) if view.size else 0.0
        return view.curvature * top + 1.0 / (view.n * view.loss.gamma)


class _BatchSolver(LocalSolver):
    def _backtrack(
        self, objective: _SmoothObjective, h: np.ndarray, value: float, grad: np.ndarray, direction: np.ndarray, step: float
    ) -> Tuple[Optional[np.ndarray], float, float]:
        """Армихо вдоль direction; (None, ...) если шаг стал пренебрежимо малым"""
        slope = float(np.dot(grad, direction))
        while step > MIN_STEP:
            candidate = h + step * direction
            candidate_value = objective.value(candidate)
            if candidate_value <= value + self.config.armijo * step * slope:
                return candidate, candidate_value, step
            step *= self.config.shrink
        return None, value, step


class GradientDescentSolver(_BatchSolver):
    """Градиентный спуск с backtracking"""

    solver_id = "gd"

    def _solve(self, view):
        objective = _SmoothObjective(view)
        h = np.zeros(view.size)
        value = objective.value(h)
        grad = objective.gradient(h)
        step = self.config.initial_step / objective.diagonal_bound()
        done = 0
        for done in range(1, self.config.local_iters + 1):
            if not np.any(grad):
                break
            candidate, value, step = self._backtrack(objective, h, value, grad, -grad, step)
            if candidate is None:
                break
            h = candidate
            grad = objective.gradient(h)
            step /= self.config.shrink
        return h, done


class ConjugateGradientSolver(_BatchSolver):
    """Нелинейный CG Флетчера–Ривса с рестартом каждые |P_k| итераций"""

    solver_id = "cg"

    def _solve(self, view):
        objective = _SmoothObjective(view)
        h = np.zeros(view.size)
        value = objective.value(h)
        grad = objective.gradient(h)
        direction = -grad
        done = 0
        for done in range(1, self.config.local_iters + 1):
            grad_sq = float(np.dot(grad, grad))
            if grad_sq == 0.0:
                break
            slope = float(np.dot(grad, direction))
            if slope >= 0.0:
                direction = -grad
                slope = -grad_sq
            # Для квадратичной φ шаг по разности градиентов точен
            curvature = float(np.dot(direction, objective.gradient(h + direction) - grad))
            trial = -slope / curvature if curvature > 0.0 else 1.0 / objective.diagonal_bound()
            candidate, value, _ = self._backtrack(objective, h, value, grad, direction, trial)
            if candidate is None:
                break
            h = candidate
            new_grad = objective.gradient(h)
            if done % view.size == 0:
                direction = -new_grad
            else:
                direction = -new_grad + (float(np.dot(new_grad, new_grad)) / grad_sq) * direction
            grad = new_grad
        return h, done


class LbfgsSolver(_BatchSolver):
    """L-BFGS: двухпетлевая рекурсия, память m (по умолчанию H)"""

    solver_id = "lbfgs"

    def _direction(self, grad: np.ndarray, pairs: Deque[Tuple[np.ndarray, np.ndarray, float]], scale: float) -> np.ndarray:
        q = grad.copy()
        coefficients = []
        for s, y, rho in reversed(pairs):
            a = rho * float(np.dot(s, q))
            q -= a * y
            coefficients.append(a)
        r = scale * q
        for (s, y, rho), a in zip(pairs, reversed(coefficients)):
            b = rho * float(np.dot(y, r))
            r += (a - b) * s
        return -r

    def _solve(self, view):
        objective = _SmoothObjective(view)
        h = np.zeros(view.size)
        value = objective.value(h)
        grad = objective.gradient(h)
        pairs: Deque[Tuple[np.ndarray, np.ndarray, float]] = deque(maxlen=self.config.lbfgs_memory)
        scale = 1.0 / objective.diagonal_bound()
        done = 0
        for done in range(1, self.config.local_iters + 1):
            if not np.any(grad):
                break
            direction = self._direction(grad, pairs, scale)
            if float(np.dot(direction, grad)) >= 0.0:
                pairs.clear()
                direction = -scale * grad
            candidate, new_value, _ = self._backtrack(objective, h, value, grad, direction, 1.0)
            if candidate is None:
                if not pairs:
                    break
                pairs.clear()
                continue
            new_grad = objective.gradient(candidate)
            s, y = candidate - h, new_grad - grad
            sy = float(np.dot(s, y))
            if sy > CURVATURE_PAIR_THRESHOLD:
                pairs.append((s, y, 1.0 / sy))
                scale = sy / float(np.dot(y, y))
            h, value, grad = candidate, new_value, new_grad
        return h, done


class BarzilaiBorweinSolver(_BatchSolver):
    """Шаг BB1 с запасным фиксированным шагом и защитой от возрастания"""

    solver_id = "bb"

    def _solve(self, view):
        objective = _SmoothObjective(view)
        fallback = 1.0 / objective.diagonal_bound()
        h = np.zeros(view.size)
        value = objective.value(h)
        grad = objective.gradient(h)
        previous: Optional[Tuple[np.ndarray, np.ndarray]] = None
        done = 0
        for done in range(1, self.config.local_iters + 1):
            if not np.any(grad):
                break
            step = fallback
            if previous is not None:
                s, y = h - previous[0], grad - previous[1]
                sy = float(np.dot(s, y))
                if sy > 0.0:
                    step = float(np.dot(s, s)) / sy
            candidate, new_value, _ = self._backtrack(objective, h, value, grad, -grad, step)
            if candidate is None:
                break
            previous = (h, grad)
            h, value = candidate, new_value
            grad = objective.gradient(h)
        return h, done


class FistaSolver(LocalSolver):
    """FISTA с backtracking по L; прокс-шаг по разделимому R_k"""

    solver_id = "fista"

    def _solve(self, view):
        loss = view.loss
        lipschitz = max(view.curvature * largest_squared_singular_value(view.X_local, tol=1e-6), 1e-12)
        h = np.zeros(view.size)
        extrapolated = h.copy()
        momentum = 1.0
        best = h.copy()
        best_value = local_smooth_part(view, h) + local_conjugate_sum(view, h)
        done = 0
        for done in range(1, self.config.local_iters + 1):
            u = np.asarray(view.X_local @ extrapolated).reshape(-1)
            smooth_value = float(np.dot(view.grad_block, extrapolated)) + 0.5 * view.curvature * float(np.dot(u, u))
            smooth_grad = view.grad_block + view.curvature * np.asarray(view.X_local.T @ u).reshape(-1)
            while True:
                z = view.alpha_local + extrapolated - smooth_grad / lipschitz
                beta = loss.prox(z, 1.0 / (view.n * lipschitz), view.labels)
                candidate = beta - view.alpha_local
                diff = candidate - extrapolated
                bound = smooth_value + float(np.dot(smooth_grad, diff)) + 0.5 * lipschitz * float(np.dot(diff, diff))
                if local_smooth_part(view, candidate) <= bound + 1e-15 * (1.0 + abs(smooth_value)):
                    break
                lipschitz *= 2.0

            next_momentum = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * momentum * momentum))
            extrapolated = candidate + ((momentum - 1.0) / next_momentum) * (candidate - h)
            h, momentum = candidate, next_momentum

            value = local_smooth_part(view, h) + local_conjugate_sum(view, h)
            if value < best_value:
                best, best_value = h.copy(), value
        return best, done


SOLVERS: Dict[str, Type[LocalSolver]] = {
    cls.solver_id: cls
    for cls in (
        CoordinateDescentSolver,
        GradientDescentSolver,
        ConjugateGradientSolver,
        LbfgsSolver,
        BarzilaiBorweinSolver,
        FistaSolver,
    )
}


def create_solver(config: SolverConfig) -> LocalSolver:
    """Фабрика решателей по идентификатору"""
    if config.id not in SOLVERS:
        raise InvalidArgumentError(f"Неизвестный решатель '{config.id}'")
    return SOLVERS[config.id](config)


def solve_local(view: SubproblemView, config: SolverConfig) -> LocalUpdate:
    return create_solver(config).solve(view)


def exact_local_solution(view: SubproblemView, tol: float = 1e-13, max_sweeps: int = 100000) -> np.ndarray:
    """
    Точный максимизатор G_k: плотная система для квадратичных потерь,
    иначе циклический CD до стабилизации всех координат
    """
    if view.size == 0:
        return np.zeros(0)

    if view.loss.smooth_conjugate:
        dense = view.X_local.toarray()
        hessian = view.curvature * dense.T @ dense + np.eye(view.size) / view.n
        rhs = -view.grad_block - (view.alpha_local - view.labels) / view.n
        return np.linalg.solve(hessian, rhs)

    h = np.zeros(view.size)
    u = np.zeros(view.X_local.shape[0])
    for sweep in range(max_sweeps):
        largest = 0.0
        for j in range(view.size):
            delta = cd_step(view, j, h, u)
            if delta != 0.0:
                h[j] += delta
                rows, values = _column(view, j)
                u[rows] += delta * values
                largest = max(largest, abs(delta))
        if largest <= tol * (1.0 + float(np.max(np.abs(view.alpha_local + h)))):
            logger.debug(f"Точное решение подзадачи машины {view.machine} за {sweep + 1} проходов")
            return h
    logger.warning(f"Циклический CD не стабилизировался за {max_sweeps} проходов")
    return h


def measure_theta(view: SubproblemView, h_local: np.ndarray, h_star: Optional[np.ndarray] = None) -> float:
    """Θ = (G_k(h*) − G_k(h)) / (G_k(h*) − G_k(0)); 0, если h = 0 уже оптимально"""
    if h_star is None:
        h_star = exact_local_solution(view)
    best = local_objective(view, h_star)
    denominator = best - local_objective(view, np.zeros(view.size))
    if denominator < THETA_DENOMINATOR_FLOOR:
        return 0.0
    return max(0.0, (best - local_objective(view, h_local)) / denominator)
