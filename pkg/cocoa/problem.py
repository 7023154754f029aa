from typing import Optional, Tuple

import numpy as np
from loguru import logger

from models.errors import DomainError
from models.problem import DualState, ProblemSpec

# Допуск согласованности v и Xα/(λn) (относительно 1 + ‖v‖)
CONSISTENCY_TOLERANCE = 1e-8


class SquaredNormRegularizer:
    """g(w) = ½‖w‖², g*(v) = ½‖v‖², ∇g*(v) = v"""

    def value(self, w: np.ndarray) -> float:
        return 0.5 * float(np.dot(w, w))

    def conjugate(self, v: np.ndarray) -> float:
        return 0.5 * float(np.dot(v, v))

    def conjugate_gradient(self, v: np.ndarray) -> np.ndarray:
        return np.array(v, dtype=np.float64, copy=True)


REGULARIZER = SquaredNormRegularizer()


def shared_vector(spec: ProblemSpec, alpha: np.ndarray) -> np.ndarray:
    """v(α) = Xα/(λn), вычисленный с нуля"""
    return np.asarray(spec.dataset.X @ alpha).reshape(-1) / spec.scale


def initial_state(spec: ProblemSpec, alpha0: Optional[np.ndarray] = None) -> DualState:
    """Начальное состояние α⁰ (по умолчанию 0) и v⁰ = Xα⁰/(λn)"""
    alpha = np.zeros(spec.n) if alpha0 is None else np.array(alpha0, dtype=np.float64)
    check_feasible(spec, alpha)
    return DualState(alpha=alpha, v=shared_vector(spec, alpha))


def check_feasible(spec: ProblemSpec, alpha: np.ndarray) -> None:
    """Проверяет, что все α_i лежат в допустимом множестве ℓ*_i (O(n))"""
    mask = spec.loss.feasible(spec.dataset.labels, alpha)
    if not np.all(mask):
        bad = np.flatnonzero(~mask)
        raise DomainError(
            f"{bad.size} недопустимых α_i для потерь {spec.loss.id} (первый индекс {int(bad[0])})"
        )


def consistency_error(spec: ProblemSpec, state: DualState) -> float:
    """‖v − Xα/(λn)‖ / (1 + ‖v‖)"""
    residual = state.v - shared_vector(spec, state.alpha)
    return float(np.linalg.norm(residual) / (1.0 + np.linalg.norm(state.v)))


def is_consistent(spec: ProblemSpec, state: DualState, tol: float = CONSISTENCY_TOLERANCE) -> bool:
    return consistency_error(spec, state) <= tol


def conjugate_sum(spec: ProblemSpec, alpha: np.ndarray) -> float:
    """R(α) = (1/n) Σ ℓ*_i(−α_i)"""
    return float(np.sum(spec.loss.conjugate(spec.dataset.labels, -alpha))) / spec.n


def f_value(spec: ProblemSpec, alpha: np.ndarray) -> float:
    """f(α) = λ g*(Xα/(λn))"""
    return spec.lam * REGULARIZER.conjugate(shared_vector(spec, alpha))


def f_gradient(spec: ProblemSpec, alpha: np.ndarray) -> np.ndarray:
    """∇f(α) = (1/n) Xᵀ ∇g*(v(α)) (цепное правило)"""
    grad_g = REGULARIZER.conjugate_gradient(shared_vector(spec, alpha))
    return np.asarray(spec.dataset.X.T @ grad_g).reshape(-1) / spec.n


def primal_value(spec: ProblemSpec, w: np.ndarray) -> float:
    """P(w) = (1/n) Σ ℓ_i(x_iᵀw) + λ g(w)"""
    margins = np.asarray(spec.dataset.X.T @ w).reshape(-1)
    losses = spec.loss.value(spec.dataset.labels, margins)
    return float(np.sum(losses)) / spec.n + spec.lam * REGULARIZER.value(w)


def dual_value_unchecked(spec: ProblemSpec, state: DualState) -> float:
    """D(α) по сохраненному v без проверки допустимости (для горячих циклов)"""
    return -conjugate_sum(spec, state.alpha) - spec.lam * REGULARIZER.conjugate(state.v)


def dual_value(spec: ProblemSpec, state: DualState) -> float:
    """D(α) = (1/n) Σ −ℓ*_i(−α_i) − λ g*(v)"""
    check_feasible(spec, state.alpha)
    return dual_value_unchecked(spec, state)


def primal_from_dual(spec: ProblemSpec, state: DualState) -> np.ndarray:
    """w(α) = ∇g*(v)"""
    return REGULARIZER.conjugate_gradient(state.v)


def duality_gap(spec: ProblemSpec, state: DualState) -> float:
    """Gap(α) = P(w(α)) − D(α); P пересчитывается заново при каждом вызове"""
    dual = dual_value(spec, state)
    primal = primal_value(spec, primal_from_dual(spec, state))
    gap = primal - dual
    if gap < -1e-9:
        logger.warning(f"Отрицательный зазор двойственности {gap:.3e}: нарушена согласованность состояния?")
    return gap


def evaluate(spec: ProblemSpec, state: DualState) -> Tuple[float, float, float]:
    """(P, D, Gap) одним вызовом"""
    dual = dual_value(spec, state)
    primal = primal_value(spec, primal_from_dual(spec, state))
    return primal, dual, primal - dual
