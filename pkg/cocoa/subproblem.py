from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
from loguru import logger

from cocoa.losses import Loss
from cocoa.problem import REGULARIZER, dual_value, shared_vector
from models.dataset import Dataset, Partition
from models.errors import InvalidArgumentError
from models.problem import DualState, ProblemSpec, TheoryParams

# Порог относительного сингулярного числа, ниже которого направление считается нулевым
RANK_TOLERANCE = 1e-10


@dataclass(frozen=True)
class SubproblemView:
    """
    Все, что нужно машине k для вычисления G_k^{σ′}(·; v, α_[k])

    Создается заново в каждом раунде и принадлежит одному воркеру.
    """

    X_local: sp.csc_matrix
    labels: np.ndarray
    alpha_local: np.ndarray
    grad_block: np.ndarray
    sigma_prime: float
    lam: float
    n: int
    K: int
    f_share: float
    loss: Loss
    machine: int = 0
    round_index: int = 0
    col_sq_norms: np.ndarray = field(default=None)

    @property
    def size(self) -> int:
        return int(self.X_local.shape[1])

    @property
    def curvature(self) -> float:
        """σ′/(λn²): коэффициент квадратичного члена по X_[k]h"""
        return self.sigma_prime / (self.lam * self.n * self.n)


def build_view(
    X_local: sp.csc_matrix,
    labels: np.ndarray,
    alpha_local: np.ndarray,
    v: np.ndarray,
    sigma_prime: float,
    lam: float,
    n: int,
    K: int,
    loss: Loss,
    machine: int = 0,
    round_index: int = 0,
) -> SubproblemView:
    """
    Строит локальную подзадачу машины по общему вектору v

    Args:
        X_local: Столбцы X_[k] (d×|P_k|)
        labels: Метки примеров машины
        alpha_local: Текущие α_[k]
        v: Общий вектор v = Xα/(λn)
        sigma_prime: Параметр подзадачи σ′
        lam, n, K: Глобальные скаляры
        loss: Функция потерь

    Returns:
        SubproblemView
    """
    grad_g = REGULARIZER.conjugate_gradient(v)
    grad_block = np.asarray(X_local.T @ grad_g).reshape(-1) / n
    col_sq_norms = np.asarray(X_local.multiply(X_local).sum(axis=0)).reshape(-1)
    return SubproblemView(
        X_local=X_local,
        labels=np.asarray(labels, dtype=np.float64),
        alpha_local=np.array(alpha_local, dtype=np.float64),
        grad_block=grad_block,
        sigma_prime=float(sigma_prime),
        lam=float(lam),
        n=int(n),
        K=int(K),
        f_share=lam * REGULARIZER.conjugate(v) / K,
        loss=loss,
        machine=machine,
        round_index=round_index,
        col_sq_norms=col_sq_norms,
    )


def view_from_problem(
    spec: ProblemSpec, parts: Partition, k: int, state: DualState, sigma_prime: float, round_index: int = 0
) -> SubproblemView:
    """Подзадача машины k для глобального состояния"""
    block = parts.block(k)
    return build_view(
        X_local=spec.dataset.X[:, block],
        labels=spec.dataset.labels[block],
        alpha_local=state.alpha[block],
        v=state.v,
        sigma_prime=sigma_prime,
        lam=spec.lam,
        n=spec.n,
        K=parts.K,
        loss=spec.loss,
        machine=k,
        round_index=round_index,
    )


def local_conjugate_sum(view: SubproblemView, h_local: np.ndarray) -> float:
    """R_k(α_[k] + h) = (1/n) Σ_{i∈P_k} ℓ*_i(−(α_i + h_i))"""
    beta = view.alpha_local + h_local
    return float(np.sum(view.loss.conjugate(view.labels, -beta))) / view.n


def local_smooth_part(view: SubproblemView, h_local: np.ndarray) -> float:
    """Гладкая часть −G_k без константы: ⟨grad, h⟩ + (σ′/(2λn²))‖X_[k]h‖²"""
    u = np.asarray(view.X_local @ h_local).reshape(-1)
    return float(np.dot(view.grad_block, h_local)) + 0.5 * view.curvature * float(np.dot(u, u))


def local_objective(view: SubproblemView, h_local: np.ndarray) -> float:
    """
    G_k^{σ′}(h; v, α_[k]) = −(1/K)f(α) − ⟨grad, h⟩ − (λσ′/2)‖X_[k]h/(λn)‖² − R_k(α_[k] + h)

    Недопустимое α_[k] + h дает DomainError (значение −∞).
    """
    h_local = np.asarray(h_local, dtype=np.float64)
    return -view.f_share - local_smooth_part(view, h_local) - local_conjugate_sum(view, h_local)


def local_gradient_smooth_part(view: SubproblemView, h_local: np.ndarray) -> np.ndarray:
    """Градиент гладкой части G_k: −grad − (σ′/(λn²)) X_[k]ᵀ(X_[k]h)"""
    u = np.asarray(view.X_local @ h_local).reshape(-1)
    return -view.grad_block - view.curvature * np.asarray(view.X_local.T @ u).reshape(-1)


def safe_sigma_prime(nu: float, K: int) -> float:
    """Безопасный параметр подзадачи σ′ := νK"""
    if not 0.0 < nu <= 1.0:
        raise InvalidArgumentError(f"ν={nu} должно лежать в (0, 1]")
    if K < 1:
        raise InvalidArgumentError(f"K={K} должно быть не меньше 1")
    return nu * K


def _column_space_basis(block: np.ndarray) -> np.ndarray:
    """Ортонормированный базис образа плотного блока X_[k]"""
    if block.size == 0:
        return np.zeros((block.shape[0], 0))
    left, singular, _ = np.linalg.svd(block, full_matrices=False)
    if singular.size == 0 or singular[0] == 0.0:
        return np.zeros((block.shape[0], 0))
    rank = int(np.count_nonzero(singular > RANK_TOLERANCE * singular[0]))
    return left[:, :rank]


def sigma_prime_min(dataset: Dataset, parts: Partition, nu: float, max_n: int = 200) -> float:
    """
    σ′_min = ν · max {hᵀXᵀXh : hᵀGh ≤ 1}, G = blockdiag(X_[k]ᵀX_[k])

    Пучок (XᵀX, G) сводится к образу G: при h_[k] = V_k S_k⁻¹ z_k имеем hᵀGh = ‖z‖² и
    Xh = [U_1 … U_K] z, поэтому максимум равен ‖[U_1 … U_K]‖². Если hᵀGh = 0, то
    X_[k]h_[k] = 0 для всех k и Xh = 0, так что максимум всегда конечен.
    Только для проверки на малых экземплярах.
    """
    if dataset.n > max_n:
        raise InvalidArgumentError(f"σ′_min вычисляется только при n ≤ {max_n}, получено n={dataset.n}")
    if not 0.0 < nu <= 1.0:
        raise InvalidArgumentError(f"ν={nu} должно лежать в (0, 1]")

    dense = dataset.X.toarray()
    bases = [_column_space_basis(dense[:, parts.block(k)]) for k in range(parts.K)]
    stacked = np.hstack(bases)
    if stacked.shape[1] == 0:
        logger.warning("Все данные нулевые: σ′_min не ограничивает выбор σ′")
        return 0.0

    return float(nu * np.linalg.norm(stacked, ord=2) ** 2)


def block_quadratic(dataset: Dataset, parts: Partition, h: np.ndarray) -> float:
    """hᵀGh = Σ_k ‖X_[k]h_[k]‖²"""
    total = 0.0
    for k in range(parts.K):
        block = parts.block(k)
        u = np.asarray(dataset.X[:, block] @ h[block]).reshape(-1)
        total += float(np.dot(u, u))
    return total


def largest_squared_singular_value(
    matrix: sp.spmatrix, tol: float = 1e-10, max_iter: int = 10000, seed: int = 0, patience: int = 3
) -> float:
    """
    Степенной метод для λ_max(MᵀM)

    Сходимость: относительное изменение отношения Рэлея < tol на `patience` итерациях подряд.
    """
    cols = matrix.shape[1]
    if cols == 0 or matrix.nnz == 0:
        return 0.0

    rng = np.random.default_rng(seed)
    x = rng.standard_normal(cols)
    y = np.asarray(matrix.T @ (matrix @ x)).reshape(-1)
    previous = None
    streak = 0
    rayleigh = 0.0
    for _ in range(max_iter):
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        x = y / norm
        y = np.asarray(matrix.T @ (matrix @ x)).reshape(-1)
        rayleigh = float(np.dot(x, y))
        if previous is not None and abs(rayleigh - previous) < tol * abs(rayleigh):
            streak += 1
            if streak >= patience:
                return rayleigh
        else:
            streak = 0
        previous = rayleigh

    logger.warning(f"Степенной метод не сошелся за {max_iter} итераций, λ ≈ {rayleigh:.6e}")
    return rayleigh


def sigma_k(dataset: Dataset, parts: Partition, k: int, tol: float = 1e-10, seed: int = 0) -> float:
    """σ_k: наибольшее квадратичное сингулярное число локального блока X_[k]"""
    return largest_squared_singular_value(dataset.X[:, parts.block(k)], tol=tol, seed=seed + k)


def theory_params(
    dataset: Dataset, parts: Partition, nu: Optional[float] = None, with_sigma_prime_min: bool = False
) -> TheoryParams:
    """σ_k по всем машинам, σ_max, σ и (опционально) σ′_min"""
    sigmas: List[float] = [sigma_k(dataset, parts, k) for k in range(parts.K)]
    sizes = parts.sizes
    params = TheoryParams(
        sigma_k=sigmas,
        sizes=sizes,
        sigma_max=max(sigmas),
        sigma=float(sum(s * size for s, size in zip(sigmas, sizes))),
        sigma_prime_min=sigma_prime_min(dataset, parts, nu if nu is not None else 1.0)
        if with_sigma_prime_min
        else None,
    )
    logger.debug(f"Параметры теории: σ_max={params.sigma_max:.4g}, σ={params.sigma:.4g}")
    return params


def lower_bound_slack(
    spec: ProblemSpec,
    parts: Partition,
    nu: float,
    sigma_prime: float,
    alpha: np.ndarray,
    h: np.ndarray,
) -> float:
    """
    D(α + νΣ_k h_[k]) − [(1 − ν)D(α) + ν Σ_k G_k^{σ′}(h_[k]; α)]

    Требует допустимости α и α + h (тогда допустимо и α + νh).
    """
    state = DualState(alpha=alpha, v=shared_vector(spec, alpha))
    moved_alpha = alpha + nu * h
    moved = DualState(alpha=moved_alpha, v=shared_vector(spec, moved_alpha))
    local_sum = 0.0
    for k in range(parts.K):
        view = view_from_problem(spec, parts, k, state, sigma_prime)
        local_sum += local_objective(view, h[parts.block(k)])
    return dual_value(spec, moved) - ((1.0 - nu) * dual_value(spec, state) + nu * local_sum)


def lower_bound_check(
    spec: ProblemSpec,
    parts: Partition,
    nu: float,
    sigma_prime: float,
    alpha: np.ndarray,
    h: np.ndarray,
    tol: float = 1e-9,
) -> bool:
    """Выполняется ли блочно-сепарабельная нижняя оценка D"""
    return lower_bound_slack(spec, parts, nu, sigma_prime, alpha, h) >= -tol
