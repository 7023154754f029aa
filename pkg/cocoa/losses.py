from abc import ABC, abstractmethod
from typing import Dict, Optional, Tuple, Union

import numpy as np
from loguru import logger
from scipy.special import expit, xlogy

from models.errors import ConfigurationError, DomainError, InvalidArgumentError

ArrayLike = Union[float, np.ndarray]

# Допуск при проверке принадлежности α_i двойственному множеству
FEASIBILITY_TOLERANCE = 1e-12


class Loss(ABC):
    """
    Семейство функций потерь ℓ_i вместе с сопряженной ℓ*_i

    Все методы векторизованы по numpy и не имеют состояния. Двойственная переменная
    связана с аргументом сопряженной функции как b = −α_i.
    """

    id: str = ""
    gamma: float = 0.0
    lipschitz: Optional[float] = None
    requires_binary_labels: bool = True
    smooth_conjugate: bool = False

    @abstractmethod
    def value(self, y: ArrayLike, a: ArrayLike) -> np.ndarray:
        """ℓ_i(a)"""

    @abstractmethod
    def subdifferential(self, y: ArrayLike, a: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
        """Концы отрезка ∂ℓ_i(a)"""

    @abstractmethod
    def _conjugate_raw(self, y: np.ndarray, b: np.ndarray) -> np.ndarray:
        """ℓ*_i(b) на допустимом множестве (b уже спроецирован)"""

    @abstractmethod
    def dual_box(self, y: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
        """Границы допустимого отрезка для α_i (α_i = −b)"""

    @abstractmethod
    def coordinate_argmin(self, a0: ArrayLike, c: ArrayLike, s: ArrayLike, y: ArrayLike) -> np.ndarray:
        """
        Точный минимизатор β одномерной задачи c(β − a0) + (s/2)(β − a0)² + ℓ*_i(−β)

        Это шаг покоординатного подъема по G_k и одновременно прокс-оператор R_k
        (при c = 0, s = 1/τ).
        """

    def derivative(self, y: ArrayLike, a: ArrayLike) -> np.ndarray:
        """ℓ′_i(a) для гладких потерь"""
        lo, hi = self.subdifferential(y, a)
        if not np.allclose(lo, hi):
            raise DomainError(f"Функция потерь {self.id} недифференцируема в данной точке")
        return lo

    def feasible(self, y: ArrayLike, alpha: ArrayLike) -> np.ndarray:
        """Маска допустимых α_i"""
        lo, hi = self.dual_box(y)
        alpha = np.asarray(alpha, dtype=np.float64)
        return (alpha >= lo - FEASIBILITY_TOLERANCE) & (alpha <= hi + FEASIBILITY_TOLERANCE)

    def project(self, y: ArrayLike, alpha: ArrayLike) -> np.ndarray:
        """Проекция α на допустимый отрезок"""
        lo, hi = self.dual_box(y)
        return np.clip(np.asarray(alpha, dtype=np.float64), lo, hi)

    def conjugate(self, y: ArrayLike, b: ArrayLike) -> np.ndarray:
        """ℓ*_i(b); вне области определения бросает DomainError"""
        y_arr, b_arr = np.broadcast_arrays(np.asarray(y, dtype=np.float64), np.asarray(b, dtype=np.float64))
        alpha = -b_arr
        mask = self.feasible(y_arr, alpha)
        if not np.all(mask):
            bad = int(np.size(mask) - np.count_nonzero(mask))
            raise DomainError(f"{bad} значений вне области определения ℓ* для потерь {self.id}")
        return self._conjugate_raw(y_arr, -self.project(y_arr, alpha))

    def neg_conjugate_gradient(self, y: ArrayLike, beta: ArrayLike) -> np.ndarray:
        """d/dβ ℓ*_i(−β); определено только для гладкой сопряженной"""
        raise ConfigurationError(f"Сопряженная функция потерь {self.id} не гладкая")

    def prox(self, z: ArrayLike, tau: float, y: ArrayLike) -> np.ndarray:
        """argmin_β (1/(2τ))(β − z)² + ℓ*_i(−β)"""
        return self.coordinate_argmin(z, 0.0, 1.0 / tau, y)

    def validate_labels(self, labels: np.ndarray) -> None:
        """Проверяет совместимость меток с функцией потерь"""
        if self.requires_binary_labels and not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ConfigurationError(f"Функция потерь {self.id} требует метки ±1")

    def __str__(self) -> str:
        return f"Loss({self.id}, γ={self.gamma}, L={self.lipschitz})"


class QuadraticLoss(Loss):
    """ℓ(a) = ½(a − y)², ℓ*(b) = ½b² + yb"""

    id = "quadratic"
    gamma = 1.0
    lipschitz = None
    requires_binary_labels = False
    smooth_conjugate = True

    def value(self, y, a):
        return 0.5 * (np.asarray(a, dtype=np.float64) - y) ** 2

    def subdifferential(self, y, a):
        grad = np.asarray(a, dtype=np.float64) - y
        return grad, grad

    def _conjugate_raw(self, y, b):
        return 0.5 * b * b + y * b

    def dual_box(self, y):
        shape = np.shape(y)
        return np.full(shape, -np.inf), np.full(shape, np.inf)

    def coordinate_argmin(self, a0, c, s, y):
        a0, c, s, y = (np.asarray(v, dtype=np.float64) for v in (a0, c, s, y))
        return (y - c + s * a0) / (1.0 + s)

    def neg_conjugate_gradient(self, y, beta):
        return np.asarray(beta, dtype=np.float64) - y


class HingeLoss(Loss):
    """ℓ(a) = max{0, 1 − ya}, ℓ*(b) = yb при yb ∈ [−1, 0]"""

    id = "hinge"
    gamma = 0.0
    lipschitz = 1.0

    def value(self, y, a):
        return np.maximum(0.0, 1.0 - np.asarray(y, dtype=np.float64) * a)

    def subdifferential(self, y, a):
        y = np.asarray(y, dtype=np.float64)
        margin = y * np.asarray(a, dtype=np.float64)
        lo = np.where(margin < 1.0, -y, np.where(margin > 1.0, 0.0, np.minimum(-y, 0.0)))
        hi = np.where(margin < 1.0, -y, np.where(margin > 1.0, 0.0, np.maximum(-y, 0.0)))
        return lo, hi

    def _conjugate_raw(self, y, b):
        return y * b

    def dual_box(self, y):
        y = np.asarray(y, dtype=np.float64)
        return np.minimum(0.0, y), np.maximum(0.0, y)

    def coordinate_argmin(self, a0, c, s, y):
        a0, c, s, y = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (a0, c, s, y)))
        positive = s > 0.0
        safe_s = np.where(positive, s, 1.0)
        # В координате u = yβ ∈ [0, 1]
        u_curved = np.clip(y * a0 + (1.0 - y * c) / safe_s, 0.0, 1.0)
        slope = y * c - 1.0
        u_linear = np.where(slope < 0.0, 1.0, np.where(slope > 0.0, 0.0, np.clip(y * a0, 0.0, 1.0)))
        return y * np.where(positive, u_curved, u_linear)


class SquaredHingeLoss(Loss):
    """ℓ(a) = max{0, 1 − ya}², ℓ*(b) = yb + b²/4 при yb ≤ 0"""

    id = "sqhinge"
    gamma = 0.5
    lipschitz = None

    def value(self, y, a):
        return np.maximum(0.0, 1.0 - np.asarray(y, dtype=np.float64) * a) ** 2

    def subdifferential(self, y, a):
        y = np.asarray(y, dtype=np.float64)
        grad = -2.0 * y * np.maximum(0.0, 1.0 - y * a)
        return grad, grad

    def _conjugate_raw(self, y, b):
        return y * b + 0.25 * b * b

    def dual_box(self, y):
        y = np.asarray(y, dtype=np.float64)
        return np.where(y > 0, 0.0, -np.inf), np.where(y > 0, np.inf, 0.0)

    def coordinate_argmin(self, a0, c, s, y):
        a0, c, s, y = (np.asarray(v, dtype=np.float64) for v in (a0, c, s, y))
        u = np.maximum(0.0, (1.0 - y * c + s * y * a0) / (s + 0.5))
        return y * u


class LogisticLoss(Loss):
    """ℓ(a) = log(1 + exp(−ya)), ℓ*(b) = u log u + (1 − u) log(1 − u) при u = −b/y ∈ [0, 1]"""

    id = "logistic"
    # ℓ″ ≤ 1/4, значит ℓ является (1/γ)-гладкой с γ = 4
    gamma = 4.0
    lipschitz = 1.0

    newton_iterations = 20
    bisection_iterations = 60

    def value(self, y, a):
        return np.logaddexp(0.0, -np.asarray(y, dtype=np.float64) * a)

    def subdifferential(self, y, a):
        y = np.asarray(y, dtype=np.float64)
        grad = -y * expit(-y * np.asarray(a, dtype=np.float64))
        return grad, grad

    def _conjugate_raw(self, y, b):
        u = np.clip(-b * y, 0.0, 1.0)
        # Соглашение 0·log 0 = 0
        return xlogy(u, u) + xlogy(1.0 - u, 1.0 - u)

    def dual_box(self, y):
        y = np.asarray(y, dtype=np.float64)
        return np.minimum(0.0, y), np.maximum(0.0, y)

    def coordinate_argmin(self, a0, c, s, y):
        a0, c, s, y = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (a0, c, s, y)))
        shift = y * c - s * y * a0

        def phi(u):
            return shift + s * u + np.log(u) - np.log1p(-u)

        lo = np.zeros(a0.shape)
        hi = np.ones(a0.shape)
        u = np.full(a0.shape, 0.5)
        # Ньютон с защитой отрезком, затем бисекция
        for _ in range(self.newton_iterations):
            value = phi(u)
            if np.all(np.abs(value) < 1e-14):
                return y * u
            lo = np.where(value < 0.0, u, lo)
            hi = np.where(value > 0.0, u, hi)
            step = value / (s + 1.0 / (u * (1.0 - u)))
            candidate = u - step
            inside = (candidate > lo) & (candidate < hi)
            u = np.where(inside, candidate, 0.5 * (lo + hi))
        for _ in range(self.bisection_iterations):
            value = phi(u)
            if np.all(np.abs(value) < 1e-14):
                break
            lo = np.where(value < 0.0, u, lo)
            hi = np.where(value > 0.0, u, hi)
            u = np.where(value == 0.0, u, 0.5 * (lo + hi))
        return y * u


LOSSES: Dict[str, Loss] = {
    loss.id: loss for loss in (QuadraticLoss(), HingeLoss(), SquaredHingeLoss(), LogisticLoss())
}
ALIASES = {"squared-hinge": "sqhinge", "squared_hinge": "sqhinge", "least-squares": "quadratic"}


def get_loss(loss_id: str) -> Loss:
    """Возвращает функцию потерь по идентификатору CLI"""
    key = ALIASES.get(loss_id, loss_id)
    if key not in LOSSES:
        raise InvalidArgumentError(f"Неизвестная функция потерь '{loss_id}', ожидается одна из {sorted(LOSSES)}")
    return LOSSES[key]


def loss_value(loss_id: str, y: ArrayLike, a: ArrayLike) -> np.ndarray:
    return get_loss(loss_id).value(y, a)


def conjugate_value(loss_id: str, y: ArrayLike, b: ArrayLike) -> np.ndarray:
    return get_loss(loss_id).conjugate(y, b)


def loss_constants(loss_id: str) -> Tuple[float, Optional[float]]:
    """(γ, L): γ параметр гладкости (0 для hinge), L константа Липшица (None, если не липшицева)"""
    loss = get_loss(loss_id)
    logger.debug(f"Константы {loss}")
    return loss.gamma, loss.lipschitz
