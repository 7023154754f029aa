import math
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator

from cocoa.losses import loss_constants
from models.errors import InvalidArgumentError


class RateInputs(BaseModel):
    """Величины, входящие в оценки числа раундов"""

    lam: float = Field(description="λ > 0")
    n: int = Field(description="Число примеров")
    sigma_prime: float = Field(description="σ′ > 0")
    nu: float = Field(default=1.0, description="ν ∈ (0, 1]")
    theta: float = Field(default=0.0, description="Качество локального решения Θ ∈ [0, 1]")
    gamma: Optional[float] = Field(None, description="Параметр гладкости γ (гладкие потери)")
    sigma_max: Optional[float] = Field(None, description="max_k σ_k")
    sigma: Optional[float] = Field(None, description="Σ_k σ_k |P_k|")
    lipschitz: Optional[float] = Field(None, description="Константа Липшица L")
    epsilon_dual: Optional[float] = Field(None, description="Целевая двойственная невязка ε_D")
    epsilon_gap: Optional[float] = Field(None, description="Целевой зазор ε_Gap")
    dual_suboptimality: Optional[float] = Field(None, description="D(α*) − D(α⁰) или ее верхняя оценка")
    loss: Optional[str] = Field(None, description="Идентификатор функции потерь, если оценка строится для нее")

    @field_validator("lam", "sigma_prime")
    @classmethod
    def _positive(cls, value: float) -> float:
        if not value > 0:
            raise ValueError(f"значение {value} должно быть положительным")
        return value

    @field_validator("n")
    @classmethod
    def _positive_n(cls, value: int) -> int:
        if value < 1:
            raise ValueError(f"n={value} должно быть не меньше 1")
        return value

    @field_validator("nu")
    @classmethod
    def _nu_range(cls, value: float) -> float:
        if not 0.0 < value <= 1.0:
            raise ValueError(f"ν={value} должно лежать в (0, 1]")
        return value

    @field_validator("theta")
    @classmethod
    def _theta_range(cls, value: float) -> float:
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"Θ={value} должно лежать в [0, 1]")
        return value

    @property
    def progress(self) -> float:
        """ν(1 − Θ): доля гарантированного прогресса за раунд"""
        return self.nu * (1.0 - self.theta)


def _require(value: Optional[float], name: str, positive: bool = True) -> float:
    if value is None:
        raise InvalidArgumentError(f"Для оценки требуется {name}")
    if positive and not value > 0:
        raise InvalidArgumentError(f"{name}={value} должно быть положительным")
    return float(value)


def _smooth_factor(inputs: RateInputs) -> float:
    """(λγn + σ_max σ′)/(λγn) / (ν(1 − Θ))"""
    gamma = _require(inputs.gamma, "γ")
    sigma_max = _require(inputs.sigma_max, "σ_max", positive=False)
    if sigma_max < 0:
        raise InvalidArgumentError(f"σ_max={sigma_max} не может быть отрицательным")
    scaled = inputs.lam * gamma * inputs.n
    return (scaled + sigma_max * inputs.sigma_prime) / scaled / inputs.progress


def smooth_rounds_dual(inputs: RateInputs) -> float:
    """Число раундов до E[D(α*) − D(α^T)] ≤ ε_D для (1/γ)-гладких потерь"""
    epsilon = _require(inputs.epsilon_dual, "ε_D")
    if inputs.theta >= 1.0:
        return math.inf
    return max(0.0, _smooth_factor(inputs) * math.log(1.0 / epsilon))


def smooth_rounds_gap(inputs: RateInputs) -> float:
    """Число раундов до E[Gap(α^T)] ≤ ε_Gap для (1/γ)-гладких потерь"""
    epsilon = _require(inputs.epsilon_gap, "ε_Gap")
    if inputs.theta >= 1.0:
        return math.inf
    factor = _smooth_factor(inputs)
    return max(0.0, factor * math.log(factor / epsilon))


def lipschitz_rounds(inputs: RateInputs) -> Tuple[float, float, float]:
    """
    (T, T₀, t₀) для L-липшицевых потерь; возвращаются наименьшие значения,
    удовлетворяющие неравенствам (любые большие тоже допустимы)
    """
    if inputs.loss is not None and loss_constants(inputs.loss)[1] is None:
        raise InvalidArgumentError(f"Потери {inputs.loss} не липшицевы, оценка для L-липшицевых потерь к ним неприменима")
    epsilon = _require(inputs.epsilon_gap, "ε_Gap")
    lipschitz = _require(inputs.lipschitz, "L")
    sigma = _require(inputs.sigma, "σ", positive=False)
    if inputs.theta >= 1.0:
        return math.inf, math.inf, math.inf

    progress = inputs.progress
    coupling = lipschitz ** 2 * sigma * inputs.sigma_prime
    scale = inputs.lam * inputs.n ** 2

    t0 = 0.0
    suboptimality = inputs.dual_suboptimality
    if suboptimality is not None and suboptimality > 0 and coupling > 0:
        t0 = max(0.0, math.ceil(math.log(2.0 * scale * suboptimality / (4.0 * coupling)) / progress))
    T0 = t0 + max(0.0, (2.0 / progress) * (8.0 * coupling / (scale * epsilon) - 1.0))
    T = T0 + max(math.ceil(1.0 / progress), 4.0 * coupling / (scale * epsilon * progress))
    return float(T), float(T0), float(t0)


def aggregation_bounds(inputs: RateInputs, K: int) -> Dict[str, Dict[str, float]]:
    """
    Оценки для сложения (ν = 1, σ′ = K) и усреднения (ν = 1/K, σ′ = 1)
    при остальных величинах из inputs
    """
    if K < 1:
        raise InvalidArgumentError(f"K={K} должно быть не меньше 1")
    schemes = {"adding": (1.0, float(K)), "averaging": (1.0 / K, 1.0)}
    bounds: Dict[str, Dict[str, float]] = {}
    for name, (nu, sigma_prime) in schemes.items():
        scheme = inputs.model_copy(update={"nu": nu, "sigma_prime": sigma_prime})
        values: Dict[str, float] = {}
        if scheme.gamma and scheme.sigma_max is not None:
            if scheme.epsilon_dual:
                values["smooth_rounds_dual"] = smooth_rounds_dual(scheme)
            if scheme.epsilon_gap:
                values["smooth_rounds_gap"] = smooth_rounds_gap(scheme)
        if scheme.lipschitz and scheme.sigma is not None and scheme.epsilon_gap:
            values["lipschitz_rounds"] = lipschitz_rounds(scheme)[0]
        bounds[name] = values
    return bounds


def averaged_iterate(history: Sequence[np.ndarray], T0: int, T: int) -> np.ndarray:
    """
    ᾱ = (1/(T − T₀)) Σ_{t=T₀+1}^{T} α^t, history[t] = α^t

    Args:
        history: Итерации α⁰, α¹, …
        T0: Начало окна (не включается)
        T: Конец окна (включается)
    """
    if T <= T0 or T0 < 0:
        raise InvalidArgumentError(f"Пустое окно усреднения (T₀={T0}, T={T})")
    if T >= len(history):
        raise InvalidArgumentError(f"История содержит {len(history)} итераций, запрошено α^{T}")
    window = np.stack([np.asarray(history[t], dtype=np.float64) for t in range(T0 + 1, T + 1)])
    return window.mean(axis=0)
