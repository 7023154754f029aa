from typing import Any, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from models.dataset import Dataset


class ProblemSpec(BaseModel):
    """Задача регуляризованной минимизации эмпирического риска: данные, потери, λ"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    dataset: Dataset = Field(description="Нормализованный набор данных")
    loss: Any = Field(description="Семейство функций потерь (cocoa.losses.Loss)")
    lam: float = Field(description="Параметр регуляризации λ > 0")

    @field_validator("lam")
    @classmethod
    def _positive_lambda(cls, value: float) -> float:
        if not value > 0:
            raise ValueError(f"λ должно быть положительным, получено {value}")
        return float(value)

    @model_validator(mode="after")
    def _labels_match_loss(self) -> "ProblemSpec":
        self.loss.validate_labels(self.dataset.labels)
        return self

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def d(self) -> int:
        return self.dataset.d

    @property
    def scale(self) -> float:
        """λn: знаменатель отображения v(α) = Xα/(λn)"""
        return self.lam * self.dataset.n

    def __str__(self) -> str:
        return f"ProblemSpec({self.dataset}, loss={self.loss.id}, λ={self.lam:g})"


class DualState(BaseModel):
    """Двойственная переменная α ∈ R^n и общий вектор v = Xα/(λn) ∈ R^d"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    alpha: Any = Field(description="Двойственные переменные α")
    v: Any = Field(description="Общий вектор v")

    @field_validator("alpha", "v", mode="before")
    @classmethod
    def _to_array(cls, value: Any) -> np.ndarray:
        return np.array(value, dtype=np.float64).reshape(-1)

    def copy(self) -> "DualState":
        return DualState(alpha=self.alpha.copy(), v=self.v.copy())


class TheoryParams(BaseModel):
    """Спектральные величины разбиения, входящие в оценки скорости"""

    sigma_k: List[float] = Field(description="σ_k = max ‖X_[k]α_[k]‖²/‖α_[k]‖² для каждой машины")
    sizes: List[int] = Field(description="Размеры блоков |P_k|")
    sigma_max: float = Field(description="max_k σ_k")
    sigma: float = Field(description="Σ_k σ_k |P_k|")
    sigma_prime_min: Optional[float] = Field(None, description="σ′_min (только для малых n)")
