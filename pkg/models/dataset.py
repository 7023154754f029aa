from typing import Any, List, Tuple, Sequence

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Dataset(BaseModel):
    """Разреженный набор данных: матрица X ∈ R^{d×n} по столбцам (примерам) и метки y"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    X: Any = Field(description="Матрица признаков d×n в формате CSC, столбец = пример")
    labels: Any = Field(description="Метки y_i, длина n")
    name: str = Field(default="", description="Имя источника (файл или генератор)")

    @field_validator("X", mode="before")
    @classmethod
    def _to_csc(cls, value: Any) -> sp.csc_matrix:
        matrix = sp.csc_matrix(value, dtype=np.float64)
        matrix.sort_indices()
        return matrix

    @field_validator("labels", mode="before")
    @classmethod
    def _to_array(cls, value: Any) -> np.ndarray:
        labels = np.asarray(value, dtype=np.float64).reshape(-1)
        labels.setflags(write=False)
        return labels

    @model_validator(mode="after")
    def _check_invariants(self) -> "Dataset":
        if self.labels.shape[0] != self.X.shape[1]:
            raise ValueError(
                f"Длина меток {self.labels.shape[0]} не совпадает с числом примеров {self.X.shape[1]}"
            )
        if self.X.nnz and np.any(self.X.data == 0.0):
            raise ValueError("Матрица содержит явные нули")
        if not np.all(np.isfinite(self.X.data)) or not np.all(np.isfinite(self.labels)):
            raise ValueError("Данные содержат нечисловые значения")
        return self

    @property
    def n(self) -> int:
        return int(self.X.shape[1])

    @property
    def d(self) -> int:
        return int(self.X.shape[0])

    def column(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        """Возвращает пары (индексы, значения) i-го примера"""
        start, end = self.X.indptr[i], self.X.indptr[i + 1]
        return self.X.indices[start:end], self.X.data[start:end]

    def column_norms(self) -> np.ndarray:
        """Евклидовы нормы ‖x_i‖ всех примеров"""
        squared = np.asarray(self.X.multiply(self.X).sum(axis=0)).reshape(-1)
        return np.sqrt(squared)

    def select(self, indices: Sequence[int]) -> "Dataset":
        """Подмножество примеров в заданном порядке (шард машины)"""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(X=self.X[:, idx], labels=self.labels[idx], name=self.name)

    def with_features(self, d: int) -> "Dataset":
        """Расширяет пространство признаков до d (шарды могут не содержать старших индексов)"""
        if d < self.d:
            raise ValueError(f"Нельзя уменьшить число признаков с {self.d} до {d}")
        if d == self.d:
            return self
        matrix = sp.csc_matrix((self.X.data, self.X.indices, self.X.indptr), shape=(d, self.n))
        return Dataset(X=matrix, labels=self.labels, name=self.name)

    def equals(self, other: "Dataset") -> bool:
        """Точное совпадение структуры, значений и меток"""
        if self.X.shape != other.X.shape:
            return False
        return (
            np.array_equal(self.X.indptr, other.X.indptr)
            and np.array_equal(self.X.indices, other.X.indices)
            and np.array_equal(self.X.data, other.X.data)
            and np.array_equal(self.labels, other.labels)
        )

    def __str__(self) -> str:
        return f"Dataset({self.name or 'unnamed'}, n={self.n}, d={self.d}, nnz={self.X.nnz})"


class Partition(BaseModel):
    """Разбиение индексов примеров P_1, …, P_K между машинами"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    blocks: Tuple[Any, ...] = Field(description="Упорядоченные множества индексов P_k")
    n: int = Field(description="Общее число примеров")
    strategy: str = Field(default="custom", description="Стратегия разбиения")

    @field_validator("blocks", mode="before")
    @classmethod
    def _to_arrays(cls, value: Any) -> Tuple[np.ndarray, ...]:
        blocks = []
        for block in value:
            array = np.asarray(block, dtype=np.int64).reshape(-1)
            array.setflags(write=False)
            blocks.append(array)
        return tuple(blocks)

    @model_validator(mode="after")
    def _check_invariants(self) -> "Partition":
        if not self.blocks:
            raise ValueError("Разбиение не содержит ни одного блока")
        if any(block.size == 0 for block in self.blocks):
            raise ValueError("Каждый блок разбиения должен быть непустым")
        joined = np.sort(np.concatenate(self.blocks))
        if joined.size != self.n or not np.array_equal(joined, np.arange(self.n)):
            raise ValueError("Блоки разбиения должны быть попарно непересекающимися и покрывать {0,…,n−1}")
        return self

    @property
    def K(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> List[int]:
        return [int(block.size) for block in self.blocks]

    def block(self, k: int) -> np.ndarray:
        return self.blocks[k]

    @classmethod
    def from_sizes(cls, sizes: Sequence[int], strategy: str = "contiguous") -> "Partition":
        """Последовательное разбиение с заданными размерами блоков"""
        bounds = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        blocks = [np.arange(bounds[k], bounds[k + 1]) for k in range(len(sizes))]
        return cls(blocks=blocks, n=int(bounds[-1]), strategy=strategy)
