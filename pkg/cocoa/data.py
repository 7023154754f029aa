from typing import List, Optional

import numpy as np
import scipy.sparse as sp
from loguru import logger

from models.dataset import Dataset, Partition
from models.errors import InvalidArgumentError

PARTITION_STRATEGIES = ("contiguous", "round-robin", "random")

# Нормы, превышающие 1 не более чем на этот допуск, считаются единичными
NORM_TOLERANCE = 1e-12


def normalize_examples(dataset: Dataset) -> Dataset:
    """
    Масштабирует примеры с ‖x_i‖ > 1 на единичную сферу

    Столбцы с ‖x_i‖ ≤ 1 (включая нулевые) не меняются, поэтому операция идемпотентна.
    """
    norms = dataset.column_norms()
    scale = np.ones(dataset.n)
    too_long = norms > 1.0 + NORM_TOLERANCE
    scale[too_long] = 1.0 / norms[too_long]

    if not np.any(too_long):
        return dataset

    matrix = dataset.X.copy()
    counts = np.diff(matrix.indptr)
    matrix.data = matrix.data * np.repeat(scale, counts)
    # Масштабирование может обнулить денормализованные значения
    matrix.eliminate_zeros()
    logger.debug(f"Нормализовано {int(too_long.sum())} из {dataset.n} примеров")
    return Dataset(X=matrix, labels=dataset.labels, name=dataset.name)


def partition(n: int, K: int, strategy: str = "random", seed: Optional[int] = None) -> Partition:
    """
    Разбивает индексы {0,…,n−1} на K непустых блоков, размеры отличаются не более чем на 1

    Args:
        n: Число примеров
        K: Число машин
        strategy: contiguous | round-robin | random
        seed: Зерно для random (детерминированное перемешивание)

    Returns:
        Partition
    """
    if K < 1 or K > n:
        raise InvalidArgumentError(f"Число машин K={K} должно лежать в [1, n={n}]")
    if strategy not in PARTITION_STRATEGIES:
        raise InvalidArgumentError(f"Неизвестная стратегия разбиения '{strategy}'")

    if strategy == "round-robin":
        blocks = [np.arange(k, n, K) for k in range(K)]
        return Partition(blocks=blocks, n=n, strategy=strategy)

    if strategy == "random":
        order = np.random.default_rng(seed).permutation(n)
    else:
        order = np.arange(n)

    base, extra = divmod(n, K)
    sizes = [base + 1 if k < extra else base for k in range(K)]
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    blocks: List[np.ndarray] = []
    for k in range(K):
        block = order[bounds[k]:bounds[k + 1]]
        # Внутри блока сохраняем исходный порядок примеров
        blocks.append(np.sort(block))
    return Partition(blocks=blocks, n=n, strategy=strategy)


def shard_dataset(dataset: Dataset, parts: Partition) -> List[Dataset]:
    """Локальные наборы данных машин в порядке индексов P_k"""
    return [dataset.select(parts.block(k)) for k in range(parts.K)]


def concatenate_shards(shards: List[Dataset], d: Optional[int] = None) -> Dataset:
    """Собирает глобальный набор из шардов (порядок примеров: шард 0, шард 1, …)"""
    d = d if d is not None else max(shard.d for shard in shards)
    matrices = [shard.with_features(d).X for shard in shards]
    labels = np.concatenate([shard.labels for shard in shards])
    return Dataset(X=sp.hstack(matrices, format="csc"), labels=labels, name="shards")
