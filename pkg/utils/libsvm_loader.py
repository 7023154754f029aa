from pathlib import Path
from typing import Iterable, List, Optional, TextIO, Union

import numpy as np
import scipy.sparse as sp
from loguru import logger

from models.dataset import Dataset, Partition
from models.errors import LibsvmParseError


class DatasetLoader:
    """Класс для загрузки и сохранения наборов данных в текстовом формате LIBSVM"""

    def __init__(self, n_features: Optional[int] = None):
        # Явное число признаков: шарды могут не содержать старших индексов
        self.n_features = n_features

    def parse(self, lines: Union[str, Iterable[str]], name: str = "") -> Dataset:
        """
        Разбирает строки вида `<label> <idx>:<val> …` с 1-базными возрастающими индексами

        Args:
            lines: Текст целиком или итерируемый поток строк
            name: Имя источника для логов

        Returns:
            Dataset с 0-базными индексами внутри
        """
        if isinstance(lines, str):
            lines = lines.splitlines()

        labels: List[float] = []
        indptr: List[int] = [0]
        indices: List[int] = []
        values: List[float] = []
        max_index = 0

        for line_number, raw_line in enumerate(lines, start=1):
            line = raw_line.strip()
            if not line:
                continue

            tokens = line.split()
            try:
                label = float(tokens[0])
            except ValueError:
                raise LibsvmParseError(f"нечисловая метка '{tokens[0]}'", line_number) from None
            if not np.isfinite(label):
                raise LibsvmParseError(f"неконечная метка '{tokens[0]}'", line_number)
            labels.append(label)

            previous = 0
            for token in tokens[1:]:
                index_str, sep, value_str = token.partition(":")
                if not sep:
                    raise LibsvmParseError(f"ожидалась пара idx:val, получено '{token}'", line_number)
                try:
                    index = int(index_str)
                    value = float(value_str)
                except ValueError:
                    raise LibsvmParseError(f"нечисловой токен '{token}'", line_number) from None
                if index < 1:
                    raise LibsvmParseError(f"индекс {index} меньше 1", line_number)
                if index == previous:
                    raise LibsvmParseError(f"повторяющийся индекс {index}", line_number)
                if index < previous:
                    raise LibsvmParseError(f"индексы не возрастают ({previous} → {index})", line_number)
                if not np.isfinite(value):
                    raise LibsvmParseError(f"нечисловое значение '{value_str}'", line_number)
                previous = index
                # Явные нули не храним
                if value != 0.0:
                    indices.append(index - 1)
                    values.append(value)
            max_index = max(max_index, previous)
            indptr.append(len(indices))

        if not labels:
            raise LibsvmParseError("пустой ввод: не найдено ни одного примера")

        d = max_index
        if self.n_features is not None:
            if self.n_features < max_index:
                raise LibsvmParseError(
                    f"задано число признаков {self.n_features}, но встречен индекс {max_index}"
                )
            d = self.n_features

        matrix = sp.csc_matrix(
            (np.asarray(values, dtype=np.float64), np.asarray(indices, dtype=np.int32), np.asarray(indptr)),
            shape=(d, len(labels)),
        )
        dataset = Dataset(X=matrix, labels=labels, name=name)
        logger.debug(f"Разобран набор данных {dataset}")
        return dataset

    def load(self, file_path: Union[str, Path]) -> Dataset:
        """Загружает набор данных из файла"""
        path = Path(file_path)
        if not path.exists():
            raise FileNotFoundError(f"Файл не найден: {file_path}")

        with open(path, "r", encoding="utf-8") as stream:
            dataset = self.parse(stream, name=path.name)

        logger.info(f"Загружен {dataset} из {path}")
        return dataset

    @staticmethod
    def serialize(dataset: Dataset) -> str:
        """Сериализует набор данных в LIBSVM (17 значащих цифр, точный round-trip)"""
        lines = []
        for i in range(dataset.n):
            idx, vals = dataset.column(i)
            parts = [f"{dataset.labels[i]:.17g}"]
            parts.extend(f"{j + 1}:{v:.17g}" for j, v in zip(idx, vals))
            lines.append(" ".join(parts))
        return "\n".join(lines) + "\n"

    def save(self, dataset: Dataset, file_path: Union[str, Path]) -> str:
        """Сохраняет набор данных в файл"""
        path = Path(file_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as stream:
            stream.write(self.serialize(dataset))
        logger.info(f"Набор данных {dataset} сохранен в {path}")
        return str(path)

    @staticmethod
    def shard_path(base: Union[str, Path], k: int) -> Path:
        """Имя файла шарда машины k: `<base>.part<k>`"""
        return Path(f"{base}.part{k}")

    def save_shards(self, dataset: Dataset, partition: Partition, base: Union[str, Path]) -> List[str]:
        """Записывает по одному LIBSVM-файлу на машину"""
        paths = []
        for k in range(partition.K):
            paths.append(self.save(dataset.select(partition.block(k)), self.shard_path(base, k)))
        logger.info(f"Записано {len(paths)} шардов с базой {base}")
        return paths

    def load_shard(self, base: Union[str, Path], k: int) -> Dataset:
        return self.load(self.shard_path(base, k))


def parse_libsvm(stream: Union[str, TextIO, Iterable[str]], n_features: Optional[int] = None) -> Dataset:
    """Разбирает LIBSVM-текст или поток"""
    return DatasetLoader(n_features=n_features).parse(stream)
