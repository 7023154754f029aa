import csv
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import orjson
from loguru import logger

from models.dataset import Dataset
from models.errors import InvalidArgumentError
from models.metrics import METRICS_COLUMNS, RoundMetrics
from utils.libsvm_loader import DatasetLoader


class MetricsWriter:
    """Построчная запись трассы метрик в CSV (только дозапись во время запуска)"""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._stream = None
        self._writer = None
        self.rows = 0

    def __enter__(self) -> "MetricsWriter":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._stream = open(self.path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._stream, lineterminator="\n")
        self._writer.writerow(METRICS_COLUMNS)
        return self

    def write(self, row: RoundMetrics) -> None:
        self._writer.writerow(row.csv_row())
        # Трасса должна быть читаемой даже после аварийной остановки
        self._stream.flush()
        self.rows += 1

    __call__ = write

    def __exit__(self, *exc) -> None:
        if self._stream is not None:
            self._stream.close()
            self._stream = None
        logger.debug(f"Метрики записаны в {self.path} ({self.rows} строк)")


def read_metrics(path: Union[str, Path]) -> List[RoundMetrics]:
    """Читает CSV метрик и проверяет возрастание номеров раундов"""
    with open(path, "r", encoding="utf-8", newline="") as stream:
        reader = csv.DictReader(stream)
        if tuple(reader.fieldnames or ()) != METRICS_COLUMNS:
            raise InvalidArgumentError(f"Неожиданный заголовок CSV метрик: {reader.fieldnames}")
        rows = [RoundMetrics(**record) for record in reader]

    for previous, current in zip(rows, rows[1:]):
        if current.round <= previous.round:
            raise InvalidArgumentError(f"Номера раундов не возрастают: {previous.round} → {current.round}")
    return rows


def _default(value: Any) -> Any:
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (set, tuple)):
        return list(value)
    raise TypeError(f"Тип {type(value).__name__} не сериализуется в JSON")


class FileManager:
    """Утилита для управления папками, сохранения отчетов и контрпримеров"""

    def __init__(self, base_path: Union[str, Path] = "."):
        self.base_path = Path(base_path)
        self.reports_dir = self.base_path / "reports"

    def save_report(self, report_data: Dict[str, Any], path: Optional[Union[str, Path]] = None, topic: str = "run") -> str:
        """
        Сохраняет отчет в JSON

        Args:
            report_data: Данные отчета
            path: Явный путь; по умолчанию reports/<topic>_<время>.json
            topic: Тема для имени файла

        Returns:
            Путь к сохраненному файлу
        """
        if path is None:
            timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
            safe_topic = "".join(c for c in topic if c.isalnum() or c in ("-", "_"))[:50]
            path = self.reports_dir / f"{safe_topic}_{timestamp}.json"
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(
            orjson.dumps(report_data, default=_default, option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY)
        )
        logger.info(f"Отчет сохранен в {path}")
        return str(path)

    @staticmethod
    def load_report(path: Union[str, Path]) -> Dict[str, Any]:
        return orjson.loads(Path(path).read_bytes())

    def save_counterexample(
        self, dataset: Dataset, description: Dict[str, Any], directory: Union[str, Path], name: str
    ) -> Dict[str, str]:
        """
        Сохраняет контрпример: данные в LIBSVM и конфигурацию в JSON рядом

        Returns:
            Пути {"data": ..., "config": ...}
        """
        directory = Path(directory)
        data_path = DatasetLoader().save(dataset, directory / f"{name}.libsvm")
        config = dict(description)
        config["data"] = data_path
        config["d"] = dataset.d
        config_path = self.save_report(config, directory / f"{name}.json")
        return {"data": data_path, "config": config_path}


