import sys
import time
from functools import wraps
from pathlib import Path

from loguru import logger

CONSOLE_FORMAT = (
    "<green>{time:HH:mm:ss.SSS}</green> | <level>{level: <8}</level> | "
    "<magenta>{extra[machine]}</magenta> | <cyan>{name}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
)
FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <8} | {extra[machine]} | {name}:{function}:{line} - {message}"


def setup_logging(log_level: str = "INFO", log_to_file: bool = False, log_dir: str = "logs") -> None:
    """
    Настраивает sinks loguru для запусков фреймворка

    Консоль пишет в stderr: stdout занят строками `ключ=значение`.
    Записи машин помечаются `machine=k` через `machine_logger`, остальные `coord`.

    Args:
        log_level: Уровень для консоли (TRACE показывает каждый локальный шаг)
        log_to_file: Дополнительно писать `<log_dir>/cocoa.log` с уровнем DEBUG
        log_dir: Папка для файла логов
    """
    logger.remove()
    logger.configure(extra={"machine": "coord"})
    logger.add(sys.stderr, format=CONSOLE_FORMAT, level=log_level.upper(), colorize=True)

    if not log_to_file:
        return

    log_file = Path(log_dir) / "cocoa.log"
    try:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        logger.add(
            log_file,
            format=FILE_FORMAT,
            level="DEBUG",
            rotation="10 MB",
            retention="30 days",
            compression="zip",
            encoding="utf-8",
            enqueue=True,
        )
    except OSError as e:
        logger.warning(f"Файл логов {log_file} недоступен, пишем только в консоль: {e}")
        return
    logger.debug(f"Лог раундов дублируется в {log_file}")


def machine_logger(machine: int):
    """Логгер с меткой машины k"""
    return logger.bind(machine=f"machine={machine}")


def log_performance(stage: str):
    """Декоратор: пишет длительность этапа (запуск, набор проверок) в DEBUG"""

    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            started = time.perf_counter()
            try:
                result = func(*args, **kwargs)
            except Exception as e:
                logger.debug(f"{stage}: прервано через {time.perf_counter() - started:.3f} с ({type(e).__name__})")
                raise
            logger.debug(f"{stage}: {time.perf_counter() - started:.3f} с")
            return result

        return wrapper

    return decorator
