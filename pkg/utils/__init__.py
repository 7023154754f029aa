from .libsvm_loader import DatasetLoader, parse_libsvm
from .file_manager import FileManager, MetricsWriter, read_metrics
from .logger_config import log_performance, machine_logger, setup_logging

__all__ = [
    "DatasetLoader",
    "parse_libsvm",
    "FileManager",
    "MetricsWriter",
    "read_metrics",
    "setup_logging",
    "log_performance",
    "machine_logger",
]
