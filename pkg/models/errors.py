from typing import List, Optional, Any


class CocoaError(Exception):
    """Базовое исключение фреймворка"""


class InvalidArgumentError(CocoaError, ValueError):
    """Недопустимое значение аргумента (K, ν, ε, H, пустое окно и т.п.)"""


class LibsvmParseError(CocoaError, ValueError):
    """Ошибка разбора файла в формате LIBSVM"""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"строка {line_number}: {message}"
        super().__init__(message)


class DomainError(CocoaError, ValueError):
    """Двойственная переменная вне области определения сопряженной функции"""


class ConfigurationError(CocoaError):
    """Несовместимая конфигурация (решатель/функция потерь, метки/функция потерь)"""


class ProtocolError(CocoaError):
    """Нарушение протокола обмена между координатором и воркерами"""


class TransportError(CocoaError):
    """Потеря соединения или сбой транспорта во время раунда"""

    def __init__(self, message: str, round_index: Optional[int] = None):
        self.round_index = round_index
        if round_index is not None:
            message = f"раунд {round_index}: {message}"
        super().__init__(message)


class DivergenceError(CocoaError):
    """Сработала защита от расходимости (небезопасное значение σ′)"""

    def __init__(self, message: str, round_index: int, metrics: Optional[List[Any]] = None):
        self.round_index = round_index
        self.metrics = metrics or []
        super().__init__(f"раунд {round_index}: {message}")
