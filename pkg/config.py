import os

from pydantic import BaseModel, Field


class SolverDefaults(BaseModel):
    """Значения по умолчанию для локальных решателей"""

    solver: str = "cd"
    local_iters: int = 100
    shrink: float = 0.5
    armijo: float = 1e-4


class EngineDefaults(BaseModel):
    """Внешний цикл и транспорт"""

    rounds: int = 100
    gap_tol: float = 1e-6
    gap_every: int = 1
    divergence_threshold: float = 1e6  # падение D, после которого запуск прерывается
    partition_strategy: str = "random"
    connect_timeout: float = 60.0
    accept_timeout: float = 300.0


class VerifyDefaults(BaseModel):
    """Проверки на малых экземплярах"""

    trials: int = 100
    pairs_per_trial: int = 10
    theta_tolerance: float = 0.02  # допуск Монте-Карло для оценок Θ
    counterexample_dir: str = "counterexamples"


class LoggingDefaults(BaseModel):
    log_level: str = Field(default_factory=lambda: os.environ.get("COCOA_LOG_LEVEL", "INFO"))
    log_to_file: bool = False
    log_dir: str = "logs"


class FrameworkConfig(BaseModel):
    """Конфигурация фреймворка"""

    solver: SolverDefaults = Field(default_factory=SolverDefaults)
    engine: EngineDefaults = Field(default_factory=EngineDefaults)
    verify: VerifyDefaults = Field(default_factory=VerifyDefaults)
    logging: LoggingDefaults = Field(default_factory=LoggingDefaults)


# Глобальная конфигурация
config = FrameworkConfig()
