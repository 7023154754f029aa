from typing import Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

SolverId = Literal["cd", "gd", "cg", "lbfgs", "bb", "fista"]
TransportId = Literal["inproc", "tcp"]


class SolverConfig(BaseModel):
    """Настройки локального решателя"""

    id: SolverId = Field(default="cd", description="Идентификатор решателя")
    local_iters: int = Field(default=100, description="Бюджет внутренних итераций H")
    memory: Optional[int] = Field(None, description="Память L-BFGS (по умолчанию m = H)")
    initial_step: float = Field(default=1.0, description="Начальный шаг GD в единицах 1/L_diag")
    shrink: float = Field(default=0.5, description="Коэффициент уменьшения шага при backtracking")
    armijo: float = Field(default=1e-4, description="Константа достаточного убывания")
    seed: int = Field(default=0, description="Зерно генератора CD")

    @field_validator("local_iters")
    @classmethod
    def _positive_budget(cls, value: int) -> int:
        if value < 1:
            raise ValueError(f"H={value}: бюджет итераций должен быть не меньше 1")
        return value

    @field_validator("memory")
    @classmethod
    def _positive_memory(cls, value: Optional[int]) -> Optional[int]:
        if value is not None and value < 1:
            raise ValueError(f"m={value}: память L-BFGS должна быть не меньше 1")
        return value

    @field_validator("shrink")
    @classmethod
    def _shrink_range(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError(f"shrink={value} должен лежать в (0, 1)")
        return value

    @property
    def lbfgs_memory(self) -> int:
        return self.memory if self.memory is not None else self.local_iters


class RunConfig(BaseModel):
    """Параметры внешнего цикла"""

    machines: int = Field(description="Число машин K")
    nu: float = Field(default=1.0, description="Параметр агрегации ν ∈ (0, 1]")
    sigma_prime: Optional[float] = Field(None, description="σ′; None означает безопасное νK")
    rounds: int = Field(default=100, description="Максимальное число раундов T")
    gap_tol: float = Field(default=0.0, description="Критерий остановки по зазору ε")
    gap_every: int = Field(default=1, description="Вычислять зазор каждые R раундов")
    solver: SolverConfig = Field(default_factory=SolverConfig)
    transport: TransportId = Field(default="inproc")
    seed: int = Field(default=0, description="Общее зерно запуска")
    divergence_threshold: float = Field(default=1e6, description="Порог падения D для защиты от расходимости")
    keep_history: bool = Field(default=False, description="Хранить α^t всех раундов")

    @field_validator("machines")
    @classmethod
    def _positive_machines(cls, value: int) -> int:
        if value < 1:
            raise ValueError(f"K={value} должно быть не меньше 1")
        return value

    @field_validator("nu")
    @classmethod
    def _nu_range(cls, value: float) -> float:
        if not 0.0 < value <= 1.0:
            raise ValueError(f"ν={value} должно лежать в (0, 1]")
        return value

    @field_validator("sigma_prime")
    @classmethod
    def _positive_sigma(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and not value > 0:
            raise ValueError(f"σ′={value} должно быть положительным")
        return value

    @field_validator("rounds")
    @classmethod
    def _non_negative_rounds(cls, value: int) -> int:
        if value < 0:
            raise ValueError(f"T={value} не может быть отрицательным")
        return value

    @field_validator("gap_tol")
    @classmethod
    def _non_negative_tol(cls, value: float) -> float:
        if value < 0:
            raise ValueError(f"ε={value} не может быть отрицательным")
        return value

    @field_validator("gap_every")
    @classmethod
    def _positive_gap_every(cls, value: int) -> int:
        if value < 1:
            raise ValueError(f"gap_every={value} должен быть не меньше 1")
        return value

    @model_validator(mode="after")
    def _seed_solver(self) -> "RunConfig":
        # Зерно CD наследуется от зерна запуска, если не задано явно
        if "seed" not in self.solver.model_fields_set:
            self.solver = self.solver.model_copy(update={"seed": self.seed})
        return self

    @property
    def effective_sigma_prime(self) -> float:
        """σ′: явное значение или безопасное νK"""
        return self.sigma_prime if self.sigma_prime is not None else self.nu * self.machines

    @property
    def is_safe(self) -> bool:
        return self.effective_sigma_prime >= self.nu * self.machines - 1e-12

    @classmethod
    def adding(cls, machines: int, **kwargs) -> "RunConfig":
        """ν = 1, σ′ = K"""
        return cls(machines=machines, nu=1.0, sigma_prime=float(machines), **kwargs)

    @classmethod
    def averaging(cls, machines: int, **kwargs) -> "RunConfig":
        """ν = 1/K, σ′ = 1"""
        return cls(machines=machines, nu=1.0 / machines, sigma_prime=1.0, **kwargs)
