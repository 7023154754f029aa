from typing import Any, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from models.problem import DualState

# Порядок столбцов CSV метрик
METRICS_COLUMNS = ("round", "elapsed_ms", "primal", "dual", "gap", "bytes_per_machine", "local_iters_total")

RunStatus = Literal["converged", "max_rounds", "diverged"]


class RoundMetrics(BaseModel):
    """Одна строка трассы: значения P, D и зазор после раунда t"""

    round: int = Field(description="Номер раунда t (0 для начального состояния)")
    elapsed_ms: float = Field(description="Время с начала запуска, мс (монотонные часы)")
    primal: float = Field(description="P(w(α^t))")
    dual: float = Field(description="D(α^t)")
    gap: float = Field(description="P − D")
    bytes_per_machine: int = Field(default=0, description="Накопленный трафик Δv на машину, байт")
    local_iters_total: int = Field(default=0, description="Накопленное число внутренних итераций всех машин")
    monitor_bytes_per_machine: int = Field(default=0, description="Трафик блоков α для проверок зазора")

    def csv_row(self) -> List[str]:
        return [
            str(self.round),
            f"{self.elapsed_ms:.3f}",
            repr(float(self.primal)),
            repr(float(self.dual)),
            repr(float(self.gap)),
            str(self.bytes_per_machine),
            str(self.local_iters_total),
        ]


class RunResult(BaseModel):
    """Итог запуска внешнего цикла"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    state: DualState
    metrics: List[RoundMetrics] = Field(default_factory=list)
    status: RunStatus = "max_rounds"
    rounds_run: int = 0
    nu: float = 1.0
    sigma_prime: float = 1.0
    history: Optional[List[Any]] = Field(None, description="α^t для t = 0…T при keep_history")

    @property
    def final(self) -> Optional[RoundMetrics]:
        return self.metrics[-1] if self.metrics else None

    @property
    def final_gap(self) -> float:
        return self.final.gap if self.final else float("nan")

    def rounds_to_gap(self, target: float) -> Optional[int]:
        """Первый измеренный раунд с зазором ≤ target"""
        for row in self.metrics:
            if row.gap <= target:
                return row.round
        return None

    def time_to_gap(self, target: float) -> Optional[float]:
        for row in self.metrics:
            if row.gap <= target:
                return row.elapsed_ms
        return None


class SweepEntry(BaseModel):
    """Строка сводки перебора H, σ′ или K"""

    parameter: str = Field(description="Имя перебираемого параметра")
    value: float
    status: RunStatus
    rounds_run: int
    final_gap: float
    rounds_to_target: Optional[int] = None
    ms_to_target: Optional[float] = None
    metrics_path: Optional[str] = None
