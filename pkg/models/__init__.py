from .dataset import Dataset, Partition
from .errors import (
    CocoaError,
    ConfigurationError,
    DivergenceError,
    DomainError,
    InvalidArgumentError,
    LibsvmParseError,
    ProtocolError,
    TransportError,
)
from .metrics import RoundMetrics, RunResult, SweepEntry
from .problem import DualState, ProblemSpec, TheoryParams
from .run_config import RunConfig, SolverConfig

__all__ = [
    "Dataset",
    "Partition",
    "DualState",
    "ProblemSpec",
    "TheoryParams",
    "RunConfig",
    "SolverConfig",
    "RoundMetrics",
    "RunResult",
    "SweepEntry",
    "CocoaError",
    "ConfigurationError",
    "DivergenceError",
    "DomainError",
    "InvalidArgumentError",
    "LibsvmParseError",
    "ProtocolError",
    "TransportError",
]
