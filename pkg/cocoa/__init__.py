from .engine import CocoaEngine, aggregate, equivalence_check
from .losses import get_loss
from .solvers import create_solver, solve_local

__all__ = ["CocoaEngine", "aggregate", "equivalence_check", "get_loss", "create_solver", "solve_local"]
