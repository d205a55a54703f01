"""Sparsity-constrained nonsmooth regression by penalty alternating directions."""
from .core import ConstantRegistry, ProblemSpec, constants_for, eval_F, eval_G, eval_J, grad_G, grad_R
from .errors import (
    CapacityError,
    DimensionError,
    InfeasibleError,
    InternalError,
    NumericalError,
    PadmError,
    ParseError,
    UndecidedError,
)
from .padm import Constant, Halving, Harmonic, PenaltyConfig, SolveTrace, Sqrt, Strategy, solve
from .prox import Penalty, hard_threshold, project_l1_ball, prox

__all__ = [
    "CapacityError", "ConstantRegistry", "Constant", "DimensionError", "Halving", "Harmonic",
    "InfeasibleError", "InternalError", "NumericalError", "PadmError", "ParseError", "Penalty",
    "PenaltyConfig", "ProblemSpec", "SolveTrace", "Sqrt", "Strategy", "UndecidedError",
    "constants_for", "eval_F", "eval_G", "eval_J", "grad_G", "grad_R", "hard_threshold",
    "project_l1_ball", "prox", "solve",
]
__version__ = "0.1.0"
