"""Generic linear mixed-binary models and an embedded exact solver."""

from .lpfile import lp_text, write_lp_file
from .lpread import LPParseError, read_lp_file
from .model import (
    FrozenModelError,
    InvalidModelError,
    LinearConstraint,
    Model,
    ObjSense,
    Sense,
    SolveResult,
    SolverConfig,
    Status,
    Variable,
    VarKind,
    validate_model,
)
from .simplex import SimplexError
from .solver import solve_lp, solve_mip

__all__ = [
    "FrozenModelError",
    "InvalidModelError",
    "LPParseError",
    "LinearConstraint",
    "Model",
    "ObjSense",
    "Sense",
    "SimplexError",
    "SolveResult",
    "SolverConfig",
    "Status",
    "Variable",
    "VarKind",
    "lp_text",
    "read_lp_file",
    "solve_lp",
    "solve_mip",
    "validate_model",
    "write_lp_file",
]
