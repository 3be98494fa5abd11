"""Linear mixed-integer model container and solver result types."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

import numpy as np


class VarKind(str, Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


class Sense(str, Enum):
    LE = "<="
    EQ = "="
    GE = ">="


class ObjSense(str, Enum):
    MAXIMIZE = "maximize"
    MINIMIZE = "minimize"


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    GAP_LIMIT = "gap_limit"
    TIME_LIMIT = "time_limit"


@dataclass(frozen=True)
class Variable:
    id: int
    lower: float = 0.0
    upper: float = 1.0
    kind: VarKind = VarKind.CONTINUOUS
    name: str = ""


@dataclass(frozen=True)
class LinearConstraint:
    terms: tuple[tuple[int, float], ...]
    sense: Sense
    rhs: float
    tag: str = ""


class FrozenModelError(RuntimeError):
    """Raised when a model is modified after being handed to a solver."""


class Model:
    """A linear MIO instance built incrementally, then frozen for solving.

    Variables are addressed by dense integer ids in creation order.
    """

    def __init__(self, sense: ObjSense | str = ObjSense.MAXIMIZE, name: str = "model"):
        self.name = name
        self.sense = ObjSense(sense)
        self.variables: list[Variable] = []
        self.constraints: list[LinearConstraint] = []
        self.objective: list[tuple[int, float]] = []
        self._frozen = False

    # -- construction -------------------------------------------------

    def _check_mutable(self) -> None:
        if self._frozen:
            raise FrozenModelError(f"model {self.name!r} is frozen; use copy() to modify")

    def add_var(
        self,
        lower: float = 0.0,
        upper: float = 1.0,
        kind: VarKind | str = VarKind.CONTINUOUS,
        name: str = "",
    ) -> int:
        self._check_mutable()
        vid = len(self.variables)
        self.variables.append(Variable(vid, float(lower), float(upper), VarKind(kind), name))
        return vid

    def add_binary(self, name: str = "") -> int:
        return self.add_var(0.0, 1.0, VarKind.BINARY, name)

    def add_constraint(
        self,
        terms: Iterable[tuple[int, float]],
        sense: Sense | str,
        rhs: float,
        tag: str = "",
    ) -> int:
        """Append a row; repeated variable ids in ``terms`` are merged."""
        self._check_mutable()
        merged: dict[int, float] = {}
        for vid, coef in terms:
            merged[vid] = merged.get(vid, 0.0) + float(coef)
        row = LinearConstraint(
            tuple((v, c) for v, c in merged.items() if c != 0.0), Sense(sense), float(rhs), tag
        )
        self.constraints.append(row)
        return len(self.constraints) - 1

    def set_objective(
        self, terms: Iterable[tuple[int, float]], sense: ObjSense | str | None = None
    ) -> None:
        self._check_mutable()
        merged: dict[int, float] = {}
        for vid, coef in terms:
            merged[vid] = merged.get(vid, 0.0) + float(coef)
        self.objective = [(v, c) for v, c in merged.items() if c != 0.0]
        if sense is not None:
            self.sense = ObjSense(sense)

    def freeze(self) -> "Model":
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    def copy(self) -> "Model":
        other = Model(self.sense, self.name)
        other.variables = list(self.variables)
        other.constraints = list(self.constraints)
        other.objective = list(self.objective)
        return other

    # -- queries ------------------------------------------------------

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_rows(self) -> int:
        return len(self.constraints)

    def binary_ids(self) -> list[int]:
        return [v.id for v in self.variables if v.kind is VarKind.BINARY]

    def var_name(self, vid: int) -> str:
        return self.variables[vid].name or f"x{vid}"

    def objective_value(self, values) -> float:
        return float(sum(c * values[v] for v, c in self.objective))

    def row_activity(self, row: LinearConstraint, values) -> float:
        return float(sum(c * values[v] for v, c in row.terms))

    def is_feasible(self, values, feas_tol: float = 1e-7, int_tol: Optional[float] = None) -> bool:
        """Check bounds, rows and (if ``int_tol`` is given) binary integrality."""
        for var in self.variables:
            x = values[var.id]
            if x < var.lower - feas_tol or x > var.upper + feas_tol:
                return False
            if int_tol is not None and var.kind is VarKind.BINARY and abs(x - round(x)) > int_tol:
                return False
        for row in self.constraints:
            act = self.row_activity(row, values)
            scale = feas_tol * max(1.0, abs(row.rhs))
            if row.sense is Sense.LE and act > row.rhs + scale:
                return False
            if row.sense is Sense.GE and act < row.rhs - scale:
                return False
            if row.sense is Sense.EQ and abs(act - row.rhs) > scale:
                return False
        return True

    def __repr__(self) -> str:
        return (
            f"Model({self.name!r}, {self.sense.value}, vars={self.n_vars}, "
            f"rows={self.n_rows}, binaries={len(self.binary_ids())})"
        )


def validate_model(model: Model) -> list[str]:
    """Return a list of human-readable problems; empty means well formed."""
    diags: list[str] = []
    n = model.n_vars
    for pos, var in enumerate(model.variables):
        label = model.var_name(var.id)
        if var.id != pos:
            diags.append(f"variable {label}: id {var.id} does not match position {pos}")
        if math.isnan(var.lower) or math.isnan(var.upper):
            diags.append(f"variable {label}: NaN bound")
        elif var.lower > var.upper:
            diags.append(f"variable {label}: empty bound interval [{var.lower}, {var.upper}]")
        if var.kind is VarKind.BINARY and (var.lower < 0.0 or var.upper > 1.0):
            diags.append(f"variable {label}: binary bounds outside [0, 1]")
    for idx, row in enumerate(model.constraints):
        label = row.tag or f"row {idx}"
        seen: set[int] = set()
        for vid, coef in row.terms:
            if not 0 <= vid < n:
                diags.append(f"constraint {label}: unknown variable id {vid}")
            if vid in seen:
                diags.append(f"constraint {label}: duplicate variable id {vid}")
            seen.add(vid)
            if not math.isfinite(coef):
                diags.append(f"constraint {label}: non-finite coefficient on variable {vid}")
        if not math.isfinite(row.rhs):
            diags.append(f"constraint {label}: non-finite right-hand side")
    for vid, coef in model.objective:
        if not 0 <= vid < n:
            diags.append(f"objective: unknown variable id {vid}")
        if not math.isfinite(coef):
            diags.append(f"objective: non-finite coefficient on variable {vid}")
    return diags


class InvalidModelError(ValueError):
    def __init__(self, diagnostics: list[str]):
        self.diagnostics = diagnostics
        super().__init__("invalid model: " + "; ".join(diagnostics))


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and search rules for the embedded solver.

    ``objective_step`` is an optional granularity of the objective over
    integral solutions: when every integral objective value is a multiple of
    it, nodes whose bound cannot beat the incumbent by one step are pruned.
    """

    gap_tol: float = 1e-6
    int_tol: float = 1e-6
    feas_tol: float = 1e-7
    time_limit: Optional[float] = None
    node_selection: str = "best_bound"
    branch_rule: str = "most_fractional"
    objective_step: Optional[float] = None

    def __post_init__(self):
        for name in ("gap_tol", "int_tol", "feas_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        if self.node_selection not in ("best_bound", "depth_first"):
            raise ValueError(f"unknown node_selection {self.node_selection!r}")
        if self.branch_rule not in ("most_fractional", "lowest_index"):
            raise ValueError(f"unknown branch_rule {self.branch_rule!r}")
        if self.objective_step is not None and not self.objective_step > 0:
            raise ValueError("objective_step must be positive")


@dataclass
class SolveResult:
    status: Status
    objective: float = math.nan
    best_bound: float = math.nan
    values: Optional[np.ndarray] = None
    nodes_explored: int = 0
    wall_time: float = 0.0
    # LP-only certificates
    duals: Optional[np.ndarray] = None
    reduced_costs: Optional[np.ndarray] = None
    ray: Optional[np.ndarray] = None
    infeasible_row: Optional[str] = None
    iterations: int = 0
    bound_trace: list[float] = field(default_factory=list)

    @property
    def has_solution(self) -> bool:
        return self.values is not None

    @property
    def gap(self) -> float:
        if self.values is None or not math.isfinite(self.best_bound):
            return math.inf
        return abs(self.best_bound - self.objective) / max(1.0, abs(self.objective))

    def value(self, vid: int) -> float:
        if self.values is None:
            raise ValueError(f"no solution values (status {self.status.value})")
        return float(self.values[vid])
