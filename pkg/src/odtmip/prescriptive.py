"""Prescriptive trees: treatment-assignment policies learned from observational data.

Counterfactual scores ``v[i, k]`` (the estimated outcome of sample i under
treatment k) come from inverse propensity weighting (IPW), the direct method
(DM) or their doubly robust combination (DR). The tree is then fit on the
flow model with treatments in place of labels, maximizing the total score of
the assigned treatments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dataset import BinarizedDataset, DataError, validate
from .flow_oct import FitResult, build_flow_core, greedy_plan, plan_assignment, \
    solve_and_extract, with_step
from .mip import SolverConfig
from .tree import TreePlan

METHODS = ("IPW", "DM", "DR")


class PropensityError(ZeroDivisionError):
    """A propensity would be zero: unsmoothed estimate over an empty cell."""


@dataclass
class ObservationalData:
    X: np.ndarray
    t: np.ndarray
    y: np.ndarray
    n_treatments: Optional[int] = None

    def __post_init__(self):
        self.X = np.asarray(self.X)
        self.t = np.asarray(self.t, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.ndim != 2 or self.t.shape != (self.X.shape[0],) or self.y.shape != self.t.shape:
            raise ValueError("X must be n x F with one treatment and one outcome per row")
        if self.n_treatments is None:
            self.n_treatments = int(self.t.max()) + 1 if len(self.t) else 0
        problems = []
        if not np.all(np.isfinite(self.y)):
            problems.append("outcomes must be finite")
        if np.any(self.t < 0) or np.any(self.t >= self.n_treatments):
            problems.append("treatment codes outside 0..K-1")
        elif len(np.unique(self.t)) != self.n_treatments:
            missing = sorted(set(range(self.n_treatments)) - set(self.t.tolist()))
            problems.append(f"treatment arms {missing} have no samples")
        if problems:
            raise DataError("; ".join(problems))

    @classmethod
    def from_dataset(cls, dataset: BinarizedDataset) -> "ObservationalData":
        diags = validate(dataset, "policy")
        if diags:
            raise DataError("invalid dataset: " + "; ".join(diags))
        return cls(dataset.X, dataset.t, dataset.y, dataset.n_treatments)

    @property
    def n(self) -> int:
        return self.X.shape[0]


@dataclass
class NuisanceEstimates:
    """Per-sample propensities and outcome means, looked up by exact feature vector."""

    propensity: np.ndarray      # n x K: e[k | stratum of i]
    outcome: np.ndarray         # n x K: mu[k | stratum of i]
    alpha: float
    strata: np.ndarray          # stratum index per sample


@dataclass
class ScoreMatrix:
    values: np.ndarray
    method: str = "given"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("scores must be an n x K matrix")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("scores must be finite")

    @property
    def n_treatments(self) -> int:
        return self.values.shape[1]


def estimate_nuisances(data: ObservationalData, alpha: float = 1.0) -> NuisanceEstimates:
    """Laplace-smoothed stratum propensities and stratum cell means.

    A cell mean falls back to the arm mean when the cell is empty, then to
    the global mean.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    K = data.n_treatments
    _, strata = np.unique(data.X, axis=0, return_inverse=True)
    strata = strata.reshape(-1)
    S = int(strata.max()) + 1
    counts = np.zeros((S, K))
    sums = np.zeros((S, K))
    np.add.at(counts, (strata, data.t), 1.0)
    np.add.at(sums, (strata, data.t), data.y)
    if alpha == 0 and np.any(counts == 0):
        s, k = np.argwhere(counts == 0)[0]
        raise PropensityError(f"treatment {k} never observed in stratum {s}; use alpha > 0")
    prop = (counts + alpha) / (counts.sum(axis=1, keepdims=True) + alpha * K)

    arm_counts = np.bincount(data.t, minlength=K).astype(float)
    arm_sums = np.bincount(data.t, weights=data.y, minlength=K)
    global_mean = float(data.y.mean())
    arm_mean = np.where(arm_counts > 0, arm_sums / np.maximum(arm_counts, 1.0), global_mean)
    with np.errstate(invalid="ignore", divide="ignore"):
        cell = np.where(counts > 0, sums / counts, arm_mean[None, :])
    return NuisanceEstimates(prop[strata], cell[strata], float(alpha), strata)


def compute_scores(data: ObservationalData, nuisances: NuisanceEstimates,
                   method: str = "DR") -> ScoreMatrix:
    """Counterfactual score matrix by ``method`` in {IPW, DM, DR}."""
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    n, K = data.n, data.n_treatments
    treated = np.zeros((n, K))
    treated[np.arange(n), data.t] = 1.0
    e, mu = nuisances.propensity, nuisances.outcome
    y = data.y[:, None]
    if method == "IPW":
        v = treated * y / e
    elif method == "DM":
        v = mu.copy()
    else:
        v = mu + treated * (y - mu) / e
    return ScoreMatrix(v, method)


@dataclass(frozen=True)
class PolicyConfig:
    depth: int = 2
    lam: float = 0.0
    budgets: Optional[tuple[Optional[int], ...]] = None   # None entries are unlimited
    solver: SolverConfig = field(default_factory=SolverConfig)
    warm_start: bool = True

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if not 0.0 <= self.lam < 1.0:
            raise ValueError("lambda must lie in [0, 1)")
        if self.budgets is not None:
            object.__setattr__(self, "budgets", tuple(self.budgets))
            for c in self.budgets:
                if c is not None and (c < 0 or int(c) != c):
                    raise ValueError("budgets must be nonnegative integers or None")


def assignment_counts(plan: TreePlan, X, n_treatments: int) -> np.ndarray:
    return np.bincount(plan.predict(X), minlength=n_treatments)


def within_budgets(plan: TreePlan, X, budgets: Optional[Sequence[Optional[int]]]) -> bool:
    if budgets is None:
        return True
    counts = assignment_counts(plan, X, len(budgets))
    return all(c is None or counts[k] <= c for k, c in enumerate(budgets))


def policy_value(plan: TreePlan, X, scores) -> float:
    """Total score of the treatments ``plan`` assigns to the rows of ``X``."""
    v = scores.values if isinstance(scores, ScoreMatrix) else np.asarray(scores, dtype=float)
    plan.check()
    assigned = plan.predict(X)
    return float(v[np.arange(v.shape[0]), assigned].sum())


def policy_objective(plan: TreePlan, X, scores, lam: float) -> float:
    return (1.0 - lam) * policy_value(plan, X, scores) - lam * plan.branch_count


def fit_policy(X, scores: ScoreMatrix, config: PolicyConfig) -> FitResult:
    """Optimal treatment-assignment tree for the given scores and budgets."""
    X = np.asarray(X)
    v = scores.values
    n, K = v.shape
    if X.shape[0] != n:
        raise DataError(f"scores have {n} rows but X has {X.shape[0]}")
    if not np.all((X == 0) | (X == 1)):
        raise DataError("X must be binary")
    if config.budgets is not None and len(config.budgets) != K:
        raise ValueError(f"expected {K} budgets, got {len(config.budgets)}")

    model, h = build_flow_core(X, K, config.depth, name="policy_tree")
    lam = config.lam
    terms = [(h.zs[i, node, k], (1.0 - lam) * v[i, k])
             for i in range(n) for node in h.topology.nodes for k in range(K) if v[i, k] != 0]
    terms += [(vid, -lam) for vid in h.b.values()] if lam > 0 else []
    model.set_objective(terms)
    for k, cap in enumerate(config.budgets or ()):
        if cap is not None:
            model.add_constraint([(h.zs[i, node, k], 1.0) for i in range(n)
                                  for node in h.topology.nodes], "<=", float(cap),
                                 f"budget_k{k}")

    solver = with_step(config.solver, [(1.0 - lam) * c for c in v.ravel()] + [lam])
    warm = None
    if config.warm_start:
        plan = greedy_plan(X, v, config.depth, lam)
        if within_budgets(plan, X, config.budgets):
            warm = plan_assignment(model, h, plan, X)
    return solve_and_extract(model, h, solver, warm)
