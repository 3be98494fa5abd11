"""Fit/predict wrappers over the four tree pipelines.

Each estimator takes binary feature matrices directly, keeps the last
``FitResult`` on ``result_`` and exposes the learned plan as ``plan_``.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .dataset import BinarizedDataset
from .fair_oct import FairnessSpec, fit_fair
from .flow_oct import FitResult, OCTConfig, fit_classifier
from .mip import SolverConfig
from .prescriptive import ObservationalData, PolicyConfig, ScoreMatrix, compute_scores, \
    estimate_nuisances, fit_policy
from .robust_oct import RobustSpec, fit_robust
from .tree import TreePlan, to_dot


def _names(X) -> list[str]:
    return [f"x{j}" for j in range(np.asarray(X).shape[1])]


class _TreeEstimator:
    result_: Optional[FitResult] = None

    @property
    def plan_(self) -> TreePlan:
        if self.result_ is None or self.result_.plan is None:
            raise ValueError("estimator has no fitted tree")
        return self.result_.plan

    def predict(self, X) -> np.ndarray:
        return self.plan_.predict(X)

    def to_dot(self, feature_names: Optional[Sequence[str]] = None) -> str:
        return to_dot(self.plan_, feature_names)


class FlowOCT(_TreeEstimator):
    def __init__(self, depth: int = 2, lam: float = 0.0, objective: str = "accuracy",
                 solver: Optional[SolverConfig] = None):
        self.config = OCTConfig(depth, lam, objective, solver or SolverConfig())

    def fit(self, X, y, sample_weight=None) -> "FlowOCT":
        ds = BinarizedDataset(X, _names(X), y=np.asarray(y, dtype=np.int64),
                              weights=sample_weight)
        self.result_ = fit_classifier(ds, self.config)
        return self


class FairOCT(_TreeEstimator):
    def __init__(self, depth: int = 2, lam: float = 0.0, fairness_type: str = "SP",
                 fairness_bound: float = 1.0, positive_class: int = 1,
                 solver: Optional[SolverConfig] = None):
        self.config = OCTConfig(depth, lam, "accuracy", solver or SolverConfig())
        self.spec = FairnessSpec(fairness_type, fairness_bound, positive_class)

    def fit(self, X, y, protect_feat, legit_factor=None) -> "FairOCT":
        ds = BinarizedDataset(X, _names(X), y=np.asarray(y, dtype=np.int64),
                              protected=np.asarray(protect_feat, dtype=np.int64),
                              legitimate=None if legit_factor is None
                              else np.asarray(legit_factor, dtype=np.int64))
        self.result_ = fit_fair(ds, self.config, self.spec)
        return self


class RobustOCT(_TreeEstimator):
    def __init__(self, depth: int = 2, lam: float = 0.0, solver: Optional[SolverConfig] = None):
        self.config = OCTConfig(depth, lam, "accuracy", solver or SolverConfig())

    def fit(self, X, y, costs, epsilon: float) -> "RobustOCT":
        ds = BinarizedDataset(X, _names(X), y=np.asarray(y, dtype=np.int64))
        self.result_ = fit_robust(ds, self.config, RobustSpec(costs, epsilon))
        return self


class PrescriptiveTree(_TreeEstimator):
    def __init__(self, depth: int = 2, lam: float = 0.0, method: str = "DR",
                 budgets: Optional[Sequence[Optional[int]]] = None, alpha: float = 1.0,
                 solver: Optional[SolverConfig] = None):
        self.config = PolicyConfig(depth, lam, None if budgets is None else tuple(budgets),
                                   solver or SolverConfig())
        self.method = method
        self.alpha = alpha

    def fit(self, X, t, y, scores=None) -> "PrescriptiveTree":
        if scores is None:
            data = ObservationalData(X, t, y)
            scores = compute_scores(data, estimate_nuisances(data, self.alpha), self.method)
        elif not isinstance(scores, ScoreMatrix):
            scores = ScoreMatrix(scores)
        self.scores_ = scores
        self.result_ = fit_policy(X, scores, self.config)
        return self
