"""Fairness-constrained classification trees.

Positive-prediction rates are linear in the sink flows, so parity between two
protected groups is a pair of rows on the flow model. Statistical parity (SP)
compares groups over all samples, conditional statistical parity (CSP) within
each value of a legitimate factor, and equalized odds (EqOdds) within each
true label.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataset import BinarizedDataset, DataError, validate
from .flow_oct import (
    FitResult,
    ModelHandles,
    OCTConfig,
    build_flow_model,
    classification_gains,
    classifier_step,
    classifier_warm_start,
    evaluate_objective,
    greedy_plan,
    solve_and_extract,
)
from .mip import Model
from .tree import TreePlan

FAIRNESS_TYPES = ("SP", "CSP", "EqOdds")


@dataclass(frozen=True)
class FairnessSpec:
    """Parity requirement: at most ``bound`` between any two groups' positive rates.

    ``protected`` and ``legitimate`` name the source columns; the coded values
    themselves travel on the dataset.
    """

    fairness_type: str = "SP"
    bound: float = 1.0
    positive_class: int = 1
    protected: Optional[str] = None
    legitimate: Optional[str] = None

    def __post_init__(self):
        if self.fairness_type not in FAIRNESS_TYPES:
            raise ValueError(f"fairness_type must be one of {FAIRNESS_TYPES}")
        if not 0.0 <= self.bound <= 1.0:
            raise ValueError("fairness bound must lie in [0, 1]")
        if self.positive_class < 0:
            raise ValueError("positive_class must be a label index")


def _check(dataset: BinarizedDataset, spec: FairnessSpec) -> None:
    task = "fair_csp" if spec.fairness_type == "CSP" else "fair"
    diags = validate(dataset, task)
    if dataset.protected is not None and dataset.protected.size == 0:
        diags.append("protected attribute is empty")
    if diags:
        raise DataError("invalid dataset: " + "; ".join(diags))
    if spec.positive_class >= dataset.n_classes:
        raise ValueError(f"positive_class {spec.positive_class} outside the "
                         f"{dataset.n_classes} labels")


def strata(dataset: BinarizedDataset, spec: FairnessSpec) -> list[np.ndarray]:
    """Index sets over which group rates are compared."""
    n = dataset.n
    if spec.fairness_type == "SP":
        return [np.arange(n)]
    key = dataset.legitimate if spec.fairness_type == "CSP" else dataset.y
    return [np.flatnonzero(key == v) for v in np.unique(key)]


def group_pairs(dataset: BinarizedDataset, spec: FairnessSpec):
    """Yield ``(stratum, members_a, members_b)`` for every comparable group pair.

    A stratum missing a group contributes no pair for that group.
    """
    for s, idx in enumerate(strata(dataset, spec)):
        groups = {}
        for a in np.unique(dataset.protected[idx]):
            groups[int(a)] = idx[dataset.protected[idx] == a]
        for a, b in itertools.combinations(sorted(groups), 2):
            yield s, (a, groups[a]), (b, groups[b])


def add_fairness_constraints(model: Model, handles: ModelHandles, spec: FairnessSpec,
                             dataset: BinarizedDataset) -> int:
    """Add two parity rows per group pair and stratum; returns the number of rows."""
    if dataset.protected is None or dataset.protected.size == 0:
        raise DataError("protected attribute is missing or empty")
    if len(np.unique(dataset.protected)) < 2:
        warnings.warn("only one protected group present; no fairness rows added",
                      RuntimeWarning, stacklevel=2)
        return 0
    pos = spec.positive_class
    added = 0
    for s, (a, ia), (b, ib) in group_pairs(dataset, spec):
        terms = []
        for i in ia:
            terms += handles.sink_terms(int(i), pos, 1.0 / len(ia))
        for i in ib:
            terms += handles.sink_terms(int(i), pos, -1.0 / len(ib))
        neg = [(v, -c) for v, c in terms]
        model.add_constraint(terms, "<=", spec.bound, f"fair_s{s}_g{a}_g{b}_up")
        model.add_constraint(neg, "<=", spec.bound, f"fair_s{s}_g{a}_g{b}_dn")
        added += 2
    return added


def disparity(plan: TreePlan, dataset: BinarizedDataset, spec: FairnessSpec) -> float:
    """Largest absolute gap in positive-prediction rate over comparable group pairs."""
    plan.check()
    positive = (plan.predict(dataset.X) == spec.positive_class).astype(float)
    worst = 0.0
    for _, (_, ia), (_, ib) in group_pairs(dataset, spec):
        worst = max(worst, abs(positive[ia].mean() - positive[ib].mean()))
    return float(worst)


def _warm_plan(dataset: BinarizedDataset, config: OCTConfig, spec: FairnessSpec) -> TreePlan:
    """Best of the greedy tree and the constant trees among those meeting the bound.

    Constant trees have zero disparity, so a candidate always exists.
    """
    candidates = [greedy_plan(dataset.X, classification_gains(dataset, config.objective),
                              config.depth, config.lam)]
    candidates += [TreePlan.constant(config.depth, k) for k in range(dataset.n_classes)]
    ok = [p for p in candidates if disparity(p, dataset, spec) <= spec.bound]
    return max(ok, key=lambda p: evaluate_objective(p, dataset, config))


def fit_fair(dataset: BinarizedDataset, config: OCTConfig, spec: FairnessSpec) -> FitResult:
    """Fit a classification tree whose training predictions satisfy ``spec``."""
    _check(dataset, spec)
    model, h = build_flow_model(dataset, config)
    with warnings.catch_warnings():
        if len(np.unique(dataset.protected)) < 2:
            warnings.simplefilter("ignore", RuntimeWarning)
        rows = add_fairness_constraints(model, h, spec, dataset)
    solver = classifier_step(config.solver, dataset, config)
    warm = None
    if config.warm_start:
        warm = classifier_warm_start(model, h, _warm_plan(dataset, config, spec), dataset)
    result = solve_and_extract(model, h, solver, warm)
    result.extra["fairness_rows"] = rows
    if result.plan is not None:
        result.extra["disparity"] = disparity(result.plan, dataset, spec)
    return result
