"""Flow-based MIO for optimal classification trees.

Each sample sends one unit of flow from a source into the root. At a branch
node the flow may continue left only if the chosen feature is 0 for that
sample and right only if it is 1; at a prediction node it exits through a
per-label sink. Correct classification is flow captured by the sink of the
sample's own label.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import reduce
from typing import Optional, Sequence

import numpy as np

from .dataset import BinarizedDataset, DataError, validate
from .mip import Model, SolveResult, SolverConfig, Status, solve_mip
from .tree import PRUNED, Branch, Predict, Topology, TreePlan

OBJECTIVES = ("accuracy", "weighted", "worst_case")


class ExtractionError(ValueError):
    """The incumbent cannot be read as a tree plan."""


@dataclass(frozen=True)
class OCTConfig:
    depth: int = 2
    lam: float = 0.0
    objective: str = "accuracy"
    solver: SolverConfig = field(default_factory=SolverConfig)
    warm_start: bool = True

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if not 0.0 <= self.lam < 1.0:
            raise ValueError("lambda must lie in [0, 1)")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")


@dataclass
class ModelHandles:
    """Variable ids of the flow model, keyed by their index tuples."""

    topology: Topology
    n_samples: int
    n_features: int
    n_labels: int
    b: dict = field(default_factory=dict)    # (n, f) -> id, n in B
    p: dict = field(default_factory=dict)    # n -> id
    w: dict = field(default_factory=dict)    # (n, k) -> id
    z: dict = field(default_factory=dict)    # (i, parent, child) -> id; parent 0 is the source
    zs: dict = field(default_factory=dict)   # (i, n, k) -> id
    gamma: Optional[int] = None

    def sink_terms(self, i: int, k: int, coef: float = 1.0) -> list[tuple[int, float]]:
        """Terms summing the flow of sample ``i`` into label-``k`` sinks."""
        return [(self.zs[i, n, k], coef) for n in self.topology.nodes]


@dataclass
class FitResult:
    plan: Optional[TreePlan]
    solve: SolveResult
    model: Optional[Model] = None
    handles: Optional[object] = None
    time_limited: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def status(self) -> Status:
        return self.solve.status

    @property
    def objective(self) -> float:
        return self.solve.objective

    def predict(self, X) -> np.ndarray:
        if self.plan is None:
            raise ValueError(f"no tree available (status {self.status.value})")
        return self.plan.predict(X)


# -- model construction ---------------------------------------------------


def add_structure(model: Model, h: ModelHandles) -> None:
    """Tree variables b, p, w and the rows making every node branch, predict or be pruned."""
    topo, F, K = h.topology, h.n_features, h.n_labels
    for node in topo.branch_nodes:
        for f in range(F):
            h.b[node, f] = model.add_binary(f"b_n{node}_f{f}")
    for node in topo.nodes:
        h.p[node] = model.add_binary(f"p_n{node}")
    for node in topo.nodes:
        for k in range(K):
            h.w[node, k] = model.add_binary(f"w_n{node}_k{k}")

    # structure: branch, predict, or sit below a predictor
    for node in topo.branch_nodes:
        terms = [(h.b[node, f], 1.0) for f in range(F)] + [(h.p[node], 1.0)]
        terms += [(h.p[a], 1.0) for a in topo.ancestors(node)]
        model.add_constraint(terms, "=", 1.0, f"struct_branch_n{node}")
    for node in topo.leaf_nodes:
        terms = [(h.p[node], 1.0)] + [(h.p[a], 1.0) for a in topo.ancestors(node)]
        model.add_constraint(terms, "=", 1.0, f"struct_leaf_n{node}")
    for node in topo.nodes:
        terms = [(h.w[node, k], 1.0) for k in range(K)] + [(h.p[node], -1.0)]
        model.add_constraint(terms, "=", 0.0, f"assign_n{node}")


def build_flow_core(X: np.ndarray, n_labels: int, depth: int, name: str = "flow_oct"):
    """Variables and rows shared by every flow pipeline: structure, flow, capacity, source."""
    X = np.asarray(X)
    n, F = X.shape
    topo = Topology(depth)
    K = n_labels
    model = Model("maximize", name)
    h = ModelHandles(topo, n, F, K)
    add_structure(model, h)
    for i in range(n):
        h.z[i, 0, 1] = model.add_var(0.0, 1.0, name=f"z_i{i}_s_1")
        for node in topo.branch_nodes:
            for child in (2 * node, 2 * node + 1):
                h.z[i, node, child] = model.add_var(0.0, 1.0, name=f"z_i{i}_{node}_{child}")
        for node in topo.nodes:
            for k in range(K):
                h.zs[i, node, k] = model.add_var(0.0, 1.0, name=f"zs_i{i}_n{node}_k{k}")

    # flow conservation
    for i in range(n):
        for node in topo.nodes:
            inflow = h.z[i, 0, 1] if node == 1 else h.z[i, node // 2, node]
            terms = [(inflow, 1.0)]
            if not topo.is_leaf(node):
                terms += [(h.z[i, node, 2 * node], -1.0), (h.z[i, node, 2 * node + 1], -1.0)]
            terms += [(h.zs[i, node, k], -1.0) for k in range(K)]
            tag = f"flow_root_i{i}" if node == 1 else f"flow_n{node}_i{i}"
            model.add_constraint(terms, "=", 0.0, tag)

    # capacities
    for i in range(n):
        zeros = [f for f in range(F) if X[i, f] == 0]
        ones = [f for f in range(F) if X[i, f] == 1]
        for node in topo.branch_nodes:
            model.add_constraint(
                [(h.z[i, node, 2 * node], 1.0)] + [(h.b[node, f], -1.0) for f in zeros],
                "<=", 0.0, f"cap_left_n{node}_i{i}",
            )
            model.add_constraint(
                [(h.z[i, node, 2 * node + 1], 1.0)] + [(h.b[node, f], -1.0) for f in ones],
                "<=", 0.0, f"cap_right_n{node}_i{i}",
            )
        for node in topo.nodes:
            for k in range(K):
                model.add_constraint(
                    [(h.zs[i, node, k], 1.0), (h.w[node, k], -1.0)],
                    "<=", 0.0, f"cap_sink_n{node}_k{k}_i{i}",
                )

    # every sample is routed to exactly one sink
    for i in range(n):
        model.add_constraint([(h.z[i, 0, 1], 1.0)], "=", 1.0, f"source_i{i}")
    return model, h


def sample_weights(dataset: BinarizedDataset, mode: str) -> np.ndarray:
    if mode == "weighted":
        return np.asarray(dataset.weights, dtype=float)
    return np.ones(dataset.n)


def build_flow_model(dataset: BinarizedDataset, config: OCTConfig) -> tuple[Model, ModelHandles]:
    """Flow MIO for classification with the configured objective mode."""
    diags = validate(dataset, "classification")
    if diags:
        raise DataError("invalid dataset: " + "; ".join(diags))
    K = dataset.n_classes
    model, h = build_flow_core(dataset.X, K, config.depth)
    y = dataset.y
    lam = config.lam
    penalty = [(vid, -lam) for vid in h.b.values()] if lam > 0 else []
    if config.objective == "worst_case":
        h.gamma = model.add_var(0.0, 1.0, name="gamma")
        for k in range(K):
            members = np.flatnonzero(y == k)
            if not len(members):
                continue
            terms = [(h.gamma, 1.0)]
            for i in members:
                terms += h.sink_terms(int(i), k, -1.0 / len(members))
            model.add_constraint(terms, "<=", 0.0, f"worst_k{k}")
        model.set_objective([(h.gamma, 1.0 - lam)] + penalty)
    else:
        u = sample_weights(dataset, config.objective)
        terms = []
        for i in range(dataset.n):
            if u[i] != 0:
                terms += h.sink_terms(i, int(y[i]), (1.0 - lam) * u[i])
        model.set_objective(terms + penalty)
    return model, h


# -- plans <-> variable assignments ---------------------------------------


def extract_plan(handles: ModelHandles, solve: SolveResult, topology: Optional[Topology] = None,
                 int_tol: float = 1e-6) -> TreePlan:
    """Read the branch/predict/pruned role of every node from an integral incumbent."""
    topo = topology or handles.topology
    if solve.values is None:
        raise ExtractionError(f"no incumbent to extract (status {solve.status.value})")
    x = solve.values
    for key, vid in list(handles.b.items()) + list(handles.w.items()) + list(handles.p.items()):
        if abs(x[vid] - round(x[vid])) > int_tol:
            raise ExtractionError(f"variable {key} is fractional ({x[vid]:.6g})")
    roles = {}
    for node in topo.nodes:
        feats = [f for f in range(handles.n_features)
                 if (node, f) in handles.b and x[handles.b[node, f]] > 0.5]
        labels = [k for k in range(handles.n_labels) if x[handles.w[node, k]] > 0.5]
        if len(feats) > 1 or len(labels) > 1 or (feats and labels):
            raise ExtractionError(
                f"node {node}: inconsistent incumbent (features {feats}, labels {labels})"
            )
        if feats:
            roles[node] = Branch(feats[0])
        elif labels:
            roles[node] = Predict(labels[0])
        else:
            roles[node] = PRUNED
    plan = TreePlan.from_roles(topo.depth, roles)
    probs = plan.problems()
    if probs:
        raise ExtractionError("extracted plan is malformed: " + "; ".join(probs))
    return plan


def plan_assignment(model: Model, h: ModelHandles, plan: TreePlan, X) -> np.ndarray:
    """Full variable vector encoding ``plan`` in a flow model (gamma left at 0)."""
    X = np.asarray(X)
    x = np.zeros(model.n_vars)
    for node, role in plan.items():
        if isinstance(role, Branch):
            x[h.b[node, role.feature]] = 1.0
        elif isinstance(role, Predict):
            x[h.p[node]] = 1.0
            x[h.w[node, role.label]] = 1.0
    for i in range(X.shape[0]):
        path = plan.route(X[i])
        x[h.z[i, 0, 1]] = 1.0
        for a, c in zip(path, path[1:]):
            x[h.z[i, a, c]] = 1.0
        last = path[-1]
        x[h.zs[i, last, plan.role(last).label]] = 1.0
    return x


# -- independent evaluation -----------------------------------------------


def evaluate_objective(plan: TreePlan, dataset: BinarizedDataset, config: OCTConfig) -> float:
    """Penalized objective of ``plan`` by traversal, never through the MIO."""
    plan.check()
    pred = plan.predict(dataset.X)
    correct = (pred == dataset.y).astype(float)
    lam = config.lam
    if config.objective == "worst_case":
        recalls = [correct[dataset.y == k].mean() for k in range(dataset.n_classes)
                   if np.any(dataset.y == k)]
        return float((1.0 - lam) * min(recalls) - lam * plan.branch_count)
    u = sample_weights(dataset, config.objective)
    return (1.0 - lam) * float(u @ correct) - lam * plan.branch_count


# -- greedy warm start ----------------------------------------------------


def greedy_plan(X, gains: np.ndarray, depth: int, lam: float = 0.0) -> TreePlan:
    """One-pass top-down tree: ``gains[i, k]`` is the value of giving sample i label k.

    A node splits on the feature whose two majority children gain the most,
    provided that beats predicting at the node after the sparsity penalty.
    """
    X = np.asarray(X)
    roles: dict = {}
    F = X.shape[1]

    def side(idx: np.ndarray) -> float:
        return float(gains[idx].sum(axis=0).max()) if len(idx) else 0.0

    def grow(node: int, idx: np.ndarray, level: int):
        totals = gains[idx].sum(axis=0)
        best_label = int(np.argmax(totals))
        leaf_value = (1.0 - lam) * totals[best_label]
        if level < depth and len(idx):
            best = None
            for f in range(F):
                left, right = idx[X[idx, f] == 0], idx[X[idx, f] == 1]
                val = side(left) + side(right)
                if best is None or val > best[0] + 1e-12:
                    best = (val, f, left, right)
            if best is not None and (1.0 - lam) * best[0] - lam > leaf_value + 1e-12:
                _, f, left, right = best
                roles[node] = Branch(f)
                grow(2 * node, left, level + 1)
                grow(2 * node + 1, right, level + 1)
                return
        roles[node] = Predict(best_label)

    grow(1, np.arange(X.shape[0]), 0)
    return TreePlan.from_roles(depth, roles)


def classification_gains(dataset: BinarizedDataset, mode: str) -> np.ndarray:
    K = dataset.n_classes
    u = sample_weights(dataset, mode)
    if mode == "worst_case":
        counts = np.bincount(dataset.y, minlength=K).astype(float)
        u = 1.0 / counts[dataset.y]
    g = np.zeros((dataset.n, K))
    g[np.arange(dataset.n), dataset.y] = u
    return g


# -- objective lattice ----------------------------------------------------


def objective_step(coefs: Sequence[float], max_den: int = 10_000) -> Optional[float]:
    """Largest g such that every coefficient is an integer multiple of g, if small rationals."""
    fracs = []
    for c in coefs:
        c = abs(float(c))
        if c == 0.0:
            continue
        fr = Fraction(c).limit_denominator(max_den)
        if abs(float(fr) - c) > 1e-12 * max(1.0, c):
            return None
        fracs.append(fr)
    if not fracs:
        return None
    num = reduce(math.gcd, (f.numerator for f in fracs))
    den = reduce(lambda a, b: a * b // math.gcd(a, b), (f.denominator for f in fracs))
    step = num / den
    return step if step >= 1e-6 else None


def with_step(solver: SolverConfig, coefs: Sequence[float]) -> SolverConfig:
    if solver.objective_step is not None:
        return solver
    step = objective_step(coefs)
    return replace(solver, objective_step=step) if step is not None else solver


# -- fitting --------------------------------------------------------------


def solve_and_extract(model: Model, h: ModelHandles, solver: SolverConfig,
                      warm: Optional[np.ndarray]) -> FitResult:
    res = solve_mip(model, solver, warm_start=warm)
    plan = None
    if res.values is not None:
        plan = extract_plan(h, res, int_tol=solver.int_tol)
    limited = res.status in (Status.TIME_LIMIT, Status.GAP_LIMIT)
    if limited:
        warnings.warn(f"solver stopped with status {res.status.value}; returning best incumbent",
                      RuntimeWarning, stacklevel=3)
    return FitResult(plan, res, model, h, time_limited=limited)


def fit_classifier(dataset: BinarizedDataset, config: OCTConfig) -> FitResult:
    """Fit an optimal classification tree and return the plan with the solve record."""
    model, h = build_flow_model(dataset, config)
    solver = classifier_step(config.solver, dataset, config)
    warm = None
    if config.warm_start:
        plan = greedy_plan(dataset.X, classification_gains(dataset, config.objective),
                           config.depth, config.lam)
        warm = classifier_warm_start(model, h, plan, dataset)
    return solve_and_extract(model, h, solver, warm)


def classifier_warm_start(model: Model, h: ModelHandles, plan: TreePlan,
                          dataset: BinarizedDataset) -> np.ndarray:
    """Encode ``plan`` as a start vector, filling gamma in worst-case mode."""
    warm = plan_assignment(model, h, plan, dataset.X)
    if h.gamma is not None:
        correct = plan.predict(dataset.X) == dataset.y
        warm[h.gamma] = min(correct[dataset.y == k].mean()
                            for k in range(dataset.n_classes) if np.any(dataset.y == k))
    return warm


def classifier_step(solver: SolverConfig, dataset: BinarizedDataset,
                    config: OCTConfig) -> SolverConfig:
    """Attach the objective lattice step unless the mode is worst-case."""
    if config.objective == "worst_case":
        return solver
    u = sample_weights(dataset, config.objective)
    return with_step(solver, [(1.0 - config.lam) * ui for ui in u] + [config.lam])
