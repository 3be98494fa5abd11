"""Classification trees that stay correct under budgeted feature flips.

An adversary may flip binary features of a sample, paying ``costs[i, f]`` per
flipped feature, up to a budget ``epsilon``. A sample counts as correct only
if no affordable flip set routes it to a wrong label. The master problem
holds only the tree variables and one continuous ``t_i`` per sample; an exact
separation oracle adds cuts until the incumbent's ``t`` matches the true
robust correctness of its tree.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .dataset import BinarizedDataset, DataError, validate
from .flow_oct import (
    FitResult,
    ModelHandles,
    OCTConfig,
    add_structure,
    extract_plan,
    sample_weights,
    with_step,
)
from .mip import Model, Status, solve_mip
from .tree import Branch, Predict, Topology, TreePlan

MAX_ROUNDS = 200
COST_TOL = 1e-9


@dataclass(frozen=True)
class RobustSpec:
    """Per-sample flip prices ``costs`` (n x F) and per-sample budget ``epsilon``."""

    costs: np.ndarray
    epsilon: float

    def __post_init__(self):
        costs = np.asarray(self.costs, dtype=float)
        if costs.ndim != 2:
            raise ValueError("costs must be an n x F matrix")
        if not np.all(np.isfinite(costs)) or np.any(costs < 0):
            raise ValueError("costs must be finite and nonnegative")
        if not math.isfinite(self.epsilon) or self.epsilon < 0:
            raise ValueError("epsilon must be finite and nonnegative")
        object.__setattr__(self, "costs", costs)

    @classmethod
    def uniform(cls, n: int, n_features: int, epsilon: float, cost: float = 1.0) -> "RobustSpec":
        return cls(np.full((n, n_features), float(cost)), epsilon)


@dataclass(frozen=True)
class RobustCut:
    """A cheap misrouting of ``sample``: the branch decisions on the way to ``node``."""

    sample: int
    path: tuple[tuple[int, int], ...]   # (branch node, feature)
    node: int
    label: int


def affordable(cost: float, epsilon: float) -> bool:
    return cost <= epsilon + COST_TOL * max(1.0, epsilon)


def misclassification_witnesses(plan: TreePlan, x, y: int, costs) -> list[tuple[float, RobustCut]]:
    """Every reachable wrong-label prediction node with its flip cost, cheapest first.

    A node whose branch path requires some feature to be both 0 and 1 is
    unreachable. Equal costs keep the lower node index first. The cut's
    ``sample`` field is left at -1 for the caller to fill in.
    """
    out = []
    for m, role in plan.items():
        if not isinstance(role, Predict) or role.label == y:
            continue
        path = plan.branch_path(m)
        required: dict[int, int] = {}
        consistent = True
        for _, f, v in path:
            if required.setdefault(f, v) != v:
                consistent = False
                break
        if not consistent:
            continue
        cost = float(sum(costs[f] for f, v in required.items() if int(x[f]) != v))
        out.append((cost, RobustCut(-1, tuple((n, f) for n, f, _ in path), m, role.label)))
    out.sort(key=lambda pair: (pair[0], pair[1].node))
    return out


def min_misclassification_cost(plan: TreePlan, x, y: int, costs) -> tuple[float, Optional[RobustCut]]:
    """Cheapest flip set sending ``x`` to a prediction node with a label other than ``y``.

    Returns ``(inf, None)`` when no wrong-label node is reachable; ties go to
    the lowest node index.
    """
    found = misclassification_witnesses(plan, x, y, costs)
    return found[0] if found else (math.inf, None)


def seed_cuts(dataset: BinarizedDataset, spec: RobustSpec, depth: int) -> list[RobustCut]:
    """Cuts for wrong predictions at the root and its children, known before any solve."""
    cuts = []
    K = dataset.n_classes
    for i in range(dataset.n):
        yi = int(dataset.y[i])
        wrong = [k for k in range(K) if k != yi]
        cuts += [RobustCut(i, (), 1, k) for k in wrong]
        if depth < 1:
            continue
        for f in range(dataset.n_features):
            for v in (0, 1):
                cost = spec.costs[i, f] if int(dataset.X[i, f]) != v else 0.0
                if affordable(cost, spec.epsilon):
                    cuts += [RobustCut(i, ((1, f),), 2 + v, k) for k in wrong]
    return cuts


def robust_correct(plan: TreePlan, dataset: BinarizedDataset, spec: RobustSpec) -> np.ndarray:
    """Boolean per sample: no affordable flip set misclassifies it."""
    plan.check()
    out = np.zeros(dataset.n, dtype=bool)
    for i in range(dataset.n):
        cost, _ = min_misclassification_cost(plan, dataset.X[i], int(dataset.y[i]), spec.costs[i])
        out[i] = not affordable(cost, spec.epsilon)
    return out


def worst_case_correct(plan: TreePlan, dataset: BinarizedDataset, spec: RobustSpec,
                       mode: str = "weighted") -> float:
    """Weighted count of robustly correct samples (unit weights when ``mode='accuracy'``)."""
    u = sample_weights(dataset, mode)
    return float(u @ robust_correct(plan, dataset, spec).astype(float))


def robust_objective(plan: TreePlan, dataset: BinarizedDataset, spec: RobustSpec,
                     config: OCTConfig) -> float:
    lam = config.lam
    return (1.0 - lam) * worst_case_correct(plan, dataset, spec, config.objective) \
        - lam * plan.branch_count


def _check(dataset: BinarizedDataset, config: OCTConfig, spec: RobustSpec) -> None:
    diags = validate(dataset, "robust")
    if spec.costs.shape != dataset.X.shape:
        diags.append(f"costs shape {spec.costs.shape} does not match X {dataset.X.shape}")
    if diags:
        raise DataError("invalid dataset: " + "; ".join(diags))
    if config.objective == "worst_case":
        raise ValueError("robust trees support the accuracy and weighted objectives only")


def _build_master(dataset: BinarizedDataset, config: OCTConfig, u: np.ndarray,
                  cuts: list[RobustCut]) -> tuple[Model, ModelHandles, list[int]]:
    topo = Topology(config.depth)
    model = Model("maximize", "robust_master")
    h = ModelHandles(topo, dataset.n, dataset.n_features, dataset.n_classes)
    add_structure(model, h)
    t = [model.add_var(0.0, 1.0, name=f"t_i{i}") for i in range(dataset.n)]
    for c in cuts:
        terms = [(t[c.sample], 1.0), (h.w[c.node, c.label], 1.0)]
        terms += [(h.b[n, f], 1.0) for n, f in c.path]
        model.add_constraint(terms, "<=", len(c.path) + 1.0,
                             f"cut_i{c.sample}_n{c.node}_k{c.label}")
    lam = config.lam
    obj = [(t[i], (1.0 - lam) * u[i]) for i in range(dataset.n) if u[i] != 0]
    obj += [(vid, -lam) for vid in h.b.values()] if lam > 0 else []
    model.set_objective(obj)
    return model, h, t


def _warm_vector(model: Model, h: ModelHandles, t: list[int], plan: TreePlan,
                 correct: np.ndarray) -> np.ndarray:
    x = np.zeros(model.n_vars)
    for node, role in plan.items():
        if isinstance(role, Branch):
            x[h.b[node, role.feature]] = 1.0
        elif isinstance(role, Predict):
            x[h.p[node]] = 1.0
            x[h.w[node, role.label]] = 1.0
    x[t] = correct.astype(float)
    return x


def fit_robust(dataset: BinarizedDataset, config: OCTConfig, spec: RobustSpec,
               max_rounds: int = MAX_ROUNDS, seed: bool = True) -> FitResult:
    """Cut-generation loop: solve the master, separate violated cuts, rebuild, repeat.

    ``extra`` records ``rounds``, ``cuts`` and ``capped`` (round limit reached).
    """
    _check(dataset, config, spec)
    u = sample_weights(dataset, config.objective)
    solver = with_step(config.solver, [(1.0 - config.lam) * ui for ui in u] + [config.lam])
    deadline = None if solver.time_limit is None else time.monotonic() + solver.time_limit
    cuts = seed_cuts(dataset, spec, config.depth) if seed else []
    seen = set(cuts)
    warm_plan: Optional[TreePlan] = None
    started = time.monotonic()
    nodes = 0
    result: Optional[FitResult] = None

    for rnd in range(1, max_rounds + 1):
        model, h, t = _build_master(dataset, config, u, cuts)
        warm = None
        if warm_plan is not None:
            warm = _warm_vector(model, h, t, warm_plan, robust_correct(warm_plan, dataset, spec))
        round_solver = solver
        if deadline is not None:
            round_solver = replace(solver, time_limit=max(deadline - time.monotonic(), 1e-3))
        res = solve_mip(model, round_solver, warm_start=warm)
        nodes += res.nodes_explored
        if res.values is None:
            return FitResult(None, res, model, h, extra={"rounds": rnd, "cuts": len(cuts),
                                                         "capped": False})
        plan = extract_plan(h, res, int_tol=solver.int_tol)
        limited = res.status in (Status.TIME_LIMIT, Status.GAP_LIMIT)
        result = FitResult(plan, res, model, h, time_limited=limited,
                           extra={"rounds": rnd, "cuts": len(cuts), "capped": False})
        if limited:
            break
        fresh = []
        for i in range(dataset.n):
            if res.values[t[i]] <= 0.5:
                continue
            found = misclassification_witnesses(plan, dataset.X[i], int(dataset.y[i]),
                                                spec.costs[i])
            found = [replace(c, sample=i) for cost, c in found if affordable(cost, spec.epsilon)]
            if not found:
                continue
            if found[0] in seen:
                raise RuntimeError(f"separation repeated an existing cut {found[0]}")
            fresh += [c for c in found if c not in seen]
            seen.update(found)
        if not fresh:
            break
        cuts.extend(fresh)
        warm_plan = plan
    else:
        result.extra["capped"] = True
        warnings.warn(f"cut loop stopped after {max_rounds} rounds", RuntimeWarning, stacklevel=2)

    assert result is not None
    if result.time_limited:
        warnings.warn(f"master solve stopped with status {result.status.value}",
                      RuntimeWarning, stacklevel=2)
    result.solve = replace(result.solve, nodes_explored=nodes,
                           wall_time=time.monotonic() - started)
    result.extra["cuts"] = len(cuts)
    return result

