"""LP and MIP entry points: simplex relaxations under a best-bound branch-and-bound."""

from __future__ import annotations

import heapq
import math
import time
from typing import Optional, Sequence

import numpy as np

from .model import (
    InvalidModelError,
    Model,
    ObjSense,
    SolveResult,
    SolverConfig,
    Status,
    validate_model,
)
from .simplex import Basis, StandardForm, simplex

SNAP_TOL = 1e-9


def _prepare(model: Model) -> StandardForm:
    diags = validate_model(model)
    if diags:
        raise InvalidModelError(diags)
    model.freeze()
    return StandardForm(model)


def _snap(values: np.ndarray) -> np.ndarray:
    rounded = np.round(values)
    close = np.abs(values - rounded) <= SNAP_TOL
    out = values.copy()
    out[close] = rounded[close]
    out[out == 0.0] = 0.0  # drop negative zeros
    return out


def solve_lp(model: Model, config: SolverConfig | None = None) -> SolveResult:
    """Solve the continuous relaxation of ``model`` (binary kinds are ignored)."""
    config = config or SolverConfig()
    start = time.perf_counter()
    form = _prepare(model)
    out = simplex(form, feas_tol=config.feas_tol)
    elapsed = time.perf_counter() - start
    if out.status == "optimal":
        values = _snap(out.x)
        obj = model.objective_value(values)
        return SolveResult(
            Status.OPTIMAL, obj, out.dual_bound, values, 1, elapsed,
            duals=out.duals, reduced_costs=out.reduced_costs, iterations=out.iterations,
            bound_trace=[obj],
        )
    if out.status == "unbounded":
        return SolveResult(Status.UNBOUNDED, out.objective, out.objective, None, 1, elapsed,
                           ray=out.ray, iterations=out.iterations)
    return SolveResult(Status.INFEASIBLE, math.nan, math.nan, None, 1, elapsed,
                       duals=out.duals, infeasible_row=out.infeasible_row,
                       iterations=out.iterations)


class _Search:
    """State of one branch-and-bound run; values are kept in maximization sense."""

    def __init__(self, model: Model, form: StandardForm, config: SolverConfig):
        self.model = model
        self.form = form
        self.config = config
        self.maxsign = 1.0 if model.sense is ObjSense.MAXIMIZE else -1.0
        self.binaries = np.array(model.binary_ids(), dtype=int)
        self.incumbent: Optional[np.ndarray] = None
        self.inc_value = -math.inf
        self.iterations = 0
        # largest bound discarded only because of the gap tolerance
        self.gap_pruned = -math.inf

    def offer(self, values: np.ndarray) -> bool:
        values = _snap(values)
        value = self.maxsign * self.model.objective_value(values)
        if self.incumbent is None or value > self.inc_value + 1e-12 * max(1.0, abs(value)):
            self.incumbent = values
            self.inc_value = value
            return True
        return False

    def prunable(self, bound: float) -> bool:
        if self.incumbent is None:
            return False
        inc = self.inc_value
        margin = self.config.gap_tol * max(1.0, abs(inc))
        if bound <= inc + margin:
            if bound > inc:
                self.gap_pruned = max(self.gap_pruned, bound)
            return True
        step = self.config.objective_step
        return step is not None and bound < inc + step * (1.0 - 1e-6)

    def pick_branch(self, x: np.ndarray) -> int:
        if len(self.binaries) == 0:
            return -1
        vals = x[self.binaries]
        frac = np.abs(vals - np.round(vals))
        cand = np.flatnonzero(frac > self.config.int_tol)
        if len(cand) == 0:
            return -1
        if self.config.branch_rule == "lowest_index":
            return int(self.binaries[cand[0]])
        # argmax returns the first maximum, i.e. the lowest id on ties
        return int(self.binaries[cand[np.argmax(frac[cand])]])


def solve_mip(
    model: Model,
    config: SolverConfig | None = None,
    warm_start: Optional[Sequence[float]] = None,
) -> SolveResult:
    """Branch-and-bound over the binary variables of ``model``.

    ``warm_start`` is an optional full assignment used as the first incumbent;
    it is ignored if it is infeasible or not integral.
    """
    config = config or SolverConfig()
    start = time.perf_counter()
    form = _prepare(model)
    search = _Search(model, form, config)
    n = form.n

    if warm_start is not None:
        ws = np.asarray(warm_start, dtype=float)
        if ws.shape == (n,) and model.is_feasible(ws, config.feas_tol, config.int_tol):
            search.offer(ws)

    lo0 = form.lo.copy()
    up0 = form.up.copy()
    if len(search.binaries):
        lo0[search.binaries] = np.ceil(lo0[search.binaries] - config.int_tol)
        up0[search.binaries] = np.floor(up0[search.binaries] + config.int_tol)

    # open node: (-bound, seq, {var: (lo, up)} fixings, parent basis)
    counter = 0
    heap: list = []
    stack: list = []
    depth_first = config.node_selection == "depth_first"

    def push(bound: float, fix: dict, basis: Optional[Basis]):
        nonlocal counter
        item = (-bound, counter, fix, basis)
        counter += 1
        if depth_first:
            stack.append(item)
        else:
            heapq.heappush(heap, item)

    def open_bound() -> float:
        if depth_first:
            return max((-it[0] for it in stack), default=-math.inf)
        return -heap[0][0] if heap else -math.inf

    push(math.inf, {}, None)
    nodes = 0
    trace: list[float] = []
    global_bound = math.inf
    status = None
    root_unbounded = None
    lp_lo = lo0.copy()
    lp_up = up0.copy()

    while heap or stack:
        if config.time_limit is not None and time.perf_counter() - start > config.time_limit:
            status = Status.TIME_LIMIT
            break
        neg_bound, _, fix, basis = stack.pop() if depth_first else heapq.heappop(heap)
        parent_bound = -neg_bound
        if search.prunable(parent_bound):
            continue
        lp_lo[:] = lo0
        lp_up[:] = up0
        for vid, (a, b) in fix.items():
            lp_lo[vid], lp_up[vid] = a, b
        out = simplex(form, lp_lo, lp_up, basis, config.feas_tol)
        nodes += 1
        search.iterations += out.iterations
        if out.status == "unbounded":
            if nodes == 1:
                root_unbounded = out
                break
            continue
        if out.status != "optimal":
            bound = -math.inf
        else:
            bound = min(search.maxsign * out.objective, parent_bound)
            if not search.prunable(bound):
                q = search.pick_branch(out.x)
                if q < 0:
                    search.offer(out.x)
                else:
                    xq = out.x[q]
                    down = dict(fix)
                    down[q] = (lp_lo[q], 0.0)
                    up = dict(fix)
                    up[q] = (1.0, lp_up[q])
                    # the child nearer to the LP value is explored first
                    order = [down, up] if xq < 0.5 else [up, down]
                    if depth_first:
                        order.reverse()
                    for child in order:
                        push(bound, child, out.basis)
        gb = max(open_bound(), search.inc_value, search.gap_pruned)
        global_bound = min(global_bound, gb)
        trace.append(search.maxsign * global_bound)

    elapsed = time.perf_counter() - start
    if root_unbounded is not None:
        return SolveResult(Status.UNBOUNDED, root_unbounded.objective, root_unbounded.objective,
                           None, nodes, elapsed, ray=root_unbounded.ray,
                           iterations=search.iterations, bound_trace=trace)

    if status is None:
        if search.incumbent is None:
            status = Status.INFEASIBLE
            global_bound = -math.inf
        else:
            global_bound = max(search.inc_value, search.gap_pruned)
            remaining = global_bound - search.inc_value
            exact = min(config.gap_tol, 1e-6) * max(1.0, abs(search.inc_value))
            status = Status.OPTIMAL if remaining <= exact else Status.GAP_LIMIT

    if search.incumbent is None:
        bound = search.maxsign * global_bound if math.isfinite(global_bound) else math.nan
        return SolveResult(status, math.nan, bound, None, nodes, elapsed,
                           iterations=search.iterations, bound_trace=trace)
    values = search.incumbent
    return SolveResult(
        status,
        model.objective_value(values),
        search.maxsign * global_bound,
        values,
        nodes,
        elapsed,
        iterations=search.iterations,
        bound_trace=trace,
    )
