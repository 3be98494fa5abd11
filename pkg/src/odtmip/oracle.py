"""Exhaustive enumeration of tree plans: the ground truth for small instances."""

from __future__ import annotations

import itertools
from typing import Callable, Iterator, Optional

from .tree import PRUNED, Branch, Predict, Topology, TreePlan

MAX_DEPTH = 3


class OracleGuardError(ValueError):
    """Enumeration requested beyond the supported depth."""


class NoFeasiblePlan(ValueError):
    pass


def plan_count(depth: int, n_features: int, n_labels: int) -> int:
    """Closed-form number of valid plans: c(0) = K, c(l) = K + F c(l-1)^2."""
    count = n_labels
    for _ in range(depth):
        count = n_labels + n_features * count * count
    return count


def _subtrees(node: int, level: int, depth: int, F: int, K: int) -> Iterator[tuple]:
    """Yield tuples of (node, role) for every valid subtree rooted at ``node``."""
    for k in range(K):
        yield ((node, Predict(k)),)
    if level == depth:
        return
    for f in range(F):
        lefts = list(_subtrees(2 * node, level + 1, depth, F, K))
        rights = list(_subtrees(2 * node + 1, level + 1, depth, F, K))
        for left, right in itertools.product(lefts, rights):
            yield ((node, Branch(f)),) + left + right


def enumerate_plans(depth: int, n_features: int, n_labels: int) -> Iterator[TreePlan]:
    """Stream every structurally valid plan once, node-major, lowest index first.

    At each node the prediction roles come first (label order), then branches
    in feature order with the left subtree varying slowest.
    """
    if depth > MAX_DEPTH:
        raise OracleGuardError(f"oracle enumeration is limited to depth {MAX_DEPTH}")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    size = Topology(depth).n_nodes
    for assignment in _subtrees(1, 0, depth, n_features, n_labels):
        roles = [PRUNED] * size
        for node, role in assignment:
            roles[node - 1] = role
        yield TreePlan(depth, tuple(roles))


def best_plan(
    evaluator: Callable[[TreePlan], float],
    depth: int,
    n_features: int,
    n_labels: int,
    feasible: Optional[Callable[[TreePlan], bool]] = None,
) -> tuple[TreePlan, float]:
    """Argmax of ``evaluator`` over enumerated plans accepted by ``feasible``.

    Ties keep the earliest plan in enumeration order.
    """
    best: Optional[TreePlan] = None
    best_value = float("-inf")
    for plan in enumerate_plans(depth, n_features, n_labels):
        if feasible is not None and not feasible(plan):
            continue
        value = evaluator(plan)
        if best is None or value > best_value:
            best, best_value = plan, value
    if best is None:
        raise NoFeasiblePlan("no enumerated plan passes the feasibility filter")
    return best, best_value
