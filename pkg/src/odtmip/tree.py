"""Complete binary tree topology, learned tree plans, routing and DOT/JSON output.

Nodes are numbered heap style from 1: node ``n`` has children ``2n`` (taken
when the tested feature is 0) and ``2n + 1`` (feature is 1).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Optional, Sequence, Union

import numpy as np


class StructureError(ValueError):
    """A plan violates the branch/predict/pruned structure."""


class NamingError(KeyError):
    """A feature or label index has no display name."""


@dataclass(frozen=True)
class Branch:
    feature: int


@dataclass(frozen=True)
class Predict:
    label: int


@dataclass(frozen=True)
class Pruned:
    pass


PRUNED = Pruned()
Role = Union[Branch, Predict, Pruned]


@dataclass(frozen=True)
class Topology:
    depth: int

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")

    @property
    def n_nodes(self) -> int:
        return 2 ** (self.depth + 1) - 1

    @property
    def nodes(self) -> range:
        return range(1, self.n_nodes + 1)

    @property
    def branch_nodes(self) -> range:
        return range(1, 2 ** self.depth)

    @property
    def leaf_nodes(self) -> range:
        return range(2 ** self.depth, 2 ** (self.depth + 1))

    def is_leaf(self, n: int) -> bool:
        return n >= 2 ** self.depth

    @staticmethod
    def parent(n: int) -> int:
        return n // 2

    @staticmethod
    def left(n: int) -> int:
        return 2 * n

    @staticmethod
    def right(n: int) -> int:
        return 2 * n + 1

    @staticmethod
    def ancestors(n: int) -> list[int]:
        """Ancestors of ``n`` from its parent up to the root."""
        out = []
        while n > 1:
            n //= 2
            out.append(n)
        return out

    @staticmethod
    def level(n: int) -> int:
        return n.bit_length() - 1


@dataclass(frozen=True)
class TreePlan:
    """A learned tree: one role per node of the complete tree of ``depth``."""

    depth: int
    roles: tuple[Role, ...]

    def __post_init__(self):
        expected = 2 ** (self.depth + 1) - 1
        if len(self.roles) != expected:
            raise StructureError(f"depth {self.depth} needs {expected} roles, got {len(self.roles)}")

    @classmethod
    def from_roles(cls, depth: int, roles: Mapping[int, Role]) -> "TreePlan":
        """Build a plan from ``{node: role}``; unspecified nodes are pruned."""
        topo = Topology(depth)
        for n in roles:
            if n not in topo.nodes:
                raise StructureError(f"node {n} outside a depth-{depth} tree")
        return cls(depth, tuple(roles.get(n, PRUNED) for n in topo.nodes))

    @classmethod
    def constant(cls, depth: int, label: int) -> "TreePlan":
        return cls.from_roles(depth, {1: Predict(label)})

    @property
    def topology(self) -> Topology:
        return Topology(self.depth)

    def role(self, n: int) -> Role:
        return self.roles[n - 1]

    def items(self):
        return ((n, r) for n, r in enumerate(self.roles, 1))

    @property
    def branch_count(self) -> int:
        return sum(isinstance(r, Branch) for r in self.roles)

    def used_features(self) -> set[int]:
        return {r.feature for r in self.roles if isinstance(r, Branch)}

    def used_labels(self) -> set[int]:
        return {r.label for r in self.roles if isinstance(r, Predict)}

    def problems(self) -> list[str]:
        """Structural diagnostics; empty for a valid plan."""
        out = []
        topo = self.topology

        def walk(n: int, below_predict: bool):
            role = self.role(n)
            if below_predict:
                if not isinstance(role, Pruned):
                    out.append(f"node {n}: {role} below a prediction node must be pruned")
            elif isinstance(role, Pruned):
                out.append(f"node {n}: pruned node reached without a prediction")
            elif isinstance(role, Branch):
                if topo.is_leaf(n):
                    out.append(f"node {n}: leaf cannot branch")
                elif role.feature < 0:
                    out.append(f"node {n}: negative feature index")
            elif role.label < 0:
                out.append(f"node {n}: negative label")
            if not topo.is_leaf(n):
                nxt = below_predict or isinstance(role, (Predict, Pruned))
                walk(2 * n, nxt)
                walk(2 * n + 1, nxt)

        walk(1, False)
        return out

    def check(self) -> "TreePlan":
        probs = self.problems()
        if probs:
            raise StructureError("; ".join(probs))
        return self

    @cached_property
    def _arrays(self):
        size = len(self.roles) + 1
        kind = np.zeros(size, dtype=np.int8)
        feat = np.zeros(size, dtype=np.int64)
        label = np.full(size, -1, dtype=np.int64)
        for n, r in self.items():
            if isinstance(r, Branch):
                kind[n], feat[n] = 1, r.feature
            elif isinstance(r, Predict):
                kind[n], label[n] = 2, r.label
        return kind, feat, label

    def leaf_of(self, X) -> np.ndarray:
        """Index of the prediction node each row of ``X`` is routed to."""
        X = np.asarray(X)
        if X.ndim != 2:
            raise ValueError("X must be two-dimensional")
        kind, feat, _ = self._arrays
        used = self.used_features()
        if used and max(used) >= X.shape[1]:
            raise StructureError(
                f"plan uses feature {max(used)} but data has {X.shape[1]} features"
            )
        rows = np.arange(X.shape[0])
        node = np.ones(X.shape[0], dtype=np.int64)
        for _ in range(self.depth + 1):
            k = kind[node]
            if np.any(k == 0):
                bad = int(node[k == 0][0])
                raise StructureError(f"routing reached pruned node {bad}")
            br = k == 1
            if not br.any():
                return node
            node[br] = 2 * node[br] + X[rows[br], feat[node[br]]].astype(np.int64)
            if node.max() > len(self.roles):
                raise StructureError("routing left the tree without reaching a prediction")
        if np.any(kind[node] != 2):
            raise StructureError("routing left the tree without reaching a prediction")
        return node

    def predict(self, X) -> np.ndarray:
        _, _, label = self._arrays
        return label[self.leaf_of(X)]

    def route(self, x: Sequence[int]) -> list[int]:
        """Node path from the root to the prediction node for one sample."""
        path = [1]
        n = 1
        while True:
            role = self.role(n)
            if isinstance(role, Predict):
                return path
            if isinstance(role, Pruned):
                raise StructureError(f"routing reached pruned node {n}")
            if role.feature >= len(x):
                raise StructureError(f"feature {role.feature} missing from sample of length {len(x)}")
            n = 2 * n + int(x[role.feature])
            if n > len(self.roles):
                raise StructureError("routing left the tree without reaching a prediction")
            path.append(n)

    def branch_path(self, m: int) -> list[tuple[int, int, int]]:
        """``(node, feature, required value)`` for every branch above node ``m``."""
        out = []
        child = m
        for a in Topology.ancestors(m):
            role = self.role(a)
            if not isinstance(role, Branch):
                raise StructureError(f"ancestor {a} of node {m} does not branch")
            out.append((a, role.feature, child - 2 * a))
            child = a
        out.reverse()
        return out


def route(plan: TreePlan, x: Sequence[int]) -> list[int]:
    return plan.route(x)


def predict(plan: TreePlan, X) -> np.ndarray:
    return plan.predict(X)


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def to_dot(
    plan: TreePlan,
    feature_names: Optional[Sequence[str]] = None,
    label_names: Optional[Sequence[str]] = None,
) -> str:
    """Graphviz DOT text; left edges are labelled 0 and right edges 1."""
    plan.check()

    def fname(f: int) -> str:
        if feature_names is None:
            return f"x{f}"
        if not 0 <= f < len(feature_names):
            raise NamingError(f"no name for feature {f}")
        return str(feature_names[f])

    def lname(k: int) -> str:
        if label_names is None:
            return str(k)
        if not 0 <= k < len(label_names):
            raise NamingError(f"no name for label {k}")
        return str(label_names[k])

    lines = [
        "digraph Tree {",
        '  node [shape=box, fontname="helvetica"];',
        '  edge [fontname="helvetica"];',
    ]
    edges = []
    for n, role in plan.items():
        if isinstance(role, Branch):
            lines.append(f'  {n} [label="{_dot_escape(fname(role.feature))}"];')
            edges.append(f'  {n} -> {2 * n} [label="0"];')
            edges.append(f'  {n} -> {2 * n + 1} [label="1"];')
        elif isinstance(role, Predict):
            lines.append(f'  {n} [label="{_dot_escape(lname(role.label))}", shape=ellipse];')
    lines.extend(edges)
    lines.append("}")
    return "\n".join(lines) + "\n"


def plan_to_json(plan: TreePlan) -> dict:
    nodes = []
    for n, role in plan.items():
        if isinstance(role, Branch):
            nodes.append({"id": n, "role": "branch", "feature": role.feature})
        elif isinstance(role, Predict):
            nodes.append({"id": n, "role": "predict", "label": role.label})
        else:
            nodes.append({"id": n, "role": "pruned"})
    return {"depth": plan.depth, "nodes": nodes}


def plan_from_json(doc: Mapping) -> TreePlan:
    """Parse the JSON tree schema; raises StructureError on malformed input."""
    try:
        depth = int(doc["depth"])
        roles: dict[int, Role] = {}
        for node in doc["nodes"]:
            n = int(node["id"])
            kind = node["role"]
            if kind == "branch":
                roles[n] = Branch(int(node["feature"]))
            elif kind == "predict":
                roles[n] = Predict(int(node["label"]))
            elif kind == "pruned":
                roles[n] = PRUNED
            else:
                raise StructureError(f"node {n}: unknown role {kind!r}")
        plan = TreePlan.from_roles(depth, roles)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, StructureError):
            raise
        raise StructureError(f"malformed tree document: {exc}") from exc
    return plan.check()
