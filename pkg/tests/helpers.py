"""Independent reference oracles and fixture generators shared by the tests.

Nothing here calls the package's solver: LP optima come from enumerating
vertices with dense linear algebra, binary MIP optima from enumerating every
assignment.
"""

from __future__ import annotations

import itertools
from typing import Optional

import numpy as np

from odtmip.dataset import BinarizedDataset
from odtmip.mip import Model, Sense

XOR_X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]])
XOR_Y = np.array([0, 1, 1, 0])


def xor_dataset() -> BinarizedDataset:
    return BinarizedDataset(XOR_X, ["x0", "x1"], y=XOR_Y)


def random_dataset(rng: np.random.Generator, n: int, F: int, K: int, **extra) -> BinarizedDataset:
    """Uniform random binary features; every label in 0..K-1 appears at least once."""
    X = rng.integers(0, 2, (n, F))
    y = rng.integers(0, K, n)
    y[:K] = np.arange(K)
    rng.shuffle(y)
    return BinarizedDataset(X, [f"f{j}" for j in range(F)], y=y, **extra)


def random_model(rng: np.random.Generator, n_vars: int, n_rows: int, binary: bool) -> Model:
    """Small integer-coefficient model over a bounded box (so it is never unbounded)."""
    m = Model("maximize" if rng.random() < 0.7 else "minimize")
    for _ in range(n_vars):
        if binary:
            m.add_binary()
        else:
            lo = float(rng.integers(-2, 1))
            m.add_var(lo, lo + float(rng.integers(1, 5)))
    senses = rng.choice(["<=", ">=", "="], n_rows, p=[0.6, 0.25, 0.15])
    for i in range(n_rows):
        coefs = rng.integers(-5, 6, n_vars)
        m.add_constraint([(j, float(c)) for j, c in enumerate(coefs)], str(senses[i]),
                         float(rng.integers(-3, 10)), f"r{i}")
    m.set_objective([(j, float(c)) for j, c in enumerate(rng.integers(-5, 6, n_vars))])
    return m


def _dense(model: Model):
    n = model.n_vars
    A = np.zeros((model.n_rows, n))
    for i, row in enumerate(model.constraints):
        for v, c in row.terms:
            A[i, v] = c
    b = np.array([r.rhs for r in model.constraints])
    senses = [r.sense for r in model.constraints]
    c = np.zeros(n)
    for v, coef in model.objective:
        c[v] = coef
    lo = np.array([v.lower for v in model.variables])
    up = np.array([v.upper for v in model.variables])
    return A, b, senses, c, lo, up


def _row_ok(A, b, senses, x, tol=1e-7) -> bool:
    act = A @ x
    for a, rhs, s in zip(act, b, senses):
        scale = tol * max(1.0, abs(rhs))
        if s is Sense.LE and a > rhs + scale:
            return False
        if s is Sense.GE and a < rhs - scale:
            return False
        if s is Sense.EQ and abs(a - rhs) > scale:
            return False
    return True


def vertex_lp_optimum(model: Model) -> Optional[float]:
    """Best objective over all basic feasible solutions of a boxed LP; None if infeasible.

    A vertex is the solution of n linearly independent active constraints
    chosen among the rows and the 2n bounds (equality rows always active).
    """
    A, b, senses, c, lo, up = _dense(model)
    n = model.n_vars
    eq = [i for i, s in enumerate(senses) if s is Sense.EQ]
    ineq = [i for i, s in enumerate(senses) if s is not Sense.EQ]
    cands = [("row", i) for i in ineq] + [("lo", j) for j in range(n)] + [("up", j) for j in range(n)]
    need = n - len(eq)
    if need < 0:
        need = 0
    best = None
    sign = 1.0 if model.sense.value == "maximize" else -1.0
    for combo in itertools.combinations(cands, need):
        rows, rhs = [A[i] for i in eq], [b[i] for i in eq]
        for kind, k in combo:
            if kind == "row":
                rows.append(A[k])
                rhs.append(b[k])
            else:
                e = np.zeros(n)
                e[k] = 1.0
                rows.append(e)
                rhs.append(lo[k] if kind == "lo" else up[k])
        M = np.array(rows).reshape(-1, n)
        if M.shape[0] != n or abs(np.linalg.det(M)) < 1e-9:
            continue
        x = np.linalg.solve(M, np.array(rhs))
        if np.any(x < lo - 1e-7) or np.any(x > up + 1e-7) or not _row_ok(A, b, senses, x):
            continue
        val = float(c @ x)
        if best is None or sign * val > sign * best:
            best = val
    return best


def enumerate_binary_optimum(model: Model) -> Optional[float]:
    """Best objective over all 0/1 assignments of a pure-binary model; None if infeasible."""
    A, b, senses, c, _, _ = _dense(model)
    n = model.n_vars
    pts = np.array(list(itertools.product([0.0, 1.0], repeat=n)))
    act = pts @ A.T
    ok = np.ones(len(pts), dtype=bool)
    for i, s in enumerate(senses):
        scale = 1e-9 * max(1.0, abs(b[i]))
        if s is Sense.LE:
            ok &= act[:, i] <= b[i] + scale
        elif s is Sense.GE:
            ok &= act[:, i] >= b[i] - scale
        else:
            ok &= np.abs(act[:, i] - b[i]) <= scale
    if not ok.any():
        return None
    vals = pts[ok] @ c
    return float(vals.max() if model.sense.value == "maximize" else vals.min())
