"""Bounded-variable revised simplex.

Every row ``a_i x`` gets a logical variable ``r_i`` so the system reads
``A x - r = 0`` with box bounds on all ``n + m`` variables. The basis inverse
is kept as a sparse LU factorization plus a product-form eta file,
refactorized every ``REFACTOR_EVERY`` pivots.

Two passes share that state:

* a dual pass, used whenever the starting basis can be made dual feasible by
  moving boxed nonbasic variables to their other bound; this is what makes
  re-solving after a branching bound change cheap;
* a primal pass (phase 1 minimizes the sum of bound violations, phase 2 the
  objective) that always finishes the job. Bland's rule takes over after
  ``STALL_LIMIT`` pivots without objective progress, so it terminates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .model import Model, ObjSense, Sense

BASIC, AT_LO, AT_UP, FREE = 0, 1, 2, 3

REFACTOR_EVERY = 64
STALL_LIMIT = 50
# dual pivots without dual objective progress before falling back to primal
DUAL_STALL_LIMIT = 2000
PIVOT_TOL = 1e-9
PERTURB_SCALE = 1e-6
PERTURB_SEED = 20240531


class SimplexError(RuntimeError):
    pass


class StandardForm:
    """Column-compressed copy of a model in minimization form."""

    def __init__(self, model: Model):
        self.model = model
        m, n = model.n_rows, model.n_vars
        self.m, self.n = m, n
        rows, cols, vals = [], [], []
        row_lo = np.full(m, -np.inf)
        row_up = np.full(m, np.inf)
        for i, con in enumerate(model.constraints):
            for vid, coef in con.terms:
                rows.append(i)
                cols.append(vid)
                vals.append(coef)
            if con.sense is Sense.LE:
                row_up[i] = con.rhs
            elif con.sense is Sense.GE:
                row_lo[i] = con.rhs
            else:
                row_lo[i] = row_up[i] = con.rhs
        self.A = sp.csc_matrix((vals, (rows, cols)), shape=(m, n))
        self.A.sum_duplicates()
        self.AT = self.A.T.tocsr()
        # [A, -I] for basis extraction
        self.M = sp.hstack([self.A, -sp.identity(m, format="csc")], format="csc")
        self.sign = -1.0 if model.sense is ObjSense.MAXIMIZE else 1.0
        c = np.zeros(n + m)
        for vid, coef in model.objective:
            c[vid] += self.sign * coef
        self.cost = c
        self.lo = np.concatenate([[v.lower for v in model.variables], row_lo]).astype(float)
        self.up = np.concatenate([[v.upper for v in model.variables], row_up]).astype(float)
        self.row_tags = [con.tag or f"row{i}" for i, con in enumerate(model.constraints)]

    def column(self, j: int) -> np.ndarray:
        col = np.zeros(self.m)
        if j < self.n:
            s, e = self.A.indptr[j], self.A.indptr[j + 1]
            col[self.A.indices[s:e]] = self.A.data[s:e]
        else:
            col[j - self.n] = -1.0
        return col

    def label(self, j: int) -> str:
        return self.model.var_name(j) if j < self.n else self.row_tags[j - self.n]


@dataclass
class Basis:
    head: np.ndarray   # basic variable per row position
    state: np.ndarray  # BASIC / AT_LO / AT_UP / FREE per variable

    def copy(self) -> "Basis":
        return Basis(self.head.copy(), self.state.copy())


@dataclass
class LPOutcome:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: Optional[np.ndarray]
    objective: float
    duals: Optional[np.ndarray]
    reduced_costs: Optional[np.ndarray]
    dual_bound: float
    basis: Optional[Basis]
    iterations: int
    ray: Optional[np.ndarray] = None
    infeasible_row: Optional[str] = None


class _Factor:
    def __init__(self, form: StandardForm, head: np.ndarray):
        B = form.M[:, head]
        try:
            self.lu = splu(B.tocsc())
        except RuntimeError as exc:
            raise SimplexError(f"singular basis: {exc}") from exc
        self.etas: list[tuple[int, np.ndarray]] = []

    def ftran(self, v: np.ndarray) -> np.ndarray:
        w = self.lu.solve(v)
        for r, d in self.etas:
            t = w[r]
            if t != 0.0:
                w += t * d
        return w

    def btran(self, v: np.ndarray) -> np.ndarray:
        y = v.astype(float, copy=True)
        for r, d in reversed(self.etas):
            y[r] += d @ y
        return self.lu.solve(y, trans="T")

    def update(self, r: int, alpha: np.ndarray) -> None:
        d = -alpha / alpha[r]
        d[r] = 1.0 / alpha[r] - 1.0
        self.etas.append((r, d))


def _initial_basis(form: StandardForm, lo: np.ndarray, up: np.ndarray) -> Basis:
    n, m = form.n, form.m
    state = np.full(n + m, BASIC, dtype=np.int8)
    state[:n] = AT_LO
    _repair_states(state, lo, up)
    return Basis(np.arange(n, n + m), state)


def _repair_states(state: np.ndarray, lo: np.ndarray, up: np.ndarray) -> None:
    """Put nonbasic variables on a finite bound where one exists."""
    nb = state != BASIC
    fin_lo, fin_up = np.isfinite(lo), np.isfinite(up)
    bad_lo = nb & (state == AT_LO) & ~fin_lo
    state[bad_lo & fin_up] = AT_UP
    state[bad_lo & ~fin_up] = FREE
    bad_up = nb & (state == AT_UP) & ~fin_up
    state[bad_up & fin_lo] = AT_LO
    state[bad_up & ~fin_lo] = FREE
    free = nb & (state == FREE)
    state[free & fin_lo] = AT_LO
    state[free & ~fin_lo & fin_up] = AT_UP


def _dual_bound(d: np.ndarray, lo: np.ndarray, up: np.ndarray, tol: float) -> float:
    """min over the box of d^T x, i.e. the Lagrangian bound of the final duals."""
    pos = d > tol
    neg = d < -tol
    if np.any(pos & ~np.isfinite(lo)) or np.any(neg & ~np.isfinite(up)):
        return -math.inf
    total = float(d[pos] @ lo[pos]) + float(d[neg] @ up[neg])
    small = ~(pos | neg)
    lo_s = np.where(np.isfinite(lo[small]), lo[small], 0.0)
    up_s = np.where(np.isfinite(up[small]), up[small], 0.0)
    ds = d[small]
    total += float(np.minimum(ds * lo_s, ds * up_s).sum())
    return total


class _Engine:
    def __init__(self, form: StandardForm, lo, up, basis: Optional[Basis], tol: float,
                 max_iter: Optional[int]):
        self.form = form
        self.n, self.m = form.n, form.m
        self.N = self.n + self.m
        self.lo, self.up = lo, up
        self.tol = tol
        self.warm = basis is not None
        basis = _initial_basis(form, lo, up) if basis is None else basis.copy()
        _repair_states(basis.state, lo, up)
        self.basis = basis
        self.head, self.state = basis.head, basis.state
        self.it = 0
        self.max_iter = max_iter or 50 * self.N + 1000
        self.factor: Optional[_Factor] = None
        self.x = np.zeros(self.N)
        self.fixed = lo == up

    # -- shared linear algebra ----------------------------------------

    def refactor(self) -> None:
        self.factor = _Factor(self.form, self.head)
        self.recompute_primal()

    def recompute_primal(self) -> None:
        x, state, lo, up = self.x, self.state, self.lo, self.up
        x[:] = 0.0
        at_lo, at_up = state == AT_LO, state == AT_UP
        x[at_lo] = lo[at_lo]
        x[at_up] = up[at_up]
        rhs = x[self.n:] - self.form.A @ x[: self.n]
        x[self.head] = self.factor.ftran(rhs)

    def maybe_refactor(self) -> None:
        if self.factor is None or len(self.factor.etas) >= REFACTOR_EVERY:
            self.refactor()

    def reduced_costs(self, cB: np.ndarray, cost: Optional[np.ndarray]):
        y = self.factor.btran(cB)
        d = np.zeros(self.N) if cost is None else cost.copy()
        d[: self.n] -= self.form.AT @ y
        d[self.n:] += y
        d[self.head] = 0.0
        return y, d

    def pivot(self, r: int, q: int, alpha: np.ndarray, leave_state: int) -> None:
        leaving = int(self.head[r])
        self.state[leaving] = leave_state
        self.x[leaving] = self.lo[leaving] if leave_state == AT_LO else self.up[leaving]
        self.head[r] = q
        self.state[q] = BASIC
        self.factor.update(r, alpha)

    def tick(self) -> None:
        self.it += 1
        if self.it > self.max_iter:
            raise SimplexError(f"iteration limit {self.max_iter} reached")

    # -- dual pass ----------------------------------------------------

    def make_dual_feasible(self, d: np.ndarray) -> bool:
        """Flip boxed nonbasics with wrong-signed reduced costs; False if impossible."""
        tol = self.tol
        st = self.state
        wrong_lo = (st == AT_LO) & (d < -tol) & ~self.fixed
        wrong_up = (st == AT_UP) & (d > tol) & ~self.fixed
        wrong_free = (st == FREE) & (np.abs(d) > tol)
        if wrong_free.any():
            return False
        if np.any(wrong_lo & ~np.isfinite(self.up)) or np.any(wrong_up & ~np.isfinite(self.lo)):
            return False
        if wrong_lo.any() or wrong_up.any():
            st[wrong_lo] = AT_UP
            st[wrong_up] = AT_LO
            self.recompute_primal()
        return True

    def perturbed_cost(self) -> np.ndarray:
        """Costs nudged in the dual-feasible direction to break dual degeneracy."""
        rng = np.random.default_rng(PERTURB_SEED)
        cost = self.form.cost
        size = PERTURB_SCALE * (1.0 + np.abs(cost)) * (1.0 + rng.random(self.N))
        sign = np.where(self.state == AT_UP, -1.0, 1.0)
        out = cost + sign * size
        # basic costs stay exact so the current basis remains dual feasible
        keep = self.fixed | (self.state == BASIC)
        out[keep] = cost[keep]
        return out

    def dual(self) -> Optional[str]:
        """Run dual simplex; returns "infeasible", "done", or None to hand over to primal."""
        form, tol, n = self.form, self.tol, self.n
        self.maybe_refactor()
        _, d = self.reduced_costs(form.cost[self.head], form.cost)
        if not self.make_dual_feasible(d):
            return None
        cost = self.perturbed_cost()
        _, d = self.reduced_costs(cost[self.head], cost)
        if not self.make_dual_feasible(d):
            cost = form.cost
        stall, best = 0, -math.inf
        fresh = True
        while True:
            if self.factor is None or len(self.factor.etas) >= REFACTOR_EVERY:
                self.refactor()
                fresh = True
            if fresh:
                _, d = self.reduced_costs(cost[self.head], cost)
                fresh = False
            xB = self.x[self.head]
            loB, upB = self.lo[self.head], self.up[self.head]
            infeas = np.maximum(loB - xB, xB - upB)
            r = int(np.argmax(infeas))
            if infeas[r] <= tol:
                return "done"
            obj = float(cost @ self.x)
            if obj > best + 1e-12 * (1.0 + abs(best)):
                best, stall = obj, 0
            else:
                stall += 1
                if stall >= DUAL_STALL_LIMIT:
                    return None
            self.tick()
            to_lower = xB[r] < loB[r]
            e = np.zeros(self.m)
            e[r] = 1.0
            rho = self.factor.btran(e)
            alpha_r = np.empty(self.N)
            alpha_r[:n] = form.AT @ rho
            alpha_r[n:] = -rho
            alpha_r[self.head] = 0.0
            st = self.state
            if to_lower:
                cand = (((st == AT_LO) & (alpha_r < -PIVOT_TOL))
                        | ((st == AT_UP) & (alpha_r > PIVOT_TOL)))
            else:
                cand = (((st == AT_LO) & (alpha_r > PIVOT_TOL))
                        | ((st == AT_UP) & (alpha_r < -PIVOT_TOL)))
            cand |= (st == FREE) & (np.abs(alpha_r) > PIVOT_TOL)
            cand &= ~self.fixed
            idx = np.flatnonzero(cand)
            if len(idx) == 0:
                self.infeasible_label = form.label(int(self.head[r]))
                return "infeasible"
            a = alpha_r[idx]
            dj = d[idx]
            # breakpoints |d_j / alpha_rj|, slightly wrong-signed d_j treated as zero
            wrong = np.sign(dj) * np.sign(a) * (1.0 if to_lower else -1.0) > 0
            mag = np.where(wrong, 0.0, np.abs(dj)) / np.abs(a)
            # long step: pass breakpoints of boxed columns while the row stays infeasible
            order = np.argsort(mag, kind="stable")
            width = (self.up - self.lo)[idx]
            slope = infeas[r]
            flips = []
            k = order[-1]
            for k in order:
                slope -= abs(a[k]) * width[k]
                if slope <= tol or not math.isfinite(width[k]):
                    break
                flips.append(k)
            else:
                if slope > tol:
                    self.infeasible_label = form.label(int(self.head[r]))
                    return "infeasible"
            # among breakpoints tied with the chosen one, prefer the largest pivot
            ties = order[(mag[order] <= mag[k] + tol / max(abs(a[k]), 1.0))]
            ties = [t for t in ties if t not in set(flips)] or [k]
            k = max(ties, key=lambda t: abs(a[t]))
            q = int(idx[k])
            alpha = self.factor.ftran(form.column(q))
            if abs(alpha[r]) < PIVOT_TOL or abs(alpha[r] - alpha_r[q]) > 1e-6 * (1 + abs(alpha[r])):
                # row and column disagree: numerical trouble, start from a fresh factor
                self.refactor()
                fresh = True
                continue
            if flips:
                fj = idx[np.array(flips)]
                to_up = st[fj] == AT_LO
                moved = np.where(to_up, width[flips], -width[flips])
                st[fj] = np.where(to_up, AT_UP, AT_LO)
                self.x[fj] = np.where(to_up, self.up[fj], self.lo[fj])
                self.x[self.head] -= self.factor.ftran(form.M[:, fj] @ moved)
                xB = self.x[self.head]
            theta_d = d[q] / alpha_r[q]
            leaving = int(self.head[r])
            target = loB[r] if to_lower else upB[r]
            step = (xB[r] - target) / alpha[r]
            self.x[q] += step
            self.x[self.head] -= alpha * step
            self.pivot(r, q, alpha, AT_LO if to_lower else AT_UP)
            d -= theta_d * alpha_r
            d[q] = 0.0
            d[leaving] = -theta_d

    # -- primal pass --------------------------------------------------

    def primal(self) -> LPOutcome:
        form, tol, n, N = self.form, self.tol, self.n, self.N
        cost, lo, up = form.cost, self.lo, self.up
        stall, bland = 0, False
        last_obj, last_phase = math.inf, 0
        verified = False
        while True:
            self.maybe_refactor()
            head, state, x = self.head, self.state, self.x
            xB = x[head]
            loB, upB = lo[head], up[head]
            below = xB < loB - tol
            above = xB > upB + tol
            if below.any() or above.any():
                phase = 1
                cB = np.where(below, -1.0, np.where(above, 1.0, 0.0))
                obj = float((loB - xB)[below].sum() + (xB - upB)[above].sum())
                y, d = self.reduced_costs(cB, None)
            else:
                phase = 2
                obj = float(cost @ x)
                y, d = self.reduced_costs(cost[head], cost)

            if phase != last_phase:
                stall, bland, last_obj, last_phase = 0, False, math.inf, phase
            elif obj < last_obj - 1e-12 * (1.0 + abs(last_obj)):
                stall, bland = 0, False
            else:
                stall += 1
                if stall >= STALL_LIMIT:
                    bland = True
            last_obj = min(last_obj, obj)

            eligible = (
                ((state == AT_LO) & (d < -tol))
                | ((state == AT_UP) & (d > tol))
                | ((state == FREE) & (np.abs(d) > tol))
            ) & ~self.fixed
            if not eligible.any():
                if not verified and self.factor.etas:
                    # confirm with a fresh factorization before declaring the result
                    self.refactor()
                    verified = True
                    continue
                if phase == 1:
                    worst = int(np.argmax(np.maximum(loB - xB, xB - upB)))
                    return LPOutcome("infeasible", None, math.nan, form.sign * -y, None,
                                     math.nan, self.basis, self.it,
                                     infeasible_row=form.label(int(head[worst])))
                return self.optimal(y, d)
            verified = False
            self.tick()

            idx = np.flatnonzero(eligible)
            q = int(idx[0]) if bland else int(idx[np.argmax(np.abs(d[idx]))])
            s = 1.0 if d[q] < 0 else -1.0
            alpha = self.factor.ftran(form.column(q))
            delta = -s * alpha
            rng = up[q] - lo[q] if state[q] != FREE else math.inf
            r, theta, leave_at = _ratio_test(xB, loB, upB, delta, head, phase, tol, bland)

            if r < 0 and not math.isfinite(rng):
                if phase == 2:
                    ray = np.zeros(N)
                    ray[q] = s
                    ray[head] = delta
                    return LPOutcome("unbounded", x[:n].copy(), -form.sign * math.inf, None,
                                     None, math.nan, self.basis, self.it, ray=ray[:n])
                raise SimplexError("phase 1 step is unbounded")

            if r < 0 or rng <= theta:
                x[head] += delta * rng
                state[q] = AT_UP if state[q] == AT_LO else AT_LO
                x[q] = up[q] if state[q] == AT_UP else lo[q]
                continue
            x[q] += s * theta
            x[head] += delta * theta
            self.pivot(r, q, alpha, leave_at)

    def optimal(self, y, d) -> LPOutcome:
        form, n = self.form, self.n
        xs = self.x[:n].copy()
        obj = form.sign * float(form.cost[:n] @ xs)
        return LPOutcome(
            "optimal", xs, obj, form.sign * y, form.sign * d[:n],
            form.sign * _dual_bound(d, self.lo, self.up, self.tol), self.basis, self.it,
        )

    def run(self) -> LPOutcome:
        status = self.dual()
        if status == "infeasible":
            return LPOutcome("infeasible", None, math.nan, None, None, math.nan, self.basis,
                             self.it, infeasible_row=self.infeasible_label)
        return self.primal()


def _ratio_test(xB, loB, upB, delta, head, phase, tol, bland):
    """Return (row, step, bound state the leaving variable lands on); row -1 if none blocks."""
    m = len(xB)
    ratio = np.full(m, np.inf)
    relaxed = np.full(m, np.inf)
    land = np.zeros(m, dtype=np.int8)
    dec = delta < -PIVOT_TOL
    inc = delta > PIVOT_TOL

    if phase == 1:
        below = xB < loB - tol
        above = xB > upB + tol
        feas = ~(below | above)
    else:
        below = above = None
        feas = np.ones(m, dtype=bool)

    with np.errstate(divide="ignore", invalid="ignore"):
        sel = np.flatnonzero(feas & dec & np.isfinite(loB))
        gap = xB[sel] - loB[sel]
        ratio[sel] = np.maximum(gap, 0.0) / -delta[sel]
        relaxed[sel] = (gap + tol) / -delta[sel]
        land[sel] = AT_LO
        sel = np.flatnonzero(feas & inc & np.isfinite(upB))
        gap = upB[sel] - xB[sel]
        ratio[sel] = np.maximum(gap, 0.0) / delta[sel]
        relaxed[sel] = (gap + tol) / delta[sel]
        land[sel] = AT_UP
        if phase == 1:
            # infeasible basics leave once they reach the violated bound
            sel = below & inc
            ratio[sel] = (loB[sel] - xB[sel]) / delta[sel]
            relaxed[sel] = ratio[sel]
            land[sel] = AT_LO
            sel = above & dec
            ratio[sel] = (xB[sel] - upB[sel]) / -delta[sel]
            relaxed[sel] = ratio[sel]
            land[sel] = AT_UP

    tmax = relaxed.min()
    if not math.isfinite(tmax):
        return -1, math.inf, 0
    if bland:
        tmin = ratio.min()
        ties = np.flatnonzero(ratio <= tmin + 1e-12)
        r = int(ties[np.argmin(head[ties])])
        return r, float(ratio[r]), int(land[r])
    cand = np.flatnonzero(ratio <= tmax)
    r = int(cand[np.argmax(np.abs(delta[cand]))])
    return r, float(ratio[r]), int(land[r])


def _solve_box(form: StandardForm, lo, up, tol) -> LPOutcome:
    n = form.n
    c = form.cost[:n]
    x = np.zeros(n)
    state = np.full(n, AT_LO, dtype=np.int8)
    for j in range(n):
        if c[j] > 0:
            x[j] = lo[j]
        elif c[j] < 0:
            x[j], state[j] = up[j], AT_UP
        else:
            x[j] = lo[j] if math.isfinite(lo[j]) else (up[j] if math.isfinite(up[j]) else 0.0)
        if not math.isfinite(x[j]):
            ray = np.zeros(n)
            ray[j] = -np.sign(c[j])
            return LPOutcome("unbounded", None, -form.sign * math.inf, None, None, math.nan,
                             None, 0, ray=ray)
    obj = form.sign * float(c @ x)
    return LPOutcome("optimal", x, obj, np.zeros(0), form.sign * c,
                     form.sign * _dual_bound(c, lo[:n], up[:n], tol),
                     Basis(np.zeros(0, dtype=int), state), 0)


def simplex(
    form: StandardForm,
    lo: Optional[np.ndarray] = None,
    up: Optional[np.ndarray] = None,
    basis: Optional[Basis] = None,
    feas_tol: float = 1e-7,
    max_iter: Optional[int] = None,
) -> LPOutcome:
    """Solve ``min cost^T x`` over ``A x - r = 0`` and the box ``lo <= (x, r) <= up``.

    ``basis`` (from a previous outcome on the same form) warm-starts the solve.
    """
    lo = form.lo if lo is None else lo
    up = form.up if up is None else up
    if np.any(lo > up):
        j = int(np.argmax(lo > up))
        return LPOutcome("infeasible", None, math.nan, None, None, math.nan, None, 0,
                         infeasible_row=form.label(j))
    if form.m == 0:
        return _solve_box(form, lo, up, feas_tol)
    return _Engine(form, lo, up, basis, feas_tol, max_iter).run()
