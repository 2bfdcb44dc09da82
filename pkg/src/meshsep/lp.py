"""Bounded-variable linear programs.

Problems are stated as *maximize* ``c @ x`` subject to row constraints with
senses ``<=``, ``>=`` or ``=`` and per-variable bounds.  Two back ends share
one contract: a bundled dense revised simplex and scipy's HiGHS.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import ScalingExhausted

log = logging.getLogger(__name__)

LE, GE, EQ = "<=", ">=", "="


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration-limit"


@dataclass
class LpProblem:
    c: np.ndarray
    A: np.ndarray
    senses: list
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    names: list = None
    scaled_cols: tuple = ()

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = len(self.c)
        if sparse.issparse(self.A):
            self.A = sparse.csr_matrix(self.A, dtype=float)
            if self.A.shape[1] != n:
                raise ValueError("constraint matrix width must match the objective length")
        else:
            self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.lb = np.asarray(self.lb, dtype=float).reshape(-1)
        self.ub = np.asarray(self.ub, dtype=float).reshape(-1)
        self.senses = list(self.senses)
        if not (len(self.lb) == len(self.ub) == n):
            raise ValueError("bound vectors must match the objective length")
        if len(self.senses) != self.A.shape[0] or len(self.b) != self.A.shape[0]:
            raise ValueError("senses and right-hand side must match the row count")
        if any(s not in (LE, GE, EQ) for s in self.senses):
            raise ValueError("senses must be '<=', '>=' or '='")
        if self.names is None:
            self.names = [f"x{j}" for j in range(n)]

    @property
    def n_vars(self):
        return len(self.c)

    @property
    def n_rows(self):
        return self.A.shape[0]

    def dense(self):
        return self.A.toarray() if sparse.issparse(self.A) else self.A

    def row_entries(self, i):
        """(column, value) pairs of the nonzeros in row i."""
        if sparse.issparse(self.A):
            lo, hi = self.A.indptr[i], self.A.indptr[i + 1]
            return list(zip(self.A.indices[lo:hi].tolist(), self.A.data[lo:hi].tolist()))
        return [(int(j), float(self.A[i, j])) for j in np.nonzero(self.A[i])[0]]

    def residuals(self, x):
        """Per-row violation (positive means violated)."""
        ax = self.A @ x
        out = np.zeros(self.n_rows)
        for i, s in enumerate(self.senses):
            if s == LE:
                out[i] = ax[i] - self.b[i]
            elif s == GE:
                out[i] = self.b[i] - ax[i]
            else:
                out[i] = abs(ax[i] - self.b[i])
        return out


@dataclass
class LpSolution:
    status: Status
    x: np.ndarray = None
    objective: float = math.nan
    iterations: int = 0
    alpha: float = 1.0
    rounds: int = 1
    violation: float = 0.0

    @property
    def optimal(self):
        return self.status is Status.OPTIMAL


@dataclass
class ScalingConfig:
    d: float = 1e-6
    lm_bound: float = 1e-3
    alpha: float = 1.0
    violation_tol: float = 1e-6
    alpha_factor: float = 10.0
    max_alpha_rounds: int = 8

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if self.violation_tol <= 0:
            raise ValueError("violation_tol must be positive")


class LpBuilder:
    """Incremental construction helper: named columns, sparse rows."""

    def __init__(self):
        self.names = []
        self.lb = []
        self.ub = []
        self.c = []
        self.rows = []
        self.senses = []
        self.rhs = []
        self.scaled = []
        self._index = {}

    def var(self, name, lb=0.0, ub=math.inf, obj=0.0, scaled=False):
        j = len(self.names)
        self.names.append(name)
        self.lb.append(lb)
        self.ub.append(ub)
        self.c.append(obj)
        self._index[name] = j
        if scaled:
            self.scaled.append(j)
        return j

    def col(self, name):
        return self._index[name]

    def row(self, coeffs, sense, rhs):
        """``coeffs`` maps column index to coefficient."""
        self.rows.append(dict(coeffs))
        self.senses.append(sense)
        self.rhs.append(rhs)
        return len(self.rows) - 1

    def build(self) -> LpProblem:
        n = len(self.names)
        ri, ci, vals = [], [], []
        for i, r in enumerate(self.rows):
            for j, v in r.items():
                ri.append(i)
                ci.append(j)
                vals.append(v)
        A = sparse.csr_matrix((vals, (ri, ci)), shape=(len(self.rows), n), dtype=float)
        return LpProblem(np.array(self.c), A, self.senses, np.array(self.rhs),
                         np.array(self.lb), np.array(self.ub), list(self.names),
                         tuple(self.scaled))


# ---------------------------------------------------------------------------
# bundled solver

class RevisedSimplex:
    """Dense revised simplex for bounded variables.

    Rows become equalities with one slack each (slack bounds encode the
    sense).  Phase 1 minimizes artificial variables added only on rows whose
    slack cannot absorb the initial residual.  The basis inverse is updated
    by rank-one pivots and refactored every ``refactor`` iterations.
    Pricing is Dantzig's rule; after ``stall`` non-improving iterations it
    switches to Bland's rule, which cannot cycle.
    """

    def __init__(self, tol=1e-9, max_iter=None, refactor=100, stall=50):
        self.tol = tol
        self.max_iter = max_iter
        self.refactor = refactor
        self.stall = stall

    def solve(self, p: LpProblem) -> LpSolution:
        m, n = p.n_rows, p.n_vars
        tol = self.tol
        lo = np.concatenate([p.lb, np.zeros(m)])
        hi = np.concatenate([p.ub, np.zeros(m)])
        for i, s in enumerate(p.senses):
            if s == LE:
                hi[n + i] = math.inf
            elif s == GE:
                lo[n + i] = -math.inf
        if np.any(lo > hi + tol):
            return LpSolution(Status.INFEASIBLE)
        PA = p.dense()
        A = np.hstack([PA, np.eye(m)])
        # nonbasic start values
        x = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
        r = p.b - PA @ x[:n]
        art_rows = []
        for i in range(m):
            k = n + i
            if lo[k] - tol <= r[i] <= hi[k] + tol:
                x[k] = r[i]
            else:
                x[k] = min(max(r[i], lo[k]), hi[k])
                art_rows.append(i)
        na = len(art_rows)
        if na:
            cols = np.zeros((m, na))
            for t, i in enumerate(art_rows):
                resid = r[i] - x[n + i]
                cols[i, t] = 1.0 if resid >= 0 else -1.0
            A = np.hstack([A, cols])
            x = np.concatenate([x, np.zeros(na)])
            for t, i in enumerate(art_rows):
                x[n + m + t] = abs(r[i] - x[n + i])
            lo = np.concatenate([lo, np.zeros(na)])
            hi = np.concatenate([hi, np.full(na, math.inf)])
        basis = np.array([n + m + art_rows.index(i) if i in art_rows else n + i
                          for i in range(m)], dtype=np.int64)
        total = n + m + na
        limit = self.max_iter or 50 * (total + m) + 1000
        iters = 0
        if na:
            cost = np.zeros(total)
            cost[n + m:] = 1.0
            status, x, basis, it = self._phase(A, p.b, cost, lo, hi, x, basis, limit)
            iters += it
            if status is not Status.OPTIMAL:
                return LpSolution(status, iterations=iters)
            if x[n + m:].sum() > max(tol, 1e-7 * (1 + np.abs(p.b).max(initial=0))):
                return LpSolution(Status.INFEASIBLE, iterations=iters)
            hi[n + m:] = 0.0
            x[n + m:] = np.clip(x[n + m:], 0.0, 0.0)
        cost = np.zeros(total)
        cost[:n] = -p.c
        status, x, basis, it = self._phase(A, p.b, cost, lo, hi, x, basis, limit - iters)
        iters += it
        if status is not Status.OPTIMAL:
            return LpSolution(status, iterations=iters)
        xs = np.clip(x[:n], p.lb, p.ub)
        return LpSolution(Status.OPTIMAL, xs, float(p.c @ xs), iters)

    def _phase(self, A, b, cost, lo, hi, x, basis, limit):
        m, total = A.shape
        tol = self.tol
        is_basic = np.zeros(total, dtype=bool)
        is_basic[basis] = True
        Binv = np.linalg.inv(A[:, basis])
        best = math.inf
        since = 0
        bland = False
        for it in range(max(limit, 0)):
            if it and it % self.refactor == 0:
                Binv = np.linalg.inv(A[:, basis])
            nonb = ~is_basic
            x[basis] = Binv @ (b - A[:, nonb] @ x[nonb])
            obj = cost @ x
            if obj < best - 1e-12 * (1 + abs(best) if math.isfinite(best) else 1):
                best = obj
                since = 0
            else:
                since += 1
                if since > self.stall:
                    bland = True
            y = cost[basis] @ Binv
            dj = cost - y @ A
            dj[is_basic] = 0.0
            up = (dj < -tol) & (x < hi - tol)
            down = (dj > tol) & (x > lo + tol)
            cand = np.nonzero(up | down)[0]
            if len(cand) == 0:
                return Status.OPTIMAL, x, basis, it
            j = int(cand[0]) if bland else int(cand[np.argmax(np.abs(dj[cand]))])
            direction = 1.0 if dj[j] < 0 else -1.0
            col = Binv @ A[:, j]
            alpha = col * direction
            xb = x[basis]
            theta = hi[j] - lo[j]
            leave = -1
            leave_to_upper = False
            with np.errstate(divide="ignore", invalid="ignore"):
                pos = alpha > tol
                neg = alpha < -tol
                ratio = np.full(m, math.inf)
                ratio[pos] = (xb[pos] - lo[basis][pos]) / alpha[pos]
                ratio[neg] = (hi[basis][neg] - xb[neg]) / (-alpha[neg])
            ratio = np.maximum(ratio, 0.0)
            rmin = ratio.min() if m else math.inf
            if rmin < theta:
                ties = np.nonzero(ratio <= rmin + tol)[0]
                if bland:
                    r = int(ties[np.argmin(basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(alpha[ties]))])
                theta = ratio[r]
                leave = r
                leave_to_upper = alpha[r] < 0
            if not math.isfinite(theta):
                return Status.UNBOUNDED, x, basis, it
            x[j] += direction * theta
            if leave < 0:
                continue
            out = basis[leave]
            x[out] = hi[out] if leave_to_upper else lo[out]
            # rank-one update of the inverse
            row = Binv[leave] / col[leave]
            Binv -= np.outer(col, row)
            Binv[leave] = row
            basis[leave] = j
            is_basic[out] = False
            is_basic[j] = True
        return Status.ITERATION_LIMIT, x, basis, limit


def _solve_highs(p: LpProblem) -> LpSolution:
    from scipy.optimize import linprog

    ub_rows = [i for i, s in enumerate(p.senses) if s != EQ]
    eq_rows = [i for i, s in enumerate(p.senses) if s == EQ]
    sign = np.array([1.0 if p.senses[i] == LE else -1.0 for i in ub_rows])
    A = sparse.csr_matrix(p.A)
    A_ub = sparse.diags(sign) @ A[ub_rows] if ub_rows else None
    b_ub = p.b[ub_rows] * sign if ub_rows else None
    A_eq = A[eq_rows] if eq_rows else None
    b_eq = p.b[eq_rows] if eq_rows else None
    bounds = [(None if not math.isfinite(l) else l, None if not math.isfinite(u) else u)
              for l, u in zip(p.lb, p.ub)]
    res = linprog(-p.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                  method="highs", options={"primal_feasibility_tolerance": 1e-10,
                                           "dual_feasibility_tolerance": 1e-10})
    if res.status == 0:
        x = np.clip(res.x, p.lb, p.ub)
        return LpSolution(Status.OPTIMAL, x, float(p.c @ x), int(res.nit))
    status = {1: Status.ITERATION_LIMIT, 2: Status.INFEASIBLE, 3: Status.UNBOUNDED}
    return LpSolution(status.get(res.status, Status.INFEASIBLE), iterations=int(res.nit))


SOLVERS = ("bundled", "highs", "auto")
AUTO_LIMIT = 1500


def solve(p: LpProblem, solver="bundled") -> LpSolution:
    """Solve with the named back end; ``auto`` picks the bundled solver for small problems."""
    if solver == "auto":
        solver = "bundled" if p.n_rows <= AUTO_LIMIT else "highs"
    if solver == "bundled":
        return RevisedSimplex().solve(p)
    if solver == "highs":
        return _solve_highs(p)
    raise ValueError(f"unknown LP solver {solver!r}")


def _rescale(p: LpProblem, alpha: float) -> LpProblem:
    if alpha == 1.0 or not p.scaled_cols:
        return p
    cols = list(p.scaled_cols)
    scale = np.ones(p.n_vars)
    scale[cols] = 1.0 / alpha
    if sparse.issparse(p.A):
        A = sparse.csr_matrix(p.A @ sparse.diags(scale))
    else:
        A = p.A * scale
    c = p.c.copy()
    c[cols] /= alpha
    return LpProblem(c, A, p.senses, p.b, p.lb, p.ub, p.names, p.scaled_cols)


def solve_scaled(p: LpProblem, cfg: ScalingConfig, exact_check, solver="bundled") -> LpSolution:
    """Solve, check exactly, and grow alpha until the violation is acceptable.

    Scaled columns are rewritten as ``l = l~ / alpha`` with the bounds kept on
    ``l~``, so a larger alpha narrows the admissible range of those variables.
    ``exact_check`` receives the unscaled solution and returns its maximum
    constraint violation in units of d.
    """
    alpha = cfg.alpha
    cols = list(p.scaled_cols)
    worst = math.inf
    for rnd in range(1, cfg.max_alpha_rounds + 1):
        sol = solve(_rescale(p, alpha), solver)
        if not sol.optimal:
            sol.alpha, sol.rounds = alpha, rnd
            return sol
        x = sol.x.copy()
        if cols:
            x[cols] /= alpha
        viol = float(exact_check(x))
        if viol <= cfg.violation_tol:
            sol.x = x
            sol.objective = float(p.c @ x)
            sol.alpha, sol.rounds, sol.violation = alpha, rnd, viol
            return sol
        worst = viol
        log.debug("alpha %.0e: exact violation %.3e, rescaling", alpha, viol)
        alpha *= cfg.alpha_factor
    raise ScalingExhausted(f"violation {worst:.3e} after {cfg.max_alpha_rounds} rounds")


# ---------------------------------------------------------------------------
# text dump

def _fmt(v):
    return repr(float(v))


def to_lp_text(p: LpProblem, name="meshsep") -> str:
    """CPLEX-style LP text listing of the problem."""
    names = [n.replace(" ", "_") for n in p.names]

    def expr(coeffs):
        parts = []
        for j, v in coeffs:
            if v == 0:
                continue
            parts.append(f"{'-' if v < 0 else '+'} {_fmt(abs(v))} {names[j]}")
        s = " ".join(parts) or "0"
        return s[2:] if s.startswith("+ ") else s

    lines = [f"\\ {name}", "Maximize", " obj: " + expr(enumerate(p.c)), "Subject To"]
    for i in range(p.n_rows):
        row = p.row_entries(i)
        lines.append(f" c{i}: {expr(row)} {p.senses[i]} {_fmt(p.b[i])}")
    lines.append("Bounds")
    for j in range(p.n_vars):
        lo, hi = p.lb[j], p.ub[j]
        if not math.isfinite(lo) and not math.isfinite(hi):
            lines.append(f" {names[j]} free")
        else:
            los = "-inf" if not math.isfinite(lo) else _fmt(lo)
            his = "+inf" if not math.isfinite(hi) else _fmt(hi)
            lines.append(f" {los} <= {names[j]} <= {his}")
    lines.append("End")
    return "\n".join(lines) + "\n"
