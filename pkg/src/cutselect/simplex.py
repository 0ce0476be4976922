"""Dense-tableau bounded simplex.

Rows are ``A x + s = b`` with slack columns ``s >= 0`` appended after the
structural columns, so column ``n + i`` is the slack of row ``i``.  Cold
solves run a two-phase primal simplex from the all-slack basis; cut rows and
bound changes are warm-started with the dual simplex.

Pivot rule is Dantzig (largest reduced cost) with a permanent switch to
Bland's rule after ``3 * (n + m)`` degenerate pivots.  Every pivot and every
bound flip counts as one work unit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .milp import LpProblem

FEAS_TOL = 1e-6
OPT_TOL = 1e-7
PIVOT_TOL = 1e-10
_ELIG_TOL = 1e-9  # smallest tableau entry considered in ratio tests

# basis status codes, in one-hot feature order
LOWER, BASIC, UPPER, ZERO = 0, 1, 2, 3
STATUS_NAMES = ("lower", "basic", "upper", "zero")

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"


class SimplexError(RuntimeError):
    pass


class NumericalBreakdown(SimplexError):
    pass


class NotBasic(SimplexError):
    pass


class NotOptimal(SimplexError):
    pass


class InfeasibleAfterCuts(SimplexError):
    pass


@dataclass
class _Tableau:
    n: int
    A: np.ndarray      # (m, N) = [A | I]
    b: np.ndarray
    cost: np.ndarray   # (N,)
    lo: np.ndarray
    hi: np.ndarray
    basis: np.ndarray  # (m,) column index basic in each row
    stat: np.ndarray   # (N,) status code
    x: np.ndarray      # (N,) current values
    T: np.ndarray = None
    d: np.ndarray = None
    iters: int = 0
    degenerate: int = 0
    bland: bool = False

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def copy(self) -> "_Tableau":
        return _Tableau(self.n, self.A.copy(), self.b.copy(), self.cost.copy(), self.lo.copy(),
                        self.hi.copy(), self.basis.copy(), self.stat.copy(), self.x.copy(),
                        None if self.T is None else self.T.copy(),
                        None if self.d is None else self.d.copy(), 0, 0, False)

    def refactor(self) -> None:
        """Recompute tableau, basic values and reduced costs from the basis."""
        m = self.m
        if m == 0:
            self.T = np.zeros((0, self.A.shape[1]))
            self.d = self.cost.copy()
            return
        B = self.A[:, self.basis]
        nonbasic = self.stat != BASIC
        rhs = self.b - self.A[:, nonbasic] @ self.x[nonbasic]
        try:
            sol = np.linalg.solve(B, np.column_stack([self.A, rhs]))
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdown("singular basis") from exc
        self.T = sol[:, :-1]
        self.T[:, self.basis] = np.eye(m)
        self.x[self.basis] = sol[:, -1]
        self.d = self.cost - self.cost[self.basis] @ self.T
        self.d[self.basis] = 0.0

    # ------------------------------------------------------------------ pivoting

    def _pivot(self, r: int, j: int) -> None:
        piv = self.T[r, j]
        if abs(piv) < PIVOT_TOL:
            raise NumericalBreakdown(f"pivot {piv:.3e} below threshold")
        prow = self.T[r] / piv
        self.T -= np.outer(self.T[:, j], prow)
        self.T[r] = prow
        self.d -= self.d[j] * prow
        self.d[j] = 0.0
        self.basis[r] = j
        self.stat[j] = BASIC

    def _nonbasic_value_status(self, j: int) -> None:
        lo, hi = self.lo[j], self.hi[j]
        if math.isfinite(lo):
            self.stat[j], self.x[j] = LOWER, lo
        elif math.isfinite(hi):
            self.stat[j], self.x[j] = UPPER, hi
        else:
            self.stat[j], self.x[j] = ZERO, 0.0

    def _entering(self) -> int:
        d, stat = self.d, self.stat
        movable = self.hi > self.lo
        elig = movable & (
            ((stat == LOWER) & (d < -OPT_TOL))
            | ((stat == UPPER) & (d > OPT_TOL))
            | ((stat == ZERO) & (np.abs(d) > OPT_TOL))
        )
        idx = np.flatnonzero(elig)
        if idx.size == 0:
            return -1
        if self.bland:
            return int(idx[0])
        return int(idx[np.argmax(np.abs(d[idx]))])

    def primal(self, limit: int) -> str:
        """Primal simplex from a primal feasible basis."""
        bland_after = 3 * self.A.shape[1]
        while True:
            j = self._entering()
            if j < 0:
                return OPTIMAL
            if self.iters >= limit:
                return ITERATION_LIMIT
            dirn = 1.0 if self.d[j] < 0 else -1.0
            alpha = dirn * self.T[:, j]
            xb = self.x[self.basis]
            lob, hib = self.lo[self.basis], self.hi[self.basis]
            lims = np.full(self.m, math.inf)
            dec = alpha > _ELIG_TOL
            inc = alpha < -_ELIG_TOL
            with np.errstate(invalid="ignore"):
                lims[dec] = (xb[dec] - lob[dec]) / alpha[dec]
                lims[inc] = (hib[inc] - xb[inc]) / -alpha[inc]
            lims = np.where(np.isnan(lims), math.inf, np.maximum(lims, 0.0))
            t_flip = self.hi[j] - self.lo[j]
            tmin = lims.min() if self.m else math.inf
            if not math.isfinite(tmin) and not math.isfinite(t_flip):
                return UNBOUNDED
            self.iters += 1
            if t_flip <= tmin:
                self.x[j] += dirn * t_flip
                self.x[self.basis] = xb - t_flip * alpha
                self.stat[j] = UPPER if self.stat[j] == LOWER else LOWER
                continue
            ties = np.flatnonzero(lims <= tmin + 1e-12)
            if self.bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])
            if tmin < 1e-12:
                self.degenerate += 1
                if self.degenerate >= bland_after:
                    self.bland = True
            q = self.basis[r]
            self.x[j] += dirn * tmin
            self.x[self.basis] = xb - tmin * alpha
            if alpha[r] > 0:
                self.x[q], self.stat[q] = self.lo[q], LOWER
            else:
                self.x[q], self.stat[q] = self.hi[q], UPPER
            self._pivot(r, j)

    def dual(self, limit: int) -> str:
        """Dual simplex from a dual feasible basis."""
        while True:
            xb = self.x[self.basis]
            lob, hib = self.lo[self.basis], self.hi[self.basis]
            below, above = lob - xb, xb - hib
            infeas = np.maximum(below, above)
            if self.m == 0 or infeas.max() <= FEAS_TOL:
                return OPTIMAL
            if self.iters >= limit:
                return ITERATION_LIMIT
            r = int(np.argmax(infeas))
            row = self.T[r]
            stat = self.stat
            movable = (self.hi > self.lo) & (stat != BASIC)
            if below[r] >= above[r]:
                target, leave = lob[r], LOWER
                elig = movable & (((stat == LOWER) & (row < -_ELIG_TOL))
                                  | ((stat == UPPER) & (row > _ELIG_TOL)))
            else:
                target, leave = hib[r], UPPER
                elig = movable & (((stat == LOWER) & (row > _ELIG_TOL))
                                  | ((stat == UPPER) & (row < -_ELIG_TOL)))
            elig |= movable & (stat == ZERO) & (np.abs(row) > _ELIG_TOL)
            idx = np.flatnonzero(elig)
            if idx.size == 0:
                return INFEASIBLE
            ratios = np.abs(self.d[idx]) / np.abs(row[idx])
            if self.bland:
                k = int(idx[np.argmin(ratios)])
            else:
                ties = idx[ratios <= ratios.min() + 1e-12]
                k = int(ties[np.argmax(np.abs(row[ties]))])
            self.iters += 1
            delta = (xb[r] - target) / row[k]
            q = self.basis[r]
            self.x[k] += delta
            self.x[self.basis] = xb - delta * self.T[:, k]
            self.x[q], self.stat[q] = target, leave
            self._pivot(r, k)

    # ------------------------------------------------------------------ checks

    def primal_feasible(self) -> bool:
        xb = self.x[self.basis]
        return bool(np.all(xb >= self.lo[self.basis] - FEAS_TOL)
                    and np.all(xb <= self.hi[self.basis] + FEAS_TOL))

    def dual_feasible(self) -> bool:
        d, stat = self.d, self.stat
        movable = self.hi > self.lo
        bad = movable & (((stat == LOWER) & (d < -OPT_TOL))
                         | ((stat == UPPER) & (d > OPT_TOL))
                         | ((stat == ZERO) & (np.abs(d) > OPT_TOL)))
        return not bool(bad.any())


@dataclass(eq=False)
class SimplexSolution:
    status: str
    lp: LpProblem
    x: np.ndarray = None
    objective: float = math.nan
    duals: np.ndarray = None
    reduced_costs: np.ndarray = None
    col_status: np.ndarray = None
    row_status: np.ndarray = None
    pivot_count: int = 0
    _tab: _Tableau = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    @property
    def basis(self) -> np.ndarray:
        return self._tab.basis.copy()

    def slack(self) -> np.ndarray:
        return self.lp.b - self.lp.A @ self.x


def _default_limit(n: int, m: int) -> int:
    return 50 * (n + m) + 1000


def _finish(tab: _Tableau, lp: LpProblem, status: str, pivots: int) -> SimplexSolution:
    sol = SimplexSolution(status, lp, pivot_count=pivots, _tab=tab)
    if status != OPTIMAL:
        return sol
    n, m = lp.n, lp.m
    sol.x = tab.x[:n].copy()
    sol.objective = float(lp.c @ sol.x)
    sol.duals = -tab.d[n:n + m].copy()
    sol.reduced_costs = tab.d[:n].copy()
    sol.col_status = tab.stat[:n].copy()
    sol.row_status = tab.stat[n:n + m].copy()
    return sol


def _polish(tab: _Tableau, limit: int) -> str:
    """Refactor and resume until the basis is both primal and dual feasible."""
    for _ in range(5):
        tab.refactor()
        pf, df = tab.primal_feasible(), tab.dual_feasible()
        if pf and df:
            return OPTIMAL
        if pf:
            status = tab.primal(limit)
        elif df:
            status = tab.dual(limit)
            if status == OPTIMAL:
                continue
        else:
            return "restart"
        if status != OPTIMAL:
            return status
    tab.refactor()
    return OPTIMAL if tab.primal_feasible() and tab.dual_feasible() else "restart"


def solve_lp(lp: LpProblem, max_iter: int | None = None) -> SimplexSolution:
    """Cold two-phase solve from the all-slack basis."""
    n, m = lp.n, lp.m
    limit = _default_limit(n, m) if max_iter is None else max_iter
    A = np.hstack([lp.A, np.eye(m)])
    lo = np.concatenate([lp.lower, np.zeros(m)])
    hi = np.concatenate([lp.upper, np.full(m, math.inf)])
    if np.any(lo > hi):
        return _finish(None, lp, INFEASIBLE, 0)
    N = n + m
    stat = np.empty(N, dtype=np.int8)
    x = np.zeros(N)
    tab = _Tableau(n, A, lp.b.astype(float).copy(), np.concatenate([lp.c, np.zeros(m)]),
                   lo, hi, np.arange(n, N), stat, x)
    for j in range(n):
        tab._nonbasic_value_status(j)
    stat[n:] = BASIC
    s = lp.b - lp.A @ x[:n]
    x[n:] = s
    bad = np.flatnonzero(s < -FEAS_TOL)

    if bad.size:
        k = bad.size
        art = np.zeros((m, k))
        art[bad, np.arange(k)] = -1.0
        tab.A = np.hstack([A, art])
        tab.cost = np.concatenate([np.zeros(N), np.ones(k)])
        tab.lo = np.concatenate([lo, np.zeros(k)])
        tab.hi = np.concatenate([hi, np.full(k, math.inf)])
        tab.stat = np.concatenate([stat, np.full(k, BASIC, dtype=np.int8)])
        tab.x = np.concatenate([x, -s[bad]])
        tab.stat[n + bad] = LOWER
        tab.x[n + bad] = 0.0
        tab.basis[bad] = N + np.arange(k)
        tab.refactor()
        status = tab.primal(limit)
        if status == ITERATION_LIMIT:
            return _finish(tab, lp, status, tab.iters)
        tab.refactor()
        if tab.x[N:].sum() > FEAS_TOL * (1.0 + np.abs(lp.b).max(initial=0.0)):
            return _finish(tab, lp, INFEASIBLE, tab.iters)
        # drive artificials out of the basis; [A I] has full row rank so a pivot always exists
        for r in range(m):
            if tab.basis[r] >= N:
                cand = np.abs(tab.T[r, :N]) * (tab.stat[:N] != BASIC)
                j = int(np.argmax(cand))
                if cand[j] < 1e-12:
                    raise NumericalBreakdown("cannot remove artificial column")
                q = tab.basis[r]
                tab._pivot(r, j)
                tab.stat[q] = LOWER
                tab.x[q] = 0.0
                tab.iters += 1
        tab.A, tab.cost, tab.lo, tab.hi = A, np.concatenate([lp.c, np.zeros(m)]), lo, hi
        tab.stat, tab.x = tab.stat[:N].copy(), tab.x[:N].copy()
        tab.bland, tab.degenerate = False, 0
    tab.refactor()
    status = tab.primal(limit)
    if status == OPTIMAL:
        status = _polish(tab, limit)
        if status == "restart":
            raise NumericalBreakdown("could not reach a clean optimal basis")
    return _finish(tab, lp, status, tab.iters)


def _warm(sol: SimplexSolution, tab: _Tableau, lp: LpProblem, max_iter) -> SimplexSolution:
    limit = _default_limit(lp.n, lp.m) if max_iter is None else max_iter
    if tab.dual_feasible():
        status = tab.dual(limit)
        if status == OPTIMAL:
            status = _polish(tab, limit)
    elif tab.primal_feasible():
        status = tab.primal(limit)
        if status == OPTIMAL:
            status = _polish(tab, limit)
    else:
        status = "restart"
    if status == "restart":
        cold = solve_lp(lp, None if max_iter is None else max(0, max_iter - tab.iters))
        cold.pivot_count += tab.iters
        return cold
    return _finish(tab, lp, status, tab.iters)


def resolve_with_rows(sol: SimplexSolution, alphas, betas, ids=(), max_iter=None) -> SimplexSolution:
    """Append rows ``alpha x <= beta`` in the given order and re-optimise.

    ``pivot_count`` of the result counts only the work of this call.
    """
    if not sol.optimal:
        raise NotOptimal("resolve needs an optimal solution")
    alphas = np.atleast_2d(np.asarray(alphas, dtype=float)).reshape(-1, sol.lp.n)
    betas = np.asarray(betas, dtype=float).ravel()
    lp = sol.lp.with_rows(alphas, betas, ids)
    k = len(betas)
    if k == 0:
        return replace(sol, pivot_count=0, _tab=sol._tab.copy())
    tab = sol._tab.copy()
    m_old, N_old = tab.m, tab.A.shape[1]
    new_A = np.hstack([alphas, np.zeros((k, N_old - tab.n)), np.eye(k)])
    tab.A = np.vstack([np.hstack([tab.A, np.zeros((m_old, k))]), new_A])
    T_old = np.hstack([tab.T, np.zeros((m_old, k))])
    new_T = new_A - new_A[:, tab.basis] @ T_old
    tab.T = np.vstack([T_old, new_T])
    tab.b = np.concatenate([tab.b, betas])
    tab.cost = np.concatenate([tab.cost, np.zeros(k)])
    tab.lo = np.concatenate([tab.lo, np.zeros(k)])
    tab.hi = np.concatenate([tab.hi, np.full(k, math.inf)])
    tab.d = np.concatenate([tab.d, np.zeros(k)])
    tab.stat = np.concatenate([tab.stat, np.full(k, BASIC, dtype=np.int8)])
    tab.x = np.concatenate([tab.x, betas - alphas @ tab.x[:tab.n]])
    tab.basis = np.concatenate([tab.basis, N_old + np.arange(k)])
    out = _warm(sol, tab, lp, max_iter)
    if out.status == INFEASIBLE:
        raise InfeasibleAfterCuts("relaxation became infeasible after adding rows")
    return out


def resolve_with_bounds(sol: SimplexSolution, lower, upper, max_iter=None) -> SimplexSolution:
    """Change structural bounds and re-optimise from the current basis."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    lp = sol.lp.with_bounds(lower, upper)
    if np.any(lower > upper):
        return _finish(None, lp, INFEASIBLE, 0)
    if not sol.optimal:
        return solve_lp(lp, max_iter)
    tab = sol._tab.copy()
    n = tab.n
    tab.lo[:n], tab.hi[:n] = lower, upper
    for j in range(n):
        st = tab.stat[j]
        if st == BASIC:
            continue
        old = tab.x[j]
        if st == LOWER and math.isfinite(lower[j]):
            tab.x[j] = lower[j]
        elif st == UPPER and math.isfinite(upper[j]):
            tab.x[j] = upper[j]
        else:
            tab._nonbasic_value_status(j)
        delta = tab.x[j] - old
        if delta:
            tab.x[tab.basis] -= delta * tab.T[:, j]
    return _warm(sol, tab, lp, max_iter)


def tableau_row(sol: SimplexSolution, basic_var: int):
    """Row of the optimal tableau for a basic column.

    Returns ``(coef, rhs)`` with ``coef`` over all ``n + m`` columns (zero at
    basic columns) such that ``x[basic_var] = rhs - coef @ x_full``.
    """
    if not sol.optimal:
        raise NotOptimal("tableau rows need an optimal solution")
    tab = sol._tab
    rows = np.flatnonzero(tab.basis == basic_var)
    if rows.size == 0:
        raise NotBasic(f"column {basic_var} is not basic")
    r = int(rows[0])
    coef = tab.T[r].copy()
    coef[tab.basis] = 0.0
    rhs = float(tab.x[basic_var] + coef @ tab.x)
    return coef, rhs


def full_values(sol: SimplexSolution) -> np.ndarray:
    """Structural and slack values ``(x, s)`` at the current basis."""
    return sol._tab.x.copy()


def column_status(sol: SimplexSolution) -> np.ndarray:
    return sol._tab.stat.copy()


def column_bounds(sol: SimplexSolution):
    return sol._tab.lo.copy(), sol._tab.hi.copy()
