"""Branch and bound with one cut round at the root, traced in pivot work units."""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from . import simplex
from .cuts import Cut, CutPool, gomory_cuts
from .milp import MilpInstance, check, relax

INT_TOL = 1e-6

OPTIMAL = "optimal"
BUDGET_EXHAUSTED = "budget_exhausted"
INFEASIBLE = "infeasible"


class MalformedTrace(ValueError):
    pass


class UnknownCut(KeyError):
    pass


@dataclass(frozen=True)
class SolveLimits:
    max_pivots: int = 200_000
    max_nodes: int = 10_000
    wall_clock: float | None = None  # diagnostics only; never affects results

    def __post_init__(self):
        if self.max_pivots <= 0 or self.max_nodes <= 0:
            raise ValueError("budgets must be positive")


@dataclass(frozen=True)
class Event:
    work: int
    primal: float | None
    dual: float


@dataclass
class SolveTrace:
    instance: str
    selector: str
    seed: int
    horizon: int
    events: list[Event] = field(default_factory=list)
    selected_cuts: list[str] = field(default_factory=list)
    final_status: str = BUDGET_EXHAUSTED
    total_work: int = 0
    primal_cap: float = 0.0
    pool: CutPool = field(default_factory=CutPool)
    nodes: int = 0
    wall_time: float = 0.0

    @property
    def pd_integral(self) -> float:
        return pd_integral(self, self.horizon)

    @property
    def primal(self) -> float | None:
        return self.events[-1].primal if self.events else None

    @property
    def dual(self) -> float:
        return self.events[-1].dual


class CutSelector(Protocol):
    name: str

    def select(self, ctx: "SelectionContext") -> list[str]:
        ...


@dataclass
class SelectionContext:
    """What a selector sees at the root: instance, LP optimum and candidate pool."""

    inst: MilpInstance
    sol: simplex.SimplexSolution
    pool: CutPool
    rng: np.random.Generator
    _graph: object = None

    def graph(self):
        if self._graph is None:
            from .graph import build_graph
            self._graph = build_graph(self.inst, self.sol, self.pool)
        return self._graph


# --------------------------------------------------------------------------- PD integral

def check_trace(trace: SolveTrace) -> None:
    ev = trace.events
    if not ev:
        raise MalformedTrace("trace has no events")
    prev = None
    for e in ev:
        if e.work < 0 or not math.isfinite(e.dual):
            raise MalformedTrace(f"bad event {e}")
        if e.primal is not None and e.primal < e.dual - 1e-6:
            raise MalformedTrace(f"primal below dual at work {e.work}")
        if prev is not None:
            if e.work < prev.work:
                raise MalformedTrace("work units decrease")
            if e.dual < prev.dual - 1e-9:
                raise MalformedTrace("dual bound decreases")
            if prev.primal is not None and (e.primal is None or e.primal > prev.primal + 1e-9):
                raise MalformedTrace("primal bound increases")
        prev = e


def pd_integral(trace: SolveTrace, horizon: int | None = None) -> float:
    """Area under the primal-dual gap over work units ``[0, horizon]``.

    Before the first event the gap is measured from ``primal_cap``; after the
    last event the final gap extends to the horizon.  Without an incumbent the
    primal bound is ``primal_cap``.
    """
    check_trace(trace)
    T = trace.horizon if horizon is None else horizon
    if T <= 0:
        raise MalformedTrace("horizon must be positive")
    cap = trace.primal_cap
    area = 0.0
    last_w = 0
    gap = max(0.0, cap - trace.events[0].dual)
    for e in trace.events:
        w = min(e.work, T)
        area += gap * (w - last_w)
        last_w = w
        gap = max(0.0, (cap if e.primal is None else e.primal) - e.dual)
    area += gap * max(0, T - last_w)
    return area


def reward(trace: SolveTrace, horizon: int | None = None) -> float:
    T = trace.horizon if horizon is None else horizon
    return -pd_integral(trace, T) / T


# --------------------------------------------------------------------------- heuristics

def greedy_round(inst: MilpInstance, x: np.ndarray):
    """Best feasible of floor / ceil / nearest rounding of the integer columns."""
    ints = list(inst.integers)
    best = None
    for f in (np.floor, np.ceil, np.round):
        y = np.array(x, dtype=float)
        y[ints] = f(y[ints] + 0.0)
        y = np.clip(y, inst.lower, inst.upper)
        if inst.is_feasible(y, tol=1e-9):
            z = inst.objective(y)
            if best is None or z < best[0]:
                best = (z, y)
    return best


def _most_fractional(x: np.ndarray, ints) -> int:
    best, jbest = INT_TOL, -1
    for j in ints:
        f = x[j] - math.floor(x[j])
        fr = min(f, 1.0 - f)
        if fr > best:
            best, jbest = fr, j
    return jbest


class _Recorder:
    def __init__(self, trace: SolveTrace):
        self.trace = trace
        self.primal: float | None = None
        self.dual = -math.inf

    def update(self, work: int, primal=None, dual=None) -> None:
        changed = False
        if primal is not None and (self.primal is None or primal < self.primal - 1e-9):
            self.primal = primal
            changed = True
        if dual is not None and dual > self.dual + 1e-12:
            self.dual = dual
            changed = True
        if self.primal is not None and self.dual > self.primal:
            self.dual = self.primal
        if changed:
            self.trace.events.append(Event(work, self.primal, self.dual))


def solve(
    inst: MilpInstance,
    selector: CutSelector,
    limits: SolveLimits = SolveLimits(),
    rng_seed: int = 0,
    *,
    shuffle_seed: int = 0,
    horizon: int | None = None,
    max_cuts: int | None = None,
) -> SolveTrace:
    """Root LP, one selector call on the Gomory pool, then best-first branch and bound.

    ``shuffle_seed`` permutes the candidate pool before the selector sees it
    (0 keeps the default order).
    """
    check(inst)
    t0 = time.perf_counter()
    trace = SolveTrace(inst.name, getattr(selector, "name", type(selector).__name__), rng_seed,
                       horizon or limits.max_pivots)
    rec = _Recorder(trace)
    budget = limits.max_pivots
    slack = inst.n + inst.m
    work = 0
    ints = list(inst.integers)

    root = simplex.solve_lp(relax(inst), max_iter=budget + slack)
    work += root.pivot_count
    if root.status == simplex.UNBOUNDED:
        raise simplex.SimplexError("root relaxation is unbounded")
    if root.status == simplex.INFEASIBLE:
        trace.final_status, trace.total_work = INFEASIBLE, work
        trace.primal_cap = 0.0
        trace.events.append(Event(work, None, 0.0))
        return trace
    if root.status != simplex.OPTIMAL:
        trace.final_status, trace.total_work = BUDGET_EXHAUSTED, work
        trace.primal_cap = 0.0
        trace.events.append(Event(work, None, 0.0))
        return trace

    z_root = root.objective
    rounded = greedy_round(inst, root.x)
    trace.primal_cap = rounded[0] if rounded else z_root + 10.0 * (1.0 + abs(z_root))
    rec.update(work, rounded[0] if rounded else None, z_root)

    node = root
    pool = gomory_cuts(root, inst, max_cuts)
    trace.pool = pool
    if len(pool) and work < budget:
        shown = pool.shuffled(shuffle_seed)
        ctx = SelectionContext(inst, root, shown, np.random.default_rng(rng_seed))
        chosen = list(selector.select(ctx))
        if len(set(chosen)) != len(chosen):
            raise UnknownCut("selector returned duplicate cut ids")
        for cid in chosen:
            if cid not in pool:
                raise UnknownCut(cid)
        trace.selected_cuts = chosen
        if chosen:
            cuts = [pool.get(cid) for cid in chosen]
            node = simplex.resolve_with_rows(
                root, [c.alpha for c in cuts], [c.beta for c in cuts], chosen,
                max_iter=budget - work + slack)
            work += node.pivot_count
            if node.status != simplex.OPTIMAL:
                trace.final_status, trace.total_work = BUDGET_EXHAUSTED, work
                trace.wall_time = time.perf_counter() - t0
                return trace
            rounded = greedy_round(inst, node.x)
            rec.update(work, rounded[0] if rounded else None, node.objective)

    status, work, nodes = _branch_and_bound(inst, node, rec, ints, budget, slack,
                                            limits.max_nodes, work)
    trace.final_status, trace.total_work, trace.nodes = status, work, nodes
    trace.wall_time = time.perf_counter() - t0
    return trace


def _branch_and_bound(inst, root_node, rec: _Recorder, ints, budget, slack, max_nodes, work):
    counter = 0
    nodes = 1
    heap: list = []

    def expand(sol):
        nonlocal counter
        if rec.primal is not None and sol.objective >= rec.primal - 1e-9:
            return
        j = _most_fractional(sol.x, ints)
        if j < 0:
            y = sol.x.copy()
            y[ints] = np.round(y[ints])
            rec.update(work, inst.objective(y))
            return
        lo, hi = sol.lp.lower, sol.lp.upper
        v = sol.x[j]
        down_hi = hi.copy()
        down_hi[j] = math.floor(v)
        up_lo = lo.copy()
        up_lo[j] = math.ceil(v)
        for bounds in ((lo, down_hi), (up_lo, hi)):
            heapq.heappush(heap, (sol.objective, counter, bounds, sol))
            counter += 1

    expand(root_node)
    while heap:
        bound, _, (lo, hi), parent = heapq.heappop(heap)
        rec.update(work, dual=bound)
        if rec.primal is not None and bound >= rec.primal - 1e-9:
            continue
        if work >= budget or nodes >= max_nodes:
            heapq.heappush(heap, (bound, -1, (lo, hi), parent))
            return BUDGET_EXHAUSTED, work, nodes
        sol = simplex.resolve_with_bounds(parent, lo, hi, max_iter=budget - work + slack)
        work += sol.pivot_count
        nodes += 1
        if sol.status == simplex.ITERATION_LIMIT:
            return BUDGET_EXHAUSTED, work, nodes
        if sol.status != simplex.OPTIMAL:
            continue
        expand(sol)
    if rec.primal is None:
        return INFEASIBLE, work, nodes
    rec.update(work, dual=rec.primal)
    return OPTIMAL, work, nodes


# --------------------------------------------------------------------------- trace files

def _g(x: float) -> str:
    return format(float(x), ".17g")


def dumps_trace(trace: SolveTrace, include_pool: bool = False) -> str:
    lines = [
        f"INSTANCE {trace.instance}",
        f"SELECTOR {trace.selector}",
        f"SEED {trace.seed}",
        f"HORIZON {trace.horizon}",
        f"CAP {_g(trace.primal_cap)}",
        f"STATUS {trace.final_status}",
        f"WORK {trace.total_work}",
    ]
    for e in trace.events:
        p = "none" if e.primal is None else _g(e.primal)
        lines.append(f"EVENT {e.work} {p} {_g(e.dual)}")
    lines.append("CUTS" + "".join(f" {c}" for c in trace.selected_cuts))
    if include_pool:
        for c in trace.pool:
            nz = np.flatnonzero(c.alpha)
            lines.append(f"POOLCUT {c.id} {c.origin} {_g(c.beta)}"
                         + "".join(f" {j}:{_g(c.alpha[j])}" for j in nz))
    lines.append(f"PD {_g(pd_integral(trace))}")
    return "\n".join(lines) + "\n"


def loads_trace(text: str, n: int | None = None) -> SolveTrace:
    tr = SolveTrace("", "", 0, 1)
    pool = []
    for line in text.splitlines():
        if not line.strip():
            continue
        head, _, rest = line.partition(" ")
        parts = rest.split()
        if head == "INSTANCE":
            tr.instance = rest
        elif head == "SELECTOR":
            tr.selector = rest
        elif head == "SEED":
            tr.seed = int(parts[0])
        elif head == "HORIZON":
            tr.horizon = int(parts[0])
        elif head == "CAP":
            tr.primal_cap = float(parts[0])
        elif head == "STATUS":
            tr.final_status = parts[0]
        elif head == "WORK":
            tr.total_work = int(parts[0])
        elif head == "EVENT":
            p = None if parts[1] == "none" else float(parts[1])
            tr.events.append(Event(int(parts[0]), p, float(parts[2])))
        elif head == "CUTS":
            tr.selected_cuts = parts
        elif head == "POOLCUT":
            if n is None:
                raise MalformedTrace("POOLCUT lines need the variable count")
            alpha = np.zeros(n)
            for tok in parts[3:]:
                j, v = tok.split(":")
                alpha[int(j)] = float(v)
            pool.append(Cut(alpha, float(parts[2]), parts[1]))
        elif head == "PD":
            pass
        else:
            raise MalformedTrace(f"unknown trace line {head!r}")
    tr.pool = CutPool(pool)
    check_trace(tr)
    return tr


def write_trace(trace: SolveTrace, path, include_pool: bool = False) -> None:
    Path(path).write_text(dumps_trace(trace, include_pool), encoding="utf-8")
