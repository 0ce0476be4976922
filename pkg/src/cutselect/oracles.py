"""Independent brute-force references used by the test-suite and ``selfcheck``."""
from __future__ import annotations

import itertools
import math
from typing import Callable

import numpy as np

from . import simplex
from .cuts import gomory_cuts
from .milp import LpProblem, MilpInstance, enumerate_integer_points, generate, relax
from .neural import autodiff as ad


def random_box_lp(rng: np.random.Generator, n: int, m: int, name: str = "lp") -> LpProblem:
    """Small integer-data LP inside a finite box, so it is never unbounded."""
    A = rng.integers(-5, 6, size=(m, n)).astype(float)
    b = rng.integers(-4, 12, size=m).astype(float)
    c = rng.integers(-5, 6, size=n).astype(float)
    lo = -rng.integers(0, 4, size=n).astype(float)
    hi = rng.integers(1, 6, size=n).astype(float)
    return LpProblem(name, c, A, b, lo, hi)


def vertex_enumeration(lp: LpProblem, tol: float = 1e-9) -> float | None:
    """Minimum objective over all basic feasible points; ``None`` if infeasible.

    Only valid when every bound is finite.
    """
    if not (np.all(np.isfinite(lp.lower)) and np.all(np.isfinite(lp.upper))):
        raise ValueError("vertex enumeration needs finite bounds")
    n = lp.n
    eye = np.eye(n)
    G = np.vstack([lp.A, eye, -eye])
    h = np.concatenate([lp.b, lp.upper, -lp.lower])
    subsets = np.array(list(itertools.combinations(range(len(h)), n)), dtype=int)
    M = G[subsets]
    rhs = h[subsets]
    ok = np.abs(np.linalg.det(M)) > 1e-9
    if not ok.any():
        return None
    X = np.linalg.solve(M[ok], rhs[ok][..., None])[..., 0]
    slack = X @ G.T - h
    feas = np.all(slack <= tol * (1.0 + np.abs(h)), axis=1)
    if not feas.any():
        return None
    return float((X[feas] @ lp.c).min())


def random_integer_instance(rng: np.random.Generator, n: int, m: int, name: str = "ip") -> MilpInstance:
    """Pure-integer instance with small boxes, feasible at the origin."""
    A = rng.integers(-3, 8, size=(m, n)).astype(float)
    A[A == 0] = 1.0
    hi = rng.integers(1, 4, size=n).astype(float)
    b = np.floor(np.clip(A, 0, None) @ hi * rng.uniform(0.3, 0.7, size=m)) + 1.0
    c = -rng.integers(1, 10, size=n).astype(float)
    return MilpInstance(name, c, A, b, np.zeros(n), hi, tuple(range(n)))


def cut_validity(inst: MilpInstance, tol: float = 1e-9) -> tuple[int, list[str]]:
    """Check every root Gomory cut against all integer points; returns (cut count, problems)."""
    sol = simplex.solve_lp(relax(inst))
    if sol.status != simplex.OPTIMAL:
        return 0, []
    pool = gomory_cuts(sol, inst)
    pts = enumerate_integer_points(inst)
    problems = []
    for cut in pool:
        if len(pts):
            worst = float((pts @ cut.alpha - cut.beta).max())
            if worst > tol:
                problems.append(f"{inst.name}: cut {cut.id} cuts off an integer point by {worst:.3g}")
        if not cut.violation(sol.x) > tol:
            problems.append(f"{inst.name}: cut {cut.id} not violated at the LP optimum")
    return len(pool), problems


def rel_error(num: float, an: float, floor: float = 1e-6) -> float:
    return abs(num - an) / max(abs(num), abs(an), floor)


def finite_difference_check(fn: Callable[[dict], ad.Tensor], params: dict[str, np.ndarray],
                            eps: float = 1e-5, coords: int = 4,
                            rng: np.random.Generator | None = None) -> tuple[float, str]:
    """Largest relative error between backprop and central differences.

    ``fn`` maps a dict of bound parameter tensors to a scalar tensor.  At most
    ``coords`` coordinates per parameter are probed.
    """
    rng = rng or np.random.default_rng(0)
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    P = {k: ad.parameter(v, name=k) for k, v in params.items()}
    fn(P).backward()
    worst, where = 0.0, ""
    for name in sorted(params):
        g = P[name].grad if P[name].grad is not None else np.zeros_like(params[name])
        flat = params[name].reshape(-1)
        picks = rng.choice(flat.size, size=min(coords, flat.size), replace=False) if flat.size else []
        for t in picks:
            old = flat[t]
            flat[t] = old + eps
            fp = fn({k: ad.Tensor(v) for k, v in params.items()}).item()
            flat[t] = old - eps
            fm = fn({k: ad.Tensor(v) for k, v in params.items()}).item()
            flat[t] = old
            err = rel_error((fp - fm) / (2 * eps), float(g.reshape(-1)[t]))
            if err > worst:
                worst, where = err, f"{name}[{t}]"
    return worst, where


def selfcheck(quick: bool = True) -> list[tuple[str, bool, str]]:
    """Small versions of the LP, cut and gradient oracle suites."""
    from .graph import build_graph
    from .neural import layers as L
    rng = np.random.default_rng(12345)
    out = []

    n_lp = 100 if quick else 1000
    bad = 0
    for k in range(n_lp):
        lp = random_box_lp(rng, int(rng.integers(1, 7)), int(rng.integers(1, 7)))
        ref = vertex_enumeration(lp)
        sol = simplex.solve_lp(lp)
        if ref is None:
            bad += sol.status != simplex.INFEASIBLE
        else:
            bad += sol.status != simplex.OPTIMAL or abs(sol.objective - ref) > 1e-6
    out.append(("lp-vertex-enumeration", bad == 0, f"{n_lp - bad}/{n_lp} agree"))

    problems, total = [], 0
    for k in range(10 if quick else 100):
        inst = random_integer_instance(rng, int(rng.integers(2, 9)), int(rng.integers(1, 5)), f"ip{k}")
        cnt, errs = cut_validity(inst)
        total += cnt
        problems += errs
    out.append(("gomory-cut-validity", not problems, f"{total} cuts, {len(problems)} problems"))

    inst = generate("packing", 3, 8, 4)
    sol = simplex.solve_lp(relax(inst))
    g = build_graph(inst, sol, gomory_cuts(sol, inst))
    cfg = L.NetConfig(d=8, heads=2, layers=2, hidden=6)
    params = L.init_params(cfg, 1)

    def loss(P):
        h = L.hgt_forward(g, P, cfg)
        pooled = L.attention_pool(h["cut"], P["pool.query"])
        mu, sigma = L.ratio_head(pooled, P)
        tot = L.tanh_gaussian_logprob(0.3, mu, sigma) + ad.square(L.value_head(pooled, P))
        _, lps = L.pointer_decode(h["cut"], pooled, P, 1, forced=[0])
        return tot + lps[0]
    err, where = finite_difference_check(loss, params, coords=2, rng=rng)
    out.append(("network-gradients", err < 1e-4, f"max rel error {err:.2e} at {where}"))
    return out
