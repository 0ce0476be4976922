"""Tripartite variable / constraint / cut state graph with node features."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import simplex
from .cuts import CutPool, feature_matrix
from .milp import MilpInstance
from .simplex import SimplexSolution

VAR_DIM, CON_DIM, CUT_DIM = 17, 16, 13
NODE_TYPES = ("var", "con", "cut")
RELATIONS = (
    ("var", "con"), ("con", "var"),
    ("var", "cut"), ("cut", "var"),
    ("con", "cut"), ("cut", "con"),
)
PARALLEL_TOL = 1e-9
_AT_TOL = 1e-6


class EmptyPool(ValueError):
    pass


def _onehot(k: int, size: int = 4) -> list[float]:
    v = [0.0] * size
    v[k] = 1.0
    return v


def var_features(inst: MilpInstance, sol: SimplexSolution, age=None, n_lps: int = 1) -> np.ndarray:
    """Per-variable rows of 17 features.

    Layout: norm_coef, type one-hot (binary, integer, implint, continuous),
    has_lb, has_ub, norm_redcost, solval, solfrac, at_lb, at_ub, norm_age,
    basestat one-hot (lower, basic, upper, zero).
    """
    cn = float(np.linalg.norm(inst.c)) or 1.0
    is_int = inst.is_integer
    age = np.zeros(inst.n) if age is None else np.asarray(age, dtype=float)
    rows = []
    for j in range(inst.n):
        lo, hi, x = inst.lower[j], inst.upper[j], sol.x[j]
        if is_int[j]:
            kind = 0 if lo == 0 and hi == 1 else 1
        else:
            kind = 3
        rows.append(
            [inst.c[j] / cn]
            + _onehot(kind)
            + [float(np.isfinite(lo)), float(np.isfinite(hi)),
               sol.reduced_costs[j] / cn, x, x - np.floor(x),
               float(np.isfinite(lo) and abs(x - lo) <= _AT_TOL),
               float(np.isfinite(hi) and abs(x - hi) <= _AT_TOL),
               age[j] / max(n_lps, 1)]
            + _onehot(int(sol.col_status[j]))
        )
    return np.array(rows, dtype=float).reshape(inst.n, VAR_DIM)


def con_features(inst: MilpInstance, sol: SimplexSolution, age=None, n_lps: int = 1) -> np.ndarray:
    """Per-row rows of 16 features for the original constraints.

    Layout: rank, norm_nnzrs, norm_bias, at_lhs, at_rhs, norm_dualsol,
    basestat one-hot of the slack, norm_age, norm_nlp_creation, norm_intcols,
    is_integral, is_removable, is_in_lp.
    """
    cn = float(np.linalg.norm(inst.c)) or 1.0
    is_int = inst.is_integer
    age = np.zeros(inst.m) if age is None else np.asarray(age, dtype=float)
    act = inst.A @ sol.x
    rows = []
    for i in range(inst.m):
        a = inst.A[i]
        nz = a != 0
        nnz = int(nz.sum())
        rn = float(np.linalg.norm(a))
        integral = bool(np.all(is_int[nz]) and np.all(a[nz] == np.round(a[nz]))
                        and inst.b[i] == np.round(inst.b[i]))
        rows.append(
            [0.0, nnz / inst.n, inst.b[i] / rn, 0.0,
             float(abs(act[i] - inst.b[i]) <= _AT_TOL),
             sol.duals[i] / (rn * cn)]
            + _onehot(int(sol.row_status[i]))
            + [age[i] / max(n_lps, 1), 0.0,
               float(np.count_nonzero(is_int[nz])) / nnz,
               float(integral), 0.0, 1.0]
        )
    return np.array(rows, dtype=float).reshape(inst.m, CON_DIM)


@dataclass(frozen=True, eq=False)
class StateGraph:
    var_feats: np.ndarray
    con_feats: np.ndarray
    cut_feats: np.ndarray
    edges: dict           # (src type, dst type) -> int array of shape (2, E)
    cut_ids: tuple[str, ...]

    @property
    def counts(self) -> dict:
        return {"var": len(self.var_feats), "con": len(self.con_feats), "cut": len(self.cut_feats)}

    def feats(self, kind: str) -> np.ndarray:
        return {"var": self.var_feats, "con": self.con_feats, "cut": self.cut_feats}[kind]

    def permute_cuts(self, perm) -> "StateGraph":
        """Reorder cut nodes so new position ``k`` holds old cut ``perm[k]``."""
        perm = np.asarray(perm, dtype=int)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        edges = {}
        for rel, e in self.edges.items():
            e = e.copy()
            if rel[0] == "cut":
                e[0] = inv[e[0]]
            if rel[1] == "cut":
                e[1] = inv[e[1]]
            edges[rel] = e
        return StateGraph(self.var_feats, self.con_feats, self.cut_feats[perm], edges,
                          tuple(self.cut_ids[k] for k in perm))

    def canonical(self):
        """Cut nodes sorted by id and the permutation used."""
        perm = np.array(sorted(range(len(self.cut_ids)), key=lambda k: self.cut_ids[k]), dtype=int)
        g = self.permute_cuts(perm)
        # edge order fixes the summation order inside segment reductions
        for rel, e in g.edges.items():
            g.edges[rel] = e[:, np.lexsort((e[0], e[1]))]
        return g, perm

    def dumps(self) -> str:
        lines = [f"NODES var={len(self.var_feats)} con={len(self.con_feats)} cut={len(self.cut_feats)}"]
        for kind in NODE_TYPES:
            for k, row in enumerate(self.feats(kind)):
                lines.append(f"{kind.upper()} {k} " + " ".join(format(v, ".17g") for v in row))
        for rel in RELATIONS:
            e = self.edges[rel]
            lines.append(f"EDGES {rel[0]}->{rel[1]} " + " ".join(f"{s}:{t}" for s, t in e.T))
        return "\n".join(lines) + "\n"


def _pairs(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(forward, reverse) edge arrays from a boolean (src, dst) mask, in row-major order."""
    s, t = np.nonzero(mask)
    fwd = np.stack([s, t]).astype(np.int64)
    order = np.lexsort((s, t))
    rev = np.stack([t[order], s[order]]).astype(np.int64)
    return fwd, rev


def build_graph(inst: MilpInstance, sol: SimplexSolution, pool: CutPool) -> StateGraph:
    if len(pool) == 0:
        raise EmptyPool("state graph needs at least one candidate cut")
    if not sol.optimal:
        raise simplex.NotOptimal("state graph needs an optimal LP solution")
    alphas = np.stack([c.alpha for c in pool])
    A = inst.A
    edges = {}
    edges[("var", "con")], edges[("con", "var")] = _pairs((A != 0).T)
    edges[("var", "cut")], edges[("cut", "var")] = _pairs((alphas != 0).T)
    rn = np.linalg.norm(A, axis=1)
    an = np.linalg.norm(alphas, axis=1)
    cos = (A @ alphas.T) / np.outer(rn, an)
    edges[("con", "cut")], edges[("cut", "con")] = _pairs(np.abs(cos) > PARALLEL_TOL)
    return StateGraph(
        var_features(inst, sol),
        con_features(inst, sol),
        feature_matrix(pool, inst, sol),
        edges,
        tuple(pool.ids),
    )
