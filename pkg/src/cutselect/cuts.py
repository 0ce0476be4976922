"""Gomory cuts from the optimal root tableau, cut features and heuristic scores."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import simplex
from .milp import MilpInstance
from .simplex import LOWER, UPPER, ZERO, SimplexSolution

FRAC_TOL = 1e-6
_SNAP = 1e-9
_ZERO_COEF = 1e-12

FEATURE_NAMES = (
    "coef_mean", "coef_max", "coef_min", "coef_std",
    "obj_mean", "obj_max", "obj_min", "obj_std",
    "parallelism", "efficacy", "support", "integral_support", "normalized_violation",
)


def cut_id(alpha: np.ndarray, beta: float) -> str:
    """Content hash of ``(alpha, beta)`` rounded to 1e-12."""
    data = np.round(np.append(np.asarray(alpha, dtype=float), beta), 12) + 0.0
    return hashlib.sha1(data.tobytes()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class Cut:
    """Inequality ``alpha @ x <= beta``."""

    alpha: np.ndarray
    beta: float
    origin: str = "injected"
    id: str = ""

    def __post_init__(self):
        a = np.array(self.alpha, dtype=float)
        if not np.any(a != 0):
            raise ValueError("cut needs at least one nonzero coefficient")
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", float(self.beta))
        if not self.id:
            object.__setattr__(self, "id", cut_id(a, self.beta))

    def __eq__(self, other):
        return isinstance(other, Cut) and self.id == other.id

    def __hash__(self):
        return hash(self.id)

    def activity(self, x) -> float:
        return float(self.alpha @ np.asarray(x, dtype=float))

    def violation(self, x) -> float:
        return self.activity(x) - self.beta

    def scaled(self, factor: float) -> "Cut":
        return Cut(self.alpha * factor, self.beta * factor, self.origin)


class CutPool(Sequence):
    """Ordered candidate cuts; position order is the solver's default order."""

    def __init__(self, cuts: Sequence[Cut] = ()):
        self._cuts = tuple(cuts)
        self._index = {c.id: k for k, c in enumerate(self._cuts)}
        if len(self._index) != len(self._cuts):
            raise ValueError("duplicate cut ids in pool")

    def __getitem__(self, k):
        return self._cuts[k]

    def __len__(self):
        return len(self._cuts)

    def __iter__(self) -> Iterator[Cut]:
        return iter(self._cuts)

    def __repr__(self):
        return f"CutPool({len(self)} cuts)"

    @property
    def ids(self) -> list[str]:
        return [c.id for c in self._cuts]

    def get(self, cid: str) -> Cut:
        return self._cuts[self._index[cid]]

    def __contains__(self, cid) -> bool:
        return cid in self._index

    def permuted(self, perm) -> "CutPool":
        return CutPool([self._cuts[int(k)] for k in perm])

    def shuffled(self, seed: int) -> "CutPool":
        """Seed 0 keeps the default order."""
        if seed == 0:
            return self
        return self.permuted(np.random.default_rng(seed).permutation(len(self)))


def _frac(v: float) -> float:
    f = v - math.floor(v)
    return 0.0 if f < _SNAP or f > 1.0 - _SNAP else f


def _integral_rows(A: np.ndarray, b: np.ndarray, is_int: np.ndarray) -> np.ndarray:
    out = np.zeros(len(b), dtype=bool)
    for i in range(len(b)):
        nz = A[i] != 0
        out[i] = (np.all(is_int[nz]) and np.all(A[i, nz] == np.round(A[i, nz]))
                  and b[i] == round(b[i]))
    return out


def _derive(row, value, stat, lo, hi, x_int, n, A, b):
    """Cut from ``x_basic + sum_k a_k xt_k = value`` in nonbasic displacements ``xt``."""
    f0 = value - math.floor(value)
    ks = np.flatnonzero((np.abs(row) > _ZERO_COEF) & (stat != simplex.BASIC) & (hi > lo))
    a = np.empty(len(ks))
    shift_up = np.zeros(len(ks), dtype=bool)
    integral = np.empty(len(ks), dtype=bool)
    for t, k in enumerate(ks):
        if stat[k] == ZERO:
            return None
        if stat[k] == LOWER:
            a[t] = row[k]
            integral[t] = x_int[k] and lo[k] == round(lo[k])
        else:
            a[t] = -row[k]
            shift_up[t] = True
            integral[t] = x_int[k] and hi[k] == round(hi[k])
    if integral.all():
        g = np.array([_frac(v) for v in a])
        g0 = f0
    else:
        g = np.empty(len(ks))
        for t in range(len(ks)):
            if integral[t]:
                fk = _frac(a[t])
                g[t] = fk / f0 if fk <= f0 else (1.0 - fk) / (1.0 - f0)
            else:
                g[t] = a[t] / f0 if a[t] > 0 else -a[t] / (1.0 - f0)
        g0 = 1.0
    # back-substitute xt_k in terms of x:  sum g xt >= g0  ->  coef @ x + const >= g0
    coef = np.zeros(n)
    const = 0.0
    for t, k in enumerate(ks):
        gk = g[t]
        if gk == 0.0:
            continue
        if k < n:
            if shift_up[t]:
                coef[k] -= gk
                const += gk * hi[k]
            else:
                coef[k] += gk
                const -= gk * lo[k]
        else:
            i = k - n
            coef -= gk * A[i]
            const += gk * b[i] - gk * lo[k]
    alpha, beta = -coef, const - g0
    for j in np.flatnonzero((np.abs(alpha) < _ZERO_COEF) & (alpha != 0)):
        reach = max(abs(lo[j]), abs(hi[j]))
        if not math.isfinite(reach):
            continue
        beta += abs(alpha[j]) * reach
        alpha[j] = 0.0
    if not np.any(alpha != 0):
        return None
    return alpha, beta


def gomory_cuts(sol: SimplexSolution, inst: MilpInstance, max_cuts: int | None = None) -> CutPool:
    """One Gomory cut per fractional basic integer variable.

    Rows whose nonbasic integer columns all have integral bounds give the
    pure fractional cut; rows touching continuous columns use the
    mixed-integer rounding of the same tableau row.  The pool keeps the
    ``max_cuts`` most fractional rows, listed in basis-row order.
    """
    if not sol.optimal:
        raise simplex.NotOptimal("cuts need an optimal LP solution")
    lp = sol.lp
    n = inst.n
    tab = sol._tab
    stat = tab.stat
    lo, hi = tab.lo, tab.hi
    is_int = inst.is_integer
    x_int = np.concatenate([is_int, _integral_rows(lp.A, lp.b, is_int)])
    xs = sol.x
    found = []
    for r, j in enumerate(tab.basis):
        if j >= n or not is_int[j]:
            continue
        v = tab.x[j]
        fr = min(v - math.floor(v), math.ceil(v) - v)
        if fr <= FRAC_TOL:
            continue
        out = _derive(tab.T[r], v, stat, lo, hi, x_int, n, lp.A, lp.b)
        if out is None:
            continue
        alpha, beta = out
        cut = Cut(alpha, beta, "gomory")
        viol = cut.violation(xs)
        if viol <= 1e-6 * max(1.0, np.abs(alpha).max()):
            continue
        found.append((fr, r, cut))
    if max_cuts is not None and len(found) > max_cuts:
        found = sorted(found, key=lambda t: (-t[0], t[1]))[:max_cuts]
        found.sort(key=lambda t: t[1])
    seen, cuts = set(), []
    for _, _, c in found:
        if c.id not in seen:
            seen.add(c.id)
            cuts.append(c)
    return CutPool(cuts)


def _stats(v: np.ndarray) -> list[float]:
    if v.size == 0:
        return [0.0, 0.0, 0.0, 0.0]
    return [float(v.mean()), float(v.max()), float(v.min()), float(v.std())]


def efficacy(cut: Cut, x) -> float:
    return cut.violation(x) / float(np.linalg.norm(cut.alpha))


def normalized_violation(cut: Cut, x) -> float:
    return max(0.0, cut.violation(x) / max(abs(cut.beta), 1.0))


def features(cut: Cut, inst: MilpInstance, sol: SimplexSolution) -> np.ndarray:
    """The 13 cut features in the order of :data:`FEATURE_NAMES`."""
    if not sol.optimal:
        raise simplex.NotOptimal("features need an optimal LP solution")
    a = cut.alpha
    nz = np.flatnonzero(a)
    an = float(np.linalg.norm(a))
    cn = float(np.linalg.norm(inst.c))
    par = float(inst.c @ a) / (cn * an) if cn > 0 else 0.0
    out = _stats(a[nz]) + _stats(inst.c[nz]) + [
        min(1.0, max(-1.0, par)),
        efficacy(cut, sol.x),
        len(nz) / inst.n,
        float(np.count_nonzero(inst.is_integer[nz])) / len(nz),
        normalized_violation(cut, sol.x),
    ]
    return np.array(out)


def feature_matrix(pool: CutPool, inst: MilpInstance, sol: SimplexSolution) -> np.ndarray:
    if len(pool) == 0:
        return np.zeros((0, len(FEATURE_NAMES)))
    return np.stack([features(c, inst, sol) for c in pool])


def nv_score(cut: Cut, sol: SimplexSolution) -> float:
    return normalized_violation(cut, sol.x)


def eff_score(cut: Cut, sol: SimplexSolution) -> float:
    return efficacy(cut, sol.x)
