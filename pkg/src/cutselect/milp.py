"""MILP instance model, validation, LP relaxation, generators and file IO.

Instances are stored in canonical form::

    min  c^T x   s.t.  A x <= b,  lower <= x <= upper,  x_j integer for j in I

Maximisation objectives and ``>=`` / ``=`` rows are converted by
:func:`from_general`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

COEF_CAP = 1e9
KINDS = ("knapsack", "packing", "setcover")


class InvalidInstance(ValueError):
    """Raised when an instance breaks one of the canonical-form invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


@dataclass(frozen=True)
class Violation:
    kind: str
    field: str
    index: int | None = None

    def __str__(self):
        idx = "" if self.index is None else f"[{self.index}]"
        return f"{self.kind} at {self.field}{idx}"


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MilpInstance:
    name: str
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    integers: tuple[int, ...] = ()

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.size == 0:
            A = A.reshape(0, len(self.c))
        object.__setattr__(self, "c", _frozen(self.c))
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "b", _frozen(self.b))
        object.__setattr__(self, "lower", _frozen(self.lower))
        object.__setattr__(self, "upper", _frozen(self.upper))
        object.__setattr__(self, "integers", tuple(sorted({int(j) for j in self.integers})))

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def is_integer(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[list(self.integers)] = True
        return mask

    def __eq__(self, other):
        if not isinstance(other, MilpInstance):
            return NotImplemented
        return (
            self.name == other.name
            and self.integers == other.integers
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("c", "A", "b", "lower", "upper")
            )
        )

    __hash__ = None

    def objective(self, x) -> float:
        return float(self.c @ np.asarray(x, dtype=float))

    def is_feasible(self, x, tol: float = 1e-6) -> bool:
        """Check bounds, rows and integrality of a candidate point."""
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lower - tol) or np.any(x > self.upper + tol):
            return False
        if self.m and np.any(self.A @ x > self.b + tol):
            return False
        xi = x[list(self.integers)]
        return bool(np.all(np.abs(xi - np.round(xi)) <= tol))


@dataclass(frozen=True, eq=False)
class LpProblem:
    """LP relaxation: the instance data without integrality, plus appended cut rows."""

    name: str
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    cut_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.size == 0:
            A = A.reshape(0, len(self.c))
        object.__setattr__(self, "c", _frozen(self.c))
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "b", _frozen(self.b))
        object.__setattr__(self, "lower", _frozen(self.lower))
        object.__setattr__(self, "upper", _frozen(self.upper))
        object.__setattr__(self, "cut_ids", tuple(self.cut_ids))

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def with_rows(self, alphas, betas, ids=()) -> "LpProblem":
        alphas = np.atleast_2d(np.asarray(alphas, dtype=float)).reshape(-1, self.n)
        return LpProblem(
            self.name,
            self.c,
            np.vstack([self.A, alphas]),
            np.concatenate([self.b, np.asarray(betas, dtype=float).ravel()]),
            self.lower,
            self.upper,
            self.cut_ids + tuple(ids),
        )

    def with_bounds(self, lower, upper) -> "LpProblem":
        return LpProblem(self.name, self.c, self.A, self.b, lower, upper, self.cut_ids)


def validate(inst: MilpInstance) -> list[Violation]:
    """Return every invariant violation of ``inst`` (empty list when valid)."""
    out: list[Violation] = []
    n = inst.n
    for key, arr, size in (("c", inst.c, n), ("b", inst.b, inst.m),
                           ("lower", inst.lower, n), ("upper", inst.upper, n)):
        if arr.shape != (size,):
            out.append(Violation("shape-mismatch", key))
    if inst.A.shape[1] != n:
        out.append(Violation("shape-mismatch", "A"))
    if out:
        return out

    for j in range(n):
        if inst.lower[j] > inst.upper[j]:
            out.append(Violation("bound-order", "bounds", j))
        if np.isnan(inst.lower[j]) or np.isnan(inst.upper[j]) or inst.lower[j] == math.inf \
                or inst.upper[j] == -math.inf:
            out.append(Violation("bad-bound", "bounds", j))
    for j in range(n):
        if not np.isfinite(inst.c[j]) or abs(inst.c[j]) > COEF_CAP:
            out.append(Violation("coefficient", "c", j))
    for i in range(inst.m):
        row = inst.A[i]
        if not np.all(np.isfinite(row)) or np.any(np.abs(row) > COEF_CAP):
            out.append(Violation("coefficient", "A", i))
        elif not np.any(row != 0):
            out.append(Violation("empty-row", "A", i))
        if not np.isfinite(inst.b[i]) or abs(inst.b[i]) > COEF_CAP:
            out.append(Violation("coefficient", "b", i))
    for j in inst.integers:
        if not 0 <= j < n:
            out.append(Violation("index-range", "integers", j))
    return out


def check(inst: MilpInstance) -> MilpInstance:
    problems = validate(inst)
    if problems:
        raise InvalidInstance(problems)
    return inst


def relax(inst: MilpInstance) -> LpProblem:
    """Drop integrality; no cut rows are attached yet."""
    check(inst)
    return LpProblem(inst.name, inst.c, inst.A, inst.b, inst.lower, inst.upper)


def from_general(name, c, rows, senses, rhs, lower, upper, integers=(), maximize=False):
    """Build a canonical instance from rows with senses in ``{'<=', '>=', '='}``.

    ``>=`` rows are negated and ``=`` rows split into two ``<=`` rows.
    """
    c = np.asarray(c, dtype=float)
    A_out, b_out = [], []
    for row, sense, r in zip(np.atleast_2d(np.asarray(rows, dtype=float)), senses, rhs):
        if sense == "<=":
            A_out.append(row); b_out.append(r)
        elif sense == ">=":
            A_out.append(-row); b_out.append(-r)
        elif sense == "=":
            A_out += [row, -row]; b_out += [r, -r]
        else:
            raise ValueError(f"unknown row sense {sense!r}")
    A = np.array(A_out, dtype=float).reshape(len(A_out), len(c))
    return check(MilpInstance(name, -c if maximize else c, A, np.array(b_out, dtype=float),
                              lower, upper, tuple(integers)))


# --------------------------------------------------------------------------- generators

def generate(kind: str, seed: int, n: int, m: int) -> MilpInstance:
    """Deterministic synthetic instance of the given family.

    knapsack: binary multi-dimensional knapsack with correlated profits.
    packing:  general integers in [0, 10] plus a continuous quarter of columns.
    setcover: binary covering rows ``-sum x_j <= -1``.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown generator kind {kind!r}")
    if not (2 <= n <= 200 and 1 <= m <= 200):
        raise ValueError(f"size out of range: n={n}, m={m} (need 2<=n<=200, 1<=m<=200)")
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, KINDS.index(kind), n, m])
    rng = np.random.Generator(np.random.PCG64(ss))
    name = f"{kind}-s{seed}-n{n}-m{m}"
    return {"knapsack": _knapsack, "packing": _packing, "setcover": _setcover}[kind](rng, name, n, m)


def _knapsack(rng, name, n, m):
    W = rng.integers(1, 101, size=(m, n)).astype(float)
    profit = np.round(W.mean(axis=0) + rng.integers(-10, 11, size=n)).clip(1, None)
    tight = rng.uniform(0.3, 0.6, size=m)
    b = np.floor(tight * W.sum(axis=1))
    b = np.maximum(b, W.max(axis=1))
    return MilpInstance(name, -profit, W, b, np.zeros(n), np.ones(n), tuple(range(n)))


def _packing(rng, name, n, m):
    A = np.zeros((m, n))
    for i in range(m):
        k = int(rng.integers(2, max(3, n // 2 + 1))) if n > 2 else 2
        cols = rng.choice(n, size=min(k, n), replace=False)
        A[i, cols] = rng.integers(1, 21, size=len(cols))
    for j in np.flatnonzero(~A.any(axis=0)):
        A[int(rng.integers(m)), j] = float(rng.integers(1, 21))
    b = np.floor(rng.uniform(2.0, 6.0, size=m) * A.max(axis=1))
    n_int = max(1, n - n // 4)
    profit = rng.integers(1, 51, size=n).astype(float)
    return MilpInstance(name, -profit, A, b, np.zeros(n), np.full(n, 10.0), tuple(range(n_int)))


def _setcover(rng, name, n, m):
    A = np.zeros((m, n))
    for i in range(m):
        k = int(rng.integers(2, max(3, n // 3 + 1))) if n > 2 else 2
        cols = rng.choice(n, size=min(k, n), replace=False)
        A[i, cols] = -1.0
    cost = rng.integers(1, 101, size=n).astype(float)
    return MilpInstance(name, cost, A, -np.ones(m), np.zeros(n), np.ones(n), tuple(range(n)))


# --------------------------------------------------------------------------- file IO

def _fmt(x: float) -> str:
    if x == math.inf:
        return "inf"
    if x == -math.inf:
        return "-inf"
    return repr(float(x))


def dumps(inst: MilpInstance) -> str:
    lines = [f"NAME {inst.name}", f"VARS {inst.n}", "OBJ " + " ".join(_fmt(v) for v in inst.c)]
    for j in range(inst.n):
        lines.append(f"BOUNDS {j} {_fmt(inst.lower[j])} {_fmt(inst.upper[j])}")
    lines.append("INT" + "".join(f" {j}" for j in inst.integers))
    for i in range(inst.m):
        nz = np.flatnonzero(inst.A[i])
        lines.append(f"ROW {_fmt(inst.b[i])}" + "".join(f" {j}:{_fmt(inst.A[i, j])}" for j in nz))
    return "\n".join(lines) + "\n"


def write_instance(inst: MilpInstance, path) -> None:
    Path(path).write_text(dumps(inst), encoding="utf-8")


def _num(tok: str, lineno: int, what: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ParseError(f"bad number {tok!r} in {what}", lineno) from None


def _int(tok: str, lineno: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"bad index {tok!r} in {what}", lineno) from None


def loads(text: str) -> MilpInstance:
    name, n, obj, integers = None, None, None, ()
    bounds: dict[int, tuple[float, float]] = {}
    rows: list[tuple[float, list[tuple[int, float]]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        if head == "NAME":
            name = " ".join(rest)
        elif head == "VARS":
            if len(rest) != 1:
                raise ParseError("VARS expects one count", lineno)
            n = _int(rest[0], lineno, "VARS")
            if n < 1:
                raise ParseError("VARS must be positive", lineno)
        elif head == "OBJ":
            if n is None:
                raise ParseError("OBJ before VARS", lineno)
            if len(rest) != n:
                raise ParseError(f"OBJ length mismatch: VARS declares {n}, got {len(rest)}", lineno)
            obj = [_num(t, lineno, "OBJ") for t in rest]
        elif head == "BOUNDS":
            if len(rest) != 3:
                raise ParseError("BOUNDS expects 'j lo hi'", lineno)
            j = _int(rest[0], lineno, "BOUNDS")
            if n is None or not 0 <= j < n:
                raise ParseError(f"BOUNDS index {j} out of range", lineno)
            bounds[j] = (_num(rest[1], lineno, "BOUNDS"), _num(rest[2], lineno, "BOUNDS"))
        elif head == "INT":
            integers = tuple(_int(t, lineno, "INT") for t in rest)
            if n is not None and any(not 0 <= j < n for j in integers):
                raise ParseError("INT index out of range", lineno)
        elif head == "ROW":
            if not rest:
                raise ParseError("ROW needs a right-hand side", lineno)
            rhs = _num(rest[0], lineno, "ROW")
            entries = []
            for tok in rest[1:]:
                if ":" not in tok:
                    raise ParseError(f"ROW entry {tok!r} is not idx:coef", lineno)
                a, b = tok.split(":", 1)
                j = _int(a, lineno, "ROW")
                if n is None or not 0 <= j < n:
                    raise ParseError(f"ROW index {j} out of range", lineno)
                entries.append((j, _num(b, lineno, "ROW")))
            rows.append((rhs, entries))
        else:
            raise ParseError(f"unknown section {head!r}", lineno)
    for section, value in (("NAME", name), ("VARS", n), ("OBJ", obj)):
        if value is None:
            raise ParseError(f"missing {section} section")
    lower = np.zeros(n)
    upper = np.full(n, math.inf)
    for j, (lo, hi) in bounds.items():
        lower[j], upper[j] = lo, hi
    A = np.zeros((len(rows), n))
    for i, (_, entries) in enumerate(rows):
        for j, v in entries:
            A[i, j] = v
    b = np.array([r for r, _ in rows], dtype=float)
    return check(MilpInstance(name, obj, A, b, lower, upper, integers))


def read_instance(path) -> MilpInstance:
    return loads(Path(path).read_text(encoding="utf-8"))


def enumerate_integer_points(inst: MilpInstance, limit: int = 1 << 16) -> np.ndarray:
    """All feasible points of a pure-integer instance with finite bounds (test oracle)."""
    if len(inst.integers) != inst.n:
        raise ValueError("enumeration needs every variable integer")
    ranges = [np.arange(math.ceil(lo), math.floor(hi) + 1) for lo, hi in zip(inst.lower, inst.upper)]
    total = math.prod(len(r) for r in ranges)
    if total > limit:
        raise ValueError(f"{total} points exceed the enumeration limit")
    grid = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, inst.n).astype(float)
    if inst.m:
        grid = grid[np.all(grid @ inst.A.T <= inst.b + 1e-9, axis=1)]
    return grid


def dataset_files(directory) -> list[Path]:
    return sorted(Path(directory).glob("*.milp"))


def load_dataset(paths: Iterable) -> list[MilpInstance]:
    out = []
    for p in paths:
        p = Path(p)
        out.extend(read_instance(f) for f in (dataset_files(p) if p.is_dir() else [p]))
    return out


def write_dataset(instances: Sequence[MilpInstance], directory) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, inst in enumerate(instances):
        p = d / f"{k:04d}_{inst.name}.milp"
        write_instance(inst, p)
        paths.append(p)
    return paths
