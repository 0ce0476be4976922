"""Benchmark metrics: solve statistics, order stability and shuffle tables."""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .branchcut import SolveLimits, solve
from .graph import EmptyPool
from .milp import MilpInstance

log = logging.getLogger(__name__)

EVAL_HEADER = ("dataset", "selector", "n_instances", "work_mean", "work_std", "pd_mean", "pd_std")
STABILITY_HEADER = ("dataset", "selector", "seed", "stability")
SHUFFLE_HEADER = ("seed", "work", "pd_integral")


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


@dataclass(frozen=True)
class MetricsRow:
    dataset: str
    selector: str
    n_instances: int
    work_mean: float
    work_std: float
    pd_mean: float
    pd_std: float

    def __post_init__(self):
        if self.n_instances <= 0:
            raise ValueError("metrics need at least one instance")

    def values(self) -> tuple:
        return tuple(getattr(self, k) for k in EVAL_HEADER)


@dataclass
class StabilityReport:
    dataset: str
    selector: str
    per_seed: dict[int, float]
    stability: float
    baseline: float | None = None
    excluded: list[str] = field(default_factory=list)

    @property
    def improvement_over_baseline(self) -> float | None:
        return None if self.baseline is None else improvement(self.baseline, self.stability)


def _run(task):
    k, inst, selector, limits, seed, shuffle_seed, horizon = task
    tr = solve(inst, selector, limits, seed, shuffle_seed=shuffle_seed, horizon=horizon)
    return k, seed, shuffle_seed, tr.total_work, tr.pd_integral


def _run_all(tasks: list, jobs: int) -> list:
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(jobs) as ex:
            out = list(ex.map(_run, tasks))
    else:
        out = [_run(t) for t in tasks]
    return sorted(out, key=lambda r: r[:3])


def evaluate(dataset: Sequence[MilpInstance], selector, limits: SolveLimits = SolveLimits(),
             seeds: Iterable[int] = (0,), *, horizon: int | None = None, dataset_id: str = "dataset",
             jobs: int = 1) -> MetricsRow:
    """Mean and population std of work and PD integral over instances x seeds."""
    if not dataset:
        raise ValueError("dataset is empty")
    tasks = [(k, inst, selector, limits, s, 0, horizon)
             for k, inst in enumerate(dataset) for s in seeds]
    res = _run_all(tasks, jobs)
    work = np.array([r[3] for r in res], dtype=float)
    pd = np.array([r[4] for r in res], dtype=float)
    return MetricsRow(dataset_id, selector.name, len(dataset), float(work.mean()), float(work.std()),
                      float(pd.mean()), float(pd.std()))


def stability_score(ir: Sequence[float], id_: Sequence[float]) -> float:
    """Mean over problems of ``max/min`` of shuffled vs default integrals, minus 1."""
    if len(ir) != len(id_) or not len(ir):
        raise ValueError("need equally many shuffled and default integrals")
    ratios = []
    for a, b in zip(ir, id_):
        lo, hi = min(a, b), max(a, b)
        if lo <= 0:
            raise ValueError("integrals must be positive")
        ratios.append(hi / lo)
    return math.fsum(ratios) / len(ratios) - 1.0


def improvement(s_base: float, s_ours: float) -> float:
    if not s_base > 0:
        raise ValueError("baseline stability must be positive")
    return (s_base - s_ours) / s_base


def stability(dataset: Sequence[MilpInstance], selector, shuffle_seeds: Iterable[int],
              limits: SolveLimits = SolveLimits(), *, rng_seed: int = 0, horizon: int | None = None,
              dataset_id: str = "dataset", jobs: int = 1) -> StabilityReport:
    """Per-seed stability of ``selector`` under pool-order shuffles.

    Problems whose default-order integral is 0 are dropped with a warning, as
    are single (problem, seed) pairs whose shuffled integral is 0.
    """
    seeds = [int(s) for s in shuffle_seeds]
    if not seeds:
        raise ValueError("need at least one shuffle seed")
    if not dataset:
        raise ValueError("dataset is empty")
    tasks = [(k, inst, selector, limits, rng_seed, s, horizon)
             for k, inst in enumerate(dataset) for s in [0] + [s for s in seeds if s != 0]]
    pd = {(r[0], r[2]): r[4] for r in _run_all(tasks, jobs)}
    excluded = []
    keep = []
    for k, inst in enumerate(dataset):
        if pd[(k, 0)] <= 0:
            log.warning("excluding %s from stability: zero default-order integral", inst.name)
            excluded.append(inst.name)
        else:
            keep.append(k)
    per_seed = {}
    for s in seeds:
        pairs = [(pd[(k, s)], pd[(k, 0)]) for k in keep if pd[(k, s)] > 0]
        if len(pairs) < len(keep):
            log.warning("seed %d: %d problems with zero shuffled integral skipped", s, len(keep) - len(pairs))
        per_seed[s] = stability_score([p[0] for p in pairs], [p[1] for p in pairs]) if pairs else math.nan
    vals = [v for v in per_seed.values() if not math.isnan(v)]
    mean = math.fsum(vals) / len(vals) if vals else math.nan
    return StabilityReport(dataset_id, selector.name, per_seed, mean, excluded=excluded)


def shuffle_experiment(inst: MilpInstance, selector, shuffle_seeds: Iterable[int],
                       limits: SolveLimits = SolveLimits(), *, rng_seed: int = 0,
                       horizon: int | None = None) -> list[tuple[int, int, float]]:
    """Rows ``(seed, work, pd_integral)``; seed 0 is the default order and comes first."""
    seeds = [0] + [int(s) for s in shuffle_seeds if int(s) != 0]
    rows = []
    for s in seeds:
        tr = solve(inst, selector, limits, rng_seed, shuffle_seed=s, horizon=horizon)
        if not len(tr.pool):
            raise EmptyPool(f"{inst.name} has no candidate cuts")
        rows.append((s, tr.total_work, tr.pd_integral))
    return rows


# --------------------------------------------------------------------------- CSV

def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def eval_csv(rows: Sequence[MetricsRow]) -> str:
    return _csv(EVAL_HEADER, [r.values() for r in rows])


def stability_csv(reports: Sequence[StabilityReport]) -> str:
    return _csv(STABILITY_HEADER, [(r.dataset, r.selector, s, v)
                                   for r in reports for s, v in r.per_seed.items()])


def shuffle_csv(rows) -> str:
    return _csv(SHUFFLE_HEADER, rows)
