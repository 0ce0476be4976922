"""Actor-critic training of the cut-selection policy (one-step episodes)."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence, TextIO

import numpy as np

from . import simplex
from .branchcut import SelectionContext, SolveLimits, reward as trace_reward, solve
from .cuts import gomory_cuts
from .milp import MilpInstance, relax
from .neural import autodiff as ad
from .neural import checkpoint
from .neural import layers as L
from .neural.layers import NetConfig
from .neural.optim import AdamW, cosine_lr
from .policy import Episode, Recording

log = logging.getLogger(__name__)

RewardFn = Callable[[MilpInstance, Episode, int], float]


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 16
    lr: float = 1e-3
    seed: int = 0
    entropy_weight: float = 0.0
    weight_decay: float = 1e-2
    horizon: int | None = None
    max_pivots: int = 200_000
    max_nodes: int = 10_000
    d: int = 64
    heads: int = 4
    layers: int = 2
    hidden: int = 64
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")

    @property
    def net(self) -> NetConfig:
        return NetConfig(self.d, self.heads, self.layers, self.hidden)

    @property
    def limits(self) -> SolveLimits:
        return SolveLimits(self.max_pivots, self.max_nodes)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    config: TrainConfig
    curve: list[tuple[int, float, float, float]] = field(default_factory=list)
    dropped: int = 0


def episode_loss(episodes: Sequence[Episode], entropy_weight: float = 0.0):
    """Batch-mean actor-critic loss.

    Advantages use a detached value estimate, so policy terms never push on
    the critic and the critic only sees its squared error.
    """
    total = None
    for ep in episodes:
        t = ep.terms
        adv = ep.reward - t["value"].item()
        term = (t["log_prob_h"] + t["log_prob_l"]) * (-adv) + ad.square(ep.reward - t["value"])
        if entropy_weight:
            term = term - entropy_weight * ad.log(t["sigma"])
        total = term if total is None else total + term
    return total * (1.0 / len(episodes))


def _rollout(inst, rec: Recording, seed: int, limits, horizon, reward_fn):
    if reward_fn is None:
        trace = solve(inst, rec, limits, seed, horizon=horizon)
        if rec.episode is None:
            return None
        rec.episode.reward = trace_reward(trace, horizon)
    else:
        sol = simplex.solve_lp(relax(inst))
        pool = gomory_cuts(sol, inst)
        if not len(pool):
            return None
        rec.select(SelectionContext(inst, sol, pool, np.random.default_rng(seed)))
        rec.episode.reward = float(reward_fn(inst, rec.episode, seed))
    return rec.episode


def train(instances: Sequence[MilpInstance], config: TrainConfig, *,
          reward_fn: RewardFn | None = None, params: dict | None = None,
          log_file: TextIO | None = None, checkpoint_dir=None,
          on_epoch: Callable[[int, dict], None] | None = None) -> TrainResult:
    """Train from seeded initial parameters.

    ``reward_fn(inst, episode, seed)`` replaces the solver-based reward
    (``-pd_integral / horizon``) when given.  ``on_epoch(epoch, params)`` is
    called after every optimizer step.
    """
    if not instances:
        raise ValueError("training needs at least one instance")
    cfg = config.net
    rng = np.random.default_rng(config.seed)
    params = L.init_params(cfg, config.seed) if params is None else {k: v.copy() for k, v in params.items()}
    opt = AdamW(params, config.lr, weight_decay=config.weight_decay)
    limits = config.limits
    horizon = config.horizon or limits.max_pivots
    result = TrainResult(params, config)
    for epoch in range(config.epochs):
        lr = cosine_lr(config.lr, epoch, config.epochs)
        P = L.bind(params)
        batch = []
        for _ in range(config.batch_size):
            inst = instances[int(rng.integers(len(instances)))]
            seed = int(rng.integers(2**31))
            rec = Recording(P, cfg, "sample")
            try:
                ep = _rollout(inst, rec, seed, limits, horizon, reward_fn)
            except (simplex.SimplexError, ValueError) as exc:
                log.warning("epoch %d: dropped episode on %s: %s", epoch, inst.name, exc)
                result.dropped += 1
                continue
            if ep is None or ep.empty_pool:
                result.dropped += 1
                continue
            batch.append(ep)
        if batch:
            loss = episode_loss(batch, config.entropy_weight)
            loss.backward()
            opt.step(L.collect_grads(P), lr)
            mean_r = float(np.mean([e.reward for e in batch]))
            mean_ratio = float(np.mean([e.ratio for e in batch]))
        else:
            mean_r = mean_ratio = math.nan
        result.curve.append((epoch, mean_r, mean_ratio, lr))
        if log_file is not None:
            log_file.write(f"{epoch} {mean_r:.17g} {mean_ratio:.17g} {lr:.17g}\n")
        if checkpoint_dir is not None and config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
            checkpoint.save(Path(checkpoint_dir) / f"epoch{epoch + 1:05d}.npz", params, cfg)
        if on_epoch is not None:
            on_epoch(epoch, params)
    return result
