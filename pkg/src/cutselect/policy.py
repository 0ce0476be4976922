"""Hierarchical cut-selection policy, heuristic baselines and selector objects."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .branchcut import SelectionContext
from .cuts import CutPool, eff_score, nv_score
from .graph import StateGraph
from .neural import autodiff as ad
from .neural import layers as L
from .neural.layers import NetConfig

HEURISTIC_RATIO = 0.2
MODES = ("sample", "greedy")


def select_count(ratio: float, c: int) -> int:
    """Round-half-up of ``ratio * c``, clamped to ``[0, c]``."""
    return min(c, max(0, math.floor(ratio * c + 0.5)))


def squash(K: float) -> float:
    return 0.5 * math.tanh(K) + 0.5


@dataclass
class Episode:
    graph: StateGraph | None
    ratio: float
    K: float
    selected: list[str]
    log_prob_h: float
    log_prob_l: float
    value_estimate: float
    mu: float = 0.0
    sigma: float = 0.0
    reward: float | None = None
    empty_pool: bool = False
    # autodiff handles for training; absent once detached
    terms: dict = field(default_factory=dict, repr=False)


def _mode(mode: str) -> str:
    if mode == "mean-greedy":
        return "greedy"
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    return mode


def act(graph: StateGraph | None, P: dict, cfg: NetConfig, mode: str = "greedy",
        rng: np.random.Generator | None = None, pos_scale: float = 0.0) -> Episode:
    """Run the policy on one state.

    ``P`` maps parameter names to tensors (see :func:`layers.bind`) or plain
    arrays.  Cut nodes are processed in id order so the result does not depend
    on the pool order; a nonzero ``pos_scale`` adds sinusoidal encodings of the
    *input* position and deliberately breaks that.
    """
    mode = _mode(mode)
    if graph is None or len(graph.cut_ids) == 0:
        return Episode(graph, 0.0, -math.inf, [], 0.0, 0.0, 0.0, empty_pool=True)
    if mode == "sample" and rng is None:
        raise ValueError("sample mode needs an rng")
    P = {k: ad.as_tensor(v) for k, v in P.items()}
    g, perm = graph.canonical()
    emb = L.hgt_forward(g, P, cfg)
    cut_emb = emb["cut"]
    if pos_scale:
        pe = L.positional_encoding(len(perm), cfg.d)
        cut_emb = cut_emb + pos_scale * pe[perm]
    pooled = L.attention_pool(cut_emb, P["pool.query"])
    mu, sigma = L.ratio_head(pooled, P)
    value = L.value_head(pooled, P)
    if mode == "sample":
        K = float(mu.data + sigma.data * rng.standard_normal())
    else:
        K = float(mu.data)
    ratio = squash(K)
    c = len(g.cut_ids)
    k = select_count(ratio, c)
    idx, logps = L.pointer_decode(cut_emb, pooled, P, k, mode=mode, rng=rng, ids=g.cut_ids)
    lp_h = L.tanh_gaussian_logprob(K, mu, sigma)
    lp_l = logps[0] if logps else ad.Tensor(0.0)
    for t in logps[1:]:
        lp_l = lp_l + t
    return Episode(
        graph, ratio, K, [g.cut_ids[j] for j in idx],
        lp_h.item(), lp_l.item(), value.item(), float(mu.data), float(sigma.data),
        terms={"log_prob_h": lp_h, "log_prob_l": lp_l, "value": value, "sigma": sigma},
    )


def heuristic_select(variant: str, pool: CutPool, sol, rng: np.random.Generator,
                     ratio: float = HEURISTIC_RATIO) -> list[str]:
    """Baselines: ``nocuts``, ``random``, ``nv`` and ``eff``."""
    if variant == "nocuts":
        return []
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("ratio must lie in [0, 1]")
    k = select_count(ratio, len(pool))
    if variant == "random":
        draw = rng.choice(len(pool), size=k, replace=False) if k else []
        return [pool[int(j)].id for j in draw]
    if variant in ("nv", "eff"):
        score = nv_score if variant == "nv" else eff_score
        ranked = sorted(pool, key=lambda c: (-score(c, sol), c.id))
        return [c.id for c in ranked[:k]]
    raise ValueError(f"unknown heuristic {variant!r}")


class NoCuts:
    name = "nocuts"

    def select(self, ctx: SelectionContext) -> list[str]:
        return []


class Heuristic:
    def __init__(self, variant: str, ratio: float = HEURISTIC_RATIO):
        if variant not in ("random", "nv", "eff"):
            raise ValueError(f"unknown heuristic {variant!r}")
        self.variant, self.ratio = variant, ratio
        self.name = variant

    def select(self, ctx: SelectionContext) -> list[str]:
        return heuristic_select(self.variant, ctx.pool, ctx.sol, ctx.rng, self.ratio)


class FixedSequence:
    """Adds exactly the given cut ids (those present in the pool) in order."""

    def __init__(self, ids, name: str = "fixed"):
        self.ids = list(ids)
        self.name = name

    def select(self, ctx: SelectionContext) -> list[str]:
        return [c for c in self.ids if c in ctx.pool]


class Learned:
    """Neural policy; ``pos_scale != 0`` gives the order-sensitive ablation."""

    def __init__(self, params: dict, cfg: NetConfig, mode: str = "greedy", pos_scale: float = 0.0):
        self.params, self.cfg = params, cfg
        self.mode = _mode(mode)
        self.pos_scale = pos_scale
        self.name = "learned" if not pos_scale else "learned_order_sensitive"
        self.last: Episode | None = None

    def select(self, ctx: SelectionContext) -> list[str]:
        ep = act(ctx.graph(), self.params, self.cfg, self.mode, ctx.rng, self.pos_scale)
        ep.terms = {}
        self.last = ep
        return ep.selected


class Recording:
    """Wraps a policy call so the full episode (with autodiff terms) is kept."""

    def __init__(self, P: dict, cfg: NetConfig, mode: str = "sample", name: str = "learned"):
        self.P, self.cfg, self.mode, self.name = P, cfg, mode, name
        self.episode: Episode | None = None

    def select(self, ctx: SelectionContext) -> list[str]:
        self.episode = act(ctx.graph(), self.P, self.cfg, self.mode, ctx.rng)
        return self.episode.selected


def order_sensitive_ablation(params: dict, cfg: NetConfig, mode: str = "greedy",
                             pos_scale: float = 1.0) -> Learned:
    return Learned(params, cfg, mode, pos_scale=pos_scale)


def make_selector(name: str, params: dict | None = None, cfg: NetConfig | None = None,
                  ratio: float = HEURISTIC_RATIO, pos_scale: float = 1.0):
    """Selector by CLI name."""
    if name == "nocuts":
        return NoCuts()
    if name in ("random", "nv", "eff"):
        return Heuristic(name, ratio)
    if name in ("learned", "learned_order_sensitive"):
        if params is None or cfg is None:
            raise ValueError(f"selector {name!r} needs a checkpoint")
        if name == "learned":
            return Learned(params, cfg)
        return order_sensitive_ablation(params, cfg, pos_scale=pos_scale)
    raise ValueError(f"unknown selector {name!r}")
