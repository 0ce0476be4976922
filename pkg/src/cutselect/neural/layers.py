"""HGT encoder, attention pooling, policy/value heads and the pointer decoder.

Parameters live in a flat ``dict[str, np.ndarray]``; a forward pass wraps
them with :func:`bind` so gradients land on the bound leaf tensors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..graph import CON_DIM, CUT_DIM, NODE_TYPES, RELATIONS, VAR_DIM, StateGraph
from . import autodiff as ad
from .autodiff import Tensor

IN_DIMS = {"var": VAR_DIM, "con": CON_DIM, "cut": CUT_DIM}
SIGMA_FLOOR = 1e-4


@dataclass(frozen=True)
class NetConfig:
    d: int = 64
    heads: int = 4
    layers: int = 2
    hidden: int = 64

    def __post_init__(self):
        if self.d % self.heads:
            raise ValueError("hidden width must be divisible by the head count")

    @property
    def dk(self) -> int:
        return self.d // self.heads


def rel_name(rel) -> str:
    return f"{rel[0]}2{rel[1]}"


def param_shapes(cfg: NetConfig) -> dict[str, tuple]:
    d, h, dk, hid = cfg.d, cfg.heads, cfg.dk, cfg.hidden
    shapes: dict[str, tuple] = {}
    for t in NODE_TYPES:
        shapes[f"in.{t}.W"] = (IN_DIMS[t], d)
        shapes[f"in.{t}.b"] = (d,)
    for layer in range(cfg.layers):
        p = f"hgt{layer}"
        for t in NODE_TYPES:
            for m in ("Q", "K", "V"):
                shapes[f"{p}.{t}.{m}"] = (d, d)
            shapes[f"{p}.{t}.out.W"] = (d, d)
            shapes[f"{p}.{t}.out.b"] = (d,)
        for rel in RELATIONS:
            r = rel_name(rel)
            shapes[f"{p}.{r}.att"] = (h, dk, dk)
            shapes[f"{p}.{r}.msg"] = (h, dk, dk)
            shapes[f"{p}.{r}.prior"] = ()
    shapes["pool.query"] = (d,)
    for head, out in (("ratio", 2), ("value", 1)):
        shapes[f"{head}.W1"] = (d, hid)
        shapes[f"{head}.b1"] = (hid,)
        shapes[f"{head}.W2"] = (hid, out)
        shapes[f"{head}.b2"] = (out,)
    shapes["dec.init.W"] = (d, d)
    shapes["dec.init.b"] = (d,)
    shapes["dec.start"] = (d,)
    for g in ("z", "r", "n"):
        shapes[f"dec.gru.W{g}"] = (d, d)
        shapes[f"dec.gru.U{g}"] = (d, d)
        shapes[f"dec.gru.b{g}"] = (d,)
    shapes["dec.ptr.W1"] = (d, d)
    shapes["dec.ptr.W2"] = (d, d)
    shapes["dec.ptr.v"] = (d,)
    return shapes


def _fan_in(name: str, shape: tuple) -> int:
    if name.endswith(".prior") or not shape:
        return 1
    if name.endswith((".att", ".msg")):
        return shape[1]
    if len(shape) == 1:
        return shape[0]
    return shape[0]


def init_params(cfg: NetConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Uniform in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``; relation priors start at 1."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in sorted(param_shapes(cfg).items()):
        if name.endswith(".prior"):
            params[name] = np.ones(shape)
            continue
        bound = 1.0 / math.sqrt(_fan_in(name, shape))
        params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def bind(params: dict[str, np.ndarray]) -> dict[str, Tensor]:
    return {k: ad.parameter(v, name=k) for k, v in params.items()}


def linear(x, W, b=None) -> Tensor:
    y = ad.matmul(x, W)
    return y if b is None else y + b


def symlog(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.log1p(np.abs(x))


def hgt_layer(h: dict, graph: StateGraph, P: dict, cfg: NetConfig, layer: int) -> dict:
    """One heterogeneous attention layer with residual connection."""
    p = f"hgt{layer}"
    heads, dk = cfg.heads, cfg.dk
    counts = graph.counts
    q = {t: linear(h[t], P[f"{p}.{t}.Q"]) for t in NODE_TYPES}
    k = {t: linear(h[t], P[f"{p}.{t}.K"]) for t in NODE_TYPES}
    v = {t: linear(h[t], P[f"{p}.{t}.V"]) for t in NODE_TYPES}
    agg: dict = {t: None for t in NODE_TYPES}
    scale = 1.0 / math.sqrt(dk)
    for rel in RELATIONS:
        src, dst = rel
        e = graph.edges[rel]
        if e.shape[1] == 0:
            continue
        r = rel_name(rel)
        ks = ad.reshape(k[src][e[0]], (-1, heads, dk))
        qt = ad.reshape(q[dst][e[1]], (-1, heads, dk))
        vs = ad.reshape(v[src][e[0]], (-1, heads, dk))
        kw = ad.einsum2("ehd,hdk->ehk", ks, P[f"{p}.{r}.att"])
        logits = ad.sum(kw * qt, axis=2) * (P[f"{p}.{r}.prior"] * scale)
        att = ad.segment_softmax(logits, e[1], counts[dst])
        msg = ad.einsum2("ehd,hdk->ehk", vs, P[f"{p}.{r}.msg"])
        weighted = ad.reshape(msg * ad.reshape(att, (-1, heads, 1)), (-1, cfg.d))
        contrib = ad.segment_sum(weighted, e[1], counts[dst])
        agg[dst] = contrib if agg[dst] is None else agg[dst] + contrib
    out = {}
    for t in NODE_TYPES:
        ht = agg[t] if agg[t] is not None else Tensor(np.zeros((counts[t], cfg.d)))
        out[t] = linear(ad.relu(ht), P[f"{p}.{t}.out.W"], P[f"{p}.{t}.out.b"]) + h[t]
    return out


def input_projection(graph: StateGraph, P: dict) -> dict:
    return {t: linear(Tensor(symlog(graph.feats(t))), P[f"in.{t}.W"], P[f"in.{t}.b"])
            for t in NODE_TYPES}


def hgt_forward(graph: StateGraph, P: dict, cfg: NetConfig) -> dict:
    """Node embeddings ``{'var', 'con', 'cut'} -> (count, d)`` after all layers."""
    h = input_projection(graph, P)
    for layer in range(cfg.layers):
        h = hgt_layer(h, graph, P, cfg, layer)
    return h


def attention_pool(emb: Tensor, query) -> Tensor:
    if emb.shape[0] == 0:
        raise ValueError("attention pooling needs at least one row")
    d = emb.shape[1]
    w = ad.softmax(ad.matmul(emb, query) * (1.0 / math.sqrt(d)))
    return ad.matmul(w, emb)


def mlp(x, P: dict, prefix: str) -> Tensor:
    hid = ad.relu(linear(x, P[f"{prefix}.W1"], P[f"{prefix}.b1"]))
    return linear(hid, P[f"{prefix}.W2"], P[f"{prefix}.b2"])


def ratio_head(pooled, P: dict):
    out = mlp(pooled, P, "ratio")
    mu = out[0]
    sigma = ad.softplus(out[1]) + SIGMA_FLOOR
    return mu, sigma


def value_head(pooled, P: dict) -> Tensor:
    return mlp(pooled, P, "value")[0]


_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def tanh_gaussian_logprob(K, mu, sigma) -> Tensor:
    """Log-density of ``ratio = 0.5 tanh(K) + 0.5`` with ``K ~ N(mu, sigma)``."""
    K = ad.as_tensor(K)
    z = (K - mu) / sigma
    log_normal = -0.5 * ad.square(z) - ad.log(sigma) - _LOG_SQRT_2PI
    t = ad.tanh(K)
    jac = 0.5 * (1.0 - ad.square(t)) + 1e-12
    return log_normal - ad.log(jac)


def gru_cell(x, h, P: dict) -> Tensor:
    def gate(g, hh):
        return linear(x, P[f"dec.gru.W{g}"], P[f"dec.gru.b{g}"]) + ad.matmul(hh, P[f"dec.gru.U{g}"])
    z = ad.sigmoid(gate("z", h))
    r = ad.sigmoid(gate("r", h))
    n = ad.tanh(gate("n", r * h))
    return (1.0 - z) * n + z * h


def decoder_init(pooled, P: dict) -> Tensor:
    return ad.tanh(linear(pooled, P["dec.init.W"], P["dec.init.b"]))


def pointer_logits(keys: Tensor, h: Tensor, P: dict) -> Tensor:
    """``keys`` is ``cut_emb @ W1``, precomputed once per decode."""
    return ad.matmul(ad.tanh(keys + ad.matmul(h, P["dec.ptr.W2"])), P["dec.ptr.v"])


def pointer_decode(cut_emb: Tensor, pooled: Tensor, P: dict, k: int, mode: str = "greedy",
                   rng: np.random.Generator | None = None, forced=None, ids=None):
    """Choose ``k`` distinct cuts; returns ``(indices, per-step log-prob tensors)``.

    Greedy picks the arg-max, breaking exact ties by the smallest id in
    ``ids`` (position when ``ids`` is None).  ``forced`` replays a given index
    sequence to score it.
    """
    c = cut_emb.shape[0]
    if not 0 <= k <= c:
        raise ValueError(f"k={k} out of range for {c} cuts")
    keys = ad.matmul(cut_emb, P["dec.ptr.W1"])
    h = decoder_init(pooled, P)
    x = P["dec.start"]
    chosen: list[int] = []
    logps: list[Tensor] = []
    mask = np.zeros(c, dtype=bool)
    for step in range(k):
        h = gru_cell(x, h, P)
        lp = ad.log_softmax(pointer_logits(keys, h, P), mask)
        if forced is not None:
            j = int(forced[step])
        elif mode == "greedy":
            vals = lp.data
            best = np.flatnonzero(vals == vals.max())
            if ids is not None and len(best) > 1:
                j = int(min(best, key=lambda i: ids[i]))
            else:
                j = int(best[0])
        elif mode == "sample":
            p = np.exp(lp.data)
            j = int(rng.choice(c, p=p / p.sum()))
        else:
            raise ValueError(f"unknown decode mode {mode!r}")
        if mask[j]:
            raise ValueError("index chosen twice")
        chosen.append(j)
        logps.append(lp[j])
        mask[j] = True
        x = cut_emb[j]
    return chosen, logps


def positional_encoding(c: int, d: int) -> np.ndarray:
    pos = np.arange(c)[:, None]
    i = np.arange(d // 2)[None, :]
    ang = pos / np.power(10000.0, 2.0 * i / d)
    pe = np.zeros((c, d))
    pe[:, 0::2] = np.sin(ang)
    pe[:, 1::2] = np.cos(ang)[:, : d - d // 2]
    return pe


def collect_grads(P: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Gradients of bound parameters; disconnected ones come back as zeros."""
    return {k: (np.zeros_like(t.data) if t.grad is None else t.grad) for k, t in P.items()}
