"""Small random graphs and per-layer loss closures shared by the network tests."""
import numpy as np

from cutselect import simplex
from cutselect.cuts import gomory_cuts
from cutselect.graph import NODE_TYPES, StateGraph, build_graph
from cutselect.milp import generate, relax
from cutselect.neural import autodiff as ad
from cutselect.neural import layers as L

SMALL = L.NetConfig(d=8, heads=2, layers=2, hidden=6)


def corpus_graphs(count, kinds=("packing", "knapsack", "setcover"), n=10, m=5, min_cuts=2):
    out, s = [], 0
    while len(out) < count:
        inst = generate(kinds[s % len(kinds)], s, n, m)
        s += 1
        sol = simplex.solve_lp(relax(inst))
        if sol.status != simplex.OPTIMAL:
            continue
        pool = gomory_cuts(sol, inst)
        if len(pool) >= min_cuts:
            out.append((inst, sol, pool, build_graph(inst, sol, pool)))
    return out


def permute_nodes(g: StateGraph, perms: dict) -> StateGraph:
    """Relabel every node type; new position k holds old node perms[t][k]."""
    inv = {t: np.argsort(p) for t, p in perms.items()}
    edges = {rel: np.stack([inv[rel[0]][e[0]], inv[rel[1]][e[1]]]) for rel, e in g.edges.items()}
    return StateGraph(g.var_feats[perms["var"]], g.con_feats[perms["con"]], g.cut_feats[perms["cut"]],
                      edges, tuple(g.cut_ids[k] for k in perms["cut"]))


def _weights(rng, shape):
    return ad.Tensor(rng.standard_normal(shape))


def case_input_projection(rng, graph):
    params = {k: v for k, v in L.init_params(SMALL, int(rng.integers(1 << 30))).items() if k.startswith("in.")}
    w = {t: _weights(rng, (graph.counts[t], SMALL.d)) for t in NODE_TYPES}

    def loss(P):
        h = L.input_projection(graph, P)
        return ad.sum(h["var"] * w["var"]) + ad.sum(h["con"] * w["con"]) + ad.sum(h["cut"] * w["cut"])
    return loss, params


def case_hgt_layer(rng, graph):
    allp = L.init_params(SMALL, int(rng.integers(1 << 30)))
    params = {k: v for k, v in allp.items() if k.startswith("hgt0.")}
    params = {k: v * (1.0 + rng.uniform(-0.5, 0.5)) for k, v in params.items()}
    for t in NODE_TYPES:
        params[f"h.{t}"] = rng.standard_normal((graph.counts[t], SMALL.d))
    w = {t: _weights(rng, (graph.counts[t], SMALL.d)) for t in NODE_TYPES}

    def loss(P):
        out = L.hgt_layer({t: P[f"h.{t}"] for t in NODE_TYPES}, graph, P, SMALL, 0)
        return sum((ad.sum(out[t] * w[t]) for t in NODE_TYPES[1:]), ad.sum(out["var"] * w["var"]))
    return loss, params


def case_attention_pool(rng, graph):
    c = graph.counts["cut"]
    params = {"emb": rng.standard_normal((c, SMALL.d)), "query": rng.standard_normal(SMALL.d)}
    w = _weights(rng, SMALL.d)

    def loss(P):
        return ad.sum(L.attention_pool(P["emb"], P["query"]) * w)
    return loss, params


def case_heads(rng, graph):
    allp = L.init_params(SMALL, int(rng.integers(1 << 30)))
    params = {k: v for k, v in allp.items() if k.startswith(("ratio.", "value."))}
    params["pooled"] = rng.standard_normal(SMALL.d)
    a, b, c = rng.standard_normal(3)

    def loss(P):
        mu, sigma = L.ratio_head(P["pooled"], P)
        return a * mu + b * sigma + c * L.value_head(P["pooled"], P)
    return loss, params


def case_pointer(rng, graph):
    allp = L.init_params(SMALL, int(rng.integers(1 << 30)))
    params = {k: v for k, v in allp.items() if k.startswith("dec.")}
    c = graph.counts["cut"]
    params["emb"] = rng.standard_normal((c, SMALL.d))
    params["pooled"] = rng.standard_normal(SMALL.d)
    order = [int(j) for j in rng.permutation(c)[: max(1, c - 1)]]

    def loss(P):
        _, lps = L.pointer_decode(P["emb"], P["pooled"], P, len(order), forced=order)
        total = lps[0]
        for t in lps[1:]:
            total = total + t
        return total
    return loss, params


def case_tanh_gaussian(rng, graph):
    params = {"K": np.array(rng.uniform(-3, 3)), "mu": np.array(rng.uniform(-2, 2)),
              "s": np.array(rng.uniform(-2, 1))}

    def loss(P):
        return L.tanh_gaussian_logprob(P["K"], P["mu"], ad.softplus(P["s"]) + L.SIGMA_FLOOR)
    return loss, params


LAYER_CASES = {
    "input_projection": case_input_projection,
    "hgt_layer": case_hgt_layer,
    "attention_pool": case_attention_pool,
    "ratio_value_mlp": case_heads,
    "pointer_decoder": case_pointer,
    "tanh_gaussian_logprob": case_tanh_gaussian,
}
