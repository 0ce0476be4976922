import math

import numpy as np
import pytest

from cutselect import simplex
from cutselect.cuts import Cut, CutPool, feature_matrix, gomory_cuts
from cutselect.graph import (
    CON_DIM, CUT_DIM, RELATIONS, VAR_DIM, EmptyPool, build_graph, con_features, var_features,
)
from cutselect.milp import MilpInstance, generate, relax


def corpus(count=30):
    out = []
    for s in range(count):
        inst = generate(("knapsack", "packing", "setcover")[s % 3], s, 10, 5)
        sol = simplex.solve_lp(relax(inst))
        pool = gomory_cuts(sol, inst)
        if len(pool):
            out.append((inst, sol, pool))
    return out


def edge_set(g, rel):
    return {(int(s), int(t)) for s, t in g.edges[rel].T}


def test_shapes_and_mirror():
    for inst, sol, pool in corpus():
        g = build_graph(inst, sol, pool)
        assert g.var_feats.shape == (inst.n, VAR_DIM)
        assert g.con_feats.shape == (inst.m, CON_DIM)
        assert g.cut_feats.shape == (len(pool), CUT_DIM)
        for fwd, rev in zip(RELATIONS[::2], RELATIONS[1::2]):
            assert edge_set(g, fwd) == {(t, s) for s, t in edge_set(g, rev)}
        assert edge_set(g, ("var", "con")) == {(j, i) for i, j in zip(*np.nonzero(inst.A))}
        alphas = np.stack([c.alpha for c in pool])
        assert edge_set(g, ("var", "cut")) == {(j, k) for k, j in zip(*np.nonzero(alphas))}
        assert np.array_equal(g.cut_feats, feature_matrix(pool, inst, sol))


def test_one_hot_and_ranges():
    for inst, sol, pool in corpus():
        g = build_graph(inst, sol, pool)
        assert np.all(g.var_feats[:, 1:5].sum(1) == 1.0)
        assert np.all(g.var_feats[:, 13:17].sum(1) == 1.0)
        assert np.all(g.con_feats[:, 6:10].sum(1) == 1.0)
        for f in (g.var_feats, g.con_feats, g.cut_feats):
            assert np.all(np.isfinite(f))
        # raw cut coefficient statistics are not normalised; everything else is
        for f in (g.var_feats, g.con_feats, g.cut_feats[:, 8:]):
            assert np.all(np.abs(f) <= 10)


def test_tiny_graph_has_one_edge_per_relation():
    inst = MilpInstance("one", [-1.0], [[2.0]], [3.0], [0.0], [5.0], (0,))
    sol = simplex.solve_lp(relax(inst))
    g = build_graph(inst, sol, CutPool([Cut([1.0], 1.0)]))
    assert sum(g.edges[r].shape[1] for r in RELATIONS) == 6


def test_orthogonal_cut_has_no_con_edges():
    inst = MilpInstance("orth", [-1.0, -1.0], [[1.0, 0.0]], [1.5], [0, 0], [2, 2], (0, 1))
    sol = simplex.solve_lp(relax(inst))
    g = build_graph(inst, sol, CutPool([Cut([0.0, 1.0], 1.0)]))
    assert g.edges[("con", "cut")].shape[1] == 0 and g.edges[("cut", "con")].shape[1] == 0


def test_empty_pool_rejected():
    inst, sol, _ = corpus(3)[0]
    with pytest.raises(EmptyPool):
        build_graph(inst, sol, CutPool())


def test_var_features_hand_example():
    # min -2x - y, x + y <= 1.5, x in {0,1}, y in [0, 4] continuous
    inst = MilpInstance("hand", [-2.0, -1.0], [[1.0, 1.0]], [1.5], [0, 0], [1, 4], (0,))
    sol = simplex.solve_lp(relax(inst))
    assert np.allclose(sol.x, [1.0, 0.5])
    cn = math.sqrt(5)
    f = var_features(inst, sol)
    x_row = [-2 / cn, 1, 0, 0, 0, 1, 1, sol.reduced_costs[0] / cn, 1.0, 0.0, 0, 1, 0, 0, 0, 1, 0]
    y_row = [-1 / cn, 0, 0, 0, 1, 1, 1, 0.0, 0.5, 0.5, 0, 0, 0, 0, 1, 0, 0]
    assert sol.reduced_costs[0] == pytest.approx(-1.0)
    assert np.allclose(f[0], x_row) and np.allclose(f[1], y_row)


def test_con_features_hand_example():
    inst = MilpInstance("hand", [-2.0, -1.0], [[1.0, 1.0], [1.0, 0.0]], [1.5, 3.0], [0, 0], [1, 4], (0,))
    sol = simplex.solve_lp(relax(inst))
    f = con_features(inst, sol)
    rn, cn = math.sqrt(2), math.sqrt(5)
    row0 = [0, 1.0, 1.5 / rn, 0, 1, sol.duals[0] / (rn * cn), 1, 0, 0, 0, 0, 0, 0.5, 0, 0, 1]
    row1 = [0, 0.5, 3.0, 0, 0, 0.0, 0, 1, 0, 0, 0, 0, 1.0, 1, 0, 1]
    assert sol.duals[0] == pytest.approx(-1.0)
    assert np.allclose(f[0], row0) and np.allclose(f[1], row1)


def test_shuffled_pool_same_graph_by_ids():
    rng = np.random.default_rng(0)
    for inst, sol, pool in corpus():
        g = build_graph(inst, sol, pool)
        perm = rng.permutation(len(pool))
        h = build_graph(inst, sol, pool.permuted(perm))
        for rel in RELATIONS:
            def keyed(gr):
                out = set()
                for s, t in gr.edges[rel].T:
                    s = gr.cut_ids[s] if rel[0] == "cut" else int(s)
                    t = gr.cut_ids[t] if rel[1] == "cut" else int(t)
                    out.add((s, t))
                return out
            assert keyed(g) == keyed(h)
        assert np.array_equal(h.cut_feats, g.cut_feats[perm])
        gc, _ = g.canonical()
        hc, _ = h.canonical()
        assert gc.dumps() == hc.dumps()


def test_dump_deterministic():
    inst, sol, pool = corpus(3)[0]
    assert build_graph(inst, sol, pool).dumps() == build_graph(inst, sol, pool).dumps()
