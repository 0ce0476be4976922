import math

import numpy as np
import pytest

from cutselect import simplex
from cutselect.cuts import (
    FEATURE_NAMES, Cut, CutPool, cut_id, eff_score, features, gomory_cuts, nv_score,
)
from cutselect.milp import LpProblem, MilpInstance, generate, relax
from cutselect.oracles import cut_validity, random_integer_instance


def box2():
    inst = MilpInstance("box", [-1.0, -1.0], [[1.0, 1.0]], [5.0], [0, 0], [1, 1], (0, 1))
    return inst, simplex.solve_lp(relax(inst))


def test_integral_optimum_gives_empty_pool():
    inst, sol = box2()
    assert len(gomory_cuts(sol, inst)) == 0


def test_two_variable_example():
    inst = MilpInstance("ex", [-1.0, -1.0], [[1.0, 1.0]], [1.5], [0, 0], [1, 1], (0, 1))
    sol = simplex.solve_lp(relax(inst))
    assert sorted(sol.x) == pytest.approx([0.5, 1.0])
    pool = gomory_cuts(sol, inst)
    assert len(pool) >= 1
    for cut in pool:
        for p in ([0, 0], [1, 0], [0, 1]):
            assert cut.activity(p) <= cut.beta + 1e-9
        assert cut.violation(sol.x) > 1e-9


def test_validity_on_random_knapsacks():
    total = 0
    for s in range(100):
        inst = generate("knapsack", s, 4 + s % 9, 1 + s % 4)
        cnt, problems = cut_validity(inst)
        assert problems == []
        total += cnt
    assert total > 100


def test_validity_on_general_integers():
    rng = np.random.default_rng(3)
    for k in range(60):
        inst = random_integer_instance(rng, int(rng.integers(2, 7)), int(rng.integers(1, 4)))
        assert cut_validity(inst)[1] == []


def test_mixed_rows_are_valid():
    # last column continuous; each integer point gets a one-column LP maximising the cut activity
    rng = np.random.default_rng(11)
    checked = 0
    for k in range(40):
        base = random_integer_instance(rng, int(rng.integers(3, 6)), int(rng.integers(1, 4)))
        inst = MilpInstance("mixed", base.c, base.A, base.b, base.lower, base.upper,
                            base.integers[:-1])
        sol = simplex.solve_lp(relax(inst))
        ints, cont = list(inst.integers), [inst.n - 1]
        grid = np.stack(np.meshgrid(*[np.arange(inst.lower[j], inst.upper[j] + 1) for j in ints],
                                    indexing="ij"), -1).reshape(-1, len(ints))
        for cut in gomory_cuts(sol, inst):
            worst = -math.inf
            for z in grid:
                sub = LpProblem("sub", -cut.alpha[cont], inst.A[:, cont], inst.b - inst.A[:, ints] @ z,
                                inst.lower[cont], inst.upper[cont])
                r = simplex.solve_lp(sub)
                if r.status == simplex.OPTIMAL:
                    worst = max(worst, cut.alpha[ints] @ z - r.objective - cut.beta)
            assert worst <= 1e-7
            assert cut.violation(sol.x) > 1e-9
            checked += 1
    assert checked > 10


def test_max_cuts_keeps_most_fractional_in_basis_order():
    inst = generate("packing", 3, 30, 10)
    sol = simplex.solve_lp(relax(inst))
    full = gomory_cuts(sol, inst)
    capped = gomory_cuts(sol, inst, max_cuts=2)
    assert len(full) > 2 and len(capped) == 2
    pos = [full.ids.index(c) for c in capped.ids]
    assert pos == sorted(pos)


def test_cut_id_and_pool():
    a = Cut([1.0, 2.0], 3.0)
    assert a == Cut([1.0, 2.0 + 1e-14], 3.0)
    assert a.id == cut_id(np.array([1.0, 2.0]), 3.0)
    with pytest.raises(ValueError):
        Cut([0.0, 0.0], 1.0)
    pool = CutPool([a, Cut([1.0, 0.0], 1.0)])
    assert pool.shuffled(0) is pool
    assert sorted(pool.shuffled(5).ids) == sorted(pool.ids)
    with pytest.raises(ValueError):
        CutPool([a, a])


def test_features_hand_example():
    inst, sol = box2()
    assert np.allclose(sol.x, [1.0, 1.0])
    cut = Cut([1.0, 1.0], 1.0)
    f = dict(zip(FEATURE_NAMES, features(cut, inst, sol)))
    assert f["efficacy"] == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    assert f["normalized_violation"] == pytest.approx(1.0)
    assert f["support"] == 1.0 and f["integral_support"] == 1.0
    assert f["parallelism"] == pytest.approx(-1.0)
    assert eff_score(cut, sol) == pytest.approx(0.70711, abs=1e-5)


def test_parallelism_of_objective_cut():
    inst, sol = box2()
    f = features(Cut(inst.c, -5.0), inst, sol)
    assert f[FEATURE_NAMES.index("parallelism")] == pytest.approx(1.0)


def test_support_counts():
    inst = MilpInstance("s", [1.0, 2.0, 3.0, 4.0], [[1, 1, 1, 1]], [2.0], [0] * 4, [1] * 4, (0, 1))
    sol = simplex.solve_lp(relax(inst))
    f = features(Cut([0.0, 2.0, 0.0, -1.0], 0.5), inst, sol)
    assert f[FEATURE_NAMES.index("support")] == 0.5
    assert f[FEATURE_NAMES.index("integral_support")] == 0.5
    assert f[FEATURE_NAMES.index("obj_mean")] == pytest.approx(3.0)


def test_scores():
    inst, sol = box2()
    satisfied = Cut([1.0, 0.0], 2.0)
    assert nv_score(satisfied, sol) == 0.0
    cut = Cut([1.0, 1.0], 1.5)
    assert eff_score(cut.scaled(2.0), sol) == pytest.approx(eff_score(cut, sol), rel=1e-12)
    assert nv_score(cut.scaled(2.0), sol) == pytest.approx(nv_score(cut, sol), rel=1e-12)


def test_feature_ranges_on_corpus():
    for s in range(200):
        kind = ("knapsack", "packing", "setcover")[s % 3]
        inst = generate(kind, s, 10, 5)
        sol = simplex.solve_lp(relax(inst))
        for cut in gomory_cuts(sol, inst):
            f = dict(zip(FEATURE_NAMES, features(cut, inst, sol)))
            assert all(math.isfinite(v) for v in f.values())
            assert 0 <= f["support"] <= 1 and 0 <= f["integral_support"] <= 1
            assert -1 <= f["parallelism"] <= 1 and f["normalized_violation"] >= 0
            g = dict(zip(FEATURE_NAMES, features(cut.scaled(3.0), inst, sol)))
            for k in ("efficacy", "parallelism", "support", "integral_support"):
                assert g[k] == pytest.approx(f[k], rel=1e-9, abs=1e-12)
