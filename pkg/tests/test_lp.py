from __future__ import annotations

import numpy as np
import pytest

from leocore.apps import generate
from leocore.lp import (
    NoAffordableOutcomes,
    build_lp,
    dump_lp,
    restrict_instance,
    solve_lp,
)
from leocore.model import BOTTOM, load_instance
from leocore.verify import check_lp_solution


def costed(costs, budget, n=2):
    ids = [f"o{k}" for k in range(len(costs))]
    return load_instance(
        {
            "voters": n,
            "atoms": [{"id": i, "cost": c} for i, c in zip(ids, costs)],
            "budget": budget,
            "comparison_set": [[i] for i in ids] + [[]],
            "preferences": {"kind": "top-element-ranking", "rankings": {f"v{k + 1}": ids for k in range(n)}},
        }
    )


def single():
    return load_instance(
        {
            "voters": ["i"],
            "atoms": [{"id": "o", "cost": 1}],
            "budget": 1,
            "comparison_set": [["o"], []],
            "preferences": {"kind": "top-element-ranking", "rankings": {"i": ["o"]}},
        }
    )


def small_instance(seed):
    if seed % 3 == 0:
        return generate("pb", seed, n=12, m=5)
    if seed % 3 == 1:
        return generate("clustering", seed, n=12, centers=6, k=3)
    return generate("multilabel", seed, m=4, delta=2, k=3, n=10)


def test_restrict_examples():
    inst = costed([1, 2, 4, 6], 10)
    comp, b = restrict_instance(inst, 1.0)
    assert sorted(inst.cost(o) for o in comp if o != BOTTOM) == [1, 2, 4]
    assert BOTTOM in comp and b == 5
    with pytest.raises(NoAffordableOutcomes, match="no affordable comparison outcomes"):
        restrict_instance(costed([1, 1], 2), 3.0)
    k = 6
    comp, b = restrict_instance(costed([1] * 5, k), 2.0)
    assert len(comp) == 6 and b == pytest.approx(2 * k / 3)  # threshold k/3 = 2 keeps all unit costs
    with pytest.raises(ValueError):
        restrict_instance(inst, 0.0)


def test_build_counts_t1(t1):
    m = build_lp(t1, 1.0)
    assert (m.m, m.num_vars, m.num_rows) == (3, 12, 13)


@pytest.mark.parametrize("n,mm", [(1, 1), (4, 3), (7, 5)])
def test_build_counts_general(n, mm):
    inst = generate("pb", n * 10 + mm, n=n, m=mm)
    model = build_lp(inst, 2.0)
    assert model.num_vars == mm + n * mm
    assert model.num_rows == 1 + mm + n * mm
    assert model.A_eq.shape[0] == 1
    assert len(model.row_names) == model.num_rows


def test_single_outcome_hand_solution():
    inst = single()
    y, p = np.array([1.0, 0.0]), np.array([[0.5, 0.0]])
    assert check_lp_solution(inst, y, p, 1.0).passed
    sol = solve_lp(build_lp(inst, 1.0))
    assert sol.y[0] == pytest.approx(1.0)
    assert sol.p[0, 0] == pytest.approx(0.5)  # the revenue row caps the price at 1/2


def test_alpha_zero_is_trivially_feasible(t1):
    sol = solve_lp(build_lp(t1, 0.0), objective="min-prices")
    assert np.allclose(sol.p, 0.0)
    assert t1.comparison_costs @ sol.y == pytest.approx(2.0)
    assert check_lp_solution(t1, sol.y, sol.p, 0.0).passed


def test_t1_restricted_feasible(t1):
    comp, b = restrict_instance(t1, 1.0)
    sol = solve_lp(build_lp(t1, 1.0, comp, b))
    assert sol.budget == 1.0
    rep = check_lp_solution(t1, sol.y, sol.p, 1.0, comp, b, tol=1e-7)
    assert rep.passed, rep.to_dict()


@pytest.mark.parametrize("objective", ["max-prices", "min-prices", "feasibility"])
@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.88, 6.57])
def test_solutions_pass_checker_at_ten_tol(alpha, objective):
    for seed in range(4):
        inst = small_instance(seed)
        sol = solve_lp(build_lp(inst, alpha), tol=1e-8, objective=objective)
        assert sol.max_violation <= 1e-8
        assert check_lp_solution(inst, sol.y, sol.p, alpha, tol=1e-7).passed


def test_simplex_backend_agrees_with_highs():
    for seed in range(6):
        inst = generate("pb", seed, n=5, m=4)
        for alpha in (0.5, 2.0):
            model = build_lp(inst, alpha)
            a = solve_lp(model, backend="highs")
            b = solve_lp(model, backend="simplex")
            assert check_lp_solution(inst, b.y, b.p, alpha, tol=1e-7).passed
            # same optimum of the price objective
            assert a.p.sum() == pytest.approx(b.p.sum(), abs=1e-7)


def test_budget_scaling_property(t1):
    sol = solve_lp(build_lp(t1, 1.0))
    for k in (0.5, 2.0, 3.0):
        scaled = t1.restrict(budget=k * t1.budget)
        assert check_lp_solution(scaled, k * sol.y, sol.p, k * 1.0, tol=1e-9).passed


def test_dump_lp_text(t1):
    text = dump_lp(build_lp(t1, 1.0))
    assert text.count(" <= ") >= 12
    assert "budget:" in text and text.rstrip().endswith("End")
    assert "Subject To" in text and "Bounds" in text
    assert "x0 = y[a]" in text


def test_unknown_options(t1):
    m = build_lp(t1, 1.0)
    with pytest.raises(ValueError):
        solve_lp(m, backend="cplex")
    with pytest.raises(ValueError):
        solve_lp(m, objective="random")
