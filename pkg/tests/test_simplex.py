from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from leocore import simplex


def test_textbook_problem():
    # max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  -> (2, 6), value 36
    res = simplex.solve([-3, -5], A_ub=[[1, 0], [0, 2], [3, 2]], b_ub=[4, 12, 18])
    assert np.allclose(res.x, [2, 6])
    assert res.objective == pytest.approx(-36)


def test_equality_and_upper_bounds():
    res = simplex.solve([1, 1, 1], A_eq=[[1, 2, 3]], b_eq=[6], upper=[1, 1, 5])
    assert res.x @ [1, 2, 3] == pytest.approx(6)
    assert res.objective == pytest.approx(2.0)
    assert np.all(res.x <= [1, 1, 5])


def test_negative_rhs_needs_phase_one():
    res = simplex.solve([1, 1], A_ub=[[-1, -1]], b_ub=[-3], upper=[2, 2])
    assert res.objective == pytest.approx(3)


def test_infeasible_and_unbounded():
    with pytest.raises(simplex.Infeasible):
        simplex.solve([1], A_ub=[[1]], b_ub=[-1])
    with pytest.raises(simplex.Unbounded):
        simplex.solve([-1, 0], A_ub=[[0, 1]], b_ub=[1])


def test_degenerate_cycling_example():
    # Beale's example cycles under the textbook rule; Bland's rule terminates
    c = [-0.75, 150, -1 / 50, 6]
    A = [[0.25, -60, -1 / 25, 9], [0.5, -90, -1 / 50, 3], [0, 0, 1, 0]]
    res = simplex.solve(c, A_ub=A, b_ub=[0, 0, 1])
    assert res.objective == pytest.approx(-0.05)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_matches_highs_on_random_bounded_problems(seed):
    rng = np.random.default_rng(seed)
    nv, mu, me = rng.integers(1, 6), rng.integers(0, 5), rng.integers(0, 3)
    c = rng.normal(size=nv)
    A_ub = rng.normal(size=(mu, nv))
    x0 = rng.uniform(0, 1, size=nv)
    b_ub = A_ub @ x0 + rng.uniform(0, 1, size=mu)
    A_eq = rng.normal(size=(me, nv))
    b_eq = A_eq @ x0
    upper = np.full(nv, 1.0)
    ours = simplex.solve(c, A_ub, b_ub, A_eq, b_eq, upper)
    ref = linprog(c, A_ub=A_ub if mu else None, b_ub=b_ub if mu else None, A_eq=A_eq if me else None, b_eq=b_eq if me else None, bounds=[(0, 1)] * nv, method="highs")
    assert ref.status == 0
    assert ours.objective == pytest.approx(ref.fun, abs=1e-7)
    if mu:
        assert np.all(A_ub @ ours.x <= b_ub + 1e-8)
    if me:
        assert np.allclose(A_eq @ ours.x, b_eq, atol=1e-8)
