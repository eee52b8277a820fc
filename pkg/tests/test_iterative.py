from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import optimize

from leocore.apps import generate
from leocore.iterative import (
    PreconditionError,
    check_v2_preconditions,
    iterated_rounding,
    iterated_rounding_v2,
    minimize_ratio_omega,
    ratio_f,
    ratio_omega,
)
from leocore.oracle import OracleParams, rho_gamma
from leocore.rounding import trial_rng
from leocore.verify import check_gamma_core

from conftest import unanimous

LAM_288 = 1 - math.exp(-2.88)
GAMMA_288 = 2.88 * 4.88 / 3.88


def test_ratio_values():
    assert ratio_omega(LAM_288, 3.88, 4.22) == pytest.approx(6.66347, abs=5e-5)
    assert ratio_omega(0.9638, 7.6465, 5.11) == pytest.approx(11.6647, abs=5e-4)
    assert ratio_f(LAM_288, GAMMA_288, 4.6) == pytest.approx(6.23966, abs=5e-5)


def test_ratio_closed_form():
    w, lam, g = 3.0, 0.8, 2.0
    assert ratio_omega(lam, g, w) == pytest.approx(max(1.5 * 2.0 / 0.4, 1.5))
    assert ratio_f(lam, g, w) == pytest.approx(1.5 * 2.0 / 0.4)


def test_minimizer_matches_grid():
    w, r = minimize_ratio_omega(LAM_288, 3.88)
    grid = np.linspace(1.001, 1 / (1 - LAM_288) - 1e-3, 200_001)
    vals = [ratio_omega(LAM_288, 3.88, x) for x in grid]
    assert r <= min(vals) + 1e-9
    assert w == pytest.approx(grid[int(np.argmin(vals))], abs=1e-3)
    assert w == pytest.approx(4.2207, abs=1e-3)
    # stationarity of the smooth branch, from a root finder
    d = lambda x: (ratio_omega(LAM_288, 3.88, x + 1e-6) - ratio_omega(LAM_288, 3.88, x - 1e-6))
    assert optimize.brentq(d, 2.0, 10.0) == pytest.approx(w, abs=1e-4)


def test_lambda_one_limit():
    # with full coverage the factor reduces to omega/(omega-1) * gamma
    assert ratio_omega(1.0, 2.0, 3.0) == pytest.approx(3.0)
    w, r = minimize_ratio_omega(1.0, 2.0)
    assert r == pytest.approx(2.0, rel=1e-4)


def test_pole_rejected():
    with pytest.raises(PreconditionError, match="omega\\*\\(1-lambda\\) < 1"):
        ratio_omega(0.5, 2.0, 2.0)
    with pytest.raises(PreconditionError):
        ratio_f(0.5, 2.0, 3.0)
    with pytest.raises(PreconditionError):
        ratio_omega(0.5, 2.0, 1.0)


def test_v2_preconditions():
    g = rho_gamma(2.88, 4.88)
    with pytest.raises(PreconditionError, match="gamma/rho"):
        check_v2_preconditions(LAM_288, g, 4.88, 4.5)
    check_v2_preconditions(LAM_288, g, 4.88, 4.6)
    check_v2_preconditions(LAM_288, g, 4.88, 5.0)


def test_v1_t1_many_seeds(t1):
    params = OracleParams(1.0, 0.45)
    for seed in range(100):
        res = iterated_rounding(t1, params, omega=1.5, rng=trial_rng(seed, 0))
        assert res.cost <= t1.budget
        assert all(r.ledger_ok for r in res.rounds)
        assert check_gamma_core(t1, res.outcome, res.nominal_ratio).passed


def test_unanimous_single_round():
    inst = unanimous(5, 3, 8)
    res = iterated_rounding_v2(inst, rng=np.random.default_rng(0))
    assert len(res.rounds) == 1 and res.rounds[0].covered == 5
    assert "p0" in res.outcome


def test_empty_voters_and_single_voter():
    inst = unanimous(3, 3, 4)
    empty = inst.restrict(voters=[])
    res = iterated_rounding_v2(empty, rng=np.random.default_rng(0))
    assert res.outcome == frozenset() and res.rounds == []
    one = inst.restrict(voters=["v1"])
    res = iterated_rounding_v2(one, rng=np.random.default_rng(0))
    assert res.rounds[-1].covered >= 1 and res.cost <= one.budget


def test_round_budgets_sum_within_budget():
    inst = generate("pb", 4, n=30, m=12, max_cost=3, budget=12)
    res = iterated_rounding_v2(inst, rng=np.random.default_rng(1))
    w = res.omega
    assert sum(r.budget for r in res.rounds) <= inst.budget + 1e-9
    for a, b in zip(res.rounds, res.rounds[1:]):
        assert b.budget == pytest.approx(a.budget / w)
    assert res.cost <= inst.budget
    assert all(r.ledger_ok for r in res.rounds)
    assert res.certified_ratio <= res.nominal_ratio
    assert check_gamma_core(inst, res.outcome, ratio_f(LAM_288, GAMMA_288, 4.6)).passed


def test_v1_target_above_certified():
    inst = unanimous()
    with pytest.raises(PreconditionError):
        iterated_rounding(inst, OracleParams(1.0, 0.45, lambda_target=0.9), 1.5)
