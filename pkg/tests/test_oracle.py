from __future__ import annotations

import math

import numpy as np
import pytest

from leocore.lp import restrict_instance
from leocore.oracle import (
    OracleExhausted,
    OracleParams,
    augment_covered,
    partial_core_oracle,
    randomized_core_sampler,
    rho_core_sampler,
    rho_gamma,
    rho_partial_core_oracle,
    run_oracle,
    sampler_gamma,
    sampler_lambda,
)
from leocore.rounding import trial_rng
from leocore.verify import check_partial_core, estimate_coverage

from conftest import unanimous


@pytest.mark.parametrize(
    "alpha,tau,lam,gamma",
    [(2.0, 0.5, 1 - math.exp(-1.0), 3.0), (6.57, 0.495, 1 - math.exp(-6.57 * 0.505), 7.57 / 0.99)],
)
def test_parameter_formulas(alpha, tau, lam, gamma):
    assert sampler_lambda(alpha, tau) == pytest.approx(lam, rel=1e-12)
    assert sampler_gamma(alpha, tau) == pytest.approx(gamma, rel=1e-12)


def test_parameter_values_rounded():
    assert round(sampler_lambda(2.0, 0.5), 3) == 0.632
    assert round(sampler_lambda(6.57, 0.495), 4) == 0.9638
    assert round(sampler_gamma(6.57, 0.495), 4) == 7.6465
    assert round(rho_gamma(2.88, 4.88), 3) == 3.622


def test_gamma_floor_above_half():
    assert sampler_gamma(1.0, 0.8) == 2.0


def test_param_validation():
    for kw in ({"alpha": 0}, {"alpha": 1, "tau": 1.0}, {"alpha": 1, "lambda_target": 1.0}, {"alpha": 1, "rho": 0.5}, {"alpha": 1, "max_tries": 0}):
        with pytest.raises(ValueError):
            OracleParams(**kw)


def test_degenerate_sampler(t1):
    # threshold 2/3 excludes every unit-cost outcome
    s = randomized_core_sampler(t1, 2.0, 0.5)
    assert s.degenerate
    d = s.draw(np.random.default_rng(0))
    assert d.outcome == frozenset() and set(d.covered) == {"v1", "v2", "v3"}


def test_zero_target_returns_first_draw(t1):
    res = partial_core_oracle(t1, OracleParams(1.0, 0.45), np.random.default_rng(3))
    assert res.tries == 1


def test_unanimous_full_coverage():
    inst = unanimous(6, 3, 2)
    s = randomized_core_sampler(inst, 1.0, 0.45)
    for d in s.sample(200, 4):
        assert d.coverage == 1.0
        assert "p0" in d.outcome


def test_t1_every_draw_certified(t1):
    s = randomized_core_sampler(t1, 1.0, 0.45)
    comp, _ = restrict_instance(t1, 1.0)
    draws = s.sample(2000, 11)
    for d in draws:
        assert t1.cost(d.outcome) <= t1.budget
        assert check_partial_core(t1, d.outcome, d.covered, s.gamma).passed
    est = estimate_coverage(s, 2000, 11, draws=draws)
    assert not est.flagged


def test_t1_oracle_success_rate(t1):
    params = OracleParams(1.0, 0.45, lambda_target=2 / 3 - 1e-9, max_tries=64)
    ok = 0
    for seed in range(50):
        try:
            res = partial_core_oracle(t1, params, trial_rng(seed, 0))
        except OracleExhausted:
            continue
        ok += 1
        assert len(res.solution.covered) >= 2
    assert ok == 50


def test_exhaustion_carries_best(t1):
    s = randomized_core_sampler(t1, 1.0, 0.45)
    seed = next(k for k in range(100) if len(s.draw(np.random.default_rng(k)).covered) < 3)
    params = OracleParams(1.0, 0.45, lambda_target=0.999, max_tries=1)
    with pytest.raises(OracleExhausted) as info:
        run_oracle(s, params, np.random.default_rng(seed))
    assert info.value.tries == 1 and info.value.best is not None
    assert len(info.value.best.covered) < 3


def test_augmentation_stays_certified(t1):
    s = randomized_core_sampler(t1, 1.0, 0.45)
    for t in range(300):
        d = s.draw(trial_rng(1, t))
        a = augment_covered(t1, d)
        assert set(d.covered) <= set(a.covered)
        assert check_partial_core(t1, a.outcome, a.covered, a.certified_gamma).passed


def test_rho_oracle_budget_and_certificate():
    from leocore.apps import generate

    inst = generate("pb", 3, n=30, m=10, max_cost=3, budget=12)
    params = OracleParams(2.88, 0.5, lambda_target=0.0, rho=4.88, augment=True)
    s = rho_core_sampler(inst, 2.88, 4.88)
    assert s.gamma == pytest.approx(rho_gamma(2.88, 4.88))
    for seed in range(20):
        res = rho_partial_core_oracle(inst, params, trial_rng(seed, 0))
        sol = res.solution
        assert inst.cost(sol.outcome) <= inst.budget
        assert check_partial_core(inst, sol.outcome, sol.covered, sol.certified_gamma, rho=4.88).passed


def test_sampler_parallel_matches_serial(t1):
    s = randomized_core_sampler(t1, 1.0, 0.45)
    a = [(d.outcome, d.covered) for d in s.sample(40, 5)]
    b = [(d.outcome, d.covered) for d in s.sample(40, 5, workers=2)]
    assert a == b
