"""Iterated rounding with a partial-core oracle, and its approximation ratios.

Each round runs the oracle on the still-unrepresented voters with a budget
that shrinks geometrically by a factor ``omega``. The merged outcome costs at
most the sum of the round budgets, which is the original budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .model import BOTTOM, Instance
from .oracle import (
    OracleExhausted,
    OracleParams,
    partial_core_oracle,
    rho_gamma,
    rho_partial_core_oracle,
    sampler_gamma,
    sampler_lambda,
)


class PreconditionError(ValueError):
    pass


class IterationError(RuntimeError):
    def __init__(self, message: str, round_index: int | None = None):
        super().__init__(message)
        self.round_index = round_index


def _check_omega(lam: float, omega: float):
    if not omega > 1:
        raise PreconditionError("omega must exceed 1")
    if not omega * (1.0 - lam) < 1.0:
        raise PreconditionError(f"omega*(1-lambda) < 1 fails: {omega}*(1-{lam}) = {omega * (1 - lam):.6g}")


def ratio_omega(lam: float, gamma: float, omega: float) -> float:
    """Core level reached by plain iterated rounding with a (lam, gamma) oracle."""
    _check_omega(lam, omega)
    q = omega / (omega - 1.0)
    return max(q * gamma / (1.0 - omega * (1.0 - lam)), q)


def minimize_ratio_omega(lam: float, gamma: float) -> tuple:
    """Best ``omega`` for :func:`ratio_omega`, searched over ``(1, 1/(1-lam))``.

    Returns ``(omega, ratio)``.
    """
    if not 0.0 < lam <= 1.0:
        raise PreconditionError("lambda must lie in (0, 1]")
    hi = 1.0 / (1.0 - lam) if lam < 1.0 else 1e6
    span = hi - 1.0
    res = optimize.minimize_scalar(
        lambda w: ratio_omega(lam, gamma, w),
        bounds=(1.0 + 1e-9 * span, hi - 1e-9 * span),
        method="bounded",
        options={"xatol": 1e-10 * max(1.0, span)},
    )
    return float(res.x), float(res.fun)


def ratio_f(lam: float, gamma: float, omega: float) -> float:
    """Core level reached by the budget-restricted variant."""
    _check_omega(lam, omega)
    return gamma * omega / (omega - 1.0) / (1.0 - omega * (1.0 - lam))


def check_v2_preconditions(lam: float, gamma: float, rho: float, omega: float) -> None:
    """Raise :class:`PreconditionError` naming the first inequality that fails."""
    _check_omega(lam, omega)
    lhs, rhs = gamma / rho, 1.0 - omega * (1.0 - lam)
    if lhs < rhs:
        raise PreconditionError(f"gamma/rho >= 1 - omega*(1-lambda) fails: {lhs:.6g} < {rhs:.6g}")


@dataclass
class RoundRecord:
    index: int
    budget: float
    voters: int
    covered: int
    tries: int
    outcome: list
    cost: float
    degenerate: bool
    ledger_ok: bool
    max_ledger_ratio: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class IterationResult:
    outcome: frozenset
    cost: float
    budget: float
    variant: str
    lam_target: float
    lam_achieved: float
    gamma: float
    omega: float
    rho: float
    nominal_ratio: float
    certified_ratio: float
    rounds: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "outcome": sorted(self.outcome),
            "cost": self.cost,
            "budget": self.budget,
            "variant": self.variant,
            "lambda_target": self.lam_target,
            "lambda_achieved": self.lam_achieved,
            "gamma": self.gamma,
            "omega": self.omega,
            "rho": self.rho,
            "nominal_ratio": self.nominal_ratio,
            "certified_ratio": self.certified_ratio,
            "rounds": [r.to_dict() for r in self.rounds],
        }


def _ledger(sub: Instance, outcome: frozenset, covered: tuple, gamma: float, rho: float):
    """Check that each round's deviator counts stay within ``gamma c(o)/B_t |V_t|``."""
    if sub.n == 0:
        return True, 0.0
    vals = sub.values(outcome)
    rows = np.array([sub.voter_index[v] for v in covered], dtype=int)
    ok, worst = True, 0.0
    for j in sub.nonbottom:
        c = sub.comparison_costs[j]
        if c > sub.budget / rho + 1e-9:
            continue
        k = int((sub.rank_matrix[rows, j] < vals[rows]).sum()) if rows.size else 0
        bound = gamma * c / sub.budget * sub.n
        ok &= k <= bound + 1e-9
        worst = max(worst, k / bound)
    return bool(ok), float(worst)


def _max_rounds(instance: Instance, omega: float) -> int:
    nb = instance.comparison_costs[instance.nonbottom]
    cmin = float(nb.min()) if nb.size else 1.0
    # after this many rounds the round budget drops below every outcome cost
    return max(1, math.ceil(math.log(max(instance.budget / cmin, 1.0)) / math.log(omega))) + 2


def _iterate(instance: Instance, omega: float, rng, oracle_fn, params: OracleParams, gamma: float, variant: str) -> IterationResult:
    B = instance.budget
    Bt = (omega - 1.0) / omega * B
    remaining = list(instance.voters)
    acc = BOTTOM
    rounds = []
    lam_ach = 1.0
    guard = _max_rounds(instance, omega)
    rho = params.rho
    t = 0
    while remaining:
        if t >= guard:
            raise IterationError(f"round guard {guard} exceeded with {len(remaining)} voters left", t)
        comp = [o for o, c in zip(instance.comparison_set, instance.comparison_costs) if o != BOTTOM and c <= Bt + 1e-12]
        threshold = Bt / rho if variant == "v2" else Bt
        sub = instance.restrict(voters=remaining, comparison=comp + [BOTTOM], budget=Bt)
        if not any(c <= threshold + 1e-12 for c in sub.comparison_costs[sub.nonbottom]):
            out, covered, tries, degenerate = BOTTOM, tuple(remaining), 0, True
        else:
            try:
                res = oracle_fn(sub, params, rng)
            except OracleExhausted as e:
                raise IterationError(f"round {t}: {e}", t) from e
            out, covered, tries, degenerate = res.solution.outcome, res.solution.covered, res.tries, False
        ok, worst = _ledger(sub, out, covered, gamma, rho)
        if not ok:
            raise IterationError(f"round {t}: deviator ledger exceeded", t)
        rounds.append(
            RoundRecord(t, Bt, len(remaining), len(covered), tries, sorted(out), instance.cost(out), degenerate, ok, worst)
        )
        lam_ach = min(lam_ach, len(covered) / len(remaining))
        acc = acc | out
        cov = set(covered)
        remaining = [v for v in remaining if v not in cov]
        Bt /= omega
        t += 1

    lam_t = params.lambda_target
    if variant == "v2":
        nominal = ratio_f(lam_t, gamma, omega)
        certified = ratio_f(lam_ach, gamma, omega) if omega * (1 - lam_ach) < 1 else math.inf
    else:
        nominal = ratio_omega(lam_t, gamma, omega)
        certified = ratio_omega(lam_ach, gamma, omega) if omega * (1 - lam_ach) < 1 else math.inf
    cost = instance.cost(acc)
    if cost > B + 1e-9:
        raise IterationError(f"merged outcome costs {cost} > budget {B}")
    return IterationResult(acc, cost, B, variant, lam_t, lam_ach, gamma, omega, rho, nominal, min(certified, nominal), rounds)


def iterated_rounding(instance: Instance, params: OracleParams, omega: float, rng: np.random.Generator | None = None, slack: float = 0.02) -> IterationResult:
    """Iterated rounding with the randomized-core oracle.

    ``params.lambda_target`` of zero means "certified lambda minus ``slack``".
    """
    rng = rng if rng is not None else np.random.default_rng()
    lam = sampler_lambda(params.alpha, params.tau)
    gamma = max(sampler_gamma(params.alpha, params.tau), params.gamma or 0.0)
    target = params.lambda_target or max(lam - slack, 0.0)
    if target > lam + 1e-12:
        raise PreconditionError(f"lambda_target {target} exceeds the certified {lam}")
    _check_omega(target, omega)
    params = OracleParams(params.alpha, params.tau, target, 1.0, params.max_tries, params.augment, gamma)
    return _iterate(instance, omega, rng, partial_core_oracle, params, gamma, "v1")


def iterated_rounding_v2(
    instance: Instance,
    alpha: float = 2.88,
    rho: float = 4.88,
    omega: float = 4.6,
    rng: np.random.Generator | None = None,
    slack: float = 0.0,
    max_tries: int = 64,
    augment: bool = True,
) -> IterationResult:
    """Iterated rounding with the budget-restricted oracle.

    Each round asks the oracle for a partial-core solution against outcomes
    of cost at most ``B_t/rho``, representing a ``1 - exp(-alpha)`` fraction
    of the remaining voters (less ``slack``).
    """
    rng = rng if rng is not None else np.random.default_rng()
    lam = 1.0 - math.exp(-alpha)
    gamma = rho_gamma(alpha, rho)
    target = max(lam - slack, 0.0)
    check_v2_preconditions(target, gamma, rho, omega)
    params = OracleParams(alpha, 0.5, target, rho, max_tries, augment)
    return _iterate(instance, omega, rng, rho_partial_core_oracle, params, gamma, "v2")
