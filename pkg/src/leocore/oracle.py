"""Randomized-core samplers and deterministic partial-core oracles."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import verify
from .lp import LpSolution, NoAffordableOutcomes, build_lp, restrict_by_threshold, restrict_instance, solve_lp
from .model import BOTTOM, Instance
from .rounding import PartialCoreSolution, sample_partial_core, trial_rng


@dataclass(frozen=True)
class OracleParams:
    """Parameters of a partial-core oracle.

    ``gamma`` overrides the level the oracle certifies; by default it is
    derived from ``alpha``, ``tau`` and ``rho``. With ``augment`` every draw's
    represented set is greedily enlarged while the partial-core inequality
    still holds.
    """

    alpha: float
    tau: float = 0.5
    lambda_target: float = 0.0
    rho: float = 1.0
    max_tries: int = 64
    augment: bool = False
    gamma: float | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if not 0.0 <= self.lambda_target < 1.0:
            raise ValueError("lambda_target must lie in [0, 1)")
        if not self.rho >= 1.0:
            raise ValueError("rho must be at least 1")
        if self.max_tries < 1:
            raise ValueError("max_tries must be positive")


def sampler_lambda(alpha: float, tau: float) -> float:
    return 1.0 - math.exp(-alpha * (1.0 - tau))


def sampler_gamma(alpha: float, tau: float) -> float:
    # outcomes dropped by the cost threshold are harmless only when gamma >= alpha + 1
    return max((alpha + 1.0) / (2.0 * tau), alpha + 1.0)


def rho_gamma(alpha: float, rho: float, tau: float = 0.5) -> float:
    return alpha / (2.0 * tau) * rho / (rho - 1.0)


@dataclass
class LotterySampler:
    """Draws (outcome, represented voters) pairs from a dependent lottery.

    Attributes
    ----------
    instance : Instance
        The instance the certificate refers to.
    lp : LpSolution or None
        ``None`` gives the degenerate sampler that always returns the null
        outcome with every voter represented.
    lam, gamma, rho : float
        Certified per-voter representation probability and core level.
    """

    instance: Instance
    lp: LpSolution | None
    tau: float
    lam: float
    gamma: float
    rho: float = 1.0

    @property
    def degenerate(self) -> bool:
        return self.lp is None

    def draw(self, rng: np.random.Generator) -> PartialCoreSolution:
        inst = self.instance
        if self.lp is None:
            return PartialCoreSolution(
                outcome=BOTTOM,
                covered=tuple(inst.voters),
                certified_gamma=self.gamma,
                certified_rho=self.rho,
                realized_cost=0.0,
                budget=inst.budget,
                n=inst.n,
                covered_mask=np.ones(inst.n, dtype=bool),
            )
        return sample_partial_core(
            self.lp.instance, self.lp.y, self.lp.p, self.tau, rng, gamma=self.gamma, rho=self.rho, target=inst
        )

    def sample(self, trials: int, seed: int, workers: int = 1, start: int = 0) -> list:
        """Draw ``trials`` realizations, trial ``t`` using the substream ``(seed, t)``."""
        idx = range(start, start + trials)
        if workers <= 1 or trials < 2 * workers:
            return [self.draw(trial_rng(seed, t)) for t in idx]
        chunks = np.array_split(np.arange(start, start + trials), workers)
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = ex.map(_sample_chunk, [(self, seed, int(c[0]), len(c)) for c in chunks if len(c)])
            return [d for part in parts for d in part]

    def describe(self) -> dict:
        return {
            "lambda": self.lam,
            "gamma": self.gamma,
            "rho": self.rho,
            "tau": self.tau,
            "degenerate": self.degenerate,
        }


def _sample_chunk(args):
    sampler, seed, start, count = args
    return sampler.sample(count, seed, workers=1, start=start)


def randomized_core_sampler(
    instance: Instance, alpha: float, tau: float, tol: float = 1e-8, backend: str = "highs", objective: str = "max-prices"
) -> LotterySampler:
    """Randomized-core sampler relative to the instance's full comparison set and budget.

    The LP is solved over outcomes of cost at most ``B/(alpha+1)`` with budget
    ``alpha B/(alpha+1)``, so every realization fits in ``B``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    lam, gamma = sampler_lambda(alpha, tau), sampler_gamma(alpha, tau)
    try:
        comp, budget = restrict_instance(instance, alpha)
    except NoAffordableOutcomes:
        return LotterySampler(instance, None, tau, lam, gamma)
    lp = solve_lp(build_lp(instance, alpha, comp, budget), tol=tol, backend=backend, objective=objective)
    return LotterySampler(instance, lp, tau, lam, gamma)


def rho_core_sampler(
    instance: Instance,
    alpha: float,
    rho: float,
    tau: float = 0.5,
    tol: float = 1e-8,
    backend: str = "highs",
    objective: str = "max-prices",
) -> LotterySampler:
    """Sampler certifying the partial core against outcomes of cost at most ``B/rho``.

    The LP uses those outcomes with budget ``(rho-1)B/rho``; a realization
    costs at most that plus one outcome, hence at most ``B``.
    """
    if not rho > 1:
        raise ValueError("rho must exceed 1")
    lam, gamma = sampler_lambda(alpha, tau), rho_gamma(alpha, rho, tau)
    B = instance.budget
    try:
        comp, budget = restrict_by_threshold(instance, B / rho, (rho - 1.0) * B / rho)
    except NoAffordableOutcomes:
        return LotterySampler(instance, None, tau, lam, gamma, rho)
    lp = solve_lp(build_lp(instance, alpha, comp, budget), tol=tol, backend=backend, objective=objective)
    return LotterySampler(instance, lp, tau, lam, gamma, rho)


class OracleExhausted(RuntimeError):
    """No draw reached the coverage target; ``best`` holds the best draw seen."""

    def __init__(self, message: str, best: PartialCoreSolution | None, tries: int):
        super().__init__(message)
        self.best = best
        self.tries = tries


class CertificateError(RuntimeError):
    """A draw failed the exact partial-core recheck."""


@dataclass
class OracleResult:
    solution: PartialCoreSolution
    tries: int
    sampler: LotterySampler


def _deviation_matrix(instance: Instance, outcome: frozenset, rho: float) -> tuple:
    """Boolean (n, K) matrix of strict deviations to each checked outcome, and the bounds."""
    comp = [
        j
        for j in instance.nonbottom
        if instance.comparison_costs[j] <= instance.budget / rho + 1e-9
    ]
    vals = instance.values_of_mask(instance.mask(outcome))
    dev = instance.rank_matrix[:, comp] < vals[:, None]
    return dev, np.asarray(comp, dtype=int)


def augment_covered(instance: Instance, sol: PartialCoreSolution) -> PartialCoreSolution:
    """Greedily add voters to the represented set while the partial-core bound allows.

    Voters without any admissible deviation are always added; others are
    considered in order of how few outcomes they would deviate to.
    """
    dev, comp = _deviation_matrix(instance, sol.outcome, sol.certified_rho)
    cov = np.array(sol.covered_mask, dtype=bool) if sol.covered_mask is not None else np.isin(instance.voters, sol.covered)
    if comp.size:
        caps = np.floor(sol.certified_gamma * instance.comparison_costs[comp] / sol.budget * instance.n + 1e-9)
        load = dev[cov].sum(axis=0)
    else:
        caps = load = np.zeros(0)
    order = sorted(np.flatnonzero(~cov), key=lambda i: (int(dev[i].sum()), i))
    for i in order:
        new = load + dev[i]
        if np.all(new <= caps):
            cov[i] = True
            load = new
    return PartialCoreSolution(
        outcome=sol.outcome,
        covered=tuple(instance.voters[i] for i in np.flatnonzero(cov)),
        certified_gamma=sol.certified_gamma,
        certified_rho=sol.certified_rho,
        realized_cost=sol.realized_cost,
        budget=sol.budget,
        n=sol.n,
        covered_mask=cov,
    )


def _recheck(instance: Instance, sol: PartialCoreSolution):
    rep = verify.check_partial_core(
        instance, sol.outcome, sol.covered, sol.certified_gamma, rho=sol.certified_rho, budget=sol.budget
    )
    if not rep.passed or sol.realized_cost > sol.budget + 1e-9:
        raise CertificateError(f"draw failed the partial-core recheck: {rep.to_dict()}")


def run_oracle(sampler: LotterySampler, params: OracleParams, rng: np.random.Generator) -> OracleResult:
    inst = sampler.instance
    need = math.ceil(params.lambda_target * inst.n - 1e-9)
    best = None
    for t in range(1, params.max_tries + 1):
        sol = sampler.draw(rng)
        if params.augment:
            sol = augment_covered(inst, sol)
        _recheck(inst, sol)
        if best is None or len(sol.covered) > len(best.covered):
            best = sol
        if len(sol.covered) >= need:
            return OracleResult(sol, t, sampler)
    raise OracleExhausted(
        f"no draw represented {need} of {inst.n} voters in {params.max_tries} tries "
        f"(best {len(best.covered)})",
        best,
        params.max_tries,
    )


def partial_core_oracle(instance: Instance, params: OracleParams, rng: np.random.Generator, comparison=None, budget=None, voters=None) -> OracleResult:
    """Partial-core solution representing at least ``lambda_target`` of the voters.

    The instance is first narrowed to ``voters``, ``comparison`` and
    ``budget`` when given. Every draw is rechecked exactly before use.
    """
    if comparison is not None or budget is not None or voters is not None:
        instance = instance.restrict(voters=voters, comparison=comparison, budget=budget)
    sampler = randomized_core_sampler(instance, params.alpha, params.tau)
    if params.gamma is not None:
        sampler.gamma = max(sampler.gamma, params.gamma)
    return run_oracle(sampler, params, rng)


def rho_partial_core_oracle(instance: Instance, params: OracleParams, rng: np.random.Generator, comparison=None, budget=None, voters=None) -> OracleResult:
    """Partial-core solution checked against outcomes of cost at most ``B/rho``."""
    if comparison is not None or budget is not None or voters is not None:
        instance = instance.restrict(voters=voters, comparison=comparison, budget=budget)
    sampler = rho_core_sampler(instance, params.alpha, params.rho, params.tau)
    if params.gamma is not None:
        sampler.gamma = max(sampler.gamma, params.gamma)
    return run_oracle(sampler, params, rng)
