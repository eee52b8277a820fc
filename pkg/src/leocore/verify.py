"""Exact and statistical checkers, and a brute-force reference for tiny instances.

These routines recount everything from the instance's rankings and never
reuse intermediate results from the solvers they check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .model import BOTTOM, Instance, format_outcome

_EPS = 1e-9


@dataclass
class Check:
    name: str
    passed: bool
    witness: dict | None = None
    detail: str = ""

    def to_dict(self) -> dict:
        d = {"name": self.name, "passed": bool(self.passed)}
        if self.detail:
            d["detail"] = self.detail
        if self.witness is not None:
            d["witness"] = self.witness
        return d


@dataclass
class VerifyReport:
    checks: list = field(default_factory=list)
    worst_gamma_needed: float | None = None
    stats: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def add(self, name: str, passed: bool, witness=None, detail: str = "") -> Check:
        c = Check(name, bool(passed), witness, detail)
        self.checks.append(c)
        return c

    def merge(self, other: "VerifyReport", prefix: str = "") -> "VerifyReport":
        for c in other.checks:
            self.checks.append(Check(prefix + c.name, c.passed, c.witness, c.detail))
        return self

    def to_dict(self) -> dict:
        d = {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}
        if self.worst_gamma_needed is not None:
            d["worst_gamma_needed"] = self.worst_gamma_needed
        if self.stats:
            d["stats"] = self.stats
        return d


def _scope(instance: Instance, comparison=None, budget=None):
    comp = instance.comparison_set if comparison is None else tuple(frozenset(o) for o in comparison)
    B = instance.budget if budget is None else float(budget)
    return comp, B


def deviators(instance: Instance, outcome: Iterable[str], comparison=None, voters=None) -> dict:
    """Voters who strictly prefer each comparison outcome over ``outcome``.

    Returns a mapping from comparison outcome to a sorted list of voter ids,
    restricted to ``voters`` when given.
    """
    comp, _ = _scope(instance, comparison)
    vals = instance.values(outcome)
    rows = np.arange(instance.n) if voters is None else np.array(sorted(instance._voter_pos(v) for v in voters), dtype=int)
    out = {}
    for o in comp:
        ov = instance.values(o)
        who = rows[ov[rows] < vals[rows]]
        out[o] = [instance.voters[i] for i in who]
    return out


def check_gamma_core(instance: Instance, outcome: Iterable[str], gamma: float, comparison=None, budget=None) -> VerifyReport:
    """Check that no comparison outcome is strictly preferred by more than ``gamma c(o)/B n`` voters."""
    outcome = frozenset(outcome)
    comp, B = _scope(instance, comparison, budget)
    n = instance.n
    rep = VerifyReport()
    cost = instance.cost(outcome)
    rep.add("budget", cost <= B + _EPS, None if cost <= B + _EPS else {"cost": cost, "budget": B}, f"cost {cost:g} <= {B:g}")
    devs = deviators(instance, outcome, comp)
    worst = 0.0
    bad = []
    for o, who in devs.items():
        if o == BOTTOM:
            continue
        c = instance.cost(o)
        bound = gamma * c / B * n
        if n:
            worst = max(worst, len(who) * B / (c * n))
        if len(who) > bound + _EPS:
            bad.append({"outcome": sorted(o), "deviators": who, "count": len(who), "bound": bound})
    rep.add("core", not bad, {"violations": bad} if bad else None, f"gamma={gamma:g} over {len(comp) - 1} outcomes")
    rep.worst_gamma_needed = worst
    return rep


def check_partial_core(
    instance: Instance,
    outcome: Iterable[str],
    covered: Iterable,
    gamma: float,
    comparison=None,
    rho: float = 1.0,
    budget=None,
    integral: bool = True,
) -> VerifyReport:
    """Check the partial-core inequality for the represented voters ``covered``.

    Only comparison outcomes of cost at most ``B / rho`` are considered. With
    ``integral`` the bound is rounded down, which is valid because the count
    of deviators is an integer.
    """
    outcome = frozenset(outcome)
    comp, B = _scope(instance, comparison, budget)
    covered = list(covered)
    n = instance.n
    rep = VerifyReport()
    devs = deviators(instance, outcome, comp, voters=covered)
    bad = []
    worst = 0.0
    checked = 0
    for o, who in devs.items():
        if o == BOTTOM:
            continue
        c = instance.cost(o)
        if c > B / rho + _EPS:
            continue
        checked += 1
        bound = gamma * c / B * n
        if integral:
            bound = math.floor(bound + _EPS)
        if n:
            worst = max(worst, len(who) * B / (c * n))
        if len(who) > bound + _EPS:
            bad.append({"outcome": sorted(o), "deviators": who, "count": len(who), "bound": bound})
    rep.add(
        "partial_core",
        not bad,
        {"violations": bad} if bad else None,
        f"gamma={gamma:g} rho={rho:g} over {checked} outcomes, |V|={len(covered)}",
    )
    rep.worst_gamma_needed = worst
    return rep


def hoeffding_halfwidth(trials: int, confidence: float = 0.99) -> float:
    """Two-sided Hoeffding half-width for a mean of ``trials`` values in ``[0, 1]``."""
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * trials))


@dataclass
class CoverageEstimate:
    trials: int
    frequencies: np.ndarray
    halfwidth: float
    lam: float | None
    voters: tuple

    @property
    def lower(self) -> np.ndarray:
        return np.clip(self.frequencies - self.halfwidth, 0.0, 1.0)

    @property
    def upper(self) -> np.ndarray:
        return np.clip(self.frequencies + self.halfwidth, 0.0, 1.0)

    @property
    def flagged(self) -> list:
        if self.lam is None:
            return []
        return [v for v, u in zip(self.voters, self.upper) if u < self.lam]

    def to_report(self) -> VerifyReport:
        rep = VerifyReport()
        fl = self.flagged
        rep.add("coverage", not fl, {"voters": fl} if fl else None, f"lambda={self.lam} trials={self.trials}")
        rep.stats = {
            "trials": self.trials,
            "min_frequency": float(self.frequencies.min()) if self.frequencies.size else 1.0,
            "halfwidth": self.halfwidth,
            "lambda": self.lam,
        }
        return rep


def estimate_coverage(sampler, trials: int, seed: int, lam: float | None = None, draws=None) -> CoverageEstimate:
    """Per-voter empirical frequency of being represented, with 99% Hoeffding intervals.

    ``sampler`` needs ``sample(trials, seed)`` and ``instance``; precomputed
    ``draws`` may be passed instead to avoid resampling. Voters whose upper
    bound falls below ``lam`` are flagged.
    """
    if trials < 100:
        raise ValueError("at least 100 trials are required")
    inst = sampler.instance
    draws = draws if draws is not None else sampler.sample(trials, seed)
    counts = np.zeros(inst.n)
    for d in draws:
        for v in d.covered:
            counts[inst.voter_index[v]] += 1
    lam = getattr(sampler, "lam", None) if lam is None else lam
    return CoverageEstimate(len(draws), counts / len(draws), hoeffding_halfwidth(len(draws)), lam, inst.voters)


def check_lp_solution(instance: Instance, y, p, alpha: float, comparison=None, budget=None, tol: float = 1e-8) -> VerifyReport:
    """Check a point against every row of LP(alpha, C, B).

    ``y`` has one entry per element of ``comparison`` (the null entry is
    ignored) and ``p`` one row per voter, aligned the same way.
    """
    comp, B = _scope(instance, comparison, budget)
    y = np.asarray(y, dtype=float)
    p = np.asarray(p, dtype=float)
    rep = VerifyReport()
    n = instance.n
    if y.shape != (len(comp),) or p.shape != (n, len(comp)):
        rep.add("shape", False, {"y": list(y.shape), "p": list(p.shape)})
        return rep
    idx = [j for j, o in enumerate(comp) if o != BOTTOM]
    cost = np.array([instance.cost(o) for o in comp])
    ranks = np.column_stack([instance.values(o) for o in comp]) if comp else np.zeros((n, 0))

    lo = min(float(y[idx].min(initial=0.0)), float(p[:, idx].min(initial=0.0)))
    hi_y = float((y[idx] - B).max(initial=-np.inf))
    hi_p = float((p[:, idx] - 1).max(initial=-np.inf))
    box = max(-lo, hi_y, hi_p, 0.0)
    rep.add("bounds", box <= tol, {"violation": box} if box > tol else None)

    spent = float(cost[idx] @ y[idx])
    rep.add("budget_row", abs(spent - B) <= tol, {"spent": spent, "budget": B, "violation": abs(spent - B)} if abs(spent - B) > tol else None)

    rev_bad = []
    ratio_bad = []
    for j in idx:
        s = float(p[:, j].sum())
        cap = alpha / 2.0 * cost[j] / B * n
        if s > cap + tol:
            rev_bad.append({"outcome": sorted(comp[j]), "revenue": s, "cap": cap})
        # revenue-to-cost diagnostic with mean income 1/2
        if s / cost[j] > alpha * n * 0.5 / B + tol:
            ratio_bad.append({"outcome": sorted(comp[j]), "ratio": s / cost[j], "cap": alpha * n * 0.5 / B})
    rep.add("revenue_rows", not rev_bad, {"violations": rev_bad[:10]} if rev_bad else None)
    rep.add("revenue_to_cost", not ratio_bad, {"violations": ratio_bad[:10]} if ratio_bad else None)

    sup_bad = []
    r_idx = ranks[:, idx]
    # supply[i, j]: total allocation on outcomes voter i weakly prefers to outcome j
    weakly = r_idx[:, :, None] <= r_idx[:, None, :]
    supply = np.einsum("k,ikj->ij", y[idx], weakly.astype(float))
    need = alpha * (1.0 - p[:, idx])
    gap = need - supply
    worst = float(gap.max(initial=0.0))
    for i, jj in zip(*np.nonzero(gap > tol)):
        j = idx[jj]
        sup_bad.append(
            {"voter": instance.voters[i], "outcome": sorted(comp[j]), "supply": float(supply[i, jj]), "need": float(need[i, jj])}
        )
    rep.add("supply_rows", not sup_bad, {"violations": sup_bad[:10], "count": len(sup_bad)} if sup_bad else None)
    rep.stats = {"max_supply_shortfall": max(worst, 0.0), "budget_gap": abs(spent - B)}
    return rep


class EnumerationTooLarge(ValueError):
    pass


def brute_force_min_gamma(instance: Instance, comparison=None, budget=None, limit: int = 2**20):
    """Smallest core level attainable by any affordable merge of comparison outcomes.

    Returns
    -------
    (float, frozenset)
        The minimum of ``worst_gamma_needed`` and the first outcome (in
        enumeration order, by subset bitmask) attaining it.
    """
    comp, B = _scope(instance, comparison, budget)
    items = [o for o in comp if o != BOTTOM]
    if 2 ** len(items) > limit:
        raise EnumerationTooLarge(f"{2 ** len(items)} candidate subsets exceed the limit {limit}")
    masks = np.array([instance.mask(o) for o in items], dtype=bool).reshape(len(items), len(instance.atoms))
    costs_c = np.array([instance.cost(o) for o in items])
    atom_costs = instance.atom_costs
    seen = {}
    for bits in range(2 ** len(items)):
        sel = [k for k in range(len(items)) if bits >> k & 1]
        m = masks[sel].any(axis=0) if sel else np.zeros(len(instance.atoms), dtype=bool)
        key = m.tobytes()
        if key in seen:
            continue
        if atom_costs[m].sum() <= B + _EPS:
            seen[key] = m
    cands = list(seen.values())
    vals = instance.values_of_masks(np.array(cands))  # (n, K)
    item_vals = np.column_stack([instance.values(o) for o in items]) if items else np.zeros((instance.n, 0))
    n = instance.n
    best, best_mask = math.inf, None
    for k, m in enumerate(cands):
        if items and n:
            counts = (item_vals < vals[:, k : k + 1]).sum(axis=0)
            need = float((counts * B / (costs_c * n)).max())
        else:
            need = 0.0
        if need < best - 1e-12:
            best, best_mask = need, m
    return best, instance.outcome_from_mask(best_mask)


def describe(outcome) -> str:
    return format_outcome(frozenset(outcome))
