"""Random demand, producer best response and a damped price iteration.

Everything here works on arrays aligned with ``instance.comparison_set``:
prices are ``(n, |C|)`` with a zero column for the null outcome, allocations
are ``(|C|,)`` with a zero entry for the null outcome.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .model import Instance

_EPS = 1e-12


@dataclass(frozen=True)
class IncomeModel:
    """Distribution of a voter's random income on ``[0, 1]``.

    Parameters
    ----------
    kind : {"uniform01", "uniform-interval", "custom-cdf"}
    lo, hi : float
        Support of the uniform-interval kind.
    cdf : callable, optional
        Vectorized cumulative distribution function for the custom kind. It
        must be nondecreasing with ``cdf(0) = 0`` and ``cdf(1) = 1``.
    """

    kind: str = "uniform01"
    lo: float = 0.0
    hi: float = 1.0
    cdf_fn: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind == "uniform01":
            return
        if self.kind == "uniform-interval":
            if not (0.0 <= self.lo < self.hi <= 1.0):
                raise ValueError("uniform-interval needs 0 <= lo < hi <= 1")
            return
        if self.kind == "custom-cdf":
            if self.cdf_fn is None:
                raise ValueError("custom-cdf needs a cdf function")
            grid = np.linspace(0.0, 1.0, 1001)
            vals = np.asarray(self.cdf_fn(grid), dtype=float)
            if abs(vals[0]) > 1e-9 or abs(vals[-1] - 1.0) > 1e-9:
                raise ValueError("cdf must satisfy cdf(0)=0 and cdf(1)=1")
            if np.any(np.diff(vals) < -1e-12):
                raise ValueError("non-monotone cdf")
            return
        raise ValueError(f"unknown income kind {self.kind!r}")

    @classmethod
    def uniform(cls) -> "IncomeModel":
        return cls("uniform01")

    @classmethod
    def interval(cls, lo: float, hi: float) -> "IncomeModel":
        return cls("uniform-interval", lo=lo, hi=hi)

    @classmethod
    def custom(cls, cdf: Callable) -> "IncomeModel":
        return cls("custom-cdf", cdf_fn=cdf)

    def cdf(self, t) -> np.ndarray:
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        if self.kind == "uniform01":
            return t
        if self.kind == "uniform-interval":
            return np.clip((t - self.lo) / (self.hi - self.lo), 0.0, 1.0)
        return np.clip(np.asarray(self.cdf_fn(t), dtype=float), 0.0, 1.0)

    @property
    def mean(self) -> float:
        if self.kind == "uniform01":
            return 0.5
        if self.kind == "uniform-interval":
            return 0.5 * (self.lo + self.hi)
        # E[I] = integral of the survival function on [0, 1]
        val, _ = integrate.quad(lambda t: 1.0 - float(self.cdf(t)), 0.0, 1.0, limit=200)
        return float(val)


def _check_price_row(prices_i: np.ndarray, bottom: int):
    if np.any(~np.isfinite(prices_i)) or np.any(prices_i < -_EPS) or np.any(prices_i > 1 + _EPS):
        raise ValueError("price out of range [0, 1]")
    if abs(prices_i[bottom]) > _EPS:
        raise ValueError("the null outcome must have price 0")


def _demand_from_order(order: np.ndarray, f: np.ndarray, bottom: int) -> np.ndarray:
    """Closed-form demand given outcome indices best-first and cdf values ``f``."""
    x = np.zeros(len(f))
    best_f = 1.0  # running min of F over strictly better outcomes; 1 plays the role of "income <= 1"
    for j in order:
        if j == bottom:
            break
        x[j] = max(best_f - f[j], 0.0)
        best_f = min(best_f, f[j])
    x[bottom] = max(1.0 - x.sum(), 0.0)
    return x


def random_demand(instance: Instance, voter, prices_i, income: IncomeModel | None = None) -> np.ndarray:
    """Distribution of the voter's most preferred affordable comparison outcome.

    Parameters
    ----------
    instance : Instance
    voter : voter id or index
    prices_i : array_like, shape (|C|,)
        Personalized prices; the null outcome must cost 0.
    income : IncomeModel, optional
        Defaults to uniform income on ``[0, 1]``.

    Returns
    -------
    ndarray, shape (|C|,)
        Probabilities summing to one.
    """
    income = income or IncomeModel.uniform()
    prices_i = np.asarray(prices_i, dtype=float)
    _check_price_row(prices_i, instance.bottom_index)
    i = instance._voter_pos(voter)
    order = np.argsort(instance.rank_matrix[i], kind="stable")
    return _demand_from_order(order, income.cdf(prices_i), instance.bottom_index)


def demand_matrix(instance: Instance, prices, income: IncomeModel | None = None) -> np.ndarray:
    """Random demand of every voter, shape ``(n, |C|)``."""
    income = income or IncomeModel.uniform()
    prices = np.asarray(prices, dtype=float)
    if prices.shape != (instance.n, len(instance.comparison_set)):
        raise ValueError("price matrix has the wrong shape")
    f = income.cdf(prices)
    orders = np.argsort(instance.rank_matrix, axis=1, kind="stable")
    out = np.empty_like(prices)
    for i in range(instance.n):
        _check_price_row(prices[i], instance.bottom_index)
        out[i] = _demand_from_order(orders[i], f[i], instance.bottom_index)
    return out


def producer_best_response(prices, costs, budget: float, bottom: int | None = None) -> np.ndarray:
    """Revenue-maximizing allocation: the whole budget on the best revenue/cost outcome.

    ``costs`` and the columns of ``prices`` are aligned; the ``bottom`` column
    (if given) is never selected. Ties go to the lowest index.
    """
    prices = np.atleast_2d(np.asarray(prices, dtype=float))
    costs = np.asarray(costs, dtype=float)
    cand = np.array([j for j in range(len(costs)) if j != bottom], dtype=int)
    if cand.size == 0:
        raise ValueError("no non-null outcome to allocate to")
    if np.any(costs[cand] <= 0):
        raise ValueError("non-null outcomes must have positive cost")
    ratio = prices[:, cand].sum(axis=0) / costs[cand]
    best = cand[int(np.argmax(ratio))]
    y = np.zeros(len(costs))
    y[best] = budget / costs[best]
    return y


@dataclass
class LeoState:
    """Demand ``x``, allocation ``y`` and prices ``p``, all aligned with the comparison set."""

    x: np.ndarray
    y: np.ndarray
    p: np.ndarray

    @classmethod
    def initial(cls, instance: Instance, income: IncomeModel | None = None, prices=None) -> "LeoState":
        n, m = instance.n, len(instance.comparison_set)
        p = np.zeros((n, m)) if prices is None else np.array(prices, dtype=float)
        x = demand_matrix(instance, p, income)
        y = producer_best_response(p, instance.comparison_costs, instance.budget, instance.bottom_index)
        return cls(x, y, p)

    def copy(self) -> "LeoState":
        return LeoState(self.x.copy(), self.y.copy(), self.p.copy())


def _validate_state(instance: Instance, state: LeoState):
    n, m = instance.n, len(instance.comparison_set)
    if state.x.shape != (n, m) or state.p.shape != (n, m) or state.y.shape != (m,):
        raise ValueError("state arrays do not match the instance")
    if np.any(state.p < -_EPS) or np.any(state.p > 1 + _EPS):
        raise ValueError("price out of range [0, 1]")
    if np.any(np.abs(state.p[:, instance.bottom_index]) > _EPS):
        raise ValueError("the null outcome must have price 0")


def tatonnement_step(instance: Instance, state: LeoState, income: IncomeModel | None = None, alpha: float = 1.0) -> LeoState:
    """One application of the demand/supply price-adjustment map.

    Prices move by ``alpha * new_demand - current_supply`` and are clipped to
    ``[0, 1]``; demand and supply are then recomputed from the old prices.
    """
    _validate_state(instance, state)
    x_new = demand_matrix(instance, state.p, income)
    y_new = producer_best_response(state.p, instance.comparison_costs, instance.budget, instance.bottom_index)
    p_new = np.clip(state.p + (alpha * x_new - state.y[None, :]), 0.0, 1.0)
    p_new[:, instance.bottom_index] = 0.0
    return LeoState(x_new, y_new, p_new)


@dataclass
class TatonnementResult:
    state: LeoState
    iterations: int
    history: list
    converged: bool


def tatonnement(
    instance: Instance,
    income: IncomeModel | None = None,
    alpha: float = 1.0,
    state: LeoState | None = None,
    damping: float = 0.5,
    max_iter: int = 1000,
    tol: float = 1e-9,
) -> TatonnementResult:
    """Iterate the damped price map and log residuals.

    No convergence is promised; ``converged`` only reports whether every
    residual dropped below ``tol`` within ``max_iter`` steps.
    """
    if not (0.0 < damping <= 1.0):
        raise ValueError("damping must lie in (0, 1]")
    state = state.copy() if state is not None else LeoState.initial(instance, income)
    history = []
    for it in range(1, max_iter + 1):
        step = tatonnement_step(instance, state, income, alpha)
        p = (1.0 - damping) * state.p + damping * step.p
        x = demand_matrix(instance, p, income)
        state = LeoState(x, step.y, p)
        res = leo_residual(instance, state, income, alpha)
        history.append(res)
        if max(res["r1"], res["r2"], res["r3"]) <= tol:
            return TatonnementResult(state, it, history, True)
    return TatonnementResult(state, max_iter, history, False)


def leo_residual(instance: Instance, state: LeoState, income: IncomeModel | None = None, alpha: float = 1.0) -> dict:
    """Violation of the equilibrium conditions by a state.

    Returns
    -------
    dict
        ``r1``: max deviation of ``x`` from the random demand at ``p``.
        ``r2``: max of ``max(alpha*x - y, 0) + p * max(y - alpha*x, 0)``.
        ``r3``: best attainable revenue minus the revenue of ``y``.
        ``r2_cumulative``: max shortfall of supply against alpha times demand,
        both summed over each voter's upper sets of the ranking.
        ``ratio_excess``: excess of the best revenue/cost ratio over
        ``alpha * n * E[I] / B``.
    """
    income = income or IncomeModel.uniform()
    _validate_state(instance, state)
    bot = instance.bottom_index
    nb = instance.nonbottom
    x, y, p = state.x, state.y, state.p
    r1 = float(np.abs(x - demand_matrix(instance, p, income)).max()) if x.size else 0.0

    ax = alpha * x[:, nb]
    yb = y[None, nb]
    r2 = np.maximum(ax - yb, 0.0) + p[:, nb] * np.maximum(yb - ax, 0.0)
    r2 = float(r2.max()) if r2.size else 0.0

    costs = instance.comparison_costs
    revenue = p.sum(axis=0)
    ratios = revenue[nb] / costs[nb]
    best = float(ratios.max()) if ratios.size else 0.0
    r3 = max(best * instance.budget - float(revenue[nb] @ y[nb]), 0.0)

    # cumulative form over upper sets; ranks sort each row best-first
    cum = 0.0
    ranks = instance.rank_matrix
    for i in range(instance.n):
        order = [j for j in np.argsort(ranks[i], kind="stable") if j != bot]
        gap = alpha * np.cumsum(x[i, order]) - np.cumsum(y[order])
        if gap.size:
            cum = max(cum, float(gap.max()))
    ratio_excess = max(best - alpha * instance.n * income.mean / instance.budget, 0.0)
    return {"r1": r1, "r2": r2, "r3": r3, "r2_cumulative": cum, "ratio_excess": ratio_excess}
