"""Dependent rounding of fractional allocations and lottery realizations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Instance, covered_mask

_SNAP = 1e-12


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent generator for one trial, derived from ``(seed, trial)``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(trial),)))


def dependent_round(z, weights, cap: float | None = None, rng: np.random.Generator | None = None) -> np.ndarray:
    """Round ``z`` in ``[0, 1]^m`` to a 0/1 vector.

    Two fractional entries are paired at a time (lowest indices first) and
    mass is moved between them so that their weighted sum is unchanged, in a
    random direction chosen to keep each expectation fixed. Each step makes
    at least one entry integral. A last lone fractional entry is rounded up
    with probability equal to its value.

    The output satisfies ``E[Z] = z``, ``weights @ Z <= weights @ z +
    max(weights[z > 0])`` on every run, and is negatively correlated in the
    sense that the probability that a set of entries are all zero is at most
    the product of their complements.

    Parameters
    ----------
    z : array_like
    weights : array_like
        Positive weight per entry.
    cap : float, optional
        If given, ``weights @ z`` must not exceed it.
    rng : numpy.random.Generator, optional
    """
    rng = rng if rng is not None else np.random.default_rng()
    z = np.array(z, dtype=float)
    a = np.asarray(weights, dtype=float)
    if z.shape != a.shape or z.ndim != 1:
        raise ValueError("z and weights must be 1-d arrays of equal length")
    if np.any(z < -_SNAP) or np.any(z > 1 + _SNAP):
        raise ValueError("z must lie in [0, 1]")
    if np.any(a <= 0):
        raise ValueError("weights must be positive")
    if cap is not None and a @ z > cap + 1e-9 * max(1.0, cap):
        raise ValueError(f"weighted sum {a @ z:.6g} exceeds cap {cap:.6g}")
    z = np.clip(z, 0.0, 1.0)

    def snap(k):
        if z[k] < _SNAP:
            z[k] = 0.0
        elif z[k] > 1.0 - _SNAP:
            z[k] = 1.0

    for k in range(len(z)):
        snap(k)
    frac = [k for k in range(len(z)) if 0.0 < z[k] < 1.0]
    while len(frac) >= 2:
        j, k = frac[0], frac[1]
        r = a[k] / a[j]
        up = min(1.0 - z[j], z[k] * r)  # raise j, lower k
        down = min(z[j], (1.0 - z[k]) * r)  # lower j, raise k
        if rng.random() < down / (up + down):
            z[j] += up
            z[k] -= up / r
        else:
            z[j] -= down
            z[k] += down / r
        snap(j)
        snap(k)
        frac = [q for q in frac if 0.0 < z[q] < 1.0]
    for k in frac:
        z[k] = 1.0 if rng.random() < z[k] else 0.0
    return z.astype(np.int8)


def round_allocation_mask(instance: Instance, y, rng: np.random.Generator | None = None) -> np.ndarray:
    """Atom mask of the merge of all comparison outcomes picked by rounding ``min(1, y)``."""
    y = np.asarray(y, dtype=float)
    nb = instance.nonbottom
    if nb.size == 0:
        return np.zeros(len(instance.atoms), dtype=bool)
    z = np.minimum(1.0, np.maximum(y[nb], 0.0))
    picks = dependent_round(z, instance.comparison_costs[nb], rng=rng)
    chosen = nb[picks.astype(bool)]
    return instance.comparison_masks[chosen].any(axis=0)


def round_allocation(instance: Instance, y, rng: np.random.Generator | None = None) -> frozenset:
    """Merged outcome obtained by dependent rounding of an allocation over the comparison set."""
    return instance.outcome_from_mask(round_allocation_mask(instance, y, rng))


@dataclass
class PartialCoreSolution:
    """A merged outcome together with the voters it represents.

    ``certified_gamma`` and ``certified_rho`` state the level at which the
    pair is guaranteed to be a partial-core solution, relative to ``budget``
    and to ``n`` voters.
    """

    outcome: frozenset
    covered: tuple
    certified_gamma: float
    certified_rho: float
    realized_cost: float
    budget: float
    n: int
    covered_mask: np.ndarray = field(repr=False, default=None)

    @property
    def coverage(self) -> float:
        return len(self.covered) / self.n if self.n else 1.0

    def to_dict(self) -> dict:
        return {
            "outcome": sorted(self.outcome),
            "covered": list(self.covered),
            "realized_cost": self.realized_cost,
            "certified_gamma": self.certified_gamma,
            "certified_rho": self.certified_rho,
        }


def sample_partial_core(
    instance: Instance,
    y,
    p,
    tau: float,
    rng: np.random.Generator | None = None,
    gamma: float | None = None,
    alpha: float | None = None,
    budget: float | None = None,
    rho: float = 1.0,
    target: Instance | None = None,
) -> PartialCoreSolution:
    """Draw one realization of the dependent lottery induced by ``(y, p)``.

    ``instance`` is the instance the LP was solved on (its comparison set and
    budget). ``target`` is the instance whose voters and budget the
    certificate refers to; it defaults to ``instance``. ``gamma`` defaults to
    ``alpha / (2 tau)``, the uniform-income level relative to the LP budget.
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must lie in (0, 1]")
    target = target or instance
    if gamma is None:
        if alpha is None:
            raise ValueError("give gamma or alpha")
        gamma = alpha * 0.5 / tau
    mask = round_allocation_mask(instance, y, rng)
    cov = covered_mask(instance, mask, p, tau)
    outcome = instance.outcome_from_mask(mask)
    return PartialCoreSolution(
        outcome=outcome,
        covered=tuple(instance.voters[i] for i in np.flatnonzero(cov)),
        certified_gamma=float(gamma),
        certified_rho=float(rho),
        realized_cost=float(instance.atom_costs[mask].sum()),
        budget=float(target.budget if budget is None else budget),
        n=target.n,
        covered_mask=cov,
    )
