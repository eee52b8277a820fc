"""Budgeted social choice instances.

Outcomes are sets of atoms (projects, centers, labels). The empty set is the
null outcome ``BOTTOM``; merging is set union and the cost of an outcome is the
total cost of its distinct atoms, so merging is sub-additive by construction.

Voter preferences are given by ranking a family of *ranked sets* of atoms. The
value of an arbitrary outcome ``S`` for a voter is the position of the best
ranked set contained in ``S``; lower positions are better and ``BOTTOM`` is
always last. This realizes the "top-ranked project in S" extension used for
ranking ballots, and the combination-containment extension used for
multi-label data.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

Outcome = frozenset
BOTTOM: frozenset = frozenset()

KINDS = ("explicit-order", "top-element-ranking", "distance-ranking", "combo-containment")


class InstanceError(ValueError):
    """Raised when an instance document or object violates an invariant."""


class Comparison(enum.Enum):
    FIRST_BETTER = "first"
    SECOND_BETTER = "second"
    TIE = "tie"


@dataclass(frozen=True)
class Atom:
    id: str
    cost: float


def outcome(atoms: Iterable[str] = ()) -> frozenset:
    return frozenset(atoms)


def merge(s: frozenset, t: frozenset) -> frozenset:
    """Merge two outcomes (atom-set union)."""
    return frozenset(s) | frozenset(t)


def format_outcome(o: frozenset) -> str:
    return "{" + ",".join(sorted(o)) + "}" if o else "⊥"


@dataclass(frozen=True, eq=False)
class PreferenceEvaluator:
    """Per-voter strict rankings over a family of ranked atom sets.

    Parameters
    ----------
    kind : str
        One of ``KINDS``.
    ranked_sets : tuple of frozenset
        The atom sets that voters rank. Never contains ``BOTTOM``.
    orders : tuple of tuple of int
        ``orders[i]`` lists indices into ``ranked_sets``, best first, and is a
        permutation of ``range(len(ranked_sets))``.
    points, centers : ndarray, optional
        Raw coordinates kept for the distance-ranking kind so that the
        evaluator can be serialized back to its source form.
    """

    kind: str
    ranked_sets: tuple
    orders: tuple
    points: np.ndarray | None = None
    centers: np.ndarray | None = None

    @cached_property
    def ranks(self) -> np.ndarray:
        r = np.empty((len(self.orders), len(self.ranked_sets)), dtype=np.int64)
        for i, order in enumerate(self.orders):
            r[i, list(order)] = np.arange(len(order))
        return r

    @property
    def worst(self) -> int:
        """Rank value assigned to ``BOTTOM`` (strictly worse than any ranked set)."""
        return len(self.ranked_sets)

    def subset(self, rows: Sequence[int]) -> "PreferenceEvaluator":
        rows = list(rows)
        return PreferenceEvaluator(
            kind=self.kind,
            ranked_sets=self.ranked_sets,
            orders=tuple(self.orders[i] for i in rows),
            points=None if self.points is None else self.points[rows],
            centers=self.centers,
        )


@dataclass(frozen=True, eq=False)
class Instance:
    """An instance of budgeted social choice with a comparison set.

    All per-outcome arrays exposed here (``comparison_costs``, columns of
    ``rank_matrix``, LP allocations, price matrices) are aligned with
    ``comparison_set``, which always contains ``BOTTOM``.
    """

    voters: tuple
    atoms: tuple
    budget: float
    comparison_set: tuple
    evaluator: PreferenceEvaluator
    name: str = field(default="", compare=False)

    def __post_init__(self):
        validate(self)

    # -- basic lookups -------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.voters)

    @cached_property
    def atom_index(self) -> dict:
        return {a.id: k for k, a in enumerate(self.atoms)}

    @cached_property
    def atom_costs(self) -> np.ndarray:
        return np.array([a.cost for a in self.atoms], dtype=float)

    @cached_property
    def voter_index(self) -> dict:
        return {v: i for i, v in enumerate(self.voters)}

    @cached_property
    def bottom_index(self) -> int:
        return self.comparison_set.index(BOTTOM)

    @cached_property
    def comparison_costs(self) -> np.ndarray:
        return np.array([self.cost(o) for o in self.comparison_set], dtype=float)

    @cached_property
    def comparison_masks(self) -> np.ndarray:
        return np.array([self.mask(o) for o in self.comparison_set], dtype=bool).reshape(
            len(self.comparison_set), len(self.atoms)
        )

    @cached_property
    def nonbottom(self) -> np.ndarray:
        """Indices of the non-null comparison outcomes."""
        return np.array([j for j in range(len(self.comparison_set)) if j != self.bottom_index], dtype=int)

    @cached_property
    def _ranked_masks(self) -> np.ndarray:
        ev = self.evaluator
        m = np.zeros((len(ev.ranked_sets), len(self.atoms)), dtype=bool)
        for r, s in enumerate(ev.ranked_sets):
            for a in s:
                m[r, self.atom_index[a]] = True
        return m

    @cached_property
    def rank_matrix(self) -> np.ndarray:
        """``rank_matrix[i, j]``: value of comparison outcome ``j`` for voter ``i`` (lower is better)."""
        return self.values_of_masks(self.comparison_masks)

    # -- outcomes ------------------------------------------------------

    def mask(self, o: Iterable[str]) -> np.ndarray:
        m = np.zeros(len(self.atoms), dtype=bool)
        for a in o:
            try:
                m[self.atom_index[a]] = True
            except KeyError:
                raise InstanceError(f"outcome references unknown atom {a!r}") from None
        return m

    def outcome_from_mask(self, m: np.ndarray) -> frozenset:
        return frozenset(self.atoms[k].id for k in np.flatnonzero(m))

    def cost(self, o: Iterable[str]) -> float:
        o = frozenset(o)
        for a in o:
            if a not in self.atom_index:
                raise InstanceError(f"outcome references unknown atom {a!r}")
        return float(sum(self.atoms[self.atom_index[a]].cost for a in o))

    def values_of_masks(self, masks: np.ndarray) -> np.ndarray:
        """Voter values for a stack of outcome masks, shape ``(n, len(masks))``."""
        masks = np.atleast_2d(masks)
        # ranked set r is realized inside outcome s iff it has no atom outside s
        contained = ~(self._ranked_masks[None, :, :] & ~masks[:, None, :]).any(axis=2)
        ranks = self.evaluator.ranks
        worst = self.evaluator.worst
        out = np.full((self.n, masks.shape[0]), worst, dtype=np.int64)
        for s in range(masks.shape[0]):
            cols = contained[s]
            if cols.any():
                out[:, s] = ranks[:, cols].min(axis=1)
        return out

    def values(self, o: Iterable[str]) -> np.ndarray:
        """Value of outcome ``o`` for every voter (lower is better)."""
        return self.values_of_masks(self.mask(o)[None, :])[:, 0]

    def values_of_mask(self, m: np.ndarray) -> np.ndarray:
        contained = ~(self._ranked_masks & ~m[None, :]).any(axis=1)
        if not contained.any():
            return np.full(self.n, self.evaluator.worst, dtype=np.int64)
        return self.evaluator.ranks[:, contained].min(axis=1)

    # -- derived instances ----------------------------------------------

    def restrict(self, voters=None, comparison=None, budget=None) -> "Instance":
        """Sub-instance on a voter subset, comparison subset and/or new budget.

        ``voters`` holds voter ids or indices; ``comparison`` holds outcomes or
        indices into ``comparison_set``. ``BOTTOM`` is always kept.
        """
        rows = list(range(self.n)) if voters is None else [self._voter_pos(v) for v in voters]
        if comparison is None:
            comp = self.comparison_set
        else:
            comp = [self.comparison_set[c] if isinstance(c, (int, np.integer)) else frozenset(c) for c in comparison]
            if BOTTOM not in comp:
                comp.append(BOTTOM)
            comp = tuple(comp)
        return Instance(
            voters=tuple(self.voters[i] for i in rows),
            atoms=self.atoms,
            budget=self.budget if budget is None else float(budget),
            comparison_set=comp,
            evaluator=self.evaluator.subset(rows),
            name=self.name,
        )

    def _voter_pos(self, v) -> int:
        if isinstance(v, (int, np.integer)) and v not in self.voter_index:
            return int(v)
        return self.voter_index[v]

    def to_dict(self) -> dict:
        return dump_instance(self)


# ---------------------------------------------------------------------------
# preference queries


def compare(instance: Instance, voter, s: Iterable[str], o: Iterable[str]) -> Comparison:
    """Compare outcomes ``s`` and ``o`` for one voter."""
    i = instance._voter_pos(voter)
    vs = instance.values(s)[i]
    vo = instance.values(o)[i]
    if vs < vo:
        return Comparison.FIRST_BETTER
    if vo < vs:
        return Comparison.SECOND_BETTER
    return Comparison.TIE


def _check_prices(prices: np.ndarray):
    if np.any(prices < -1e-12) or np.any(prices > 1 + 1e-12):
        raise ValueError("prices must lie in [0, 1]")


def boundary_indices(instance: Instance, prices: np.ndarray, tau: float) -> np.ndarray:
    """Index (into the comparison set) of each voter's tau-boundary outcome.

    The boundary is the voter's most preferred comparison outcome whose
    personalized price is at most ``tau``; ``BOTTOM`` (price 0) is always
    affordable.
    """
    prices = np.asarray(prices, dtype=float)
    _check_prices(prices)
    affordable = prices <= tau
    affordable[:, instance.bottom_index] = True
    ranks = np.where(affordable, instance.rank_matrix, np.iinfo(np.int64).max)
    return ranks.argmin(axis=1)


def boundary_outcome(instance: Instance, voter, prices_i, tau: float) -> frozenset:
    prices_i = np.asarray(prices_i, dtype=float)
    _check_prices(prices_i)
    if prices_i[instance.bottom_index] != 0:
        raise ValueError("the null outcome must have price 0")
    i = instance._voter_pos(voter)
    ok = prices_i <= tau
    ok[instance.bottom_index] = True
    ranks = instance.rank_matrix[i]
    j = min(np.flatnonzero(ok), key=lambda k: ranks[k])
    return instance.comparison_set[j]


def covered_mask(instance: Instance, outcome_mask: np.ndarray, prices: np.ndarray, tau: float) -> np.ndarray:
    """Voters tau-covered by the outcome: it weakly beats their boundary outcome."""
    b = boundary_indices(instance, prices, tau)
    vals = instance.values_of_mask(outcome_mask)
    return vals <= instance.rank_matrix[np.arange(instance.n), b]


def covered_set(instance: Instance, o: Iterable[str], prices: np.ndarray, tau: float) -> frozenset:
    m = covered_mask(instance, instance.mask(o), prices, tau)
    return frozenset(instance.voters[i] for i in np.flatnonzero(m))


# ---------------------------------------------------------------------------
# validation and (de)serialization


def validate(inst: Instance) -> None:
    ids = [a.id for a in inst.atoms]
    if len(set(ids)) != len(ids):
        raise InstanceError("duplicate atom ids")
    if len(set(inst.voters)) != len(inst.voters):
        raise InstanceError("duplicate voter ids")
    for a in inst.atoms:
        if not isinstance(a.cost, (int, float)) or math.isnan(a.cost):
            raise InstanceError(f"atom {a.id!r} has a non-numeric cost")
        if a.cost <= 0:
            raise InstanceError(f"zero-cost non-⊥ atom {a.id!r}")
        if a.cost < 1:
            raise InstanceError(f"atom {a.id!r} costs {a.cost} < 1 (the smallest non-⊥ cost must be at least 1)")
    if not (inst.budget > 0) or not math.isfinite(inst.budget):
        raise InstanceError("budget must be positive")
    if BOTTOM not in inst.comparison_set:
        raise InstanceError("missing ⊥ in the comparison set")
    if len(set(inst.comparison_set)) != len(inst.comparison_set):
        raise InstanceError("duplicate comparison outcomes")
    known = set(ids)
    for o in inst.comparison_set:
        if not o <= known:
            raise InstanceError(f"comparison outcome references unknown atoms {sorted(o - known)}")
    ev = inst.evaluator
    if ev.kind not in KINDS:
        raise InstanceError(f"unknown preference kind {ev.kind!r}")
    if len(ev.orders) != len(inst.voters):
        raise InstanceError("number of preference orders does not match number of voters")
    for s in ev.ranked_sets:
        if not s:
            raise InstanceError("⊥ cannot be ranked above other outcomes")
        if not s <= known:
            raise InstanceError(f"ranking references unknown atoms {sorted(s - known)}")
    r = len(ev.ranked_sets)
    for i, order in enumerate(ev.orders):
        if sorted(order) != list(range(r)):
            raise InstanceError(f"preference order of voter {inst.voters[i]!r} is not a complete strict ranking")
    rm = inst.rank_matrix
    for i in range(inst.n):
        row = rm[i]
        if len(np.unique(row)) != len(row):
            raise InstanceError(
                f"preferences of voter {inst.voters[i]!r} are not strict over the comparison set"
            )
        if row.argmax() != inst.bottom_index:
            raise InstanceError("⊥ must be ranked last")


def _voter_ids(value) -> tuple:
    if isinstance(value, int):
        if value < 0:
            raise InstanceError("voter count must be nonnegative")
        return tuple(f"v{i + 1}" for i in range(value))
    return tuple(str(v) for v in value)


def _parse_set_rankings(rankings: Mapping, voters: tuple, require_bottom: bool):
    ranked: dict = {}
    orders = []
    for v in voters:
        if v not in rankings:
            raise InstanceError(f"no ranking for voter {v!r}")
        seq = [frozenset(s) for s in rankings[v]]
        if BOTTOM in seq:
            if seq.index(BOTTOM) != len(seq) - 1:
                raise InstanceError("⊥ must be ranked last")
            seq = seq[:-1]
        elif require_bottom:
            raise InstanceError("⊥ must be ranked last")
        if len(set(seq)) != len(seq):
            raise InstanceError(f"ranking of voter {v!r} repeats an outcome")
        for s in seq:
            ranked.setdefault(s, len(ranked))
        orders.append([ranked[s] for s in seq])
    sets = tuple(ranked)
    for v, order in zip(voters, orders):
        if len(order) != len(sets):
            raise InstanceError(f"ranking of voter {v!r} is incomplete")
    return sets, tuple(tuple(o) for o in orders)


def distance_orders(points: np.ndarray, centers: np.ndarray) -> tuple:
    """Rank centers by Euclidean distance per point; ties go to the lower center index."""
    d = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=2)
    return tuple(tuple(int(k) for k in np.lexsort((np.arange(len(centers)), row))) for row in d)


def parse_evaluator(doc: Mapping, voters: tuple, atoms: tuple) -> PreferenceEvaluator:
    kind = doc.get("kind")
    atom_ids = [a.id for a in atoms]
    if kind == "top-element-ranking":
        rankings = doc.get("rankings", {})
        orders = []
        pos = {a: k for k, a in enumerate(atom_ids)}
        for v in voters:
            if v not in rankings:
                raise InstanceError(f"no ranking for voter {v!r}")
            seq = [str(a) for a in rankings[v]]
            if sorted(seq) != sorted(atom_ids):
                if any(a not in pos for a in seq):
                    raise InstanceError(f"ranking of voter {v!r} references unknown atoms")
                raise InstanceError(f"ranking of voter {v!r} must be a permutation of all atoms")
            orders.append(tuple(pos[a] for a in seq))
        return PreferenceEvaluator(kind, tuple(frozenset([a]) for a in atom_ids), tuple(orders))
    if kind in ("combo-containment", "explicit-order"):
        sets, orders = _parse_set_rankings(doc.get("rankings", {}), voters, kind == "explicit-order")
        return PreferenceEvaluator(kind, sets, orders)
    if kind == "distance-ranking":
        points = np.asarray(doc["points"], dtype=float)
        centers = np.asarray(doc["centers"], dtype=float)
        if points.ndim != 2 or centers.ndim != 2 or points.shape[1] != centers.shape[1]:
            raise InstanceError("points and centers must be 2-d arrays of equal dimension")
        if len(points) != len(voters):
            raise InstanceError("one point per voter is required")
        if len(centers) != len(atoms):
            raise InstanceError("one center per atom is required")
        if not (np.isfinite(points).all() and np.isfinite(centers).all()):
            raise InstanceError("distances must be finite")
        return PreferenceEvaluator(
            kind,
            tuple(frozenset([a]) for a in atom_ids),
            distance_orders(points, centers),
            points=points,
            centers=centers,
        )
    raise InstanceError(f"unknown preference kind {kind!r}")


def instance_from_dict(doc: Mapping, name: str = "") -> Instance:
    if not isinstance(doc, Mapping):
        raise InstanceError("instance document must be an object")
    for key in ("voters", "atoms", "budget", "comparison_set", "preferences"):
        if key not in doc:
            raise InstanceError(f"missing key {key!r}")
    voters = _voter_ids(doc["voters"])
    atoms = []
    for a in doc["atoms"]:
        if not isinstance(a, Mapping) or "id" not in a or "cost" not in a:
            raise InstanceError("atoms must be objects with 'id' and 'cost'")
        atoms.append(Atom(str(a["id"]), float(a["cost"])))
    atoms = tuple(atoms)
    if len({a.id for a in atoms}) != len(atoms):
        raise InstanceError("duplicate atom ids")
    comp = tuple(frozenset(str(x) for x in o) for o in doc["comparison_set"])
    if BOTTOM not in comp:
        raise InstanceError("missing ⊥ in the comparison set")
    evaluator = parse_evaluator(doc["preferences"], voters, atoms)
    if not float(doc["budget"]) >= 1:
        raise InstanceError("budget must be at least 1")
    return Instance(voters, atoms, float(doc["budget"]), comp, evaluator, name=name)


def load_instance(document) -> Instance:
    """Load and validate an instance from a JSON string, path-like, or mapping."""
    if isinstance(document, Mapping):
        return instance_from_dict(document)
    text = str(document)
    if not text.lstrip().startswith("{"):
        with open(text) as fh:
            return instance_from_dict(json.load(fh), name=text)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise InstanceError(f"invalid JSON: {e}") from None
    return instance_from_dict(doc)


def _num(x: float):
    return int(x) if float(x).is_integer() else float(x)


def dump_instance(inst: Instance) -> dict:
    ev = inst.evaluator
    if ev.kind == "top-element-ranking":
        prefs = {
            "kind": ev.kind,
            "rankings": {
                v: [next(iter(ev.ranked_sets[r])) for r in order] for v, order in zip(inst.voters, ev.orders)
            },
        }
    elif ev.kind == "distance-ranking":
        prefs = {"kind": ev.kind, "points": ev.points.tolist(), "centers": ev.centers.tolist()}
    else:
        prefs = {
            "kind": ev.kind,
            "rankings": {
                v: [sorted(ev.ranked_sets[r]) for r in order] + ([[]] if ev.kind == "explicit-order" else [])
                for v, order in zip(inst.voters, ev.orders)
            },
        }
    return {
        "voters": list(inst.voters),
        "atoms": [{"id": a.id, "cost": _num(a.cost)} for a in inst.atoms],
        "budget": _num(inst.budget),
        "comparison_set": [sorted(o) for o in inst.comparison_set],
        "preferences": prefs,
    }
