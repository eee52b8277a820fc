"""Reductions from participatory budgeting, clustering and multi-label
selection to instances, plus seeded synthetic generators and CSV readers."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

import numpy as np

from .model import (
    BOTTOM,
    Atom,
    Instance,
    InstanceError,
    PreferenceEvaluator,
    distance_orders,
)


@dataclass
class PbBallots:
    """Projects with costs, one strict ranking of all projects per voter, and a budget."""

    projects: list
    costs: list
    rankings: dict
    budget: float

    def __post_init__(self):
        if len(self.projects) != len(self.costs):
            raise InstanceError("one cost per project is required")
        ps = sorted(self.projects)
        for v, r in self.rankings.items():
            if sorted(r) != ps:
                raise InstanceError(f"ranking of voter {v!r} is not a permutation of the projects")


@dataclass
class ClusteringData:
    points: np.ndarray
    centers: np.ndarray
    k: int
    point_ids: list | None = None
    center_ids: list | None = None


@dataclass
class MultiLabelData:
    """Items with strict rankings over label combinations of size at most ``delta``.

    ``rankings[item]`` lists every combination (as a tuple of labels), best
    first; combinations not listed are ranked below listed ones in
    lexicographic order.
    """

    labels: list
    rankings: dict
    delta: int
    k: int


def pb_from_rankings(ballots: PbBallots) -> Instance:
    voters = tuple(str(v) for v in ballots.rankings)
    atoms = tuple(Atom(str(p), float(c)) for p, c in zip(ballots.projects, ballots.costs))
    pos = {str(p): k for k, p in enumerate(ballots.projects)}
    orders = tuple(tuple(pos[str(p)] for p in ballots.rankings[v]) for v in ballots.rankings)
    ev = PreferenceEvaluator("top-element-ranking", tuple(frozenset([a.id]) for a in atoms), orders)
    comp = tuple(frozenset([a.id]) for a in atoms) + (BOTTOM,)
    if not float(ballots.budget) >= 1:
        raise InstanceError("budget must be at least 1")
    return Instance(voters, atoms, float(ballots.budget), comp, ev)


def clustering_instance(data: ClusteringData) -> Instance:
    """Centers become unit-cost atoms and the budget is ``k``; points rank centers by distance."""
    if data.k < 1:
        raise InstanceError("k must be at least 1")
    points = np.asarray(data.points, dtype=float)
    centers = np.asarray(data.centers, dtype=float)
    if points.ndim != 2 or centers.ndim != 2 or points.shape[1] != centers.shape[1]:
        raise InstanceError("points and centers must be 2-d arrays of equal dimension")
    if not (np.isfinite(points).all() and np.isfinite(centers).all()):
        raise InstanceError("distances must be finite")
    pids = data.point_ids or [f"v{i + 1}" for i in range(len(points))]
    cids = data.center_ids or [f"c{j + 1}" for j in range(len(centers))]
    atoms = tuple(Atom(str(c), 1.0) for c in cids)
    ev = PreferenceEvaluator(
        "distance-ranking",
        tuple(frozenset([a.id]) for a in atoms),
        distance_orders(points, centers),
        points=points,
        centers=centers,
    )
    comp = tuple(frozenset([a.id]) for a in atoms) + (BOTTOM,)
    return Instance(tuple(str(p) for p in pids), atoms, float(data.k), comp, ev)


def all_combos(labels, delta: int) -> list:
    return [frozenset(c) for d in range(1, delta + 1) for c in itertools.combinations(labels, d)]


def multilabel_instance(data: MultiLabelData) -> Instance:
    """Labels become unit-cost atoms; every combination of at most ``delta`` labels is a comparison outcome."""
    if data.delta < 1 or data.k < data.delta:
        raise InstanceError("need 1 <= delta <= k")
    labels = [str(x) for x in data.labels]
    combos = all_combos(labels, data.delta)
    pos = {c: j for j, c in enumerate(combos)}
    orders = []
    for item, ranking in data.rankings.items():
        seen = []
        for c in ranking:
            c = frozenset(str(x) for x in c)
            if c not in pos:
                raise InstanceError(f"item {item!r} ranks an invalid combination {sorted(c)}")
            seen.append(pos[c])
        if len(set(seen)) != len(seen):
            raise InstanceError(f"item {item!r} ranks a combination twice")
        rest = [j for j in range(len(combos)) if j not in set(seen)]
        orders.append(tuple(seen + rest))
    atoms = tuple(Atom(x, 1.0) for x in labels)
    ev = PreferenceEvaluator("combo-containment", tuple(combos), tuple(orders))
    return Instance(tuple(str(i) for i in data.rankings), atoms, float(data.k), tuple(combos) + (BOTTOM,), ev)


# ---------------------------------------------------------------------------
# generators


def random_pb(n: int, m: int, seed: int, max_cost: int = 4, budget: float | None = None) -> PbBallots:
    rng = np.random.default_rng(seed)
    projects = [f"p{j + 1}" for j in range(m)]
    costs = [int(c) for c in rng.integers(1, max_cost + 1, size=m)]
    if budget is None:
        budget = max(float(max(costs)), float(np.ceil(sum(costs) / 3)))
    rankings = {f"v{i + 1}": [projects[j] for j in rng.permutation(m)] for i in range(n)}
    return PbBallots(projects, costs, rankings, float(budget))


def random_clustering(n: int, centers: int, k: int, seed: int, dim: int = 2, blobs: int | None = None) -> ClusteringData:
    rng = np.random.default_rng(seed)
    blobs = blobs or max(1, min(k, centers))
    means = rng.uniform(0.0, 10.0, size=(blobs, dim))
    which = rng.integers(0, blobs, size=n)
    pts = means[which] + rng.normal(scale=1.0, size=(n, dim))
    cidx = rng.choice(n, size=centers, replace=centers > n)
    ctr = pts[cidx] + rng.normal(scale=0.1, size=(centers, dim))
    return ClusteringData(np.round(pts, 6), np.round(ctr, 6), k)


def random_multilabel(m: int, delta: int, k: int, seed: int, n: int = 30) -> MultiLabelData:
    rng = np.random.default_rng(seed)
    labels = [f"l{j + 1}" for j in range(m)]
    combos = all_combos(labels, delta)
    idx = {lab: j for j, lab in enumerate(labels)}
    rankings = {}
    for i in range(n):
        aff = rng.dirichlet(np.ones(m))
        score = np.array([sum(aff[idx[x]] for x in c) for c in combos])
        order = np.lexsort((np.arange(len(combos)), -score))
        rankings[f"v{i + 1}"] = [tuple(sorted(combos[j])) for j in order]
    return MultiLabelData(labels, rankings, delta, k)


def generate(kind: str, seed: int, **sizes) -> Instance:
    """Seeded synthetic instance.

    Parameters
    ----------
    kind : {"pb", "clustering", "multilabel"}
    seed : int
    **sizes
        ``pb``: ``n``, ``m``, optional ``max_cost``, ``budget``.
        ``clustering``: ``n``, ``centers``, ``k``, optional ``dim``.
        ``multilabel``: ``m``, ``delta``, ``k``, optional ``n``.
    """
    try:
        if kind == "pb":
            n, m = int(sizes.pop("n", 20)), int(sizes.pop("m", 10))
            if n < 1 or m < 1:
                raise ValueError("n and m must be positive")
            inst = pb_from_rankings(random_pb(n, m, seed, **sizes))
        elif kind == "clustering":
            n, c, k = int(sizes.pop("n", 50)), int(sizes.pop("centers", 10)), int(sizes.pop("k", 3))
            if n < 1 or c < 1 or k < 1:
                raise ValueError("n, centers and k must be positive")
            inst = clustering_instance(random_clustering(n, c, k, seed, **sizes))
        elif kind == "multilabel":
            m, d, k = int(sizes.pop("m", 6)), int(sizes.pop("delta", 2)), int(sizes.pop("k", 3))
            if m < 1 or not 1 <= d <= m:
                raise ValueError("need m >= 1 and 1 <= delta <= m")
            inst = multilabel_instance(random_multilabel(m, d, k, seed, **sizes))
        else:
            raise ValueError(f"unknown generator kind {kind!r}")
    except TypeError as e:
        raise ValueError(f"invalid sizes for {kind}: {e}") from None
    return inst


# ---------------------------------------------------------------------------
# CSV ingestion


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def read_points_csv(path) -> tuple:
    """Read one point per row. A non-numeric first column is taken as the id.

    Returns ``(ids, points)``; a header row is skipped if present.
    """
    ids, rows = [], []
    with open(path, newline="") as fh:
        for k, rec in enumerate(csv.reader(fh)):
            rec = [x.strip() for x in rec if x.strip() != ""]
            if not rec:
                continue
            if not all(_is_number(x) for x in rec[1:]):
                if k == 0:
                    continue
                raise InstanceError(f"{path}: row {k + 1} is not numeric")
            if _is_number(rec[0]):
                ids.append(f"v{len(rows) + 1}")
                rows.append([float(x) for x in rec])
            else:
                ids.append(rec[0])
                rows.append([float(x) for x in rec[1:]])
    if len({len(r) for r in rows}) > 1:
        raise InstanceError(f"{path}: rows have differing dimensions")
    return ids, np.array(rows, dtype=float)


def read_ballots_csv(path) -> dict:
    """Read ``voter-id, best project, next project, ...`` rows."""
    out = {}
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            rec = [x.strip() for x in rec if x.strip() != ""]
            if not rec or rec[0].lower() in ("voter", "voter-id", "voter_id"):
                continue
            if rec[0] in out:
                raise InstanceError(f"duplicate voter {rec[0]!r}")
            out[rec[0]] = rec[1:]
    return out


def read_costs_csv(path) -> tuple:
    """Read ``project, cost`` rows; returns ``(projects, costs)``."""
    projects, costs = [], []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            rec = [x.strip() for x in rec if x.strip() != ""]
            if not rec:
                continue
            if len(rec) != 2 or not _is_number(rec[1]):
                if not projects:
                    continue
                raise InstanceError(f"{path}: malformed cost row {rec}")
            projects.append(rec[0])
            costs.append(float(rec[1]))
    return projects, costs
