from __future__ import annotations

import copy
import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import T1_DOC
from leocore.model import (
    BOTTOM,
    Comparison,
    InstanceError,
    boundary_outcome,
    compare,
    covered_set,
    dump_instance,
    load_instance,
    merge,
)


def test_t1_loads(t1):
    assert t1.n == 3
    assert t1.budget == 2
    assert t1.comparison_set[-1] == BOTTOM
    # rank matrix: lower is better, bottom last
    assert t1.rank_matrix.tolist() == [[0, 1, 2, 3], [2, 0, 1, 3], [1, 2, 0, 3]]


def test_load_from_json_text_and_file(tmp_path):
    text = json.dumps(T1_DOC)
    assert load_instance(text).n == 3
    p = tmp_path / "t1.json"
    p.write_text(text)
    assert load_instance(str(p)).voters == ("v1", "v2", "v3")


def test_integer_voter_count_gives_default_ids():
    doc = copy.deepcopy(T1_DOC)
    doc["voters"] = 3
    assert load_instance(doc).voters == ("v1", "v2", "v3")


def test_zero_cost_atom_rejected():
    doc = copy.deepcopy(T1_DOC)
    doc["atoms"][0]["cost"] = 0
    with pytest.raises(InstanceError, match="zero-cost non-⊥"):
        load_instance(doc)


def test_cost_below_one_rejected():
    doc = copy.deepcopy(T1_DOC)
    doc["atoms"][0]["cost"] = 0.5
    with pytest.raises(InstanceError, match="< 1"):
        load_instance(doc)


def test_missing_bottom_in_ranking_rejected():
    doc = {
        "voters": ["v1"],
        "atoms": [{"id": "a", "cost": 1}, {"id": "b", "cost": 1}],
        "budget": 1,
        "comparison_set": [["a"], ["b"], []],
        "preferences": {"kind": "explicit-order", "rankings": {"v1": [["a"], ["b"]]}},
    }
    with pytest.raises(InstanceError, match="⊥ must be ranked last"):
        load_instance(doc)
    doc["preferences"]["rankings"]["v1"] = [["a"], [], ["b"]]
    with pytest.raises(InstanceError, match="⊥ must be ranked last"):
        load_instance(doc)
    doc["preferences"]["rankings"]["v1"] = [["a"], ["b"], []]
    assert load_instance(doc).rank_matrix.tolist() == [[0, 1, 2]]


def test_missing_bottom_in_comparison_set_rejected():
    doc = copy.deepcopy(T1_DOC)
    doc["comparison_set"] = [["a"], ["b"], ["c"]]
    with pytest.raises(InstanceError, match="missing ⊥"):
        load_instance(doc)


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda d: d["atoms"].append({"id": "a", "cost": 2}), "duplicate atom"),
        (lambda d: d.__setitem__("voters", ["v1", "v1", "v3"]), "duplicate voter"),
        (lambda d: d["preferences"]["rankings"].__setitem__("v1", ["a", "b"]), "permutation"),
        (lambda d: d["preferences"]["rankings"].__setitem__("v1", ["a", "b", "z"]), "unknown atoms"),
        (lambda d: d.pop("budget"), "missing key"),
        (lambda d: d.__setitem__("budget", 0.5), "budget"),
        (lambda d: d["comparison_set"].insert(0, ["zz"]), "unknown atoms"),
        (lambda d: d["preferences"].__setitem__("kind", "cardinal"), "unknown preference kind"),
    ],
)
def test_schema_errors(mutate, message):
    doc = copy.deepcopy(T1_DOC)
    mutate(doc)
    with pytest.raises(InstanceError, match=message):
        load_instance(doc)


def test_invalid_json_text():
    with pytest.raises(InstanceError, match="invalid JSON"):
        load_instance("{not json")


def test_non_strict_order_over_comparison_set_rejected():
    # both merged outcomes realize the same best atom for v1
    doc = {
        "voters": ["v1"],
        "atoms": [{"id": "a", "cost": 1}, {"id": "b", "cost": 1}],
        "budget": 2,
        "comparison_set": [["a"], ["a", "b"], []],
        "preferences": {"kind": "top-element-ranking", "rankings": {"v1": ["a", "b"]}},
    }
    with pytest.raises(InstanceError, match="not strict"):
        load_instance(doc)


def test_compare_examples(t1):
    assert compare(t1, "v3", {"a", "b"}, {"c"}) is Comparison.SECOND_BETTER
    assert compare(t1, "v1", {"a", "c"}, {"a"}) is Comparison.TIE
    assert compare(t1, "v1", {"b"}, {"c"}) is Comparison.FIRST_BETTER
    for v in t1.voters:
        for s in [BOTTOM, {"a"}, {"b", "c"}]:
            assert compare(t1, v, s, BOTTOM) is not Comparison.SECOND_BETTER
    with pytest.raises(InstanceError, match="unknown atom"):
        compare(t1, "v1", {"q"}, {"a"})


def test_merge_examples(t1):
    assert merge({"a"}, {"b"}) == frozenset("ab")
    assert t1.cost(merge({"a"}, {"b"})) == 2
    s = merge({"a", "b"}, {"b", "c"})
    assert s == frozenset("abc") and t1.cost(s) == 3 < 4
    assert merge(frozenset("ab"), BOTTOM) == frozenset("ab")


def _example_instance():
    return load_instance(
        {
            "voters": ["i"],
            "atoms": [{"id": x, "cost": 1} for x in "abc"],
            "budget": 1,
            "comparison_set": [["a"], ["b"], ["c"], []],
            "preferences": {"kind": "top-element-ranking", "rankings": {"i": ["a", "b", "c"]}},
        }
    )


def test_boundary_outcome_examples():
    inst = _example_instance()
    prices = [0.5, 1 / 3, 1 / 3, 0.0]
    assert boundary_outcome(inst, "i", prices, 0.4) == frozenset("b")
    assert boundary_outcome(inst, "i", prices, 0.2) == BOTTOM
    assert boundary_outcome(inst, "i", prices, 1.0) == frozenset("a")
    with pytest.raises(ValueError):
        boundary_outcome(inst, "i", [1.5, 0, 0, 0], 0.5)
    with pytest.raises(ValueError):
        boundary_outcome(inst, "i", [0.5, 0, 0, 0.1], 0.5)


def test_covered_set_examples(t1):
    zero = np.zeros((3, 4))
    assert covered_set(t1, {"a", "b", "c"}, zero, 0.5) == set(t1.voters)
    # with zero prices the boundary is each voter's top atom
    assert covered_set(t1, {"a"}, zero, 0.5) == {"v1"}
    assert covered_set(t1, BOTTOM, zero, 0.5) == set()
    high = np.full((3, 4), 0.9)
    high[:, 3] = 0
    for o in [BOTTOM, {"a"}, {"b", "c"}]:
        assert covered_set(t1, o, high, 0.5) == set(t1.voters)


def test_restrict_keeps_bottom_and_rows(t1):
    sub = t1.restrict(voters=["v3", "v1"], comparison=[frozenset("a")], budget=1)
    assert sub.voters == ("v3", "v1")
    assert sub.comparison_set == (frozenset("a"), BOTTOM)
    assert sub.rank_matrix.tolist() == [[1, 3], [0, 3]]


def test_round_trip_all_kinds():
    from leocore.apps import generate

    for inst in [generate("pb", 1, n=5, m=4), generate("clustering", 2, n=6, centers=4, k=2), generate("multilabel", 3, m=4, delta=2, k=2, n=5)]:
        doc = json.loads(json.dumps(dump_instance(inst)))
        again = load_instance(doc)
        assert again.voters == inst.voters
        assert np.array_equal(again.rank_matrix, inst.rank_matrix)
        assert np.array_equal(again.comparison_costs, inst.comparison_costs)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_merge_dominance_and_subadditivity(seed):
    from leocore.apps import generate

    inst = generate("multilabel", seed, m=4, delta=2, k=2, n=4) if seed % 2 else generate("pb", seed, n=4, m=4)
    rng = np.random.default_rng(seed)
    atoms = [a.id for a in inst.atoms]
    subsets = [frozenset(x for x in atoms if rng.random() < 0.5) for _ in range(6)]
    for s, t in itertools.product(subsets, repeat=2):
        st_ = merge(s, t)
        assert inst.cost(st_) <= inst.cost(s) + inst.cost(t) + 1e-12
        vs, vst = inst.values(s), inst.values(st_)
        # merged outcome is never worse for any voter
        assert np.all(vst <= vs)
        for o in inst.comparison_set:
            for v in inst.voters:
                c_s = compare(inst, v, s, o)
                c_st = compare(inst, v, st_, o)
                order = {Comparison.SECOND_BETTER: 0, Comparison.TIE: 1, Comparison.FIRST_BETTER: 2}
                assert order[c_st] >= order[c_s]
