from __future__ import annotations

import numpy as np
import pytest

from leocore.model import load_instance

T1_DOC = {
    "voters": ["v1", "v2", "v3"],
    "atoms": [{"id": "a", "cost": 1}, {"id": "b", "cost": 1}, {"id": "c", "cost": 1}],
    "budget": 2,
    "comparison_set": [["a"], ["b"], ["c"], []],
    "preferences": {
        "kind": "top-element-ranking",
        "rankings": {"v1": ["a", "b", "c"], "v2": ["b", "c", "a"], "v3": ["c", "a", "b"]},
    },
}

ACCEPTANCE_LINES: list = []


def make_t1():
    return load_instance(T1_DOC)


@pytest.fixture
def t1():
    return make_t1()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def unanimous(n=4, m=3, budget=2):
    atoms = [{"id": f"p{j}", "cost": 1} for j in range(m)]
    order = [f"p{j}" for j in range(m)]
    return load_instance(
        {
            "voters": n,
            "atoms": atoms,
            "budget": budget,
            "comparison_set": [[a["id"]] for a in atoms] + [[]],
            "preferences": {"kind": "top-element-ranking", "rankings": {f"v{i + 1}": order for i in range(n)}},
        }
    )


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
