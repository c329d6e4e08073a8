import numpy as np
import pytest

from fate.errors import ContractError, NodeIndexError, ParseError
from fate.result import (
    AttackResult,
    LedgerEntry,
    apply_diff,
    format_diff,
    ledger_from_difference,
    read_diff,
    write_diff,
)

from _util import random_graph


def test_diff_round_trip(tmp_path):
    ledger = [LedgerEntry(0, 3, 0.0, 1.0, 0), LedgerEntry(1, 2, 1.0, 0.0, 1),
              LedgerEntry(2, 4, 0.25, 0.5, 1), LedgerEntry(3, 1, 0.0, 1.5, 2, "features")]
    assert format_diff(ledger).splitlines() == ["+ 0 3", "- 1 2", "w 2 4 0.25 0.5", "x 3 1 0.0 1.5"]
    write_diff(tmp_path / "d", ledger)
    back = read_diff(tmp_path / "d")
    assert [(e.i, e.j, e.old, e.new, e.target) for e in back] == \
        [(e.i, e.j, e.old, e.new, e.target) for e in ledger]


def test_read_diff_rejects_garbage(tmp_path):
    (tmp_path / "d").write_text("+ 0 1\n? 1 2\n")
    with pytest.raises(ParseError) as err:
        read_diff(tmp_path / "d")
    assert err.value.lineno == 2


def test_apply_then_revert_is_identity():
    g = random_graph(np.random.default_rng(0), 10, 2)
    ledger = [LedgerEntry(i, j, float(g.adjacency[i, j]), 1 - float(g.adjacency[i, j]), 0)
              for i, j in [(0, 1), (2, 5), (3, 9)]]
    h = apply_diff(g, ledger)
    assert np.abs(h.adjacency - g.adjacency).sum() == 6
    back = apply_diff(h, ledger, revert=True)
    assert np.array_equal(back.adjacency, g.adjacency)


def test_apply_diff_checks_old_values_and_range():
    g = random_graph(np.random.default_rng(0), 5, 2)
    with pytest.raises(NodeIndexError):
        apply_diff(g, [LedgerEntry(0, 7, 0.0, 1.0, 0)])
    wrong = 1.0 - g.adjacency[0, 1]
    with pytest.raises(ContractError):
        apply_diff(g, [LedgerEntry(0, 1, wrong, 1 - wrong, 0)])


def test_ledger_from_difference():
    g = random_graph(np.random.default_rng(1), 6, 2)
    A = g.adjacency.copy()
    A[0, 1] = A[1, 0] = 0.5
    X = g.features.copy()
    X[2, 1] += 1
    h = g.with_adjacency(A).with_features(X)
    led = ledger_from_difference(g, h, step=3)
    assert [(e.i, e.j, e.target) for e in led] == [(0, 1, "adjacency"), (2, 1, "features")]
    assert np.array_equal(apply_diff(g, led).features, X)


def test_summary_counts():
    g = random_graph(np.random.default_rng(1), 6, 2)
    res = AttackResult(g, ledger=[LedgerEntry(0, 1, 0.0, 1.0, 0), LedgerEntry(0, 2, 1.0, 0.0, 0)],
                       schedule=[2], budget_spent=2)
    s = res.summary()
    assert (s["added"], s["deleted"], s["total"], s["schedule"]) == (1, 1, 2, [2])
