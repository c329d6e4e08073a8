"""Heuristic comparison attacks: Random, DICE-S and FA-GNN-style injection."""
from __future__ import annotations

import logging

import numpy as np

from .errors import ContractError
from .result import AttackResult, LedgerEntry

log = logging.getLogger(__name__)

FA_STRATEGIES = ("DD", "DS", "SD", "SS")  # (label, sensitive) x (different, same)


def _upper_pairs(n):
    return np.triu_indices(n, k=1)


def _apply(graph, pairs, method, notes=()):
    A = graph.adjacency.copy()
    ledger = []
    for i, j in pairs:
        old = A[i, j]
        A[i, j] = A[j, i] = 1.0 - old
        ledger.append(LedgerEntry(int(i), int(j), float(old), float(1.0 - old), 0))
    return AttackResult(graph=graph.with_adjacency(A), ledger=ledger,
                        budget_spent=len(ledger), schedule=[len(ledger)],
                        notes=list(notes), method=method)


def _draw(rng, iu, ju, k):
    idx = rng.choice(len(iu), size=k, replace=False)
    return [(int(iu[t]), int(ju[t])) for t in idx]


def random_attack(graph, budget, seed=0):
    """Insert ``budget`` uniformly random absent edges."""
    iu, ju = _upper_pairs(graph.n)
    absent = graph.adjacency[iu, ju] == 0
    iu, ju = iu[absent], ju[absent]
    if budget > len(iu):
        raise ContractError(f"only {len(iu)} absent pairs for budget {budget}")
    rng = np.random.default_rng(seed)
    return _apply(graph, _draw(rng, iu, ju, budget), "random")


def dice_s_attack(graph, budget, seed=0):
    """Delete inter-group edges and insert intra-group edges, half and half.

    Odd budgets give the extra unit to insertion; a category that runs short
    spills its remainder into the other one.
    """
    s = graph.sensitive
    if len(np.unique(s)) < 2:
        raise ContractError("DICE-S needs both sensitive groups")
    iu, ju = _upper_pairs(graph.n)
    present = graph.adjacency[iu, ju] == 1
    same = s[iu] == s[ju]
    del_i, del_j = iu[present & ~same], ju[present & ~same]
    ins_i, ins_j = iu[~present & same], ju[~present & same]
    if len(del_i) == 0 and len(ins_i) == 0:
        raise ContractError("no inter-group edges to delete and no intra-group pairs to insert")
    n_ins = budget - budget // 2
    n_del = budget // 2
    notes = []
    if n_del > len(del_i):
        notes.append(f"DICE-S: {n_del - len(del_i)} deletions spilled to insertion")
        n_ins += n_del - len(del_i)
        n_del = len(del_i)
    if n_ins > len(ins_i):
        notes.append(f"DICE-S: {n_ins - len(ins_i)} insertions spilled to deletion")
        n_del += n_ins - len(ins_i)
        n_ins = len(ins_i)
    if n_del > len(del_i):
        raise ContractError(f"budget {budget} exceeds the {len(del_i) + len(ins_i)} DICE-S candidates")
    for msg in notes:
        log.warning(msg)
    rng = np.random.default_rng(seed)
    pairs = _draw(rng, del_i, del_j, n_del) + _draw(rng, ins_i, ins_j, n_ins)
    return _apply(graph, pairs, "dice-s", notes)


def fa_gnn_pool(graph, strategy="DD", nodes=None):
    """Absent pairs eligible for FA-GNN injection under ``strategy``.

    The first letter constrains labels, the second the sensitive attribute:
    D = endpoints differ, S = endpoints agree.
    """
    if strategy not in FA_STRATEGIES:
        raise ContractError(f"unknown FA-GNN strategy {strategy!r}")
    y, s = graph.labels, graph.sensitive
    iu, ju = _upper_pairs(graph.n)
    ok = graph.adjacency[iu, ju] == 0
    ok &= (y[iu] != y[ju]) if strategy[0] == "D" else (y[iu] == y[ju])
    ok &= (s[iu] != s[ju]) if strategy[1] == "D" else (s[iu] == s[ju])
    if nodes is not None:
        allowed = np.zeros(graph.n, dtype=bool)
        allowed[np.asarray(nodes)] = True
        ok &= allowed[iu] & allowed[ju]
    return iu[ok], ju[ok]


def fa_gnn_attack(graph, budget, seed=0, strategy="DD", nodes=None):
    """Insert random edges between nodes chosen by label/sensitive agreement.

    ``nodes`` optionally restricts endpoints (e.g. to labelled training nodes).
    """
    if len(np.unique(graph.labels)) < 2 or len(np.unique(graph.sensitive)) < 2:
        raise ContractError("FA-GNN needs two label classes and two sensitive groups")
    iu, ju = fa_gnn_pool(graph, strategy, nodes)
    if budget > len(iu):
        raise ContractError(f"FA-GNN pool has {len(iu)} pairs, budget is {budget}")
    rng = np.random.default_rng(seed)
    return _apply(graph, _draw(rng, iu, ju, budget), "fa-gnn")
