"""Attack outputs and the edge-diff file format.

Diff lines, in ledger order::

    + u v              edge (u, v) inserted
    - u v              edge (u, v) removed
    w u v old new      continuous edge weight change
    x i k old new      feature cell change
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ContractError, NodeIndexError, ParseError
from .graph import Graph, _atomic_write


class LedgerEntry(NamedTuple):
    i: int
    j: int
    old: float
    new: float
    step: int
    target: str = "adjacency"


@dataclass
class AttackResult:
    graph: Graph
    ledger: list = field(default_factory=list)
    bias_trace: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    budget_spent: float = 0
    schedule: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    method: str = "fate"

    def counts(self):
        adds = sum(1 for e in self.ledger if e.target == "adjacency" and e.new > e.old)
        dels = sum(1 for e in self.ledger if e.target == "adjacency" and e.new < e.old)
        return {"added": adds, "deleted": dels, "total": len(self.ledger)}

    def summary(self):
        return {
            "method": self.method,
            "schedule": list(self.schedule),
            "budget_spent": self.budget_spent,
            "bias_trace": [float(b) for b in self.bias_trace],
            "grad_norms": [float(g) for g in self.grad_norms],
            "ledger_size": len(self.ledger),
            **self.counts(),
            "notes": list(self.notes),
        }


def _is_binary_pair(e):
    return e.target == "adjacency" and {e.old, e.new} == {0.0, 1.0}


def format_diff(ledger):
    lines = []
    for e in ledger:
        if _is_binary_pair(e):
            lines.append(f"{'+' if e.new > e.old else '-'} {e.i} {e.j}")
        else:
            tag = "w" if e.target == "adjacency" else "x"
            lines.append(f"{tag} {e.i} {e.j} {e.old!r} {e.new!r}")
    return "".join(line + "\n" for line in lines)


def write_diff(path, ledger):
    _atomic_write(path, format_diff(ledger))


def read_diff(path):
    ledger = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            try:
                if parts[0] in "+-" and len(parts) == 3:
                    u, v = int(parts[1]), int(parts[2])
                    old, new = (0.0, 1.0) if parts[0] == "+" else (1.0, 0.0)
                    ledger.append(LedgerEntry(u, v, old, new, -1))
                elif parts[0] in ("w", "x") and len(parts) == 5:
                    target = "adjacency" if parts[0] == "w" else "features"
                    ledger.append(LedgerEntry(int(parts[1]), int(parts[2]), float(parts[3]),
                                              float(parts[4]), -1, target))
                else:
                    raise ValueError(f"unrecognised diff line {line.strip()!r}")
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
    return ledger


def apply_diff(graph, ledger, revert=False):
    """Apply (or undo) a ledger; every entry's ``old`` value must match the graph."""
    A = graph.adjacency.copy()
    X = graph.features.copy()
    for e in ledger:
        old, new = (e.new, e.old) if revert else (e.old, e.new)
        if e.target == "adjacency":
            if not (0 <= e.i < graph.n and 0 <= e.j < graph.n):
                raise NodeIndexError(f"diff references pair ({e.i}, {e.j}) outside {graph.n} nodes")
            if e.i == e.j:
                raise ContractError(f"diff references self-loop on {e.i}")
            if A[e.i, e.j] != old:
                raise ContractError(f"diff expects A[{e.i},{e.j}]={old}, found {A[e.i, e.j]}")
            A[e.i, e.j] = A[e.j, e.i] = new
        else:
            if not (0 <= e.i < graph.n and 0 <= e.j < graph.n_features):
                raise NodeIndexError(f"diff references feature cell ({e.i}, {e.j}) out of range")
            if X[e.i, e.j] != old:
                raise ContractError(f"diff expects X[{e.i},{e.j}]={old}, found {X[e.i, e.j]}")
            X[e.i, e.j] = new
    return Graph(A, X, graph.labels, graph.sensitive, graph.split)


def ledger_from_difference(before, after, step=-1):
    """Ledger covering every differing upper-triangle pair / feature cell."""
    out = []
    iu, ju = np.nonzero(np.triu(before.adjacency != after.adjacency, 1))
    for i, j in zip(iu, ju):
        out.append(LedgerEntry(int(i), int(j), float(before.adjacency[i, j]),
                               float(after.adjacency[i, j]), step))
    fi, fk = np.nonzero(before.features != after.features)
    for i, k in zip(fi, fk):
        out.append(LedgerEntry(int(i), int(k), float(before.features[i, k]),
                               float(after.features[i, k]), step, "features"))
    return out
