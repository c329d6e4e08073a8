"""Meta-gradient poisoning of graph structure or node features.

One attack step retrains the linear GCN surrogate on the current poisoned
graph, differentiates the chosen bias with respect to the adjacency (or the
features), and then either flips the top-scoring entries or takes a
budget-normalised gradient step on the weights.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import autodiff as ad
from .bias import BiasSpec, cosine_similarity_matrix, evaluate_bias
from .errors import AttackStepError, ContractError, ShapeError
from .graph import Graph
from .result import AttackResult, LedgerEntry, ledger_from_difference
from .rng import SplitMix64
from .surrogate import (
    init_surrogate,
    linear_gcn_logits,
    train_surrogate,
    unrolled_predictions,
)

log = logging.getLogger(__name__)

MODES = ("flip", "add-only", "delete-only", "continuous")
TARGETS = ("adjacency", "features")
SELECTIONS = ("greedy", "sample")
META_MODES = ("direct", "unrolled")
DIRECTIONS = ("ascent", "descent")


@dataclass
class AttackPlan:
    budget: int
    steps: int = 1
    mode: str = "flip"
    target: str = "adjacency"
    selection: str = "greedy"
    meta_grad: str = "direct"
    direction: str = "ascent"
    bias: BiasSpec = field(default_factory=BiasSpec)
    hidden: int = 16
    epochs: int = 500
    lr: float = 1e-2
    weight_decay: float = 5e-4
    dropout: float = 0.5
    seed: int = 0
    unrolled_cap: int = 1500
    track_bias: bool = True

    def __post_init__(self):
        if self.budget < 1:
            raise ContractError("budget must be >= 1")
        if not 1 <= self.steps <= self.budget:
            raise ContractError(f"steps must lie in [1, budget={self.budget}], got {self.steps}")
        for name, allowed in (("mode", MODES), ("target", TARGETS), ("selection", SELECTIONS),
                              ("meta_grad", META_MODES), ("direction", DIRECTIONS)):
            if getattr(self, name) not in allowed:
                raise ContractError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")


def budget_schedule(B, p):
    """Per-step budgets: 1 first, then (B - 1)/(p - 1) with carried rounding."""
    if p < 1 or p > B:
        raise ContractError(f"need 1 <= p <= B, got p={p}, B={B}")
    if p == 1:
        return [B]
    q = Fraction(B - 1, p - 1)
    cum = [1] + [math.floor(1 + k * q + Fraction(1, 2)) for k in range(1, p)]
    return [cum[0]] + [cum[k] - cum[k - 1] for k in range(1, p)]


def _leaf_inputs(graph, target, tape):
    if target == "adjacency":
        return tape.leaf(graph.adjacency), ad.Tensor(graph.features)
    return ad.Tensor(graph.adjacency), tape.leaf(graph.features)


def meta_gradient(graph, trained, spec, mode="direct", target="adjacency", params0=None,
                  max_cost=1500):
    """Raw (unsymmetrised) gradient of the bias w.r.t. the adjacency or features.

    ``direct`` holds the trained weights fixed and differentiates the eval-mode
    forward pass; ``unrolled`` differentiates through the whole training run
    started from ``params0``.
    """
    tape = ad.Tape()
    A, X = _leaf_inputs(graph, target, tape)
    if mode == "direct":
        params = trained.params
        Y = ad.row_softmax(linear_gcn_logits(ad.degree_normalize(A), X, params.W1, params.W2))
    elif mode == "unrolled":
        if params0 is None:
            raise ContractError("unrolled meta-gradient needs the initial parameters")
        Y = unrolled_predictions(A, X, graph, params0, max_cost=max_cost)
    else:
        raise ContractError(f"unknown meta-gradient mode {mode!r}")
    b = evaluate_bias(Y, graph, spec)
    leaf = A if target == "adjacency" else X
    return tape.backward(b)[leaf]


def symmetrize_gradient(M):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ShapeError(f"symmetrize_gradient needs a square matrix, got {M.shape}")
    return M + M.T - np.diag(np.diag(M))


def preference_matrix(A, grad, mode="flip", perturbed=None, square=True):
    """(1 - 2A) * grad after the add-only / delete-only zeroing rule.

    The diagonal (when ``square``) and entries flagged in ``perturbed`` are set
    to -inf so they can never be selected.
    """
    A = np.asarray(A, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if A.shape != grad.shape:
        raise ShapeError(f"matrix {A.shape} and gradient {grad.shape} differ")
    if not np.all((A == 0) | (A == 1)):
        raise ContractError("discrete poisoning needs a binary matrix")
    if mode == "add-only":
        grad = np.maximum(grad, 0.0)
    elif mode == "delete-only":
        grad = np.minimum(grad, 0.0)
    elif mode != "flip":
        raise ContractError(f"no preference matrix for mode {mode!r}")
    pref = (1.0 - 2.0 * A) * grad
    if square:
        np.fill_diagonal(pref, -np.inf)
    if perturbed is not None:
        pref[perturbed] = -np.inf
    return pref


def feasibility_mask(A, mode):
    """Entries a mode may never touch: present edges for add-only, absent for delete-only."""
    if mode == "add-only":
        return A == 1
    if mode == "delete-only":
        return A == 0
    return np.zeros(A.shape, dtype=bool)


def _candidates(pref, upper):
    if upper:
        iu, ju = np.triu_indices(pref.shape[0], k=1)
    else:
        iu, ju = np.unravel_index(np.arange(pref.size), pref.shape)
    vals = pref[iu, ju]
    keep = np.isfinite(vals)
    return iu[keep], ju[keep], vals[keep]


def _greedy(vals, k):
    # stable sort on -value keeps the lexicographic candidate order among ties
    return list(np.argsort(-vals, kind="stable")[:k])


def select_edges(pref, delta, selection="greedy", rng=None, upper=True, notes=None):
    """Pick ``delta`` entries of ``pref``; returns (i, j) pairs in selection order.

    ``upper`` restricts candidates to the strict upper triangle (undirected
    edges). ``sample`` draws without replacement with probability proportional
    to the positive part of the preference, using a :class:`SplitMix64`
    stream, and tops up greedily if too few entries are positive.
    """
    pref = np.asarray(pref, dtype=np.float64)
    if delta < 1:
        raise ContractError("delta must be >= 1")
    iu, ju, vals = _candidates(pref, upper)
    if len(vals) < delta:
        raise ContractError(f"only {len(vals)} selectable entries for delta={delta}")
    if selection == "greedy":
        picked = _greedy(vals, delta)
    elif selection == "sample":
        if rng is None:
            rng = SplitMix64(0)
        w = np.maximum(vals, 0.0)
        n_draw = min(delta, int(np.count_nonzero(w > 0)))
        picked = []
        for _ in range(n_draw):
            cum = np.cumsum(w)
            u = rng.uniform() * cum[-1]
            k = int(np.searchsorted(cum, u, side="right"))
            k = min(k, len(w) - 1)
            while w[k] == 0:  # u landed on the right edge of the last positive weight
                k -= 1
            picked.append(k)
            w[k] = 0.0
        if n_draw < delta:
            rest = np.setdiff1d(np.arange(len(vals)), picked, assume_unique=True)
            picked += [int(rest[k]) for k in _greedy(vals[rest], delta - n_draw)]
            msg = f"sampling fallback: {delta - n_draw} of {delta} entries chosen greedily"
            log.warning(msg)
            if notes is not None:
                notes.append(msg)
    else:
        raise ContractError(f"unknown selection {selection!r}")
    return [(int(iu[k]), int(ju[k])) for k in picked]


def apply_discrete(graph, edges, target="adjacency", perturbed=None, step=0):
    """Toggle each selected entry 0 <-> 1; returns (graph, ledger entries)."""
    entries = []
    if target == "adjacency":
        A = graph.adjacency.copy()
        for i, j in edges:
            if i == j:
                raise ContractError(f"refusing self-loop ({i}, {i})")
            if perturbed is not None and perturbed[i, j]:
                raise ContractError(f"pair ({i}, {j}) was already perturbed in this run")
            old = A[i, j]
            A[i, j] = A[j, i] = 1.0 - old
            if perturbed is not None:
                perturbed[i, j] = perturbed[j, i] = True
            entries.append(LedgerEntry(min(i, j), max(i, j), float(old), float(1.0 - old), step))
        return graph.with_adjacency(A), entries
    X = graph.features.copy()
    for i, k in edges:
        if perturbed is not None and perturbed[i, k]:
            raise ContractError(f"feature cell ({i}, {k}) was already perturbed in this run")
        old = X[i, k]
        X[i, k] = 1.0 - old
        if perturbed is not None:
            perturbed[i, k] = True
        entries.append(LedgerEntry(i, k, float(old), float(1.0 - old), step, "features"))
    return graph.with_features(X), entries


def apply_continuous(graph, grad, delta, direction="ascent", target="adjacency"):
    """Gradient step whose 1,1-norm equals ``delta`` before clamping.

    Returns (graph, eta). Adjacency weights are clamped to [0, 1] with a zero
    diagonal; features are left unclamped.
    """
    if not delta > 0:
        raise ContractError("continuous step budget must be positive")
    grad = np.asarray(grad, dtype=np.float64)
    norm = np.abs(grad).sum()
    if norm == 0:
        log.warning("zero meta-gradient: continuous step skipped")
        return graph, 0.0
    eta = delta / norm
    sign = 1.0 if direction == "ascent" else -1.0
    if target == "adjacency":
        A = np.clip(graph.adjacency + sign * eta * grad, 0.0, 1.0)
        np.fill_diagonal(A, 0.0)
        return graph.with_adjacency(A), eta
    return graph.with_features(graph.features + sign * eta * grad), eta


def resolve_bias(graph, spec):
    """Fill in the similarity matrix from the clean graph when it is missing."""
    if spec.kind == "individual-fairness" and spec.similarity is None:
        return BiasSpec(kind=spec.kind, similarity=cosine_similarity_matrix(graph.adjacency))
    return spec


def surrogate_bias(graph, plan, spec, seed):
    params0 = init_surrogate(graph.n_features, graph.n_classes, plan.hidden, seed, plan.epochs,
                             plan.lr, plan.weight_decay, plan.dropout)
    trace = train_surrogate(graph, params0)
    return params0, trace, evaluate_bias(trace.predictions, graph, spec).item()


def _check_step(clean, current, plan, spent, step):
    A = current.adjacency
    if not np.array_equal(A, A.T):
        raise AttackStepError(step, "poisoned adjacency lost symmetry")
    if np.any(np.diag(A) != 0):
        raise AttackStepError(step, "poisoned adjacency has self-loops")
    if spent > plan.budget:
        raise AttackStepError(step, f"spent {spent} > budget {plan.budget}")


def run_fate(graph, plan):
    """Multi-step meta-gradient attack; deterministic given ``plan.seed``.

    Step k retrains the surrogate with seed ``plan.seed + k``. With
    ``plan.track_bias`` set, ``bias_trace[k]`` is the surrogate bias after k
    steps, always retrained with ``plan.seed`` so that entries differ only
    through the graph; otherwise it holds the bias of each step's retrain.
    """
    if graph.split.is_empty():
        raise ContractError("graph needs a train/val/test split")
    adjacency = plan.target == "adjacency"
    discrete = plan.mode != "continuous"
    if discrete:
        M = graph.adjacency if adjacency else graph.features
        if not np.all((M == 0) | (M == 1)):
            what = "adjacency" if adjacency else "features"
            raise ContractError(f"discrete {what} poisoning needs binary {what}; use continuous mode")
    spec = resolve_bias(graph, plan.bias)
    schedule = budget_schedule(plan.budget, plan.steps)
    result = AttackResult(graph=graph, schedule=schedule, method="fate")
    current = graph
    shape = graph.adjacency.shape if adjacency else graph.features.shape
    perturbed = np.zeros(shape, dtype=bool)
    first_step = np.full(shape, -1)
    sampler = SplitMix64(plan.seed)
    spent = 0
    for step, delta in enumerate(schedule):
        params0, trace, b = surrogate_bias(current, plan, spec, plan.seed + step)
        if step == 0 or not plan.track_bias:
            result.bias_trace.append(b)
        grad = meta_gradient(current, trace, spec, plan.meta_grad, plan.target, params0,
                             plan.unrolled_cap)
        if adjacency:
            grad = symmetrize_gradient(grad)
        result.grad_norms.append(float(np.abs(grad).sum()))
        if discrete:
            M = current.adjacency if adjacency else current.features
            pref = preference_matrix(M, grad, plan.mode, perturbed, square=adjacency)
            pref[feasibility_mask(M, plan.mode)] = -np.inf
            picks = select_edges(pref, delta, plan.selection, sampler, upper=adjacency,
                                 notes=result.notes)
            current, entries = apply_discrete(current, picks, plan.target, perturbed, step)
            result.ledger.extend(entries)
        else:
            before = current.adjacency if adjacency else current.features
            current, _ = apply_continuous(current, grad, delta, plan.direction, plan.target)
            after = current.adjacency if adjacency else current.features
            first_step[(before != after) & (first_step < 0)] = step
        spent += delta
        _check_step(graph, current, plan, spent, step)
        if plan.track_bias:
            result.bias_trace.append(surrogate_bias(current, plan, spec, plan.seed)[2])
    if not discrete:
        result.ledger = [e._replace(step=int(first_step[e.i, e.j]))
                         for e in ledger_from_difference(graph, current)]
    result.graph = current
    result.budget_spent = spent
    return result
