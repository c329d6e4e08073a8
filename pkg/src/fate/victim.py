"""Victim GCN / InFoRM-GCN training and evaluation metrics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .bias import cosine_similarity_matrix, laplacian
from .errors import ContractError, ShapeError, TrainingError
from .surrogate import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, glorot

METRICS = ("micro_f1", "macro_f1", "auc", "delta_sp", "inform_bias")
DEFAULT_SEEDS = (0, 1, 2, 42, 100)


@dataclass
class VictimConfig:
    hidden: int = 128
    epochs: int = 400
    lr: float = 1e-3
    weight_decay: float = 1e-5
    dropout: float = 0.5
    lam: float = 0.0
    seeds: tuple = DEFAULT_SEEDS

    def __post_init__(self):
        if self.lam < 0:
            raise ContractError("regularisation weight must be >= 0")
        if len(self.seeds) == 0:
            raise ContractError("seed list must be non-empty")
        self.seeds = tuple(int(s) for s in self.seeds)


@dataclass
class VictimModel:
    W1: np.ndarray
    W2: np.ndarray
    losses: list
    seed: int

    def predict(self, graph):
        A_hat = ad.degree_normalize(graph.adjacency)
        return ad.row_softmax(_gcn_logits(A_hat, ad.Tensor(graph.features), self.W1, self.W2)).value


def _gcn_logits(A_hat, X, W1, W2, masks=None):
    if masks is not None:
        X = ad.hadamard(X, masks[0])
    H = ad.relu(ad.matmul(A_hat, ad.matmul(X, W1)))
    if masks is not None:
        H = ad.hadamard(H, masks[1])
    return ad.matmul(A_hat, ad.matmul(H, W2))


def train_victim(graph, config, seed, similarity=None):
    """Two-layer ReLU GCN trained with Adam on train-node cross-entropy.

    With ``config.lam > 0`` the loss gains lam * Tr(Y^T L_S Y) over all nodes
    (InFoRM regulariser); ``similarity`` defaults to cosine similarity of the
    given graph's adjacency rows.
    """
    train = graph.split.train
    if len(train) == 0:
        raise ContractError("victim training needs a split")
    rng = np.random.default_rng([seed, 0])
    d, c = graph.n_features, graph.n_classes
    W1 = glorot(rng, d, config.hidden)
    W2 = glorot(rng, config.hidden, c)
    drop_rng = np.random.default_rng([seed, 1])
    A_hat = ad.degree_normalize(graph.adjacency)
    X = ad.Tensor(graph.features)
    L = None
    if config.lam > 0:
        S = cosine_similarity_matrix(graph.adjacency) if similarity is None else similarity
        L = laplacian(S)
    keep = 1.0 - config.dropout
    m1, v1 = np.zeros_like(W1), np.zeros_like(W1)
    m2, v2 = np.zeros_like(W2), np.zeros_like(W2)
    losses = []
    for t in range(1, config.epochs + 1):
        masks = None
        if config.dropout > 0:
            masks = ((drop_rng.random((graph.n, d)) >= config.dropout) / keep,
                     (drop_rng.random((graph.n, config.hidden)) >= config.dropout) / keep)
        tape = ad.Tape()
        w1, w2 = tape.leaf(W1), tape.leaf(W2)
        logits = _gcn_logits(A_hat, X, w1, w2, masks)
        loss = ad.softmax_cross_entropy(logits, graph.labels, train)
        if L is not None:
            Y = ad.row_softmax(logits)
            reg = ad.sum(ad.hadamard(Y, ad.matmul(L, Y)))
            loss = ad.add(loss, ad.scale(reg, config.lam))
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingError(t)
        losses.append(value)
        grads = tape.backward(loss)
        updated = []
        for W, g, m, v in ((W1, grads[w1], m1, v1), (W2, grads[w2], m2, v2)):
            g = g + config.weight_decay * W
            m[...] = ADAM_BETA1 * m + (1 - ADAM_BETA1) * g
            v[...] = ADAM_BETA2 * v + (1 - ADAM_BETA2) * g * g
            mhat = m / (1 - ADAM_BETA1 ** t)
            vhat = v / (1 - ADAM_BETA2 ** t)
            updated.append(W - config.lr * mhat / (np.sqrt(vhat) + ADAM_EPS))
        W1, W2 = updated
    return VictimModel(W1, W2, losses, seed)


# --- metrics ----------------------------------------------------------------

def delta_sp(predicted, sensitive):
    predicted = np.asarray(predicted)
    sensitive = np.asarray(sensitive)
    g1, g0 = sensitive == 1, sensitive == 0
    if not g1.any() or not g0.any():
        raise ContractError("statistical parity needs both groups among evaluated nodes")
    return float(abs((predicted[g1] == 1).mean() - (predicted[g0] == 1).mean()))


def inform_bias_metric(Y, S):
    """Sum over ordered pairs of S[i, j] * ||Y_i - Y_j||^2."""
    Y = np.asarray(Y, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    if S.shape != (Y.shape[0], Y.shape[0]):
        raise ShapeError(f"similarity {S.shape} vs {Y.shape[0]} rows")
    # direct differences keep identical rows at exactly zero distance
    dist = ((Y[:, None, :] - Y[None, :, :]) ** 2).sum(axis=2)
    return float((S * dist).sum())


def micro_macro_f1(predicted, labels, mask=None, n_classes=None):
    """Micro F1 (accuracy) and the unweighted mean of per-class F1.

    Every class in ``range(n_classes)`` is counted; a class with no true
    positives scores F1 = 0.
    """
    predicted = np.asarray(predicted)
    labels = np.asarray(labels)
    if mask is not None:
        predicted, labels = predicted[mask], labels[mask]
    if len(labels) == 0:
        raise ContractError("F1 over an empty mask")
    if n_classes is None:
        n_classes = int(max(predicted.max(), labels.max())) + 1
    micro = float((predicted == labels).mean())
    f1s = []
    for k in range(n_classes):
        tp = np.sum((predicted == k) & (labels == k))
        fp = np.sum((predicted == k) & (labels != k))
        fn = np.sum((predicted != k) & (labels == k))
        f1s.append(0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn))
    return micro, float(np.mean(f1s))


def auc(scores, labels, mask=None):
    """Mann-Whitney AUC from mid-ranks (ties count one half)."""
    from scipy.stats import rankdata

    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if mask is not None:
        scores, labels = scores[mask], labels[mask]
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ContractError("AUC needs both classes")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


@dataclass
class MetricsReport:
    seeds: tuple
    per_seed: dict = field(default_factory=dict)

    def mean(self, metric):
        return float(np.mean(self.per_seed[metric]))

    def std(self, metric):
        return float(np.std(self.per_seed[metric]))

    def to_dict(self):
        return {
            "seeds": list(self.seeds),
            **{m: {"mean": self.mean(m), "std": self.std(m),
                   "per_seed": [float(v) for v in self.per_seed[m]]} for m in METRICS},
        }


def score_test_nodes(Y, graph, S):
    test = graph.split.test
    pred = Y.argmax(axis=1)
    micro, macro = micro_macro_f1(pred, graph.labels, test, n_classes=Y.shape[1])
    return {
        "micro_f1": micro,
        "macro_f1": macro,
        "auc": auc(Y[:, 1], graph.labels, test),
        "delta_sp": delta_sp(pred[test], graph.sensitive[test]),
        "inform_bias": inform_bias_metric(Y[test], S[np.ix_(test, test)]),
    }


def report_for(graph, config, similarity):
    """Train one victim per seed on ``graph`` and score the test nodes.

    ``similarity`` is the clean-graph similarity, used both for the InFoRM
    regulariser and the bias metric.
    """
    per_seed = {m: [] for m in METRICS}
    for seed in config.seeds:
        model = train_victim(graph, config, seed, similarity)
        for m, v in score_test_nodes(model.predict(graph), graph, similarity).items():
            per_seed[m].append(v)
    return MetricsReport(config.seeds, per_seed)


def evaluate(graph_clean, graph_poisoned, config):
    """(clean report, poisoned report) with S always taken from the clean graph."""
    if (graph_clean.n != graph_poisoned.n
            or not np.array_equal(graph_clean.labels, graph_poisoned.labels)
            or not np.array_equal(graph_clean.split.test, graph_poisoned.split.test)):
        raise ContractError("clean and poisoned graphs must share nodes, labels and split")
    S = cosine_similarity_matrix(graph_clean.adjacency)
    return report_for(graph_clean, config, S), report_for(graph_poisoned, config, S)
