"""Two-layer linear GCN surrogate and its full-batch Adam training loop."""
from __future__ import annotations

import dataclasses
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import CapacityError, ContractError, ShapeError, TrainingError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
PROB_FLOOR = 1e-12
PARAMS_MAGIC = b"FATELGCN"


@dataclass
class SurrogateParams:
    """Weights of the linear GCN plus the hyperparameters that train them.

    ``seed`` drives both the Glorot initialisation (see :func:`init_surrogate`)
    and the dropout mask stream during training.
    """

    W1: np.ndarray
    W2: np.ndarray
    epochs: int = 500
    lr: float = 1e-2
    weight_decay: float = 5e-4
    dropout: float = 0.5
    seed: int = 0

    def __post_init__(self):
        self.W1 = np.array(self.W1, dtype=np.float64)
        self.W2 = np.array(self.W2, dtype=np.float64)
        if self.W1.ndim != 2 or self.W2.ndim != 2 or self.W1.shape[1] != self.W2.shape[0]:
            raise ShapeError(f"inconsistent weight shapes {self.W1.shape}, {self.W2.shape}")
        if self.epochs < 1:
            raise ContractError("epochs must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError("dropout must lie in [0, 1)")

    @property
    def hidden(self):
        return self.W1.shape[1]

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


@dataclass
class TrainTrace:
    losses: list
    params: SurrogateParams
    predictions: np.ndarray


def glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_surrogate(n_features, n_classes, hidden=16, seed=0, epochs=500, lr=1e-2,
                   weight_decay=5e-4, dropout=0.5):
    rng = np.random.default_rng([seed, 0])
    W1 = glorot(rng, n_features, hidden)
    W2 = glorot(rng, hidden, n_classes)
    return SurrogateParams(W1, W2, epochs=epochs, lr=lr, weight_decay=weight_decay,
                           dropout=dropout, seed=seed)


def dropout_rng(params):
    return np.random.default_rng([params.seed, 1])


def draw_masks(rng, n, d, h, rate):
    """Inverted-dropout masks for the inputs of both layers (None if rate is 0)."""
    if rate == 0:
        return None
    keep = 1.0 - rate
    m1 = (rng.random((n, d)) >= rate) / keep
    m2 = (rng.random((n, h)) >= rate) / keep
    return m1, m2


def linear_gcn_logits(A_hat, X, W1, W2, masks=None):
    """Z = A_hat (A_hat X W1) W2, with optional dropout on each layer input."""
    if masks is not None:
        X = ad.hadamard(X, masks[0])
    H = ad.matmul(ad.matmul(A_hat, X), W1)
    if masks is not None:
        H = ad.hadamard(H, masks[1])
    return ad.matmul(ad.matmul(A_hat, H), W2)


def _check_shapes(graph, params):
    if params.W1.shape[0] != graph.n_features:
        raise ShapeError(f"W1 expects {params.W1.shape[0]} features, graph has {graph.n_features}")


def surrogate_forward(graph, params, train_mode=False, rng=None):
    """Row-softmax predictions of the linear GCN as an (n, c) array."""
    _check_shapes(graph, params)
    A_hat = ad.degree_normalize(graph.adjacency)
    masks = None
    if train_mode:
        if rng is None:
            rng = dropout_rng(params)
        masks = draw_masks(rng, graph.n, graph.n_features, params.hidden, params.dropout)
    Z = linear_gcn_logits(A_hat, ad.Tensor(graph.features), params.W1, params.W2, masks)
    return ad.row_softmax(Z).value


def cross_entropy_loss(Y, labels, mask):
    """Mean negative log-likelihood over ``mask`` of probability rows ``Y``.

    Works on arrays or taped tensors; probabilities are floored at 1e-12.
    """
    mask = np.asarray(mask, dtype=np.int64)
    if len(mask) == 0:
        raise ContractError("cross-entropy over an empty mask")
    Y = ad.as_tensor(Y)
    rows = ad.masked_select_rows(Y, mask)
    onehot = np.zeros(rows.shape)
    onehot[np.arange(len(mask)), np.asarray(labels)[mask]] = 1.0
    picked = ad.matmul(ad.hadamard(rows, onehot), np.ones((rows.shape[1], 1)))
    logp = ad.log(ad.clip_min(picked, PROB_FLOOR))
    return ad.scale(ad.sum(logp), -1.0 / len(mask))


def _adam_update(W, g, m, v, t, lr):
    m = ADAM_BETA1 * m + (1 - ADAM_BETA1) * g
    v = ADAM_BETA2 * v + (1 - ADAM_BETA2) * (g * g)
    mhat = m * (1.0 / (1 - ADAM_BETA1 ** t))
    vhat = v * (1.0 / (1 - ADAM_BETA2 ** t))
    return W - lr * (mhat / (ad.sqrt(vhat) + ADAM_EPS)), m, v


def train_surrogate(graph, params0):
    """Full-batch Adam on train-node cross-entropy (coupled L2 weight decay)."""
    _check_shapes(graph, params0)
    train = graph.split.train
    if len(train) == 0:
        raise ContractError("graph has no training nodes; call generate_split first")
    A_hat = ad.degree_normalize(graph.adjacency)
    X = ad.Tensor(graph.features)
    rng = dropout_rng(params0)
    W1, W2 = params0.W1.copy(), params0.W2.copy()
    state = [np.zeros_like(W1), np.zeros_like(W1), np.zeros_like(W2), np.zeros_like(W2)]
    losses = []
    for t in range(1, params0.epochs + 1):
        masks = draw_masks(rng, graph.n, graph.n_features, params0.hidden, params0.dropout)
        tape = ad.Tape()
        w1, w2 = tape.leaf(W1), tape.leaf(W2)
        loss = ad.softmax_cross_entropy(linear_gcn_logits(A_hat, X, w1, w2, masks), graph.labels, train)
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingError(t)
        losses.append(value)
        grads = tape.backward(loss)
        g1 = ad.Tensor(grads[w1] + params0.weight_decay * W1)
        g2 = ad.Tensor(grads[w2] + params0.weight_decay * W2)
        W1t, m1, v1 = _adam_update(ad.Tensor(W1), g1, ad.Tensor(state[0]), ad.Tensor(state[1]), t, params0.lr)
        W2t, m2, v2 = _adam_update(ad.Tensor(W2), g2, ad.Tensor(state[2]), ad.Tensor(state[3]), t, params0.lr)
        W1, W2 = W1t.value, W2t.value
        state = [m1.value, v1.value, m2.value, v2.value]
    final = params0.replace(W1=W1, W2=W2)
    return TrainTrace(losses, final, surrogate_forward(graph, final))


def unrolled_predictions(A, X, graph, params0, max_cost=1500):
    """Eval-mode predictions after ``params0.epochs`` taped training steps.

    ``A`` and ``X`` are tensors (either may be a tape leaf). The parameter
    gradient of each epoch is written out explicitly as taped operations, so
    the returned predictions are differentiable with respect to the graph
    through the whole optimisation trajectory. Dropout masks are drawn from
    the same stream as :func:`train_surrogate`, so both paths follow the same
    trajectory.
    """
    n = graph.n
    if params0.epochs * n > max_cost:
        raise CapacityError(
            f"unrolled meta-gradient needs epochs*n = {params0.epochs * n} > cap {max_cost}")
    train = np.asarray(graph.split.train)
    if len(train) == 0:
        raise ContractError("graph has no training nodes")
    c = params0.W2.shape[1]
    rowmask = np.zeros((n, c))
    rowmask[train] = 1.0
    target = np.zeros((n, c))
    target[train, graph.labels[train]] = 1.0
    inv_k = 1.0 / len(train)
    wd = params0.weight_decay

    A_hat = ad.degree_normalize(A)
    rng = dropout_rng(params0)
    W1, W2 = ad.Tensor(params0.W1), ad.Tensor(params0.W2)
    m1 = v1 = ad.Tensor(np.zeros_like(params0.W1))
    m2 = v2 = ad.Tensor(np.zeros_like(params0.W2))
    for t in range(1, params0.epochs + 1):
        masks = draw_masks(rng, n, graph.n_features, params0.hidden, params0.dropout)
        Xd = X if masks is None else ad.hadamard(X, masks[0])
        AX = ad.matmul(A_hat, Xd)
        H = ad.matmul(AX, W1)
        Hd = H if masks is None else ad.hadamard(H, masks[1])
        AH = ad.matmul(A_hat, Hd)
        P = ad.row_softmax(ad.matmul(AH, W2))
        G = ad.scale(ad.sub(ad.hadamard(P, rowmask), target), inv_k)
        g2 = ad.add(ad.matmul(ad.transpose(AH), G), ad.scale(W2, wd))
        dH = ad.matmul(ad.transpose(A_hat), ad.matmul(G, ad.transpose(W2)))
        if masks is not None:
            dH = ad.hadamard(dH, masks[1])
        g1 = ad.add(ad.matmul(ad.transpose(AX), dH), ad.scale(W1, wd))
        W1, m1, v1 = _adam_update(W1, g1, m1, v1, t, params0.lr)
        W2, m2, v2 = _adam_update(W2, g2, m2, v2, t, params0.lr)
    return ad.row_softmax(linear_gcn_logits(A_hat, X, W1, W2))


def save_params(path, params):
    """Binary checkpoint: magic, d, h, c as int64 LE, then W1 and W2 as f64 LE."""
    d, h = params.W1.shape
    c = params.W2.shape[1]
    with open(path, "wb") as fh:
        fh.write(PARAMS_MAGIC)
        fh.write(struct.pack("<qqq", d, h, c))
        fh.write(params.W1.astype("<f8").tobytes(order="C"))
        fh.write(params.W2.astype("<f8").tobytes(order="C"))


def load_params(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:len(PARAMS_MAGIC)] != PARAMS_MAGIC:
        raise ContractError(f"{path}: not a surrogate checkpoint")
    off = len(PARAMS_MAGIC)
    d, h, c = struct.unpack_from("<qqq", blob, off)
    off += 24
    expected = off + 8 * (d * h + h * c)
    if len(blob) != expected:
        raise ContractError(f"{path}: expected {expected} bytes, found {len(blob)}")
    W1 = np.frombuffer(blob, dtype="<f8", count=d * h, offset=off).reshape(d, h)
    W2 = np.frombuffer(blob, dtype="<f8", count=h * c, offset=off + 8 * d * h).reshape(h, c)
    return W1.astype(np.float64), W2.astype(np.float64)
