"""Dense 2-D tensors with a reverse-mode tape.

Every tensor is a float64 matrix. Operations record themselves on a
:class:`Tape` only when some operand requires gradients, so the same code
runs untaped (plain numpy speed) when nothing needs differentiating.

Higher-order derivatives are never taken directly. Differentiating through
a training loop is done by writing the inner gradient out as ordinary taped
operations (see ``surrogate.unrolled_predictions``).
"""
from __future__ import annotations

import itertools

import numpy as np

from .errors import ContractError, ShapeError

_ids = itertools.count()


class Tape:
    """Ordered record of taped operations.

    Records are appended as operations execute, so operands always precede
    their outputs and a reverse sweep is a valid topological order.
    """

    def __init__(self):
        self.records = []
        self.leaves = []

    def leaf(self, value):
        t = Tensor(value, requires_grad=True, tape=self)
        self.leaves.append(t)
        return t

    def record(self, out, inputs, vjps):
        self.records.append((out, inputs, vjps))

    def backward(self, root):
        """Gradients of scalar ``root`` for every leaf of this tape."""
        if root.shape != (1, 1):
            raise ContractError(f"backward needs a 1x1 root, got {root.shape}")
        adj = {}
        if root.requires_grad:
            if root.tape is not self:
                raise ContractError("root was recorded on a different tape")
            adj[root.id] = np.ones((1, 1))
        for out, inputs, vjps in reversed(self.records):
            g = adj.pop(out.id, None)
            if g is None:
                continue
            for t, vjp in zip(inputs, vjps):
                if t is None or not t.requires_grad:
                    continue
                contrib = vjp(g)
                if t.id in adj:
                    adj[t.id] = adj[t.id] + contrib
                else:
                    adj[t.id] = contrib
        return {leaf: adj.get(leaf.id, np.zeros(leaf.shape)) for leaf in self.leaves}


def backward(tape, root):
    return tape.backward(root)


class Tensor:
    __slots__ = ("value", "requires_grad", "tape", "id")
    __array_ufunc__ = None

    def __init__(self, value, requires_grad=False, tape=None):
        v = np.array(value, dtype=np.float64)
        if v.ndim == 0:
            v = v.reshape(1, 1)
        elif v.ndim == 1:
            v = v.reshape(-1, 1)
        elif v.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got ndim={v.ndim}")
        if requires_grad and tape is None:
            raise ContractError("a tensor requiring gradients needs a tape")
        self.value = v
        self.requires_grad = requires_grad
        self.tape = tape
        self.id = next(_ids)

    @property
    def shape(self):
        return self.value.shape

    @property
    def T(self):
        return transpose(self)

    def item(self):
        if self.shape != (1, 1):
            raise ContractError(f"item() on a {self.shape} tensor")
        return float(self.value[0, 0])

    def numpy(self):
        return self.value

    def __repr__(self):
        flag = ", requires_grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return hadamard(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / other)
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value, inputs, vjps):
    tapes = {t.tape for t in inputs if t is not None and t.requires_grad}
    if not tapes:
        return Tensor(value)
    if len(tapes) > 1:
        raise ContractError("operands recorded on different tapes")
    tape = tapes.pop()
    out = Tensor(value, requires_grad=True, tape=tape)
    tape.record(out, inputs, vjps)
    return out


def _same_shape(a, b, op):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# --- elementwise / linear ---------------------------------------------------

def add(a, b):
    a = as_tensor(a)
    if isinstance(b, (int, float)):
        return _make(a.value + b, (a,), (lambda g: g,))
    b = as_tensor(b)
    _same_shape(a, b, "add")
    return _make(a.value + b.value, (a, b), (lambda g: g, lambda g: g))


def sub(a, b):
    a = as_tensor(a)
    if isinstance(b, (int, float)):
        return add(a, -b)
    b = as_tensor(b)
    _same_shape(a, b, "sub")
    return _make(a.value - b.value, (a, b), (lambda g: g, lambda g: -g))


def neg(a):
    return _make(-a.value, (a,), (lambda g: -g,))


def scale(a, s):
    s = float(s)
    return _make(s * a.value, (a,), (lambda g: s * g,))


def hadamard(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "hadamard")
    av, bv = a.value, b.value
    return _make(av * bv, (a, b), (lambda g: g * bv, lambda g: g * av))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "div")
    av, bv = a.value, b.value
    out = av / bv
    return _make(out, (a, b), (lambda g: g / bv, lambda g: -g * out / bv))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    return _make(av @ bv, (a, b), (lambda g: g @ bv.T, lambda g: av.T @ g))


def transpose(a):
    return _make(a.value.T.copy(), (a,), (lambda g: g.T,))


def exp(a):
    out = np.exp(a.value)
    return _make(out, (a,), (lambda g: g * out,))


def log(a):
    av = a.value
    return _make(np.log(av), (a,), (lambda g: g / av,))


def sqrt(a):
    out = np.sqrt(a.value)

    def vjp(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(out > 0, 0.5 / out, 0.0)
        return g * d

    return _make(out, (a,), (vjp,))


def clip_min(a, floor):
    mask = a.value > floor
    return _make(np.where(mask, a.value, floor), (a,), (lambda g: g * mask,))


def relu(a):
    mask = a.value > 0
    return _make(np.where(mask, a.value, 0.0), (a,), (lambda g: g * mask,))


def sum(a):  # noqa: A001 - mirrors the op name
    shape = a.shape
    return _make(np.array([[a.value.sum()]]), (a,), (lambda g: np.full(shape, g[0, 0]),))


def masked_select_rows(a, idx):
    idx = np.asarray(idx, dtype=np.int64)
    shape = a.shape

    def vjp(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return full

    return _make(a.value[idx], (a,), (vjp,))


def column(a, j):
    shape = a.shape

    def vjp(g):
        full = np.zeros(shape)
        full[:, j] = g[:, 0]
        return full

    return _make(a.value[:, j:j + 1].copy(), (a,), (vjp,))


# --- softmax family ---------------------------------------------------------

def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def row_softmax(a):
    p = _softmax(a.value)

    def vjp(g):
        return p * (g - (g * p).sum(axis=1, keepdims=True))

    return _make(p, (a,), (vjp,))


def log_softmax(a):
    z = a.value - a.value.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = z - lse
    p = np.exp(out)
    return _make(out, (a,), (lambda g: g - p * g.sum(axis=1, keepdims=True),))


def softmax_cross_entropy(logits, labels, idx):
    """Mean negative log-likelihood of ``labels[idx]`` under row-softmax(logits)."""
    idx = np.asarray(idx, dtype=np.int64)
    if len(idx) == 0:
        raise ContractError("cross-entropy over an empty mask")
    z = logits.value
    lsm = z - z.max(axis=1, keepdims=True)
    lsm = lsm - np.log(np.exp(lsm).sum(axis=1, keepdims=True))
    y = np.asarray(labels)[idx]
    loss = -lsm[idx, y].mean()
    shape = z.shape

    def vjp(g):
        grad = np.zeros(shape)
        grad[idx] = np.exp(lsm[idx])
        np.subtract.at(grad, (idx, y), 1.0)
        return g[0, 0] * grad / len(idx)

    return _make(np.array([[loss]]), (logits,), (vjp,))


# --- graph ops --------------------------------------------------------------

def degree_normalize(A):
    """D^{-1/2} (A + I) D^{-1/2} with D the row sums of A + I.

    Differentiable through the degrees as well as the entries.
    """
    A = as_tensor(A)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ShapeError(f"degree_normalize needs a square matrix, got {A.shape}")
    M = A.value + np.eye(n)
    deg = M.sum(axis=1)
    if np.any(deg <= 0):
        raise ContractError("non-positive degree in A + I")
    s = deg ** -0.5
    out = s[:, None] * M * s[None, :]

    def vjp(g):
        gm = g * s[:, None] * s[None, :]
        # s_i appears as the left factor of row i and the right factor of column i
        ds = (g * M * s[None, :]).sum(axis=1) + (g * M * s[:, None]).sum(axis=0)
        dd = ds * (-0.5) * deg ** -1.5
        return gm + dd[:, None]

    return _make(out, (A,), (vjp,))
