"""Differentiable bias functions maximised by the attack.

Statistical parity is measured through a kernel estimate of the acceptance
rate P[y_hat = 1]: each node contributes the Gaussian tail mass beyond the
0.5 decision threshold, with the tail Q(tau) replaced by the closed form
exp(-alpha tau^2 - beta tau - gamma). Individual fairness is the Laplacian
quadratic form Tr(Y^T L_S Y).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ContractError, ShapeError, UnsupportedBiasError

Q_ALPHA = 0.4920
Q_BETA = 0.2887
Q_GAMMA = 1.1893

SP_VARIANTS = ("gap-total", "gap-groups", "negative-acceptance")
Q_MODES = ("literal", "reflected")


@dataclass
class BiasSpec:
    kind: str = "statistical-parity"
    variant: str = "gap-groups"
    group: int = 0
    bandwidth: float = 0.1
    q_mode: str = "literal"
    similarity: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("statistical-parity", "individual-fairness"):
            raise UnsupportedBiasError(f"unknown bias kind {self.kind!r}")
        if self.kind == "statistical-parity":
            if self.variant not in SP_VARIANTS:
                raise UnsupportedBiasError(f"unknown statistical-parity variant {self.variant!r}")
            if not self.bandwidth > 0:
                raise ContractError("bandwidth must be positive")
            if self.q_mode not in Q_MODES:
                raise ContractError(f"unknown q-mode {self.q_mode!r}")
            if self.group not in (0, 1):
                raise ContractError("group must be 0 or 1")
        if self.similarity is not None:
            S = np.asarray(self.similarity, dtype=np.float64)
            if S.ndim != 2 or S.shape[0] != S.shape[1]:
                raise ShapeError(f"similarity must be square, got {S.shape}")
            if np.max(np.abs(S - S.T), initial=0.0) > 1e-12:
                raise ContractError("similarity matrix must be symmetric")
            self.similarity = S


def q_approx(tau, mode="literal"):
    """Approximate Gaussian tail mass Q(tau).

    ``reflected`` uses 1 - Q(-tau) for negative tau, which keeps the value in
    (0, 1); ``literal`` applies the closed form everywhere.
    """
    tau = np.asarray(tau, dtype=np.float64)
    lit = np.exp(-Q_ALPHA * tau ** 2 - Q_BETA * tau - Q_GAMMA)
    if mode == "literal":
        out = lit
    elif mode == "reflected":
        refl = 1.0 - np.exp(-Q_ALPHA * tau ** 2 + Q_BETA * tau - Q_GAMMA)
        out = np.where(tau >= 0, lit, refl)
    else:
        raise ContractError(f"unknown q-mode {mode!r}")
    return float(out) if out.ndim == 0 else out


def _q_tensor(tau, mode):
    def closed_form(t):
        return ad.exp(ad.add(ad.sub(ad.scale(ad.hadamard(t, t), -Q_ALPHA), ad.scale(t, Q_BETA)), -Q_GAMMA))

    lit = closed_form(tau)
    if mode == "literal":
        return lit
    pos = (tau.value >= 0).astype(np.float64)
    refl = ad.sub(np.ones(tau.shape), closed_form(ad.neg(tau)))
    return ad.add(ad.hadamard(lit, pos), ad.hadamard(refl, 1.0 - pos))


def acceptance_rate(Y, mask, a=0.1, q_mode="literal"):
    """Kernel estimate of P[y_hat = 1] over the nodes in ``mask`` (1x1 tensor)."""
    Y = ad.as_tensor(Y)
    if Y.shape[1] != 2:
        raise UnsupportedBiasError(f"acceptance rate needs binary predictions, got c={Y.shape[1]}")
    mask = np.asarray(mask, dtype=np.int64)
    if len(mask) == 0:
        raise ContractError("acceptance rate over an empty mask")
    p1 = ad.column(ad.masked_select_rows(Y, mask), 1)
    tau = ad.scale(ad.sub(np.full(p1.shape, 0.5), p1), 1.0 / a)
    return ad.scale(ad.sum(_q_tensor(tau, q_mode)), 1.0 / len(mask))


def statistical_parity_bias(Y, sensitive, spec):
    sensitive = np.asarray(sensitive)
    g1 = np.flatnonzero(sensitive == 1)
    g0 = np.flatnonzero(sensitive == 0)

    def rate(mask):
        return acceptance_rate(Y, mask, spec.bandwidth, spec.q_mode)

    if spec.variant == "gap-total":
        if len(g1) == 0:
            raise ContractError("group s=1 is empty")
        return ad.sub(rate(g1), rate(np.arange(len(sensitive))))
    if spec.variant == "gap-groups":
        if len(g1) == 0 or len(g0) == 0:
            raise ContractError("both sensitive groups must be non-empty")
        return ad.sub(rate(g1), rate(g0))
    target = g1 if spec.group == 1 else g0
    if len(target) == 0:
        raise ContractError(f"group s={spec.group} is empty")
    return ad.neg(rate(target))


def cosine_similarity_matrix(A):
    """Row-wise cosine similarity; all-zero rows are similar only to themselves."""
    A = np.asarray(A, dtype=np.float64)
    norms = np.linalg.norm(A, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    S = (A @ A.T) / np.outer(safe, safe)
    zero = norms == 0
    S[zero, :] = 0.0
    S[:, zero] = 0.0
    np.fill_diagonal(S, np.where(zero, 1.0, np.diag(S)))
    return (S + S.T) / 2


def laplacian(S):
    S = np.asarray(S, dtype=np.float64)
    return np.diag(S.sum(axis=1)) - S


def individual_bias(Y, S):
    """Tr(Y^T L_S Y) as a 1x1 tensor."""
    Y = ad.as_tensor(Y)
    S = np.asarray(S, dtype=np.float64)
    if S.shape != (Y.shape[0], Y.shape[0]):
        raise ShapeError(f"similarity {S.shape} does not match {Y.shape[0]} prediction rows")
    return ad.sum(ad.hadamard(Y, ad.matmul(laplacian(S), Y)))


def evaluate_bias(Y, graph, spec):
    """Dispatch on ``spec.kind``; returns a 1x1 tensor."""
    if spec.kind == "statistical-parity":
        return statistical_parity_bias(Y, graph.sensitive, spec)
    if spec.similarity is None:
        raise ContractError("individual-fairness bias needs a similarity matrix")
    return individual_bias(Y, spec.similarity)
