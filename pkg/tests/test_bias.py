import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fate import autodiff as ad
from fate.bias import (
    BiasSpec,
    acceptance_rate,
    cosine_similarity_matrix,
    evaluate_bias,
    individual_bias,
    laplacian,
    q_approx,
    statistical_parity_bias,
)
from fate.errors import ContractError, ShapeError, UnsupportedBiasError

from _util import random_graph

ALPHA, BETA, GAMMA = 0.4920, 0.2887, 1.1893


def _probs(p1):
    p1 = np.asarray(p1, dtype=float)
    return np.stack([1 - p1, p1], axis=1)


def _pairwise(Y, S):
    n = len(Y)
    return 0.5 * sum(S[i, j] * np.sum((Y[i] - Y[j]) ** 2) for i in range(n) for j in range(n))


# --- q_approx ---------------------------------------------------------------

def test_q_examples():
    assert abs(q_approx(0) - math.exp(-1.1893)) < 1e-15
    assert abs(q_approx(0) - 0.30443) < 1e-5
    assert abs(q_approx(2) - math.exp(-3.7347)) < 1e-15
    # the rounded decimal quoted alongside this value is itself 2e-5 off
    assert abs(q_approx(2) - 0.02390) < 2e-4


def test_q_close_to_gaussian_tail():
    for tau in np.arange(1.0, 3.0 + 1e-9, 0.01):
        assert abs(q_approx(tau) - 0.5 * math.erfc(tau / math.sqrt(2))) <= 0.03


@settings(max_examples=100, deadline=None)
@given(a=st.floats(0, 50), b=st.floats(0, 50))
def test_q_strictly_decreasing_on_nonnegative(a, b):
    lo, hi = sorted((a, b))
    if hi - lo < 1e-6:
        return
    qa, qb = q_approx(lo), q_approx(hi)
    assert qa > qb or qb == 0.0


def test_q_reflected_complement():
    for tau in (0.3, 1.0, 2.5):
        assert abs(q_approx(-tau, "reflected") - (1 - q_approx(tau))) < 1e-15
        assert q_approx(tau, "reflected") == q_approx(tau)


def test_q_vectorized():
    out = q_approx(np.array([0.0, 2.0]))
    assert out.shape == (2,) and abs(out[1] - q_approx(2.0)) < 1e-16


# --- acceptance_rate --------------------------------------------------------

def test_acceptance_at_threshold():
    Y = _probs([0.5, 0.5, 0.5])
    assert abs(acceptance_rate(Y, [0, 1, 2]).item() - math.exp(-GAMMA)) < 1e-15


def test_acceptance_single_node_literal_and_reflected():
    Y = _probs([0.6])
    lit = acceptance_rate(Y, [0], 0.1, "literal").item()
    assert abs(lit - math.exp(-0.492 + 0.2887 - 1.1893)) < 1e-12
    assert abs(lit - 0.24843) < 1e-5
    refl = acceptance_rate(Y, [0], 0.1, "reflected").item()
    assert abs(refl - (1 - math.exp(-1.97))) < 1e-12
    # 1 - exp(-1.97) = 0.860543; the commonly quoted 0.86069 is a rounding slip
    assert abs(refl - 0.86069) < 2e-4


def test_acceptance_rejects_multiclass_and_empty():
    with pytest.raises(UnsupportedBiasError):
        acceptance_rate(np.full((2, 3), 1 / 3), [0, 1])
    with pytest.raises(ContractError):
        acceptance_rate(_probs([0.5]), [])


@settings(max_examples=100, deadline=None)
@given(p=st.lists(st.floats(0, 1), min_size=1, max_size=12), a=st.floats(0.05, 2.0))
def test_acceptance_ranges(p, a):
    Y = _probs(p)
    idx = np.arange(len(p))
    lit = acceptance_rate(Y, idx, a, "literal").item()
    assert 0 < lit <= math.exp(-GAMMA + BETA ** 2 / (4 * ALPHA)) + 1e-15
    refl = acceptance_rate(Y, idx, a, "reflected").item()
    # exact value is < 1; 1 - 1e-23 rounds to 1.0 in double precision
    assert 0 < refl <= 1
    if np.all(np.abs(0.5 - np.asarray(p)) / a < 5):
        assert refl < 1


# --- statistical_parity_bias ------------------------------------------------

def test_sp_identical_predictions_zero():
    Y = _probs([0.7] * 6)
    s = np.array([0, 1, 0, 1, 0, 1])
    for variant in ("gap-total", "gap-groups"):
        assert abs(statistical_parity_bias(Y, s, BiasSpec(variant=variant)).item()) < 1e-16


def test_sp_separated_groups():
    s = np.array([1, 1, 1, 0, 0, 0])
    Y = _probs([0.9, 0.9, 0.9, 0.1, 0.1, 0.1])
    lit = statistical_parity_bias(Y, s, BiasSpec(q_mode="literal")).item()
    assert abs(lit - (math.exp(-7.9065) - math.exp(-10.2161))) < 1e-12
    assert abs(lit - 3.31e-4) < 1e-6
    refl = statistical_parity_bias(Y, s, BiasSpec(q_mode="reflected")).item()
    assert abs(refl - (1 - 2 * math.exp(-10.2161))) < 1e-12
    assert abs(refl - 0.99993) < 1e-5


def test_sp_negative_acceptance():
    s = np.array([1, 0, 0])
    Y = _probs([0.9, 0.5, 0.5])
    b = statistical_parity_bias(Y, s, BiasSpec(variant="negative-acceptance", group=0)).item()
    assert abs(b + math.exp(-GAMMA)) < 1e-15


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), mode=st.sampled_from(["literal", "reflected"]))
def test_sp_gap_groups_antisymmetric(seed, mode):
    rng = np.random.default_rng(seed)
    n = 10
    Y = _probs(rng.random(n))
    s = np.arange(n) % 2
    spec = BiasSpec(q_mode=mode)
    b = statistical_parity_bias(Y, s, spec).item()
    assert abs(b + statistical_parity_bias(Y, 1 - s, spec).item()) < 1e-15


def test_sp_empty_group_rejected():
    with pytest.raises(ContractError):
        statistical_parity_bias(_probs([0.5, 0.5]), np.array([0, 0]), BiasSpec())


def test_biasspec_validation():
    with pytest.raises(UnsupportedBiasError):
        BiasSpec(kind="equal-opportunity")
    with pytest.raises(UnsupportedBiasError):
        BiasSpec(variant="ratio")
    with pytest.raises(ContractError):
        BiasSpec(bandwidth=0)
    with pytest.raises(ContractError):
        BiasSpec(kind="individual-fairness", similarity=np.array([[0, 1], [0, 0]]))


# --- cosine similarity ------------------------------------------------------

def test_cosine_examples():
    A = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    S = cosine_similarity_matrix(A)
    assert S[0, 2] == 1.0 and S[0, 1] == 0.0
    B = np.array([[0, 0, 1, 1], [0, 0, 0, 0], [1, 0, 0, 0], [1, 0, 0, 0]], dtype=float)
    S = cosine_similarity_matrix(B)
    assert abs(S[2, 3] - 1.0) < 1e-15
    assert S[0, 2] == 0.0
    assert S[1, 1] == 1.0 and S[1, 0] == 0.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_cosine_symmetric_bounded(seed):
    g = random_graph(np.random.default_rng(seed), 9, 1, split=False)
    S = cosine_similarity_matrix(g.adjacency)
    assert np.array_equal(S, S.T)
    assert np.all(S >= 0) and np.all(S <= 1 + 1e-12)


# --- individual_bias --------------------------------------------------------

def test_individual_examples():
    S = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert abs(individual_bias(np.eye(2), S).item() - 2.0) < 1e-15
    assert individual_bias(np.tile([0.3, 0.7], (4, 1)), np.ones((4, 4))).item() == pytest.approx(0, abs=1e-15)
    Y = np.random.default_rng(0).random((5, 2))
    assert individual_bias(Y, np.zeros((5, 5))).item() == 0.0


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(2, 12), c=st.integers(2, 4))
def test_trace_equals_pairwise(seed, n, c):
    rng = np.random.default_rng(seed)
    Y = rng.random((n, c))
    S = rng.random((n, n))
    S = (S + S.T) / 2
    assert abs(individual_bias(Y, S).item() - _pairwise(Y, S)) <= 1e-9


def test_laplacian_rows_sum_to_zero():
    S = np.random.default_rng(1).random((6, 6))
    S = S + S.T
    assert np.allclose(laplacian(S).sum(axis=1), 0, atol=1e-12)


def test_individual_shape_check():
    with pytest.raises(ShapeError):
        individual_bias(np.ones((3, 2)), np.ones((2, 2)))


def test_evaluate_bias_dispatch():
    g = random_graph(np.random.default_rng(2), 8, 2)
    Y = ad.Tensor(_probs(np.linspace(0.1, 0.9, 8)))
    S = cosine_similarity_matrix(g.adjacency)
    assert evaluate_bias(Y, g, BiasSpec(kind="individual-fairness", similarity=S)).item() == \
        individual_bias(Y, S).item()
    assert evaluate_bias(Y, g, BiasSpec()).item() == statistical_parity_bias(Y, g.sensitive, BiasSpec()).item()
    with pytest.raises(ContractError):
        evaluate_bias(Y, g, BiasSpec(kind="individual-fairness"))
