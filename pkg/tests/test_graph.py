import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fate.errors import ContractError, DuplicateNodeError, NodeIndexError, ParseError, SelfLoopError
from fate.graph import (
    Graph,
    SbmConfig,
    Split,
    SplitSpec,
    generate_sbm,
    generate_split,
    graph_distance,
    graph_paths,
    load_graph,
    load_split,
    write_graph,
)

from _util import random_graph


def _write_nodes(path, n, d=1):
    rows = ["id,label,sensitive," + ",".join(f"f{k}" for k in range(d))]
    rows += [f"{i},{i % 2},{i % 2}," + ",".join("0.5" for _ in range(d)) for i in range(n)]
    path.write_text("\n".join(rows) + "\n")


# --- load_graph -------------------------------------------------------------

def test_single_edge_is_symmetrized(tmp_path):
    (tmp_path / "e").write_text("0 1\n")
    _write_nodes(tmp_path / "n.csv", 2)
    g = load_graph(tmp_path / "e", tmp_path / "n.csv")
    assert np.array_equal(g.adjacency, [[0, 1], [1, 0]])


def test_empty_edge_file_gives_zero_matrix(tmp_path):
    (tmp_path / "e").write_text("")
    _write_nodes(tmp_path / "n.csv", 3)
    g = load_graph(tmp_path / "e", tmp_path / "n.csv")
    assert np.array_equal(g.adjacency, np.zeros((3, 3)))


def test_self_loop_rejected(tmp_path):
    (tmp_path / "e").write_text("2 2\n")
    _write_nodes(tmp_path / "n.csv", 3)
    with pytest.raises(SelfLoopError):
        load_graph(tmp_path / "e", tmp_path / "n.csv")


def test_out_of_range_edge(tmp_path):
    (tmp_path / "e").write_text("0 5\n")
    _write_nodes(tmp_path / "n.csv", 3)
    with pytest.raises(NodeIndexError):
        load_graph(tmp_path / "e", tmp_path / "n.csv")


def test_malformed_edge_line_reports_line_number(tmp_path):
    (tmp_path / "e").write_text("0 1\n1 x\n")
    _write_nodes(tmp_path / "n.csv", 3)
    with pytest.raises(ParseError) as err:
        load_graph(tmp_path / "e", tmp_path / "n.csv")
    assert err.value.lineno == 2


def test_duplicate_node_id(tmp_path):
    (tmp_path / "e").write_text("")
    (tmp_path / "n.csv").write_text("id,label,sensitive,f0\n0,0,0,1\n0,1,1,1\n")
    with pytest.raises(DuplicateNodeError):
        load_graph(tmp_path / "e", tmp_path / "n.csv")


def test_bad_header(tmp_path):
    (tmp_path / "e").write_text("")
    (tmp_path / "n.csv").write_text("label,id,sensitive,f0\n0,0,0,1\n")
    with pytest.raises(ParseError):
        load_graph(tmp_path / "e", tmp_path / "n.csv")


# --- Graph invariants -------------------------------------------------------

def test_graph_rejects_asymmetric_and_out_of_range():
    X, y, s = np.zeros((2, 1)), np.array([0, 1]), np.array([0, 1])
    with pytest.raises(ContractError):
        Graph(np.array([[0, 1], [0, 0]]), X, y, s)
    with pytest.raises(ContractError):
        Graph(np.array([[0, 2], [2, 0]]), X, y, s)
    with pytest.raises(SelfLoopError):
        Graph(np.eye(2), X, y, s)
    with pytest.raises(ContractError):
        Graph(np.zeros((2, 2)), X, y, np.array([0, 2]))


def test_graph_arrays_are_read_only():
    g = random_graph(np.random.default_rng(0), 6, 2)
    with pytest.raises(ValueError):
        g.adjacency[0, 1] = 1.0


def test_split_must_partition():
    g = random_graph(np.random.default_rng(0), 4, 2, split=False)
    with pytest.raises(ContractError):
        g.with_split(Split([0, 1], [1], [3]))


# --- generate_split ---------------------------------------------------------

def test_split_floor_arithmetic_small():
    g = random_graph(np.random.default_rng(0), 4, 1, split=False)
    for seed in range(5):
        sp = generate_split(g, SplitSpec((0.5, 0.25, 0.25), seed)).split
        assert (len(sp.train), len(sp.val), len(sp.test)) == (2, 1, 1)


def test_split_default_fractions_n100():
    g = generate_sbm(SbmConfig(nodes_per_block=50))
    sp = generate_split(g, SplitSpec()).split
    assert (len(sp.train), len(sp.val), len(sp.test)) == (50, 25, 25)


def test_split_deterministic():
    g = generate_sbm(SbmConfig(nodes_per_block=20))
    a = generate_split(g, SplitSpec(seed=3)).split
    b = generate_split(g, SplitSpec(seed=3)).split
    assert all(np.array_equal(getattr(a, r), getattr(b, r)) for r in ("train", "val", "test"))


def test_split_spec_validation():
    with pytest.raises(ContractError):
        SplitSpec((0.5, 0.5, 0.5))
    with pytest.raises(ContractError):
        SplitSpec((1.2, -0.1, -0.1))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(3, 80), a=st.integers(0, 100), b=st.integers(0, 100), seed=st.integers(0, 2**31))
def test_split_is_partition(n, a, b, seed):
    a, b = sorted((a, b))
    fr = (a / 100, (b - a) / 100, 1 - b / 100)
    if abs(sum(fr) - 1) > 1e-12:
        return
    g = random_graph(np.random.default_rng(seed), n, 1, split=False)
    sp = generate_split(g, SplitSpec(fr, seed)).split
    assert sp.is_partition_of(n)
    assert len(sp.train) == math.floor(fr[0] * n)
    assert len(sp.val) == math.floor(fr[1] * n)


# --- generate_sbm -----------------------------------------------------------

def test_sbm_degenerate_cliques():
    g = generate_sbm(SbmConfig(nodes_per_block=2, p_in=1.0, p_out=0.0))
    expected = np.array([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
    assert np.array_equal(g.adjacency, expected)


def test_sbm_empty():
    g = generate_sbm(SbmConfig(nodes_per_block=10, p_in=0.0, p_out=0.0))
    assert g.n_edges() == 0


def test_sbm_edge_count_within_three_sigma():
    m, p_in, p_out = 100, 0.2, 0.02
    pairs_in, pairs_out = 2 * m * (m - 1) // 2, m * m
    mean = p_in * pairs_in + p_out * pairs_out
    var = p_in * (1 - p_in) * pairs_in + p_out * (1 - p_out) * pairs_out
    counts = [generate_sbm(SbmConfig(m, p_in, p_out, seed=s)).n_edges() for s in range(20)]
    for c in counts:
        assert abs(c - mean) <= 3 * math.sqrt(var)
    # the average over 20 seeds has standard error sqrt(var / 20)
    assert abs(np.mean(counts) - mean) <= 3 * math.sqrt(var / 20)


def test_sbm_bit_identical():
    a = generate_sbm(SbmConfig(nodes_per_block=30, seed=9))
    b = generate_sbm(SbmConfig(nodes_per_block=30, seed=9))
    for f in ("adjacency", "features", "labels", "sensitive"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_sbm_config_validation():
    with pytest.raises(ContractError):
        SbmConfig(p_in=1.5)
    with pytest.raises(ContractError):
        SbmConfig(label_corr=-0.1)


def test_sbm_labels_follow_groups():
    g = generate_sbm(SbmConfig(nodes_per_block=500, label_corr=0.8, seed=1))
    agree = np.mean(g.labels == g.sensitive)
    assert abs(agree - 0.8) < 3 * math.sqrt(0.16 / 1000)


# --- graph_distance ---------------------------------------------------------

def _flip(g, pairs):
    A = g.adjacency.copy()
    for i, j in pairs:
        A[i, j] = A[j, i] = 1 - A[i, j]
    return g.with_adjacency(A)


def test_distance_examples():
    g = random_graph(np.random.default_rng(1), 10, 2)
    assert graph_distance(g, g) == 0
    assert graph_distance(g, _flip(g, [(0, 1)])) == 2
    assert graph_distance(g, _flip(g, [(0, 1), (2, 3), (4, 5), (6, 7), (8, 9)])) == 10


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(2, 10))
def test_distance_is_metric(seed, n):
    rng = np.random.default_rng(seed)
    gs = [random_graph(rng, n, 1, split=False) for _ in range(3)]
    a, b, c = gs
    assert graph_distance(a, b) >= 0
    assert graph_distance(a, b) == graph_distance(b, a)
    assert (graph_distance(a, b) == 0) == np.array_equal(a.adjacency, b.adjacency)
    assert graph_distance(a, c) <= graph_distance(a, b) + graph_distance(b, c)


# --- round trip -------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(2, 15), d=st.integers(1, 4))
def test_write_load_round_trip(tmp_path_factory, seed, n, d):
    g = random_graph(np.random.default_rng(seed), n, d)
    e, nd, sp = graph_paths(tmp_path_factory.mktemp("rt") / "g")
    write_graph(g, e, nd, sp)
    h = load_split(load_graph(e, nd), sp)
    for f in ("adjacency", "features", "labels", "sensitive"):
        assert np.array_equal(getattr(g, f), getattr(h, f))
    assert np.array_equal(g.split.test, h.split.test)
