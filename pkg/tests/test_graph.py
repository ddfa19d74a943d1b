import json
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nrgnn import tensor as T
from nrgnn.graph import (
    ClassCountMismatchError,
    Graph,
    GraphError,
    IndexOutOfRangeError,
    LabelSplit,
    MalformedLineError,
    MissingFileError,
    WeightedGraph,
    generate_csbm,
    load_dataset,
    normalize_adjacency,
    round_half_up,
    sample_split,
    save_dataset,
    subsample_edges,
)
from nrgnn.gradcheck import numeric_grad, relative_error

DATA = os.environ.get("NRGNN_DATA")


def path3():
    return Graph(3, np.array([[0, 1], [1, 2]]), np.eye(3), 2)


def dense_norm(a):
    a = a + np.eye(a.shape[0])
    d = a.sum(axis=1) ** -0.5
    return d[:, None] * a * d[None, :]


def test_graph_rejects_bad_input():
    with pytest.raises(GraphError):
        Graph(2, np.array([[0, 0]]), np.zeros((2, 1)), 1)
    with pytest.raises(GraphError):
        Graph(2, np.array([[0, 2]]), np.zeros((2, 1)), 1)
    with pytest.raises(GraphError):
        Graph(3, np.array([[0, 1], [1, 0]]), np.zeros((3, 1)), 1)
    with pytest.raises(GraphError):
        Graph(3, np.zeros((0, 2)), np.zeros((2, 1)), 1)


def test_graph_canonicalizes_edges():
    g = Graph(4, np.array([[3, 1], [2, 0]]), np.zeros((4, 1)), 2)
    np.testing.assert_array_equal(g.edges, [[0, 2], [1, 3]])
    assert not g.edges.flags.writeable


def test_two_node_normalization():
    g = Graph(2, np.array([[0, 1]]), np.zeros((2, 1)), 1)
    np.testing.assert_allclose(normalize_adjacency(g).to_dense(), np.full((2, 2), 0.5), rtol=1e-15)


def test_one_node_normalization():
    g = Graph(1, np.zeros((0, 2)), np.zeros((1, 1)), 1)
    np.testing.assert_array_equal(normalize_adjacency(g).to_dense(), [[1.0]])


def test_path_with_added_edge_hand_value():
    # A + I = [[1,1,.3],[1,1,1],[.3,1,1]], degrees 2.3, 3, 2.3
    wg = WeightedGraph(path3(), np.array([[0, 2]]), T.Tensor(np.array([0.3])))
    got = normalize_adjacency(wg).to_dense()
    d0, d1 = 2.3, 3.0
    want = np.array([
        [1 / d0, 1 / np.sqrt(d0 * d1), 0.3 / d0],
        [1 / np.sqrt(d0 * d1), 1 / d1, 1 / np.sqrt(d0 * d1)],
        [0.3 / d0, 1 / np.sqrt(d0 * d1), 1 / d0],
    ])
    np.testing.assert_allclose(got, want, rtol=1e-14)


def test_normalization_gradient_through_degrees():
    rng = np.random.default_rng(0)
    g = path3()
    w = T.parameter(np.array([0.3]))
    c = rng.normal(size=(3, 3))

    def loss(wt):
        adj = normalize_adjacency(WeightedGraph(g, np.array([[0, 2]]), wt))
        return T.sum(T.mul(T.spmm(adj, T.Tensor(c)), c))

    loss(w).backward()
    num = numeric_grad(lambda: loss(T.Tensor(w.value)).item(), w.value)
    assert relative_error(w.grad, num) < 1e-6


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 9), st.floats(0.1, 0.9), st.integers(0, 10_000))
def test_normalization_symmetric_nonnegative_and_classic(n, p, seed):
    rng = np.random.default_rng(seed)
    a = np.triu(rng.random((n, n)) < p, 1)
    edges = np.argwhere(a)
    g = Graph(n, edges, np.zeros((n, 1)), 1)
    m = normalize_adjacency(WeightedGraph(g)).to_dense()
    np.testing.assert_allclose(m, m.T, atol=1e-15)
    assert m.min() >= 0
    np.testing.assert_allclose(m, dense_norm((a | a.T).astype(float)), rtol=1e-13)


def test_empty_edge_file_gives_edgeless_graph(tmp_path):
    g = Graph(3, np.zeros((0, 2)), np.zeros((3, 2)), 2)
    save_dataset(tmp_path, g, np.array([0, 1, 0]))
    assert (tmp_path / "edges.tsv").read_text() == ""
    g2, y = load_dataset(tmp_path)
    assert g2.num_edges == 0 and g2.num_nodes == 3


def test_round_trip_bit_exact(tmp_path):
    g, y = generate_csbm(40, 3, 0.2, 0.02, 5, 0.7, seed=2)
    save_dataset(tmp_path / "a", g, y, split={"val": [1, 2], "test": [3]})
    g1, y1 = load_dataset(tmp_path / "a")
    save_dataset(tmp_path / "b", g1, y1)
    g2, y2 = load_dataset(tmp_path / "b")
    assert np.array_equal(g1.features, g.features) and np.array_equal(g2.features, g.features)
    assert np.array_equal(g2.edges, g.edges) and np.array_equal(y2, y)
    for name in ("edges.tsv", "features.csv", "labels.txt", "meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def _write(tmp_path, edges="0\t1\n", feats="1,2\n3,4\n5,6\n", labels="0\n1\n0\n", meta=None):
    meta = meta or {"num_nodes": 3, "feature_dim": 2, "num_classes": 2}
    (tmp_path / "meta.json").write_text(json.dumps(meta))
    (tmp_path / "edges.tsv").write_text(edges)
    (tmp_path / "features.csv").write_text(feats)
    (tmp_path / "labels.txt").write_text(labels)


def test_loader_errors_name_file_and_line(tmp_path):
    _write(tmp_path, edges="0\t1\n1\t5\n")
    with pytest.raises(IndexOutOfRangeError, match=r"edges.tsv:2"):
        load_dataset(tmp_path)
    _write(tmp_path, edges="0 1\n")
    with pytest.raises(MalformedLineError, match=r"edges.tsv:1"):
        load_dataset(tmp_path)
    _write(tmp_path, feats="1,2\n3,x\n5,6\n")
    with pytest.raises(MalformedLineError, match=r"features.csv:2"):
        load_dataset(tmp_path)
    _write(tmp_path, labels="0\n1\n2\n")
    with pytest.raises(ClassCountMismatchError, match=r"labels.txt:3"):
        load_dataset(tmp_path)
    (tmp_path / "labels.txt").unlink()
    with pytest.raises(MissingFileError, match="labels.txt"):
        load_dataset(tmp_path)


def test_split_sizes_from_dataset_statistics():
    for n, rate, want in ((2485, 0.05, 124), (19717, 0.01, 197), (2110, 0.05, 106)):
        assert round_half_up(rate * n) == want
    g = Graph(2485, np.zeros((0, 2)), np.zeros((2485, 1)), 7)
    y = np.arange(2485) % 7
    s = sample_split(g, y, 0.05, seed=0)
    assert s.train_mask.sum() == 124


@pytest.mark.parametrize("seed", range(6))
def test_split_reproducible_and_disjoint(seed):
    g, y = generate_csbm(300, 3, 0.05, 0.005, 4, 1.0, seed=1)
    a = sample_split(g, y, 0.05, seed)
    b = sample_split(g, y, 0.05, seed)
    for m in ("train_mask", "val_mask", "test_mask"):
        assert np.array_equal(getattr(a, m), getattr(b, m))
    assert not np.any(a.train_mask & a.val_mask)
    assert not np.any(a.train_mask & a.test_mask)
    assert not np.any(a.val_mask & a.test_mask)
    labeled = a.train_mask | a.val_mask
    assert np.all(a.noisy_labels[~labeled] == -1)


def test_label_split_invariants():
    y = np.array([0, 1, 1])
    t = np.array([True, False, False])
    with pytest.raises(GraphError):
        LabelSplit(y, np.array([0, -1, -1]), t, t, ~t, 2)
    with pytest.raises(GraphError):
        LabelSplit(y, np.array([0, 1, -1]), t, np.zeros(3, bool), ~t, 2)


def test_csbm_no_inter_edges_when_p_inter_zero():
    g, y = generate_csbm(120, 3, 0.1, 0.0, 4, 1.0, seed=0)
    e = g.edges
    assert g.num_edges > 0 and np.all(y[e[:, 0]] == y[e[:, 1]])


def test_csbm_edge_counts_binomial():
    n, p_in, p_out = 200, 0.05, 0.005
    g, y = generate_csbm(n, 2, p_in, p_out, 4, 1.0, seed=11)
    e = g.edges
    intra = int(np.sum(y[e[:, 0]] == y[e[:, 1]]))
    inter = g.num_edges - intra
    pairs_in = 2 * (100 * 99 // 2)
    pairs_out = 100 * 100
    for count, m, p in ((intra, pairs_in, p_in), (inter, pairs_out, p_out)):
        assert abs(count - m * p) <= 3 * np.sqrt(m * p * (1 - p))
    # the ratio itself, delta-method sigma
    ratio = intra / g.num_edges
    mu_in, mu_out = pairs_in * p_in, pairs_out * p_out
    expect = mu_in / (mu_in + mu_out)
    sd = np.sqrt(expect * (1 - expect) / (mu_in + mu_out))
    assert abs(ratio - expect) <= 3 * sd


def test_csbm_zero_feature_noise():
    g, y = generate_csbm(50, 3, 0.1, 0.01, 6, 0.0, seed=3)
    for c in range(3):
        rows = g.features[y == c]
        assert np.all(rows == rows[0])


def test_csbm_balanced_and_deterministic():
    g1, y1 = generate_csbm(61, 4, 0.1, 0.01, 3, 1.0, seed=5)
    g2, y2 = generate_csbm(61, 4, 0.1, 0.01, 3, 1.0, seed=5)
    assert np.array_equal(g1.edges, g2.edges) and np.array_equal(g1.features, g2.features)
    counts = np.bincount(y1)
    assert counts.max() - counts.min() <= 1


def test_subsample_edges():
    g, _ = generate_csbm(100, 2, 0.1, 0.01, 3, 1.0, seed=0)
    h = subsample_edges(g, 0.4, seed=1)
    assert h.num_edges == round_half_up(0.4 * g.num_edges)
    keys = set(map(tuple, g.edges))
    assert all(tuple(e) in keys for e in h.edges)


def test_permutation_consistency():
    g, y = generate_csbm(30, 2, 0.3, 0.05, 3, 1.0, seed=0)
    perm = np.random.default_rng(0).permutation(30)
    gp = g.permuted(perm)
    a = g.adjacency().toarray()
    ap = gp.adjacency().toarray()
    inv = np.empty_like(perm)
    inv[perm] = np.arange(30)
    np.testing.assert_array_equal(ap, a[np.ix_(inv, inv)])


@pytest.mark.skipif(not DATA, reason="set NRGNN_DATA to a directory holding cora/ and citeseer/")
@pytest.mark.parametrize("name,stats", [("cora", (2485, 5068, 1433, 7)), ("citeseer", (2110, 3668, 3703, 6))])
def test_citation_statistics(name, stats):
    path = os.path.join(DATA, name)
    if not os.path.isdir(path):
        pytest.skip(f"{path} missing")
    g, _ = load_dataset(path)
    n, e, f, c = stats
    assert (g.num_nodes, g.num_edges, g.feature_dim, g.num_classes) == (n, e, f, c)
