import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nrgnn import tensor as T
from nrgnn.graph import Graph, WeightedGraph, generate_csbm
from nrgnn.gradcheck import numeric_grad, relative_error
from nrgnn.models import GNN, GnnConfig, gcn_forward, gin_forward


def dense_hat(a):
    a = a + np.eye(a.shape[0])
    d = a.sum(1) ** -0.5
    return d[:, None] * a * d[None, :]


def rand_weights(rng, dims):
    return [T.parameter(rng.normal(size=(dims[k], dims[k + 1]))) for k in range(len(dims) - 1)]


def test_zero_features_zero_logits():
    g, _ = generate_csbm(20, 2, 0.3, 0.05, 4, 1.0, seed=0)
    m = GNN(GnnConfig("GCN", (4, 16, 2)), np.random.default_rng(0))
    out = m.forward(g, np.zeros((20, 4)))
    assert np.all(out.value == 0)


def test_single_node_identity_layer():
    g = Graph(1, np.zeros((0, 2)), np.array([[0.3, -2.0]]), 2)
    out = gcn_forward(g, g.features, [T.Tensor(np.eye(2))])
    np.testing.assert_array_equal(out.value, g.features)


def test_path_graph_dense_oracle():
    rng = np.random.default_rng(1)
    a = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], float)
    g = Graph(3, np.array([[0, 1], [1, 2]]), rng.normal(size=(3, 4)), 2)
    w = rand_weights(rng, (4, 5, 2))
    ah = dense_hat(a)
    want = ah @ np.maximum(ah @ g.features @ w[0].value, 0) @ w[1].value
    np.testing.assert_allclose(gcn_forward(g, g.features, w).value, want, rtol=1e-12)


def test_feature_width_mismatch():
    g = Graph(2, np.array([[0, 1]]), np.zeros((2, 3)), 2)
    with pytest.raises(T.ShapeError):
        gcn_forward(g, g.features, [T.Tensor(np.zeros((4, 2)))])


def test_weighted_graph_without_additions_equals_base():
    g, _ = generate_csbm(30, 3, 0.2, 0.02, 5, 1.0, seed=2)
    w = rand_weights(np.random.default_rng(0), (5, 16, 3))
    a = gcn_forward(g, g.features, w).value
    b = gcn_forward(WeightedGraph(g), g.features, w).value
    assert np.array_equal(a, b)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["GCN", "GIN"]))
def test_permutation_equivariance(seed, kind):
    g, _ = generate_csbm(25, 2, 0.3, 0.05, 4, 1.0, seed=seed % 50)
    m = GNN(GnnConfig(kind, (4, 8, 2)), np.random.default_rng(seed))
    perm = np.random.default_rng(seed).permutation(25)
    out = m.forward(g, g.features).value
    gp = g.permuted(perm)
    outp = m.forward(gp, gp.features).value
    np.testing.assert_allclose(outp[perm], out, rtol=1e-10, atol=1e-12)


def test_added_edge_weight_gradient():
    rng = np.random.default_rng(4)
    g = Graph(4, np.array([[0, 1], [2, 3]]), rng.normal(size=(4, 3)), 2)
    ws = rand_weights(rng, (3, 4, 2))
    w = T.parameter(np.array([0.4, 0.7]))
    added = np.array([[0, 2], [1, 3]])

    def loss(wt):
        out = gcn_forward(WeightedGraph(g, added, wt), g.features, ws)
        return T.cross_entropy(out, np.array([0, 1, 0, 1]), np.ones(4, bool))

    loss(w).backward()
    num = numeric_grad(lambda: loss(T.Tensor(w.value)).item(), w.value)
    assert relative_error(w.grad, num) < 1e-3


def _gin_params(rng, dims, hid):
    layers = []
    for k in range(len(dims) - 1):
        layers.append((
            T.Tensor(rng.normal(size=(dims[k], hid))), T.Tensor(rng.normal(size=(1, hid))),
            T.Tensor(rng.normal(size=(hid, dims[k + 1]))), T.Tensor(rng.normal(size=(1, dims[k + 1]))),
        ))
    return layers


def _mlp(x, layer):
    w1, b1, w2, b2 = (p.value for p in layer)
    return np.maximum(x @ w1 + b1, 0) @ w2 + b2


def test_gin_isolated_node_is_mlp():
    rng = np.random.default_rng(0)
    g = Graph(3, np.array([[0, 1]]), rng.normal(size=(3, 2)), 2)
    layers = _gin_params(rng, (2, 2), 5)
    out = gin_forward(g, g.features, layers).value
    np.testing.assert_allclose(out[2], _mlp(g.features[2:3], layers[0])[0], rtol=1e-12)


def test_gin_symmetric_clique():
    rng = np.random.default_rng(2)
    g = Graph(2, np.array([[0, 1]]), np.ones((2, 3)), 2)
    out = gin_forward(g, g.features, _gin_params(rng, (3, 4, 2), 6)).value
    np.testing.assert_array_equal(out[0], out[1])


def test_gin_neighbor_sum_oracle():
    rng = np.random.default_rng(3)
    edges = np.array([[0, 1], [0, 2], [2, 3]])
    g = Graph(4, edges, rng.normal(size=(4, 3)), 2)
    layers = _gin_params(rng, (3, 4, 2), 5)
    eps = 0.25
    h = g.features
    for k, layer in enumerate(layers):
        pooled = np.zeros_like(h)
        for v in range(4):
            nbrs = [u for e in edges for u in e if v in e and u != v]
            pooled[v] = (1 + eps) * h[v] + sum(h[u] for u in nbrs)
        h = _mlp(pooled, layer)
        if k < len(layers) - 1:
            h = np.maximum(h, 0)
    np.testing.assert_allclose(gin_forward(g, g.features, layers, eps).value, h, rtol=1e-12)


def test_gnn_state_round_trip():
    m = GNN(GnnConfig("GIN", (3, 4, 2)), np.random.default_rng(0), name="c")
    st_ = m.state()
    for p in m.parameters():
        p.value += 1.0
    m.load_state(st_)
    for p in m.parameters():
        assert np.array_equal(p.value, st_[p.name])


def test_config_validation():
    with pytest.raises(ValueError):
        GnnConfig("GAT", (3, 2))
    with pytest.raises(ValueError):
        GnnConfig("GCN", (3,))
