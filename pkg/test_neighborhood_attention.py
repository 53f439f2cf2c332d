"""
Tests de l'attention sur le voisinage
"""
import numpy as np
import pytest

import neighborhood_attention as na
import tensor_engine as te
from conftest import make_graph, random_graph
from graph_store import neighbor_union
from tensor_engine import Tensor
from training import TrainConfig


def setup(graph, config, input_dim=5, seed=0):
    rng = np.random.default_rng(seed)
    params = na.NeighborhoodAttentionParams.init(rng, input_dim, config)
    g0 = rng.standard_normal((graph.num_nodes, input_dim))
    return params, g0


def test_zero_attention_vector_is_uniform(toy_graph):
    config = na.LayerConfig(num_layers=1, num_heads=2, head_dim=3)
    params, g0 = setup(toy_graph, config)
    layer = params.layers[0]
    layer.a_self = Tensor(np.zeros(layer.a_self.shape))
    layer.a_neigh = Tensor(np.zeros(layer.a_neigh.shape))
    neighbors = neighbor_union(toy_graph, 1)
    alpha = na.attention_coefficients(g0, 1, neighbors, layer, 0, config)
    np.testing.assert_allclose(alpha, np.full(len(neighbors), 1 / len(neighbors)))


def test_singleton_neighborhood(toy_graph):
    config = na.LayerConfig(num_layers=1, num_heads=2, head_dim=3)
    params, g0 = setup(toy_graph, config)
    layer = params.layers[0]
    assert na.attention_coefficients(g0, 5, [5], layer, 1, config).tolist() == [1.0]
    ghat = g0 @ layer.P.values
    expected = te.activation(Tensor(ghat[5, 3:6]), "leaky_relu").values.ravel()
    np.testing.assert_allclose(na.aggregate_head(g0, 5, [5], [1.0], layer, 1, config), expected)


def test_attention_is_asymmetric():
    graph = make_graph(3, [[(0, 1), (1, 2)]])
    config = na.LayerConfig(num_layers=1, num_heads=1, head_dim=2)
    params, g0 = setup(graph, config, input_dim=3, seed=5)
    layer = params.layers[0]
    a01 = na.attention_coefficients(g0, 0, [0, 1], layer, 0, config)[1]
    a10 = na.attention_coefficients(g0, 1, [0, 1, 2], layer, 0, config)[0]
    assert a01 != pytest.approx(a10)


def test_identical_neighbors_ignore_alpha(toy_graph):
    config = na.LayerConfig(num_layers=1, num_heads=1, head_dim=2)
    params, _ = setup(toy_graph, config)
    g0 = np.tile(np.array([[0.3, -1.0, 2.0, 0.5, 0.1]]), (toy_graph.num_nodes, 1))
    layer = params.layers[0]
    neighbors = neighbor_union(toy_graph, 0)
    first = na.aggregate_head(g0, 0, neighbors, [0.2, 0.3, 0.5], layer, 0, config)
    second = na.aggregate_head(g0, 0, neighbors, [0.9, 0.05, 0.05], layer, 0, config)
    np.testing.assert_allclose(first, second, rtol=1e-12)


@pytest.mark.parametrize("slope", [0.2, 0.05])
def test_two_neighbor_hand_loop(slope):
    graph = make_graph(2, [[(0, 1)]])
    config = na.LayerConfig(num_layers=1, num_heads=1, head_dim=2, leaky_slope=slope)
    params, g0 = setup(graph, config, input_dim=3, seed=2)
    layer = params.layers[0]
    ghat = g0 @ layer.P.values
    a = np.concatenate([layer.a_self.values[0], layer.a_neigh.values[0]])
    scores = []
    for j in (0, 1):
        s = a @ np.concatenate([ghat[0], ghat[j]])
        scores.append(s if s > 0 else slope * s)
    alpha = np.exp(scores) / np.sum(np.exp(scores))
    np.testing.assert_allclose(na.attention_coefficients(g0, 0, [0, 1], layer, 0, config), alpha, rtol=1e-12)
    summed = alpha[0] * ghat[0] + alpha[1] * ghat[1]
    expected = np.where(summed > 0, summed, slope * summed)
    np.testing.assert_allclose(na.aggregate_head(g0, 0, [0, 1], alpha, layer, 0, config), expected, rtol=1e-12)


def test_layer_forward_matches_per_node_reference():
    graph = random_graph(num_nodes=10, seed=3)
    config = na.LayerConfig(num_layers=1, num_heads=3, head_dim=2)
    params, g0 = setup(graph, config)
    layer = params.layers[0]
    out, alpha = na.layer_forward(Tensor(g0), graph.attention_edges, layer, config)
    assert out.shape == (graph.num_nodes, 3 * 2)
    src, _ = graph.attention_edges
    for i in range(graph.num_nodes):
        neighbors = neighbor_union(graph, i)
        for k in range(3):
            ref_alpha = na.attention_coefficients(g0, i, neighbors, layer, k, config)
            np.testing.assert_allclose(alpha.values[src == i, k], ref_alpha, rtol=1e-10)
            np.testing.assert_allclose(out.values[i, 2 * k:2 * k + 2],
                                       na.aggregate_head(g0, i, neighbors, ref_alpha, layer, k, config),
                                       rtol=1e-10, atol=1e-14)


def test_alpha_rows_are_probability_vectors():
    graph = random_graph(num_nodes=12, seed=8)
    config = na.LayerConfig(num_layers=2, num_heads=2, head_dim=3)
    src, _ = graph.attention_edges
    for trial in range(1000):
        params, g0 = setup(graph, config, input_dim=4, seed=trial)
        _, alphas = na.forward(Tensor(g0), graph, params, config)
        for alpha in alphas:
            sums = np.zeros((graph.num_nodes, config.num_heads))
            np.add.at(sums, src, alpha.values)
            np.testing.assert_allclose(sums, 1.0, atol=1e-12)
            assert np.all(alpha.values >= 0)


def test_identical_heads_give_identical_blocks(toy_graph):
    config = na.LayerConfig(num_layers=1, num_heads=3, head_dim=2)
    params, g0 = setup(toy_graph, config)
    layer = params.layers[0]
    P = layer.P.values[:, :2]
    layer.P = Tensor(np.tile(P, (1, 3)))
    layer.a_self = Tensor(np.tile(layer.a_self.values[:1], (3, 1)))
    layer.a_neigh = Tensor(np.tile(layer.a_neigh.values[:1], (3, 1)))
    out, _ = na.layer_forward(Tensor(g0), toy_graph.attention_edges, layer, config)
    np.testing.assert_allclose(out.values[:, 0:2], out.values[:, 2:4])
    np.testing.assert_allclose(out.values[:, 0:2], out.values[:, 4:6])


def test_single_layer_forward_equals_layer_forward(toy_graph):
    config = na.LayerConfig(num_layers=1, num_heads=2, head_dim=2)
    params, g0 = setup(toy_graph, config)
    g, _ = na.forward(Tensor(g0), toy_graph, params, config)
    out, _ = na.layer_forward(Tensor(g0), toy_graph.attention_edges, params.layers[0], config)
    np.testing.assert_array_equal(g.values, out.values)


def test_disconnected_graph_is_node_local():
    graph = make_graph(4, [[]])
    config = na.LayerConfig(num_layers=2, num_heads=2, head_dim=2)
    params, g0 = setup(graph, config)
    g, _ = na.forward(Tensor(g0), graph, params, config)
    changed = g0.copy()
    changed[1:] += 5.0
    g2, _ = na.forward(Tensor(changed), graph, params, config)
    np.testing.assert_array_equal(g.values[0], g2.values[0])


def test_receptive_field_two_hops():
    # chemin 0 - 1 - 2 ; l'arête (1, 3) amène le nœud 3 à distance 2 de 0
    base = [(0, 1), (1, 2)]
    with_edge = make_graph(5, [base + [(1, 3)]])
    without = make_graph(5, [base])
    for L, should_change in ((1, False), (2, True)):
        config = na.LayerConfig(num_layers=L, num_heads=2, head_dim=2)
        params, g0 = setup(without, config)
        a, _ = na.forward(Tensor(g0), with_edge, params, config)
        b, _ = na.forward(Tensor(g0), without, params, config)
        assert (not np.array_equal(a.values[0], b.values[0])) == should_change
        assert not np.array_equal(a.values[3], b.values[3])


def test_faithful_dims_widths():
    config = na.LayerConfig(num_layers=2, num_heads=2, head_dim=99, faithful_dims=True)
    assert config.input_widths(5) == [5, 10]
    assert config.output_width(5) == 20
    graph = random_graph(num_nodes=6, seed=0)
    params, g0 = setup(graph, config)
    assert all(layer.P is None for layer in params.layers)
    g, _ = na.forward(Tensor(g0), graph, params, config)
    assert g.shape == (6, 20)


def test_faithful_mode_aggregates_with_tanh():
    config = TrainConfig(faithful_dims=True, num_layers=1, num_heads=2).layer_config()
    assert config.activation == "tanh"
    graph = random_graph(num_nodes=7, seed=4)
    params, g0 = setup(graph, config, input_dim=3)
    layer = params.layers[0]
    out, _ = na.layer_forward(Tensor(g0), graph.attention_edges, layer, config)
    assert out.shape == (7, 6)
    for i in range(graph.num_nodes):
        neighbors = neighbor_union(graph, i)
        for k in range(2):
            s = g0[neighbors] @ layer.a_neigh.values[k] + g0[i] @ layer.a_self.values[k]
            s = np.where(s > 0, s, 0.2 * s)
            alpha = np.exp(s - s.max())
            alpha /= alpha.sum()
            np.testing.assert_allclose(out.values[i, 3 * k:3 * k + 3], np.tanh(alpha @ g0[neighbors]),
                                       rtol=1e-10, atol=1e-14)


def test_aggregation_activation_resolution():
    assert TrainConfig().layer_config().activation == "leaky_relu"
    assert TrainConfig(activation="tanh").layer_config().activation == "tanh"
    assert TrainConfig(faithful_dims=True, aggregate_activation="leaky_relu").layer_config().activation == "leaky_relu"
    assert na.LayerConfig(faithful_dims=True).activation == "tanh"
    with pytest.raises(ValueError):
        na.LayerConfig(leaky_slope=1.5).validate()


def test_permutation_equivariance():
    graph = random_graph(num_nodes=9, seed=12)
    config = na.LayerConfig(num_layers=2, num_heads=2, head_dim=3)
    params, g0 = setup(graph, config)
    perm = np.random.default_rng(1).permutation(graph.num_nodes)
    inverse = np.argsort(perm)
    relations = [[(int(inverse[u]), int(inverse[v])) for u, v in graph.edge_list(r)]
                 for r in range(graph.num_relations)]
    permuted = make_graph(graph.num_nodes, relations, labels=graph.labels[perm], features=graph.features[perm])
    g, _ = na.forward(Tensor(g0), graph, params, config)
    gp, _ = na.forward(Tensor(g0[perm]), permuted, params, config)
    np.testing.assert_allclose(gp.values, g.values[perm], rtol=1e-10, atol=1e-12)
