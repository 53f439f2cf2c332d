"""
Fixtures partagées des tests
"""
import numpy as np
import pytest

from graph_store import RelationEdgeList, assemble


def make_graph(num_nodes, relations, labels=None, features=None, feature_dim=3, seed=0):
    """
    Petit graphe construit à la main

    Args:
        relations: Une liste de paires (u, v) par relation
    """
    rng = np.random.default_rng(seed)
    if labels is None:
        labels = np.zeros(num_nodes, dtype=np.int64)
        labels[: max(1, num_nodes // 4)] = 1
    if features is None:
        features = rng.standard_normal((num_nodes, feature_dim))
    edge_lists = [
        RelationEdgeList(r, np.array(sorted(tuple(sorted(p)) for p in pairs), dtype=np.int64).reshape(-1, 2),
                         name=f"rel{r + 1}")
        for r, pairs in enumerate(relations)
    ]
    return assemble(features, np.asarray(labels), edge_lists)


def random_graph(num_nodes=12, num_relations=3, edge_prob=0.3, feature_dim=4, seed=0):
    rng = np.random.default_rng(seed)
    i, j = np.triu_indices(num_nodes, k=1)
    relations = []
    for _ in range(num_relations):
        keep = rng.random(i.size) < edge_prob
        relations.append(list(zip(i[keep].tolist(), j[keep].tolist())))
    labels = np.zeros(num_nodes, dtype=np.int64)
    labels[rng.choice(num_nodes, size=max(2, num_nodes // 3), replace=False)] = 1
    return make_graph(num_nodes, relations, labels=labels, feature_dim=feature_dim, seed=seed)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_graph():
    """6 nœuds, 2 relations, nœud 5 isolé"""
    return make_graph(
        6,
        [[(0, 1), (1, 2), (2, 3)], [(0, 1), (0, 4), (3, 4)]],
        labels=[1, 0, 0, 1, 0, 0],
    )
