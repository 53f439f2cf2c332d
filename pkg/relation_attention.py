"""
Module d'attention sur les relations

Calcule l'importance w_r de chaque relation, les poids β = softmax(w) et les
embeddings locaux h_i = Σ_r β_r · a_i^r.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Union

import numpy as np

import tensor_engine as te
from graph_store import MultiRelationGraph
from tensor_engine import Tensor


@dataclass
class RelationAttentionParams:
    """W (d_r × N), b (1 × d_r), q (d_r × 1), partagés par toutes les relations"""
    W: Tensor
    b: Tensor
    q: Tensor
    proj: Optional[Tensor] = None  # projection locale optionnelle (N × d_in)

    @classmethod
    def init(cls, rng: np.random.Generator, num_nodes: int, hidden: int = 64,
             proj_dim: Optional[int] = None) -> "RelationAttentionParams":
        """
        Initialisation Xavier uniforme, biais nul

        Args:
            rng: Générateur aléatoire
            num_nodes: N (largeur d'une ligne d'adjacence)
            hidden: d_r
            proj_dim: Largeur de la projection locale (None = pas de projection)
        """
        proj = None
        if proj_dim is not None:
            proj = Tensor(te.xavier_uniform(rng, num_nodes, proj_dim), requires_grad=True, name="relation.proj")
        return cls(
            W=Tensor(te.xavier_uniform(rng, hidden, num_nodes), requires_grad=True, name="relation.W"),
            b=Tensor(np.zeros((1, hidden)), requires_grad=True, name="relation.b"),
            q=Tensor(te.xavier_uniform(rng, hidden, 1), requires_grad=True, name="relation.q"),
            proj=proj,
        )

    def tensors(self) -> Dict[str, Tensor]:
        named = {"relation.W": self.W, "relation.b": self.b, "relation.q": self.q}
        if self.proj is not None:
            named["relation.proj"] = self.proj
        return named


def relation_importance(graph: MultiRelationGraph, r: int, params: RelationAttentionParams) -> Tensor:
    """w_r = (1/N) Σ_i qᵀ tanh(W·a_i^r + b)  (1 × 1)"""
    if not 0 <= r < graph.num_relations:
        raise IndexError(f"relation {r} hors de [0, {graph.num_relations})")
    hidden = te.activation(te.linear(graph.relations[r], params.W, params.b), "tanh")
    return te.mean_all(te.matmul(hidden, params.q))


def relation_weights(w: Tensor) -> Tensor:
    """β = softmax(w) sur les R relations (1 × R)"""
    return te.masked_softmax(w)


def compute_beta(graph: MultiRelationGraph, params: RelationAttentionParams) -> Tensor:
    """Importances de toutes les relations puis normalisation"""
    w = te.concat([relation_importance(graph, r, params) for r in range(graph.num_relations)])
    return relation_weights(w)


def local_embedding(graph: MultiRelationGraph, i: int, beta: Union[Tensor, np.ndarray]) -> np.ndarray:
    """h_i = Σ_r β_r · a_i^r pour un seul nœud (vecteur de taille N)"""
    b = beta.values.ravel() if isinstance(beta, Tensor) else np.asarray(beta, dtype=np.float64).ravel()
    h = np.zeros(graph.num_nodes)
    for r, A in enumerate(graph.relations):
        row = A[i]
        h[row.indices] += b[r] * row.data
    return h


def local_embeddings(graph: MultiRelationGraph, beta: Tensor,
                     proj: Optional[Tensor] = None) -> Tensor:
    """
    Embeddings locaux de tous les nœuds

    Args:
        beta: Poids des relations (1 × R)
        proj: Projection optionnelle (N × d_in) appliquée à chaque a_i^r

    Returns:
        (N × N), ou (N × d_in) avec projection
    """
    if proj is None:
        parts: List[Tensor] = [Tensor(A) for A in dense_relations(graph)]
    else:
        parts = [te.sparse_matmul(A, proj) for A in graph.relations]
    return te.weighted_sum(parts, beta)


def dense_relations(graph: MultiRelationGraph) -> List[np.ndarray]:
    """Matrices d'adjacence denses, calculées une fois par graphe"""
    cached = graph.__dict__.get("_dense_relations")
    if cached is None:
        cached = [A.toarray() for A in graph.relations]
        graph.__dict__["_dense_relations"] = cached
    return cached
