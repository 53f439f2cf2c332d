"""
Module d'attention sur le voisinage

L couches d'auto-attention multi-têtes sur 𝒩_i (voisins de toutes les relations
plus le nœud lui-même). Chaque tête k projette l'entrée (ĝ = g·P^(l,k)), calcule
α_ij = softmax_j σ(aᵀ[ĝ_i ‖ ĝ_j]) puis agrège σ(Σ_j α_ij ĝ_j) ; les K têtes sont
concaténées dans l'ordre des têtes.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

import tensor_engine as te
from errors import ShapeError
from graph_store import MultiRelationGraph
from tensor_engine import Tensor


@dataclass
class LayerConfig:
    """Hyperparamètres du module"""
    num_layers: int = 2
    num_heads: int = 8
    head_dim: int = 4
    score_activation: str = "leaky_relu"
    activation: Optional[str] = None  # None = tanh en mode fidèle, leaky_relu sinon
    faithful_dims: bool = False
    leaky_slope: float = te.LEAKY_SLOPE

    def __post_init__(self):
        if self.activation is None:
            self.activation = "tanh" if self.faithful_dims else "leaky_relu"

    def validate(self):
        if self.num_layers < 1 or self.num_heads < 1 or self.head_dim < 1:
            raise ValueError("num_layers, num_heads et head_dim doivent être >= 1")
        for kind in (self.score_activation, self.activation):
            if kind not in te.ACTIVATIONS:
                raise ValueError(f"activation inconnue: {kind}")
        if not 0.0 <= self.leaky_slope < 1.0:
            raise ValueError(f"pente leaky_relu hors de [0,1): {self.leaky_slope}")

    def input_widths(self, d0: int) -> List[int]:
        """Largeur d'entrée de chaque couche"""
        widths = [d0]
        for _ in range(self.num_layers - 1):
            prev = widths[-1]
            widths.append(self.num_heads * prev if self.faithful_dims else self.num_heads * self.head_dim)
        return widths

    def output_width(self, d0: int) -> int:
        last = self.input_widths(d0)[-1]
        return self.num_heads * (last if self.faithful_dims else self.head_dim)


@dataclass
class HeadLayer:
    """Paramètres d'une couche : projections des K têtes (par blocs de colonnes) et vecteur d'attention"""
    P: Optional[Tensor]  # d_in × (K·d_head) ; None en mode fidèle
    a_self: Tensor       # K × d_head, moitié appliquée à ĝ_i
    a_neigh: Tensor      # K × d_head, moitié appliquée à ĝ_j


@dataclass
class NeighborhoodAttentionParams:
    layers: List[HeadLayer]

    @classmethod
    def init(cls, rng: np.random.Generator, input_dim: int, config: LayerConfig) -> "NeighborhoodAttentionParams":
        config.validate()
        K = config.num_heads
        layers = []
        for l, d_in in enumerate(config.input_widths(input_dim), start=1):
            if config.faithful_dims:
                P, width = None, d_in
            else:
                P = Tensor(te.xavier_uniform(rng, d_in, K * config.head_dim), requires_grad=True,
                           name=f"neighborhood.l{l}.P")
                width = config.head_dim
            a_self = Tensor(te.xavier_uniform(rng, K, width, fan_in=2 * width, fan_out=1),
                            requires_grad=True, name=f"neighborhood.l{l}.a_self")
            a_neigh = Tensor(te.xavier_uniform(rng, K, width, fan_in=2 * width, fan_out=1),
                             requires_grad=True, name=f"neighborhood.l{l}.a_neigh")
            layers.append(HeadLayer(P, a_self, a_neigh))
        return cls(layers)

    def tensors(self) -> Dict[str, Tensor]:
        named = {}
        for l, layer in enumerate(self.layers, start=1):
            if layer.P is not None:
                named[f"neighborhood.l{l}.P"] = layer.P
            named[f"neighborhood.l{l}.a_self"] = layer.a_self
            named[f"neighborhood.l{l}.a_neigh"] = layer.a_neigh
        return named


def _project(g_prev: Tensor, layer: HeadLayer, num_heads: int) -> Tensor:
    """ĝ pour toutes les têtes, blocs de colonnes dans l'ordre des têtes"""
    if layer.P is None:
        return te.concat([g_prev] * num_heads)
    return te.matmul(g_prev, layer.P)


def _head_block(values: np.ndarray, k: int, width: int) -> np.ndarray:
    return values[..., k * width:(k + 1) * width]


# ---------------------------------------------------------------------------
# Version nœud par nœud (référence)
# ---------------------------------------------------------------------------

def attention_coefficients(g_prev: np.ndarray, i: int, neighbors: Sequence[int], layer: HeadLayer,
                           k: int, config: LayerConfig) -> np.ndarray:
    """
    α_ij de la tête k pour j ∈ 𝒩_i

    Args:
        g_prev: Embeddings de la couche précédente (N × d_in)
        i: Nœud central
        neighbors: 𝒩_i (contient i)

    Returns:
        Vecteur de probabilités aligné sur neighbors
    """
    if len(neighbors) == 0:
        raise ValueError("𝒩_i vide")
    width = layer.a_self.shape[1]
    ghat = _project(Tensor(g_prev), layer, config.num_heads).values
    gi = _head_block(ghat[i], k, width)
    gj = _head_block(ghat[np.asarray(neighbors)], k, width)
    scores = gj @ layer.a_neigh.values[k] + gi @ layer.a_self.values[k]
    scores = te.activation(Tensor(scores), config.score_activation, config.leaky_slope)
    return te.masked_softmax(scores).values.ravel()


def aggregate_head(g_prev: np.ndarray, i: int, neighbors: Sequence[int], alpha: np.ndarray,
                   layer: HeadLayer, k: int, config: LayerConfig) -> np.ndarray:
    """σ(Σ_j α_ij ĝ_j) pour la tête k (vecteur de largeur d_head)"""
    width = layer.a_self.shape[1]
    ghat = _project(Tensor(g_prev), layer, config.num_heads).values
    gj = _head_block(ghat[np.asarray(neighbors)], k, width)
    summed = np.asarray(alpha, dtype=np.float64) @ gj
    return te.activation(Tensor(summed), config.activation, config.leaky_slope).values.ravel()


# ---------------------------------------------------------------------------
# Version vectorisée (entraînement)
# ---------------------------------------------------------------------------

def layer_forward(g_prev: Tensor, edges: Tuple[np.ndarray, np.ndarray], layer: HeadLayer,
                  config: LayerConfig) -> Tuple[Tensor, Tensor]:
    """
    Une couche pour tous les nœuds

    Args:
        g_prev: (N × d_in)
        edges: (src, dst) de graph.attention_edges

    Returns:
        (g^(l) de forme N × K·width, α de forme E × K)
    """
    src, dst = edges
    n = g_prev.shape[0]
    if layer.P is not None and g_prev.shape[1] != layer.P.shape[0]:
        raise ShapeError(f"couche: entrée de largeur {g_prev.shape[1]}, attendu {layer.P.shape[0]}")
    ghat = _project(g_prev, layer, config.num_heads)
    s_self = te.head_dot(ghat, layer.a_self)
    s_neigh = te.head_dot(ghat, layer.a_neigh)
    scores = te.add(te.gather_rows(s_self, src), te.gather_rows(s_neigh, dst))
    scores = te.activation(scores, config.score_activation, config.leaky_slope)
    alpha = te.segment_softmax(scores, src, n)
    messages = te.head_scale(te.gather_rows(ghat, dst), alpha)
    out = te.activation(te.segment_sum(messages, src, n), config.activation, config.leaky_slope)
    return out, alpha


def forward(g0: Tensor, graph: MultiRelationGraph, params: NeighborhoodAttentionParams,
            config: LayerConfig) -> Tuple[Tensor, List[Tensor]]:
    """
    Composition des L couches ; g = g^(L)

    Returns:
        (g, liste des α par couche)
    """
    if len(params.layers) != config.num_layers:
        raise ShapeError(f"{len(params.layers)} couches de paramètres pour L={config.num_layers}")
    edges = graph.attention_edges
    g = g0
    alphas = []
    for layer in params.layers:
        g, alpha = layer_forward(g, edges, layer, config)
        alphas.append(alpha)
    return g, alphas
