"""
Module de fusion de l'information et classifieur

Projette h, g et f dans un espace commun de dimension 32 (M), calcule les poids
d'information φ = softmax(η) avec η(e) = pᵀ tanh(W'·M(e) + b'), fusionne
z = Σ φ·M et classe z avec un MLP suivi d'une sigmoïde.
"""
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

import tensor_engine as te
from errors import ShapeError, SplitError
from tensor_engine import Tensor

SOURCES = ("local", "longrange", "feature")
PROB_CLAMP = 1e-7


@dataclass
class FusionParams:
    """MLP de projection (première couche par source, suite partagée) et attention d'information"""
    first: Dict[str, Tuple[Tensor, Tensor]]  # source -> (W1 hidden × in_s, b1 1 × hidden)
    W2: Tensor       # embed × hidden
    b2: Tensor       # 1 × embed
    W_att: Tensor    # d_f × embed  (W')
    b_att: Tensor    # 1 × d_f      (b')
    p: Tensor        # d_f × 1
    activation: str = "leaky_relu"
    slope: float = te.LEAKY_SLOPE

    @classmethod
    def init(cls, rng: np.random.Generator, input_widths: Dict[str, int], embed_dim: int = 32,
             hidden: int = 64, att_dim: int = 32, activation: str = "leaky_relu",
             slope: float = te.LEAKY_SLOPE) -> "FusionParams":
        """
        Args:
            input_widths: Largeur d'entrée par source (sous-ensemble de SOURCES)
            embed_dim: Dimension de l'embedding final
            hidden: Largeur cachée du MLP de projection
            att_dim: d_f
        """
        first = {}
        for source, width in input_widths.items():
            first[source] = (
                Tensor(te.xavier_uniform(rng, hidden, width), requires_grad=True, name=f"fusion.{source}.W1"),
                Tensor(np.zeros((1, hidden)), requires_grad=True, name=f"fusion.{source}.b1"),
            )
        return cls(
            first=first,
            W2=Tensor(te.xavier_uniform(rng, embed_dim, hidden), requires_grad=True, name="fusion.W2"),
            b2=Tensor(np.zeros((1, embed_dim)), requires_grad=True, name="fusion.b2"),
            W_att=Tensor(te.xavier_uniform(rng, att_dim, embed_dim), requires_grad=True, name="fusion.W_att"),
            b_att=Tensor(np.zeros((1, att_dim)), requires_grad=True, name="fusion.b_att"),
            p=Tensor(te.xavier_uniform(rng, att_dim, 1), requires_grad=True, name="fusion.p"),
            activation=activation,
            slope=slope,
        )

    def tensors(self) -> Dict[str, Tensor]:
        named = {}
        for source in SOURCES:
            if source in self.first:
                W1, b1 = self.first[source]
                named[f"fusion.{source}.W1"] = W1
                named[f"fusion.{source}.b1"] = b1
        named.update({
            "fusion.W2": self.W2, "fusion.b2": self.b2,
            "fusion.W_att": self.W_att, "fusion.b_att": self.b_att, "fusion.p": self.p,
        })
        return named


@dataclass
class ClassifierParams:
    """MLP embed → hidden → 1 logit"""
    W1: Tensor
    b1: Tensor
    W2: Tensor
    b2: Tensor
    activation: str = "leaky_relu"
    slope: float = te.LEAKY_SLOPE

    @classmethod
    def init(cls, rng: np.random.Generator, embed_dim: int = 32, hidden: int = 32,
             activation: str = "leaky_relu", slope: float = te.LEAKY_SLOPE) -> "ClassifierParams":
        return cls(
            W1=Tensor(te.xavier_uniform(rng, hidden, embed_dim), requires_grad=True, name="classifier.W1"),
            b1=Tensor(np.zeros((1, hidden)), requires_grad=True, name="classifier.b1"),
            W2=Tensor(te.xavier_uniform(rng, 1, hidden), requires_grad=True, name="classifier.W2"),
            b2=Tensor(np.zeros((1, 1)), requires_grad=True, name="classifier.b2"),
            activation=activation,
            slope=slope,
        )

    def tensors(self) -> Dict[str, Tensor]:
        return {"classifier.W1": self.W1, "classifier.b1": self.b1,
                "classifier.W2": self.W2, "classifier.b2": self.b2}


def project(e: Tensor, source: str, params: FusionParams) -> Tensor:
    """M(e) pour toutes les lignes de e (n × embed)"""
    if source not in params.first:
        raise ShapeError(f"pas de première couche pour la source '{source}'")
    W1, b1 = params.first[source]
    if e.shape[1] != W1.shape[1]:
        raise ShapeError(f"source {source}: largeur {e.shape[1]}, attendu {W1.shape[1]}")
    hidden = te.activation(te.linear(e, W1, b1), params.activation, params.slope)
    return te.linear(hidden, params.W2, params.b2)


def info_scores(projected: Sequence[Tensor], params: FusionParams) -> Tensor:
    """η de chaque source, une colonne par source (n × S)"""
    columns = [te.matmul(te.activation(te.linear(m, params.W_att, params.b_att), "tanh"), params.p)
               for m in projected]
    return te.concat(columns)


def info_weights(m_local: Tensor, m_longrange: Tensor, m_feature: Tensor, params: FusionParams) -> Tensor:
    """φ = softmax(η_h, η_g, η_f) par nœud (n × 3)"""
    return te.masked_softmax(info_scores([m_local, m_longrange, m_feature], params))


def fuse(h: Tensor, g: Tensor, f: Tensor, params: FusionParams,
         forced_phi: Optional[np.ndarray] = None) -> Tuple[Tensor, Tensor]:
    """
    z = φ_h·M(h) + φ_g·M(g) + φ_f·M(f)

    Args:
        forced_phi: Poids imposés (3,) à la place de φ appris

    Returns:
        (z de forme n × embed, φ de forme n × 3)
    """
    projected = [project(h, "local", params), project(g, "longrange", params), project(f, "feature", params)]
    if forced_phi is None:
        phi = info_weights(*projected, params)
    else:
        phi = Tensor(np.tile(np.asarray(forced_phi, dtype=np.float64).reshape(1, 3), (h.shape[0], 1)))
    return te.weighted_sum(projected, phi), phi


def logits(z: Tensor, classifier: ClassifierParams) -> Tensor:
    hidden = te.activation(te.linear(z, classifier.W1, classifier.b1), classifier.activation, classifier.slope)
    return te.linear(hidden, classifier.W2, classifier.b2)


def predict(z: Tensor, classifier: ClassifierParams) -> Tensor:
    """Probabilité de fraude par nœud (n × 1)"""
    return te.activation(logits(z, classifier), "sigmoid")


def class_balanced_loss(probs: Tensor, legit_idx: np.ndarray, fraud_idx: np.ndarray, lam: float) -> Tensor:
    """
    Entropie croisée binaire pondérée :
    -λ Σ_{V_l0} ln(1 - p_i) - Σ_{V_l1} ln(p_i), p écrêté dans [1e-7, 1 - 1e-7]

    Args:
        probs: Probabilités (N × 1)
        legit_idx: V_l0
        fraud_idx: V_l1
        lam: Poids de la classe légitime
    """
    legit_idx = np.asarray(legit_idx, dtype=np.int64)
    fraud_idx = np.asarray(fraud_idx, dtype=np.int64)
    if np.intersect1d(legit_idx, fraud_idx).size:
        raise SplitError("un nœud est à la fois dans V_l0 et V_l1")
    if lam <= 0:
        raise ValueError(f"λ doit être > 0 (reçu {lam})")

    p_legit = te.clip(te.gather_rows(probs, legit_idx), PROB_CLAMP, 1.0 - PROB_CLAMP)
    p_fraud = te.clip(te.gather_rows(probs, fraud_idx), PROB_CLAMP, 1.0 - PROB_CLAMP)
    legit_term = te.sum_all(te.log(1.0 - p_legit))
    fraud_term = te.sum_all(te.log(p_fraud))
    return te.add(te.scale(legit_term, -lam), te.scale(fraud_term, -1.0))
