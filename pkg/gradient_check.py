"""
Vérification des gradients par différences centrées

Compare, pour chaque coefficient de chaque paramètre, le gradient obtenu par
rétropropagation à (L(θ + ε) - L(θ - ε)) / 2ε sur un petit graphe aléatoire.
"""
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional

import numpy as np

import fusion_classifier as fc
import tensor_engine as te
from debug_logger import info
from graph_store import MultiRelationGraph, RelationEdgeList, assemble, split_nodes
from run_manifest import derive_seed
from tensor_engine import Tensor
from training import TrainConfig, forward_pass, init

EPSILON = 1e-5
TOLERANCE = 1e-4
# dénominateur minimal de l'erreur relative
RELATIVE_FLOOR = 1e-3

# dimensions réduites : le contrôle reste exhaustif et rapide
CHECK_CONFIG = TrainConfig(
    epochs=1, num_layers=2, num_heads=2, head_dim=3, embed_dim=6, relation_hidden=5,
    fusion_hidden=7, att_dim=4, classifier_hidden=5, local_proj_dim=5, lam=0.4,
)


@dataclass
class ParameterCheck:
    name: str
    size: int
    max_rel_error: float
    worst_index: tuple


@dataclass
class GradientCheckReport:
    checks: List[ParameterCheck]
    tolerance: float = TOLERANCE

    @property
    def worst(self) -> ParameterCheck:
        return max(self.checks, key=lambda c: c.max_rel_error)

    @property
    def passed(self) -> bool:
        return self.worst.max_rel_error <= self.tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), RELATIVE_FLOOR)
    return np.abs(analytic - numeric) / scale


def finite_difference(loss_fn: Callable[[], float], param: Tensor, eps: float = EPSILON) -> np.ndarray:
    """Gradient numérique de loss_fn par rapport à tous les coefficients de param"""
    grad = np.zeros(param.shape)
    original = param.values
    for idx in np.ndindex(*param.shape):
        values = original.copy()
        values[idx] = original[idx] + eps
        param.values = values
        f_plus = loss_fn()
        values[idx] = original[idx] - eps
        f_minus = loss_fn()
        grad[idx] = (f_plus - f_minus) / (2 * eps)
    param.values = original
    return grad


def check_parameters(loss_fn: Callable[[], Tensor], params: Dict[str, Tensor],
                     eps: float = EPSILON) -> List[ParameterCheck]:
    """
    Rétropropagation puis différences centrées paramètre par paramètre

    Args:
        loss_fn: Reconstruit la perte (scalaire 1 × 1) à partir des valeurs courantes
        params: Paramètres nommés à vérifier
    """
    for t in params.values():
        t.zero_grad()
    te.backward(loss_fn())
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros(t.shape)) for name, t in params.items()}

    checks = []
    for name, param in params.items():
        numeric = finite_difference(lambda: loss_fn().item(), param, eps)
        errors = relative_error(analytic[name], numeric)
        worst = np.unravel_index(int(np.argmax(errors)), errors.shape)
        checks.append(ParameterCheck(name, param.values.size, float(errors[worst]), tuple(int(k) for k in worst)))
        info(f"{name}: {param.values.size} coefficients, erreur relative max {errors[worst]:.3e}")
    return checks


def random_graph(seed: int = 0, num_nodes: int = 12, num_relations: int = 3, feature_dim: int = 4,
                 edge_prob: float = 0.3) -> MultiRelationGraph:
    """Petit graphe aléatoire avec les deux classes présentes"""
    rng = np.random.default_rng(derive_seed(seed, "gradcheck"))
    labels = np.zeros(num_nodes, dtype=np.int64)
    labels[rng.choice(num_nodes, size=max(2, num_nodes // 3), replace=False)] = 1
    features = rng.standard_normal((num_nodes, feature_dim))
    i, j = np.triu_indices(num_nodes, k=1)
    edge_lists = []
    for r in range(num_relations):
        keep = rng.random(i.size) < edge_prob
        edges = np.stack([i[keep], j[keep]], axis=1).astype(np.int64)
        edge_lists.append(RelationEdgeList(r, edges, name=f"rel{r + 1}"))
    return assemble(features, labels, edge_lists)


def run(seed: int = 0, config: Optional[TrainConfig] = None) -> GradientCheckReport:
    """
    Contrôle complet : variante FULL, sans puis avec projection locale

    Returns:
        Rapport ; le nom du paramètre fautif est dans report.worst
    """
    graph = random_graph(seed)
    split = split_nodes(graph, 0.5, derive_seed(seed, "split"))
    base = replace(config or CHECK_CONFIG, seed=seed, variant="FULL")

    checks = []
    for local_proj in (False, True):
        state = init(graph, replace(base, local_proj=local_proj))

        def loss_fn(state=state):
            probs = forward_pass(graph, state).probs
            return fc.class_balanced_loss(probs, split.train_legit, split.train_fraud, state.config.lam)

        suffix = " [proj]" if local_proj else ""
        for check in check_parameters(loss_fn, state.tensors()):
            checks.append(replace(check, name=check.name + suffix))

    report = GradientCheckReport(checks)
    info(f"✓ Vérification des gradients: {sum(c.size for c in checks)} coefficients, "
         f"pire erreur {report.worst.max_rel_error:.3e} ({report.worst.name})")
    return report
