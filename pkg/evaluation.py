"""
Module d'évaluation : métriques, scores de camouflage, ablations et sensibilité à λ
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix, recall_score, roc_auc_score

from debug_logger import info
from errors import MetricError
from graph_store import UNKNOWN_LABEL, DatasetSplit, MultiRelationGraph, split_nodes
from run_manifest import derive_seed

FEATURE_SIMILARITY_MODES = ("normalized", "raw")
ABLATION_VARIANTS = ("V1", "V2", "FULL")


@dataclass
class MetricReport:
    """AUC, rappel de la classe fraude et matrice de confusion au seuil"""
    auc: float
    recall: float
    threshold: float
    tp: int
    fn: int
    fp: int
    tn: int


def _check_binary(scores, labels) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if scores.shape != labels.shape:
        raise MetricError(f"{scores.size} scores pour {labels.size} labels")
    return scores, labels


def auc(scores, labels) -> float:
    """Probabilité qu'un positif soit classé devant un négatif (égalités = 0.5)"""
    scores, labels = _check_binary(scores, labels)
    if not np.any(labels == 1) or not np.any(labels == 0):
        raise MetricError("AUC non définie: il faut au moins un positif et un négatif")
    return float(roc_auc_score(labels, scores))


def recall(scores, labels, threshold: float = 0.5) -> float:
    """TP / (TP + FN) pour la classe fraude, prédiction = score >= seuil"""
    scores, labels = _check_binary(scores, labels)
    if not np.any(labels == 1):
        raise MetricError("rappel non défini: aucun positif")
    return float(recall_score(labels, (scores >= threshold).astype(np.int64), zero_division=0))


def metric_report(scores, labels, threshold: float = 0.5) -> MetricReport:
    scores, labels = _check_binary(scores, labels)
    predicted = (scores >= threshold).astype(np.int64)
    tn, fp, fn, tp = confusion_matrix(labels, predicted, labels=[0, 1]).ravel()
    return MetricReport(
        auc=auc(scores, labels),
        recall=recall(scores, labels, threshold),
        threshold=threshold,
        tp=int(tp), fn=int(fn), fp=int(fp), tn=int(tn),
    )


# ---------------------------------------------------------------------------
# Camouflage
# ---------------------------------------------------------------------------

def _edges(graph: MultiRelationGraph, relation: Optional[Union[int, str]]) -> np.ndarray:
    if relation is None or relation == "ALL":
        return graph.edge_list(None)
    if isinstance(relation, str):
        relation = graph.relation_names.index(relation)
    return graph.edge_list(relation)


def avg_label_similarity(graph: MultiRelationGraph, relation: Optional[Union[int, str]] = None) -> float:
    """
    Part des arêtes dont les deux extrémités ont le même label

    Les arêtes ayant une extrémité non étiquetée sont ignorées.

    Args:
        relation: Indice ou nom de relation ; None ou "ALL" pour l'union
    """
    edges = _edges(graph, relation)
    lu = graph.labels[edges[:, 0]]
    lv = graph.labels[edges[:, 1]]
    eligible = (lu != UNKNOWN_LABEL) & (lv != UNKNOWN_LABEL)
    if not eligible.any():
        raise MetricError(f"relation {relation}: aucune arête entre nœuds étiquetés")
    return float(np.mean(lu[eligible] == lv[eligible]))


def avg_feature_similarity(graph: MultiRelationGraph, relation: Optional[Union[int, str]] = None,
                           mode: str = "normalized") -> float:
    """
    Similarité moyenne des caractéristiques entre voisins

    Args:
        mode: "normalized" = moyenne de exp(-‖x_u - x_v‖² / d) ;
              "raw" = Σ exp(-‖x_u - x_v‖²) / (|E|·d)
    """
    if mode not in FEATURE_SIMILARITY_MODES:
        raise MetricError(f"mode inconnu: {mode}")
    edges = _edges(graph, relation)
    if edges.shape[0] == 0:
        raise MetricError(f"relation {relation}: aucune arête")
    diff = graph.features[edges[:, 0]] - graph.features[edges[:, 1]]
    sq = np.einsum("ij,ij->i", diff, diff)
    d = graph.feature_dim
    if mode == "normalized":
        return float(np.mean(np.exp(-sq / d)))
    return float(np.sum(np.exp(-sq)) / (edges.shape[0] * d))


def camouflage_report(graph: MultiRelationGraph, mode: str = "normalized") -> pd.DataFrame:
    """Une ligne par relation plus la ligne ALL (union dédupliquée)"""
    labeled = graph.labels != UNKNOWN_LABEL
    fraud_pct = 100.0 * float(np.mean(graph.labels[labeled] == 1)) if labeled.any() else float("nan")
    rows = []
    targets = list(range(graph.num_relations)) + [None]
    for r in targets:
        name = "ALL" if r is None else graph.relation_names[r]
        num_edges = int(_edges(graph, r).shape[0])
        try:
            label_sim = avg_label_similarity(graph, r)
        except MetricError:
            label_sim = float("nan")
        try:
            feature_sim = avg_feature_similarity(graph, r, mode)
        except MetricError:
            feature_sim = float("nan")
        rows.append({
            "nodes": graph.num_nodes,
            "fraud_pct": fraud_pct,
            "relation": name,
            "edges": num_edges,
            "avg_label_similarity": label_sim,
            "avg_feature_similarity": feature_sim,
        })
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# Ablation et sensibilité
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    """Résultat test d'un entraînement complet"""
    variant_or_lambda: str
    seed: int
    auc: float
    recall: float
    split_digest: str


def _run_one(task) -> RunResult:
    """Entraîne une configuration et évalue sur le test (exécuté dans un processus)"""
    from training import evaluate_state, train

    graph, split, config, key, threshold = task
    state, _ = train(graph, split, config, progress=False, threshold=threshold)
    _, test_report, _ = evaluate_state(graph, split, state, threshold, strict=True)
    return RunResult(key, config.seed, test_report.auc, test_report.recall, split.digest())


def _split_for(graph: MultiRelationGraph, split: Optional[DatasetSplit], seed: int,
               train_fraction: float) -> DatasetSplit:
    if split is not None:
        return split
    return split_nodes(graph, train_fraction, derive_seed(seed, "split"))


def _execute(tasks: List, jobs: int) -> List[RunResult]:
    if jobs <= 1:
        return [_run_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, tasks))


def ablate(graph: MultiRelationGraph, split: Optional[DatasetSplit], base_config, seeds: Sequence[int] = (0,),
           with_f: bool = False, jobs: int = 1, threshold: float = 0.5) -> List[RunResult]:
    """
    Entraîne V1, V2, FULL (et F si demandé) avec les mêmes graines et le même découpage

    Args:
        split: Découpage commun ; None = un découpage dérivé de chaque graine
        base_config: TrainConfig de base (variant remplacé)

    Returns:
        Résultats triés par (graine, variante)
    """
    variants = ABLATION_VARIANTS + (("F",) if with_f else ())
    tasks = []
    for seed in seeds:
        seed_split = _split_for(graph, split, seed, base_config.train_fraction)
        for variant in variants:
            tasks.append((graph, seed_split, replace(base_config, seed=seed, variant=variant), variant, threshold))
    results = _execute(tasks, jobs)
    order = {v: k for k, v in enumerate(variants)}
    results.sort(key=lambda r: (r.seed, order[r.variant_or_lambda]))
    for seed in seeds:
        digests = {r.split_digest for r in results if r.seed == seed}
        if len(digests) != 1:
            raise MetricError(f"graine {seed}: variantes évaluées sur des découpages différents")
    info(f"✓ Ablation: {len(results)} entraînements")
    return results


def lambda_sweep(graph: MultiRelationGraph, split: Optional[DatasetSplit], config, lambdas: Sequence[float],
                 seeds: Sequence[int] = (0,), jobs: int = 1, threshold: float = 0.5) -> List[RunResult]:
    """Un entraînement complet par valeur de λ et par graine"""
    for lam in lambdas:
        if not 0.0 < lam <= 1.0:
            raise MetricError(f"λ doit être dans (0,1] (reçu {lam})")
    tasks = []
    for seed in seeds:
        seed_split = _split_for(graph, split, seed, config.train_fraction)
        for lam in lambdas:
            tasks.append((graph, seed_split, replace(config, seed=seed, lam=float(lam)), f"{lam:g}", threshold))
    results = _execute(tasks, jobs)
    order = {f"{lam:g}": k for k, lam in enumerate(lambdas)}
    results.sort(key=lambda r: (r.seed, order[r.variant_or_lambda]))
    info(f"✓ Balayage λ: {len(results)} entraînements")
    return results


def results_frame(results: Sequence[RunResult]) -> pd.DataFrame:
    """Lignes variant_or_lambda,auc,recall,seed"""
    frame = pd.DataFrame([asdict(r) for r in results], columns=list(RunResult.__dataclass_fields__))
    return frame[["variant_or_lambda", "auc", "recall", "seed"]]


def mean_auc_by(results: Sequence[RunResult]) -> Dict[str, float]:
    """AUC moyenne par variante (ou λ) sur les graines"""
    frame = pd.DataFrame([asdict(r) for r in results])
    return frame.groupby("variant_or_lambda", sort=False)["auc"].mean().to_dict()
