"""
Module pour construire, stocker et interroger le graphe multi-relations

Un graphe = un ensemble de nœuds, R relations (matrices d'adjacence creuses
symétriques binaires), une matrice de caractéristiques et un vecteur de labels
(1 fraude, 0 légitime, -1 inconnu).
"""
import glob
import hashlib
import json
import os
from dataclasses import asdict, dataclass
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp
from sklearn.model_selection import train_test_split

from debug_logger import debug, info, warning
from errors import IngestionError, SplitError

UNKNOWN_LABEL = -1
DEFAULT_CLIQUE_CAP = 500

# Règles de construction : colonnes de regroupement (les colonnes temporelles
# sont des suffixes appliqués à la colonne "timestamp")
RELATION_RULES: Dict[str, Tuple[str, ...]] = {
    "same_user": ("user",),
    "same_product_star": ("product", "star"),
    "same_product_month": ("product", "timestamp:month"),
    "same_product": ("product",),
    "same_star_week": ("star", "timestamp:week"),
    "same_minute": ("timestamp:minute",),
    "same_symbol": ("symbol",),
}

_TIME_BUCKETS = {"month": "M", "week": "W", "minute": "min"}


@dataclass
class RelationEdgeList:
    """Arêtes non orientées d'une relation, canonisées (min, max) et dédupliquées"""
    relation_id: int
    edges: np.ndarray  # (E, 2) int64, trié
    name: str = ""
    dropped_self_pairs: int = 0
    subsampled_groups: int = 0

    def __len__(self):
        return int(self.edges.shape[0])


@dataclass
class SynthConfig:
    """Paramètres du générateur de graphes camouflés"""
    num_nodes: int = 1000
    fraud_fraction: float = 0.1
    num_relations: int = 3
    intra_prob: Optional[List[float]] = None
    camouflage_rate: float = 0.3
    feature_dim: int = 16
    feature_camouflage_rate: float = 0.3
    seed: int = 0
    avg_degree: float = 2.0
    fraud_density: Optional[float] = None  # None = même degré attendu que les légitimes
    inter_ratio: float = 0.0
    feature_shift: float = 1.5

    def validate(self):
        """Vérifie les invariants ; lève IngestionError sinon"""
        if self.num_nodes < 4:
            raise IngestionError(f"num_nodes doit être >= 4 (reçu {self.num_nodes})")
        if not 0.0 < self.fraud_fraction < 1.0:
            raise IngestionError(f"fraud_fraction doit être dans (0,1) (reçu {self.fraud_fraction})")
        if self.num_relations < 1:
            raise IngestionError("num_relations doit être >= 1")
        if self.feature_dim < 1:
            raise IngestionError("feature_dim doit être >= 1")
        rates = {
            "camouflage_rate": self.camouflage_rate,
            "feature_camouflage_rate": self.feature_camouflage_rate,
            "inter_ratio": self.inter_ratio,
        }
        if self.intra_prob is not None:
            if len(self.intra_prob) != self.num_relations:
                raise IngestionError("intra_prob doit contenir une probabilité par relation")
            rates.update({f"intra_prob[{r}]": p for r, p in enumerate(self.intra_prob)})
        for name, value in rates.items():
            if not 0.0 <= value <= 1.0:
                raise IngestionError(f"{name} doit être dans [0,1] (reçu {value})")
        if self.avg_degree <= 0 or (self.fraud_density is not None and self.fraud_density <= 0):
            raise IngestionError("avg_degree et fraud_density doivent être positifs")

    def resolved_intra_prob(self) -> List[float]:
        """Probabilités intra-classe par relation (dérivées de avg_degree si absentes)"""
        if self.intra_prob is not None:
            return [float(p) for p in self.intra_prob]
        base = self.avg_degree / (self.num_nodes - 1)
        # relations de plus en plus clairsemées
        return [min(1.0, base / (1.0 + 0.5 * r)) for r in range(self.num_relations)]

    def resolved_fraud_density(self, num_fraud: int) -> float:
        """Facteur appliqué à la probabilité intra-classe du bloc fraude"""
        if self.fraud_density is not None:
            return float(self.fraud_density)
        # un fraudeur a alors autant de voisins attendus qu'un nœud légitime
        num_legit = self.num_nodes - num_fraud
        return max(num_legit - 1, 1) / max(num_fraud - 1, 1)


@dataclass
class DatasetSplit:
    """Partition stratifiée train/test des nœuds étiquetés"""
    train: np.ndarray
    test: np.ndarray
    train_legit: np.ndarray  # V_l0
    train_fraud: np.ndarray  # V_l1

    def digest(self) -> str:
        """Empreinte SHA-256 des indices train/test triés"""
        h = hashlib.sha256()
        h.update(np.sort(self.train).astype("<i8").tobytes())
        h.update(b"|")
        h.update(np.sort(self.test).astype("<i8").tobytes())
        return h.hexdigest()


class MultiRelationGraph:
    """Graphe multi-relations immuable"""

    def __init__(self, features: np.ndarray, labels: np.ndarray, relations: Sequence[sp.csr_matrix],
                 relation_names: Optional[Sequence[str]] = None):
        self.features = np.array(features, dtype=np.float64)
        self.labels = np.array(labels, dtype=np.int64)
        self.relations = [sp.csr_matrix(A) for A in relations]
        self.num_nodes = self.features.shape[0]
        names = list(relation_names) if relation_names else [f"rel{r + 1}" for r in range(len(relations))]
        self.relation_names = names
        self.features.setflags(write=False)
        self.labels.setflags(write=False)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @cached_property
    def union_adjacency(self) -> sp.csr_matrix:
        """Union dédupliquée de toutes les relations (ligne ALL)"""
        total = sp.csr_matrix((self.num_nodes, self.num_nodes))
        for A in self.relations:
            total = total + A
        total = sp.csr_matrix(total)
        total.data[:] = 1.0
        total.sort_indices()
        return total

    @cached_property
    def attention_edges(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Paires (i, j) pour j ∈ 𝒩_i, triées par i puis j

        Returns:
            (src, dst) : src = nœud central i, dst = voisin j (i inclus)
        """
        U = self.union_adjacency.tolil()
        U.setdiag(1.0)
        U = sp.csr_matrix(U)
        U.sort_indices()
        src = np.repeat(np.arange(self.num_nodes), np.diff(U.indptr))
        dst = U.indices.astype(np.int64)
        return src, dst

    def degrees(self, r: int) -> np.ndarray:
        return np.diff(self.relations[r].indptr)

    def edge_list(self, r: Optional[int] = None) -> np.ndarray:
        """Arêtes (u < v) d'une relation, ou de l'union si r est None"""
        A = self.union_adjacency if r is None else self.relations[r]
        upper = sp.triu(A, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return np.stack([upper.row[order], upper.col[order]], axis=1).astype(np.int64)

    def validate(self):
        """Vérifie les invariants du graphe"""
        n = self.num_nodes
        if self.num_relations < 1:
            raise IngestionError("le graphe doit avoir au moins une relation")
        if self.labels.shape != (n,):
            raise IngestionError(f"{self.labels.shape[0]} labels pour {n} nœuds")
        if not np.all(np.isin(self.labels, (0, 1, UNKNOWN_LABEL))):
            raise IngestionError("labels hors de {0, 1, inconnu}")
        for r, A in enumerate(self.relations):
            if A.shape != (n, n):
                raise IngestionError(f"relation {r}: forme {A.shape} au lieu de ({n}, {n})")
            if (A - A.T).count_nonzero() != 0:
                raise IngestionError(f"relation {r}: matrice non symétrique")
            if A.diagonal().any():
                raise IngestionError(f"relation {r}: boucle sur un nœud")


# ---------------------------------------------------------------------------
# Lecture des fichiers
# ---------------------------------------------------------------------------

def load_nodes(path: str) -> Tuple[np.ndarray, np.ndarray]:
    """
    Lit nodes.csv (id,label,f0..f{d-1})

    Args:
        path: Chemin du fichier

    Returns:
        (features N×d, labels N) ; label vide = -1 (inconnu)
    """
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise IngestionError(f"{path}: fichier vide")
    except pd.errors.ParserError as e:
        raise IngestionError(f"{path}: ligne de caractéristiques irrégulière ({e})")

    columns = list(df.columns)
    if columns[:2] != ["id", "label"]:
        raise IngestionError(f"{path}: en-tête attendu 'id,label,f0..' (reçu {','.join(columns)})")
    feature_cols = columns[2:]
    expected = [f"f{k}" for k in range(len(feature_cols))]
    if feature_cols != expected:
        raise IngestionError(f"{path}: colonnes de caractéristiques attendues {','.join(expected)}")

    # ligne 1 = en-tête
    ids = np.empty(len(df), dtype=np.int64)
    for pos, raw in enumerate(df["id"]):
        if raw.strip() == "":
            raise IngestionError(f"{path}: missing id at line {pos + 2}")
        try:
            ids[pos] = int(raw)
        except ValueError:
            raise IngestionError(f"{path}: id invalide '{raw}' at line {pos + 2}")

    order = np.argsort(ids, kind="stable")
    for rank, pos in enumerate(order):
        if ids[pos] != rank:
            raise IngestionError(f"non-contiguous ids at line {pos + 2}")

    values = df[feature_cols].replace("", np.nan)
    ragged = values.isna().any(axis=1).to_numpy()
    if ragged.any():
        raise IngestionError(f"{path}: ragged feature row at line {int(np.argmax(ragged)) + 2}")
    try:
        features = values.to_numpy(dtype=np.float64)
    except ValueError as e:
        raise IngestionError(f"{path}: caractéristique non numérique ({e})")

    labels = np.full(len(df), UNKNOWN_LABEL, dtype=np.int64)
    for pos, raw in enumerate(df["label"]):
        raw = raw.strip()
        if raw == "":
            continue
        if raw not in ("0", "1"):
            raise IngestionError(f"{path}: label '{raw}' invalide at line {pos + 2}")
        labels[pos] = int(raw)

    info(f"✓ {len(df)} nœuds lus depuis {path} ({len(feature_cols)} caractéristiques)")
    return features[order], labels[order]


def _canonicalize(pairs: np.ndarray, relation_id: int, name: str) -> RelationEdgeList:
    """(min, max), suppression des boucles et des doublons"""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    self_pairs = pairs[:, 0] == pairs[:, 1]
    dropped = int(self_pairs.sum())
    pairs = pairs[~self_pairs]
    canon = np.sort(pairs, axis=1)
    if canon.shape[0]:
        canon = np.unique(canon, axis=0)
    return RelationEdgeList(relation_id, canon.reshape(-1, 2), name=name, dropped_self_pairs=dropped)


def load_relation_edges(path: str, relation_id: int, num_nodes: Optional[int] = None,
                        name: Optional[str] = None) -> RelationEdgeList:
    """
    Lit edges_<relation>.csv (src,dst)

    Args:
        path: Chemin du fichier
        relation_id: Indice de la relation
        num_nodes: Si fourni, les extrémités >= num_nodes sont refusées
        name: Nom de la relation (par défaut dérivé du nom de fichier)
    """
    if name is None:
        name = os.path.splitext(os.path.basename(path))[0].removeprefix("edges_")
    try:
        df = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        return RelationEdgeList(relation_id, np.zeros((0, 2), dtype=np.int64), name=name)

    if list(df.columns) != ["src", "dst"]:
        raise IngestionError(f"{path}: en-tête attendu 'src,dst'")
    numeric = df.apply(pd.to_numeric, errors="coerce")
    missing = numeric.isna().any(axis=1).to_numpy()
    if missing.any():
        raise IngestionError(f"{path}: extrémité manquante ou non numérique at line {int(np.argmax(missing)) + 2}")
    values = numeric.to_numpy(dtype=np.float64)
    fractional = (~np.isfinite(values) | (values != np.floor(values))).any(axis=1)
    if fractional.any():
        raise IngestionError(f"{path}: extrémité non entière at line {int(np.argmax(fractional)) + 2}")
    pairs = values.astype(np.int64)
    if pairs.size and pairs.min() < 0:
        raise IngestionError(f"{path}: extrémité négative at line {int(np.argmax((pairs < 0).any(axis=1))) + 2}")
    if num_nodes is not None and pairs.size and pairs.max() >= num_nodes:
        bad = int(np.argmax((pairs >= num_nodes).any(axis=1)))
        raise IngestionError(f"{path}: extrémité >= {num_nodes} at line {bad + 2}")

    edges = _canonicalize(pairs, relation_id, name)
    if edges.dropped_self_pairs:
        warning(f"{path}: {edges.dropped_self_pairs} boucle(s) ignorée(s)")
    return edges


def _pair_from_index(t: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Indice linéaire du triangle supérieur strict k×k → (i, j), i < j"""
    t = np.asarray(t, dtype=np.int64)
    i = k - 2 - np.floor(np.sqrt(-8.0 * t + 4.0 * k * (k - 1) - 7.0) / 2.0 - 0.5).astype(np.int64)
    j = t + i + 1 - k * (k - 1) // 2 + (k - i) * ((k - i) - 1) // 2
    return i, j


def _group_keys(events: pd.DataFrame, rule: str) -> pd.DataFrame:
    if rule not in RELATION_RULES:
        raise IngestionError(f"règle inconnue: {rule} (connues: {', '.join(sorted(RELATION_RULES))})")
    if "node" not in events.columns:
        raise IngestionError("colonne 'node' absente de la table d'événements")
    keys = pd.DataFrame({"node": events["node"]})
    for part in RELATION_RULES[rule]:
        column, _, bucket = part.partition(":")
        if column not in events.columns:
            raise IngestionError(f"règle {rule}: colonne '{column}' absente")
        if bucket:
            stamps = pd.to_datetime(events[column], errors="coerce")
            keys[part] = stamps.dt.to_period(_TIME_BUCKETS[bucket]).astype(str).where(stamps.notna())
        else:
            keys[part] = events[column]
    return keys


def build_relations_from_events(events: pd.DataFrame, rule: str, relation_id: int = 0,
                                cap: int = DEFAULT_CLIQUE_CAP, seed: int = 0) -> RelationEdgeList:
    """
    Relie tous les nœuds d'un même groupe (expansion en cliques)

    Args:
        events: Table avec une colonne 'node' et les colonnes de la règle
        rule: Nom de la règle (voir RELATION_RULES)
        relation_id: Indice de la relation produite
        cap: Taille maximale de groupe avant sous-échantillonnage
        seed: Graine du sous-échantillonnage

    Returns:
        Union des cliques, canonisée
    """
    keys = _group_keys(events, rule)
    key_cols = list(RELATION_RULES[rule])
    missing = keys[key_cols].isna().any(axis=1)
    if missing.any():
        warning(f"règle {rule}: {int(missing.sum())} événement(s) sans clé ignoré(s)")
        keys = keys[~missing]

    rng = np.random.default_rng(seed)
    max_pairs = cap * (cap - 1) // 2
    chunks = []
    subsampled = 0
    for _, group in keys.groupby(key_cols, sort=True):
        members = np.unique(group["node"].to_numpy(dtype=np.int64))
        k = members.size
        if k < 2:
            continue
        total = k * (k - 1) // 2
        if total > max_pairs:
            subsampled += 1
            t = np.sort(rng.choice(total, size=max_pairs, replace=False))
            i, j = _pair_from_index(t, k)
        else:
            i, j = np.triu_indices(k, k=1)
        chunks.append(np.stack([members[i], members[j]], axis=1))

    pairs = np.concatenate(chunks) if chunks else np.zeros((0, 2), dtype=np.int64)
    edges = _canonicalize(pairs, relation_id, rule)
    edges.subsampled_groups = subsampled
    if subsampled:
        warning(f"règle {rule}: {subsampled} groupe(s) de plus de {cap} nœuds sous-échantillonné(s)")
    info(f"✓ Règle {rule}: {len(edges)} arêtes")
    return edges


# ---------------------------------------------------------------------------
# Assemblage et requêtes
# ---------------------------------------------------------------------------

def assemble(features: np.ndarray, labels: np.ndarray, edge_lists: Sequence[RelationEdgeList]) -> MultiRelationGraph:
    """Construit les matrices d'adjacence symétriques et vérifie les invariants"""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise IngestionError("la matrice de caractéristiques doit être 2D")
    n = features.shape[0]
    if len(labels) != n:
        raise IngestionError(f"{len(labels)} labels pour {n} lignes de caractéristiques")
    if not edge_lists:
        raise IngestionError("au moins une relation est requise")

    relations = []
    for edges in edge_lists:
        e = edges.edges
        if e.size and (e.min() < 0 or e.max() >= n):
            raise IngestionError(f"relation {edges.name or edges.relation_id}: extrémité hors de [0, {n})")
        if e.size and np.any(e[:, 0] == e[:, 1]):
            raise IngestionError(f"relation {edges.name or edges.relation_id}: boucle sur un nœud")
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        A = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
        A.data[:] = 1.0
        A.sort_indices()
        relations.append(A)

    names = [edges.name or f"rel{k + 1}" for k, edges in enumerate(edge_lists)]
    graph = MultiRelationGraph(features, labels, relations, names)
    graph.validate()
    return graph


def adjacency_row(graph: MultiRelationGraph, r: int, i: int) -> sp.csr_matrix:
    """Ligne a_i^r (1 × N, creuse binaire)"""
    if not 0 <= r < graph.num_relations:
        raise IndexError(f"relation {r} hors de [0, {graph.num_relations})")
    if not 0 <= i < graph.num_nodes:
        raise IndexError(f"nœud {i} hors de [0, {graph.num_nodes})")
    return graph.relations[r][i]


def neighbor_union(graph: MultiRelationGraph, i: int) -> np.ndarray:
    """𝒩_i : voisins de i dans toutes les relations, plus i, en ordre croissant"""
    if not 0 <= i < graph.num_nodes:
        raise IndexError(f"nœud {i} hors de [0, {graph.num_nodes})")
    U = graph.union_adjacency
    neighbors = U.indices[U.indptr[i]:U.indptr[i + 1]]
    return np.union1d(neighbors, [i]).astype(np.int64)


def union_edges(graph: MultiRelationGraph) -> np.ndarray:
    return graph.edge_list(None)


# ---------------------------------------------------------------------------
# Génération synthétique
# ---------------------------------------------------------------------------

def _sample_block(rng: np.random.Generator, rows: np.ndarray, cols: Optional[np.ndarray], p: float) -> np.ndarray:
    """
    Tire chaque paire d'un bloc avec probabilité p

    cols=None : paires internes à rows (i < j) ; sinon produit rows × cols
    """
    if cols is None:
        k = rows.size
        total = k * (k - 1) // 2
    else:
        total = rows.size * cols.size
    if total == 0 or p <= 0:
        return np.zeros((0, 2), dtype=np.int64)
    m = int(rng.binomial(total, min(p, 1.0)))
    t = np.sort(rng.choice(total, size=m, replace=False))
    if cols is None:
        i, j = _pair_from_index(t, rows.size)
        return np.stack([rows[i], rows[j]], axis=1)
    return np.stack([rows[t // cols.size], cols[t % cols.size]], axis=1)


def generate_synthetic(config: SynthConfig) -> Tuple[MultiRelationGraph, SynthConfig]:
    """
    Génère un graphe multi-relations avec camouflage relationnel et de caractéristiques

    Args:
        config: Paramètres du générateur

    Returns:
        (graphe, copie de la configuration avec intra_prob et fraud_density matérialisés)
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    n = config.num_nodes
    num_fraud = int(min(max(round(n * config.fraud_fraction), 1), n - 1))

    perm = rng.permutation(n)
    fraud = np.sort(perm[:num_fraud])
    legit = np.sort(perm[num_fraud:])
    labels = np.zeros(n, dtype=np.int64)
    labels[fraud] = 1

    intra = config.resolved_intra_prob()
    density = config.resolved_fraud_density(num_fraud)
    edge_lists = []
    for r, p in enumerate(intra):
        legit_edges = _sample_block(rng, legit, None, p)
        fraud_edges = _sample_block(rng, fraud, None, min(1.0, p * density))
        background = _sample_block(rng, fraud, legit, p * config.inter_ratio)

        # camouflage relationnel : une extrémité fraude remplacée par un nœud légitime
        rewire = rng.random(fraud_edges.shape[0]) < config.camouflage_rate
        rewired = fraud_edges[rewire].copy()
        rewired[:, 1] = legit[rng.integers(0, legit.size, size=rewired.shape[0])]
        kept = fraud_edges[~rewire]

        pairs = np.concatenate([legit_edges, kept, rewired, background])
        edge_lists.append(_canonicalize(pairs, r, f"rel{r + 1}"))

    d = config.feature_dim
    features = rng.standard_normal((n, d))
    # camouflage des caractéristiques : ces fraudeurs gardent la distribution légitime
    disguised = rng.random(num_fraud) < config.feature_camouflage_rate
    features[fraud[~disguised]] += config.feature_shift

    graph = assemble(features, labels, edge_lists)
    echo = SynthConfig(**{**asdict(config), "intra_prob": intra, "fraud_density": density})
    info(f"✓ Graphe synthétique: {n} nœuds, {num_fraud} fraudeurs, "
         f"{[len(e) for e in edge_lists]} arêtes par relation")
    return graph, echo


# ---------------------------------------------------------------------------
# Découpage
# ---------------------------------------------------------------------------

def _split_per_class(labeled: np.ndarray, y: np.ndarray, train_fraction: float,
                     seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """round(fraction · effectif) nœuds de chaque classe au train, entre 1 et effectif - 1"""
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in (0, 1):
        members = rng.permutation(labeled[y == cls])
        count = members.size
        n_train = 1 if count == 1 else min(max(int(round(train_fraction * count)), 1), count - 1)
        train.append(members[:n_train])
        test.append(members[n_train:])
    return np.concatenate(train), np.concatenate(test)


def split_nodes(graph: MultiRelationGraph, train_fraction: float = 0.4, seed: int = 0) -> DatasetSplit:
    """
    Découpage stratifié des nœuds étiquetés

    Args:
        graph: Graphe
        train_fraction: Part des nœuds étiquetés dans le train, dans (0,1)
        seed: Graine du tirage

    Returns:
        DatasetSplit avec V_l0 / V_l1 pris dans le train
    """
    if not 0.0 < train_fraction < 1.0:
        raise SplitError(f"train_fraction doit être dans (0,1) (reçu {train_fraction})")
    labels = graph.labels
    labeled = np.flatnonzero(labels != UNKNOWN_LABEL)
    y = labels[labeled]
    for cls in (0, 1):
        if not np.any(y == cls):
            raise SplitError(f"aucun nœud étiqueté de classe {cls}")

    # une classe à un seul membre (ou un train trop petit) fait échouer la stratification
    # de sklearn : on arrondit alors classe par classe, au moins un nœud de chaque au train
    try:
        train, test = train_test_split(labeled, train_size=train_fraction, stratify=y, random_state=seed)
    except ValueError as e:
        debug(f"train_test_split refusé ({e}), découpage par classe")
        train, test = _split_per_class(labeled, y, train_fraction, seed)
    train = np.sort(np.asarray(train, dtype=np.int64))
    test = np.sort(np.asarray(test, dtype=np.int64))

    return DatasetSplit(
        train=train,
        test=test,
        train_legit=train[labels[train] == 0],
        train_fraud=train[labels[train] == 1],
    )


# ---------------------------------------------------------------------------
# Dossiers de données
# ---------------------------------------------------------------------------

def load_graph(data_dir: str) -> MultiRelationGraph:
    """Lit nodes.csv et tous les edges_<relation>.csv d'un dossier"""
    nodes_path = os.path.join(data_dir, "nodes.csv")
    if not os.path.exists(nodes_path):
        raise IngestionError(f"{nodes_path} introuvable")
    features, labels = load_nodes(nodes_path)
    edge_paths = sorted(glob.glob(os.path.join(data_dir, "edges_*.csv")))
    if not edge_paths:
        raise IngestionError(f"aucun fichier edges_*.csv dans {data_dir}")
    edge_lists = [load_relation_edges(path, r, num_nodes=len(labels)) for r, path in enumerate(edge_paths)]
    return assemble(features, labels, edge_lists)


def write_graph(graph: MultiRelationGraph, out_dir: str, meta: Optional[dict] = None) -> List[str]:
    """
    Écrit nodes.csv, edges_<relation>.csv et, si fourni, synth_meta.json

    Returns:
        Chemins écrits
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []
    nodes = pd.DataFrame(graph.features, columns=[f"f{k}" for k in range(graph.feature_dim)])
    labels = pd.Series(graph.labels).map({0: "0", 1: "1", UNKNOWN_LABEL: ""})
    nodes.insert(0, "label", labels)
    nodes.insert(0, "id", np.arange(graph.num_nodes))
    path = os.path.join(out_dir, "nodes.csv")
    nodes.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    written.append(path)

    for r, name in enumerate(graph.relation_names):
        path = os.path.join(out_dir, f"edges_{name}.csv")
        pd.DataFrame(graph.edge_list(r), columns=["src", "dst"]).to_csv(path, index=False, lineterminator="\n")
        written.append(path)

    if meta is not None:
        path = os.path.join(out_dir, "synth_meta.json")
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(meta, f, indent=2, sort_keys=True)
            f.write("\n")
        written.append(path)
    return written
