"""
Module d'entraînement : initialisation, passe avant par variante, boucle d'époques,
journal par époque et checkpoints
"""
import copy
import hashlib
import json
import os
import struct
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

import fusion_classifier as fc
import neighborhood_attention as na
import relation_attention as ra
import tensor_engine as te
from debug_logger import error, info, warning
from errors import CheckpointError, ConfigError, MetricError, NumericError
from evaluation import MetricReport, metric_report
from graph_store import DatasetSplit, MultiRelationGraph
from run_manifest import derive_seed
from tensor_engine import AdamState, Tensor

VARIANTS = ("FULL", "V1", "V2", "F")
PROFILE_EPOCHS = {"yelp": 15, "amazon": 15, "shortmessage": 25, "synthetic": 200}
LOCAL_PROJ_THRESHOLD = 2000

CHECKPOINT_MAGIC = b"HAGNNCKP"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    """Hyperparamètres d'un entraînement"""
    profile: str = "synthetic"
    epochs: Optional[int] = None
    lr: float = 5e-3
    num_layers: int = 2
    num_heads: int = 8
    head_dim: int = 4
    lam: float = 0.4
    embed_dim: int = 32
    relation_hidden: int = 64
    fusion_hidden: int = 64
    att_dim: int = 32
    classifier_hidden: int = 32
    local_proj: Optional[bool] = None
    local_proj_dim: int = 64
    seed: int = 0
    variant: str = "FULL"
    train_fraction: float = 0.4
    score_activation: str = "leaky_relu"
    activation: str = "leaky_relu"
    aggregate_activation: Optional[str] = None
    leaky_slope: float = te.LEAKY_SLOPE
    faithful_dims: bool = False

    @classmethod
    def from_dict(cls, values: Dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"clé(s) inconnue(s): {', '.join(sorted(unknown))}")
        config = cls(**values)
        config.validate()
        return config

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variante inconnue: {self.variant} (connues: {', '.join(VARIANTS)})")
        if self.profile not in PROFILE_EPOCHS:
            raise ConfigError(f"profil inconnu: {self.profile}")
        if self.epochs is not None and self.epochs < 1:
            raise ConfigError("epochs doit être >= 1")
        if self.lr < 0:
            raise ConfigError("lr doit être >= 0")
        if not 0.0 < self.lam <= 1.0:
            raise ConfigError(f"λ doit être dans (0,1] (reçu {self.lam})")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction doit être dans (0,1)")
        for name in ("num_layers", "num_heads", "head_dim", "embed_dim", "relation_hidden",
                     "fusion_hidden", "att_dim", "classifier_hidden", "local_proj_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} doit être >= 1")
        for kind in (self.score_activation, self.activation, self.aggregate_activation):
            if kind is not None and kind not in te.ACTIVATIONS:
                raise ConfigError(f"activation inconnue: {kind}")
        if not 0.0 <= self.leaky_slope < 1.0:
            raise ConfigError(f"leaky_slope doit être dans [0,1) (reçu {self.leaky_slope})")

    def resolved(self, num_nodes: int) -> "TrainConfig":
        """Copie avec epochs et local_proj matérialisés"""
        epochs = self.epochs if self.epochs is not None else PROFILE_EPOCHS[self.profile]
        local_proj = self.local_proj if self.local_proj is not None else num_nodes > LOCAL_PROJ_THRESHOLD
        return replace(self, epochs=epochs, local_proj=bool(local_proj))

    def layer_config(self) -> na.LayerConfig:
        """σ d'agrégation : aggregate_activation, sinon tanh en mode fidèle, sinon activation"""
        aggregate = self.aggregate_activation
        if aggregate is None and not self.faithful_dims:
            aggregate = self.activation
        return na.LayerConfig(
            num_layers=self.num_layers,
            num_heads=self.num_heads,
            head_dim=self.head_dim,
            score_activation=self.score_activation,
            activation=aggregate,
            faithful_dims=self.faithful_dims,
            leaky_slope=self.leaky_slope,
        )


@dataclass
class ModelState:
    """Paramètres des quatre modules, moments d'Adam et configuration"""
    config: TrainConfig
    num_nodes: int
    feature_dim: int
    num_relations: int
    relation: ra.RelationAttentionParams
    neighborhood: na.NeighborhoodAttentionParams
    fusion: fc.FusionParams
    classifier: fc.ClassifierParams
    adam: AdamState = field(default_factory=AdamState)

    def tensors(self) -> Dict[str, Tensor]:
        """Tous les paramètres, dans l'ordre de déclaration"""
        named = {}
        named.update(self.relation.tensors())
        named.update(self.neighborhood.tensors())
        named.update(self.fusion.tensors())
        named.update(self.classifier.tensors())
        return named

    def zero_grad(self):
        for t in self.tensors().values():
            t.zero_grad()

    def snapshot(self) -> Dict:
        return {
            "values": {k: t.values.copy() for k, t in self.tensors().items()},
            "adam": copy.deepcopy(self.adam),
        }

    def restore(self, snap: Dict):
        for name, t in self.tensors().items():
            t.values = snap["values"][name].copy()
        self.adam = copy.deepcopy(snap["adam"])


@dataclass
class ForwardResult:
    probs: Tensor
    beta: Tensor
    phi: Optional[Tensor]
    alphas: List[Tensor]


@dataclass
class EpochLog:
    epoch: int
    loss: float
    train_auc: float
    train_recall: float
    test_auc: float
    test_recall: float
    beta: List[float]
    phi: Optional[List[float]]


# ---------------------------------------------------------------------------
# Initialisation
# ---------------------------------------------------------------------------

def local_width(config: TrainConfig, num_nodes: int) -> int:
    return config.local_proj_dim if config.local_proj else num_nodes


def build_state(config: TrainConfig, num_nodes: int, feature_dim: int, num_relations: int) -> ModelState:
    """Construit et initialise les paramètres pour des dimensions données"""
    if config.epochs is None or config.local_proj is None:
        config = config.resolved(num_nodes)
    config.validate()
    if num_nodes < 1 or feature_dim < 1 or num_relations < 1:
        raise ConfigError("dimensions du graphe incohérentes")

    rng = np.random.default_rng(derive_seed(config.seed, "init"))
    h_width = local_width(config, num_nodes)
    g0_width = h_width + feature_dim if config.variant == "F" else h_width
    layer_config = config.layer_config()

    relation = ra.RelationAttentionParams.init(
        rng, num_nodes, config.relation_hidden, config.local_proj_dim if config.local_proj else None)
    neighborhood = na.NeighborhoodAttentionParams.init(rng, g0_width, layer_config)
    fusion = fc.FusionParams.init(
        rng,
        {"local": h_width, "longrange": layer_config.output_width(g0_width), "feature": feature_dim},
        embed_dim=config.embed_dim, hidden=config.fusion_hidden, att_dim=config.att_dim,
        activation=config.activation, slope=config.leaky_slope,
    )
    classifier = fc.ClassifierParams.init(rng, config.embed_dim, config.classifier_hidden, config.activation,
                                          config.leaky_slope)
    return ModelState(config, num_nodes, feature_dim, num_relations, relation, neighborhood, fusion, classifier)


def init(graph: MultiRelationGraph, config: TrainConfig) -> ModelState:
    """Initialisation Xavier uniforme / biais nuls, reproductible par graine"""
    config = config.resolved(graph.num_nodes)
    if config.local_proj:
        info(f"Projection locale activée: h projeté de {graph.num_nodes} vers {config.local_proj_dim} colonnes")
    return build_state(config, graph.num_nodes, graph.feature_dim, graph.num_relations)


# ---------------------------------------------------------------------------
# Passe avant
# ---------------------------------------------------------------------------

def forward_pass(graph: MultiRelationGraph, state: ModelState, variant: Optional[str] = None,
                 forced_phi: Optional[np.ndarray] = None) -> ForwardResult:
    """
    Probabilités de fraude de tous les nœuds

    Args:
        variant: FULL, V1 (M(h) seul), V2 (M(g) seul) ou F (entrée [h ‖ f]) ; défaut = celle de la config
        forced_phi: Poids d'information imposés (FULL / F)
    """
    variant = variant or state.config.variant
    if variant not in VARIANTS:
        raise ConfigError(f"variante inconnue: {variant}")
    if graph.num_nodes != state.num_nodes or graph.num_relations != state.num_relations \
            or graph.feature_dim != state.feature_dim:
        raise ConfigError("le graphe ne correspond pas aux dimensions du modèle")

    beta = ra.compute_beta(graph, state.relation)
    h = ra.local_embeddings(graph, beta, state.relation.proj)
    layer_config = state.config.layer_config()
    phi = None
    alphas: List[Tensor] = []

    if variant == "V1":
        z = fc.project(h, "local", state.fusion)
    else:
        f = Tensor(graph.features)
        g0 = te.concat([h, f]) if variant == "F" else h
        g, alphas = na.forward(g0, graph, state.neighborhood, layer_config)
        if variant == "V2":
            z = fc.project(g, "longrange", state.fusion)
        else:
            z, phi = fc.fuse(h, g, f, state.fusion, forced_phi)

    probs = fc.predict(z, state.classifier)
    return ForwardResult(probs, beta, phi, alphas)


def _safe_report(scores: np.ndarray, labels: np.ndarray, threshold: float) -> MetricReport:
    try:
        return metric_report(scores, labels, threshold)
    except MetricError:
        nan = float("nan")
        return MetricReport(nan, nan, threshold, 0, 0, 0, 0)


def evaluate_state(graph: MultiRelationGraph, split: DatasetSplit, state: ModelState,
                   threshold: float = 0.5,
                   strict: bool = False) -> Tuple[MetricReport, MetricReport, ForwardResult]:
    """
    Rapports train et test d'un état déjà entraîné

    Args:
        threshold: Seuil du rappel
        strict: Lever MetricError si le test ne contient pas les deux classes (sinon ligne NaN)

    Returns:
        (rapport train, rapport test, résultat de la passe avant)
    """
    result = forward_pass(graph, state)
    scores = result.probs.values.ravel()
    train_report = _safe_report(scores[split.train], graph.labels[split.train], threshold)
    if strict:
        test_report = metric_report(scores[split.test], graph.labels[split.test], threshold)
    else:
        test_report = _safe_report(scores[split.test], graph.labels[split.test], threshold)
    return train_report, test_report, result


# ---------------------------------------------------------------------------
# Boucle d'entraînement
# ---------------------------------------------------------------------------

def train(graph: MultiRelationGraph, split: DatasetSplit, config: TrainConfig,
          out_dir: Optional[str] = None, progress: bool = True,
          threshold: float = 0.5) -> Tuple[ModelState, List[EpochLog]]:
    """
    Entraînement plein lot : passe avant → perte sur les labels du train → rétropropagation → Adam

    Args:
        out_dir: Si fourni, écrit train_log.csv et model.hagnn
        progress: Afficher une barre de progression (si la sortie d'erreur est un terminal)
        threshold: Seuil du rappel dans le journal

    Returns:
        (état final, journal par époque)
    """
    if split.train_fraud.size == 0 or split.train_legit.size == 0:
        raise MetricError("le train doit contenir les deux classes")

    state = init(graph, config)
    cfg = state.config
    info(f"Entraînement {cfg.variant}: {cfg.epochs} époques, lr={cfg.lr}, λ={cfg.lam}, graine={cfg.seed}")

    logs: List[EpochLog] = []
    last_good = state.snapshot()
    epochs = tqdm(range(1, cfg.epochs + 1), desc=f"train {cfg.variant}", unit="epoch",
                  disable=not (progress and sys.stderr.isatty()))
    try:
        for epoch in epochs:
            state.zero_grad()
            result = forward_pass(graph, state)
            loss = fc.class_balanced_loss(result.probs, split.train_legit, split.train_fraud, cfg.lam)
            te.backward(loss)
            params = state.tensors()
            grads = {name: t.grad for name, t in params.items() if t.grad is not None}
            te.adam_step(params, grads, state.adam, cfg.lr)

            train_report, test_report, evaluated = evaluate_state(graph, split, state, threshold)
            log = EpochLog(
                epoch=epoch,
                loss=loss.item(),
                train_auc=train_report.auc,
                train_recall=train_report.recall,
                test_auc=test_report.auc,
                test_recall=test_report.recall,
                beta=evaluated.beta.values.ravel().tolist(),
                phi=evaluated.phi.values.mean(axis=0).tolist() if evaluated.phi is not None else None,
            )
            logs.append(log)
            last_good = state.snapshot()
            epochs.set_postfix(loss=f"{log.loss:.4f}", train_auc=f"{log.train_auc:.3f}")
            info(f"époque {epoch}: perte={log.loss:.6f} auc_train={log.train_auc:.4f} auc_test={log.test_auc:.4f}")
    except NumericError as e:
        error(f"Erreur numérique à l'époque {len(logs) + 1}: {e}")
        state.restore(last_good)
        if out_dir:
            save_checkpoint(state, os.path.join(out_dir, "model.hagnn"))
            write_epoch_logs(logs, os.path.join(out_dir, "train_log.csv"), graph.num_relations)
            warning(f"Dernier état valide conservé (époque {len(logs)})")
        raise

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_epoch_logs(logs, os.path.join(out_dir, "train_log.csv"), graph.num_relations)
        save_checkpoint(state, os.path.join(out_dir, "model.hagnn"))
    return state, logs


def epoch_logs_frame(logs: List[EpochLog], num_relations: int) -> pd.DataFrame:
    columns = (["epoch", "loss", "train_auc", "train_recall", "test_auc", "test_recall"]
               + [f"beta_{r + 1}" for r in range(num_relations)]
               + ["phi_local", "phi_longrange", "phi_feature"])
    rows = []
    for log in logs:
        phi = log.phi if log.phi is not None else [float("nan")] * 3
        rows.append([log.epoch, log.loss, log.train_auc, log.train_recall, log.test_auc, log.test_recall]
                    + list(log.beta) + list(phi))
    return pd.DataFrame(rows, columns=columns)


def write_epoch_logs(logs: List[EpochLog], path: str, num_relations: int) -> str:
    """train_log.csv ; φ vide pour les variantes sans fusion"""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    epoch_logs_frame(logs, num_relations).to_csv(path, index=False, float_format="%.17g",
                                                 na_rep="", lineterminator="\n")
    return path


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def _blocks(state: ModelState) -> List[Tuple[str, str, np.ndarray]]:
    blocks = []
    for name, t in state.tensors().items():
        blocks.append((name, "param", t.values))
    for name, t in state.tensors().items():
        blocks.append((name, "adam_m", state.adam.m.get(name, np.zeros(t.shape))))
        blocks.append((name, "adam_v", state.adam.v.get(name, np.zeros(t.shape))))
    return blocks


def save_checkpoint(state: ModelState, path: str) -> str:
    """
    Conteneur binaire versionné :
    MAGIC | version (u32 LE) | longueur d'en-tête (u32 LE) | en-tête JSON |
    blocs float64 little-endian dans l'ordre de déclaration | SHA-256 de ce qui précède
    """
    blocks = _blocks(state)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(state.config),
        "num_nodes": state.num_nodes,
        "feature_dim": state.feature_dim,
        "num_relations": state.num_relations,
        "seed": state.config.seed,
        "step": state.adam.step,
        "blocks": [{"name": n, "kind": k, "shape": list(a.shape)} for n, k, a in blocks],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    body = bytearray()
    body += CHECKPOINT_MAGIC
    body += struct.pack("<II", CHECKPOINT_VERSION, len(header_bytes))
    body += header_bytes
    for _, _, values in blocks:
        body += np.ascontiguousarray(values, dtype="<f8").tobytes()
    digest = hashlib.sha256(bytes(body)).digest()

    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, 'wb') as f:
        f.write(bytes(body))
        f.write(digest)
    return path


def load_checkpoint(path: str) -> ModelState:
    """Relit un checkpoint ; CheckpointError si tronqué, altéré ou de version inconnue"""
    try:
        with open(path, 'rb') as f:
            data = f.read()
    except OSError as e:
        raise CheckpointError(f"checkpoint corrupt: lecture impossible ({e})")

    prefix = len(CHECKPOINT_MAGIC) + 8
    if len(data) < prefix + 32 or not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError("checkpoint corrupt: en-tête absent")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checkpoint corrupt: empreinte invalide (fichier tronqué ou modifié)")
    version, header_len = struct.unpack("<II", body[len(CHECKPOINT_MAGIC):prefix])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint corrupt: version {version} non supportée")
    try:
        header = json.loads(body[prefix:prefix + header_len].decode("utf-8"))
        config = TrainConfig.from_dict(header["config"])
    except (ValueError, KeyError, ConfigError) as e:
        raise CheckpointError(f"checkpoint corrupt: en-tête illisible ({e})")

    state = build_state(config, header["num_nodes"], header["feature_dim"], header["num_relations"])
    params = state.tensors()
    offset = prefix + header_len
    for block in header["blocks"]:
        shape = tuple(block["shape"])
        count = int(np.prod(shape))
        end = offset + 8 * count
        if end > len(body):
            raise CheckpointError("checkpoint corrupt: bloc tronqué")
        values = np.frombuffer(body[offset:end], dtype="<f8").reshape(shape).astype(np.float64)
        offset = end
        name, kind = block["name"], block["kind"]
        if name not in params or params[name].shape != shape:
            raise CheckpointError(f"checkpoint corrupt: bloc inattendu {name} {shape}")
        if kind == "param":
            params[name].values = values
        elif kind == "adam_m":
            state.adam.m[name] = values
        elif kind == "adam_v":
            state.adam.v[name] = values
        else:
            raise CheckpointError(f"checkpoint corrupt: type de bloc inconnu {kind}")
    if offset != len(body):
        raise CheckpointError("checkpoint corrupt: données en trop")
    state.adam.step = int(header["step"])
    return state
