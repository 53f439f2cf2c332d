"""
Utilitaires d'exécution : configuration, graines, version et manifeste de run
"""
import copy
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional

from errors import ConfigError

ROOT_DIR = Path(__file__).resolve().parent
VERSION_FILE = ROOT_DIR / "VERSION"
CONFIG_FILE = ROOT_DIR / "config.json"

DEFAULT_CONFIG = {
    "train": {
        "profile": "synthetic",
        "epochs": None,
        "lr": 5e-3,
        "num_layers": 2,
        "num_heads": 8,
        "head_dim": 4,
        "lam": 0.4,
        "embed_dim": 32,
        "relation_hidden": 64,
        "fusion_hidden": 64,
        "att_dim": 32,
        "classifier_hidden": 32,
        "local_proj": None,
        "local_proj_dim": 64,
        "seed": 0,
        "variant": "FULL",
        "train_fraction": 0.4,
        "score_activation": "leaky_relu",
        "activation": "leaky_relu",
        "aggregate_activation": None,
        "leaky_slope": 0.2,
        "faithful_dims": False,
    },
    "synth": {
        "num_nodes": 1000,
        "fraud_fraction": 0.1,
        "num_relations": 3,
        "intra_prob": None,
        "camouflage_rate": 0.3,
        "feature_dim": 16,
        "feature_camouflage_rate": 0.3,
        "avg_degree": 2.0,
        "fraud_density": None,
        "inter_ratio": 0.0,
        "feature_shift": 1.5,
    },
    "evaluation": {
        "recall_threshold": 0.5,
        "feature_similarity_mode": "normalized",
        "clique_cap": 500,
        "lambdas": [0.2, 0.4, 0.6, 0.8],
        "seeds": [0, 1, 2, 3, 4],
    },
}


def load_config(config_path: Optional[str] = None) -> Dict:
    """
    Charge la configuration JSON et la fusionne avec les valeurs par défaut

    Args:
        config_path: Chemin du fichier (None = config.json du dépôt)

    Returns:
        Dictionnaire {section: {clé: valeur}} complet
    """
    path = Path(config_path) if config_path else CONFIG_FILE
    resolved = copy.deepcopy(DEFAULT_CONFIG)
    if not path.exists():
        if config_path:
            raise ConfigError(f"fichier de configuration introuvable: {path}")
        return resolved

    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: JSON invalide ({e})")

    if not isinstance(data, dict):
        raise ConfigError(f"{path}: un objet JSON est attendu")
    for section, values in data.items():
        if section not in resolved:
            raise ConfigError(f"{path}: section inconnue '{section}'")
        if not isinstance(values, dict):
            raise ConfigError(f"{path}: la section '{section}' doit être un objet")
        for key, value in values.items():
            if key not in resolved[section]:
                raise ConfigError(f"{path}: clé inconnue '{section}.{key}'")
            resolved[section][key] = value
    return resolved


def derive_seed(root_seed: int, label: str) -> int:
    """Sous-graine déterministe pour un usage nommé (init, split, synth, clique)"""
    digest = hashlib.sha256(f"{int(root_seed)}:{label}".encode("utf-8")).hexdigest()
    return int(digest[:16], 16) % (2 ** 32)


def file_digest(path: str) -> str:
    """SHA-256 d'un fichier, lu par blocs"""
    h = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def directory_digests(paths: Iterable[str]) -> Dict[str, str]:
    """Empreintes de fichiers ou de dossiers (tous les .csv/.json/.hagnn d'un dossier)"""
    digests = {}
    for path in paths:
        if os.path.isdir(path):
            for name in sorted(os.listdir(path)):
                if name.endswith((".csv", ".json", ".hagnn")):
                    full = os.path.join(path, name)
                    digests[full] = file_digest(full)
        elif os.path.exists(path):
            digests[path] = file_digest(path)
    return digests


def get_current_version(version_file=VERSION_FILE) -> str:
    """
    Lit la version actuelle depuis le fichier VERSION

    Returns:
        str: Version actuelle ou "1.0.0" si le fichier n'existe pas
    """
    version_path = Path(version_file)
    try:
        if version_path.exists():
            return version_path.read_text(encoding='utf-8').strip()
    except OSError:
        pass
    return "1.0.0"


@dataclass
class RunManifest:
    """Tout ce qu'il faut pour rejouer une commande"""
    command: str
    config: Dict
    seed: int
    output_dir: str
    input_digests: Dict[str, str] = field(default_factory=dict)
    tool_version: str = field(default_factory=get_current_version)
    notes: List[str] = field(default_factory=list)

    def note(self, message: str):
        self.notes.append(message)

    def write(self, path: Optional[str] = None) -> str:
        """Écrit run_manifest.json (clés triées, sans horodatage)"""
        path = path or os.path.join(self.output_dir, "run_manifest.json")
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write("\n")
        return path
