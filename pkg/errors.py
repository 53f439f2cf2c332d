"""
Exceptions du projet
"""


class HAGNNError(Exception):
    """Erreur de base du projet"""


class IngestionError(HAGNNError):
    """Fichier CSV, table d'événements ou SynthConfig invalide"""


class SplitError(HAGNNError):
    """Découpage train/test impossible (classe absente)"""


class ShapeError(HAGNNError):
    """Dimensions incompatibles entre tenseurs"""


class NumericError(HAGNNError):
    """Une opération a produit NaN ou Inf"""

    def __init__(self, op_name: str, detail: str = ""):
        self.op_name = op_name
        message = f"valeur non finie produite par '{op_name}'"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class ConfigError(HAGNNError):
    """Configuration invalide"""


class CheckpointError(HAGNNError):
    """Checkpoint tronqué ou illisible"""


class MetricError(HAGNNError):
    """Métrique non définie pour les entrées fournies"""
