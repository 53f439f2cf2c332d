"""
Module de logging pour le debug
"""
import logging
import os
import sys
from datetime import datetime

logger = logging.getLogger("hagnn")
logger.setLevel(logging.DEBUG)
logger.propagate = False

# Désactiver les messages DEBUG des bibliothèques bavardes
logging.getLogger('numexpr').setLevel(logging.WARNING)
logging.getLogger('matplotlib').setLevel(logging.WARNING)

_configured_dirs = set()


def setup_logging(output_dir: str = ".", level: int = logging.INFO) -> str:
    """
    Ajoute un fichier de log horodaté dans <output_dir>/logs

    Args:
        output_dir: Dossier de sortie de la commande
        level: Niveau minimal écrit dans le fichier

    Returns:
        Chemin du fichier log
    """
    log_dir = os.path.join(output_dir, "logs")
    key = os.path.abspath(log_dir)
    if key in _configured_dirs:
        return next(h.baseFilename for h in logger.handlers
                     if isinstance(h, logging.FileHandler) and h.baseFilename.startswith(key))

    # Créer le dossier logs s'il n'existe pas
    if not os.path.exists(log_dir):
        os.makedirs(log_dir)

    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    log_filename = os.path.join(log_dir, f"debug_{timestamp}.log")

    handler = logging.FileHandler(log_filename, encoding='utf-8')
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter('%(asctime)s - %(levelname)s - %(message)s'))
    logger.addHandler(handler)
    _configured_dirs.add(key)
    return log_filename


def close_logging():
    """Ferme et retire les fichiers de log ouverts par setup_logging"""
    for handler in [h for h in logger.handlers if isinstance(h, logging.FileHandler)]:
        logger.removeHandler(handler)
        handler.close()
    _configured_dirs.clear()


def debug(msg):
    """Message de debug (fichier log uniquement)"""
    logger.debug(msg)


def info(msg):
    """Affiche un message d'information (uniquement dans le fichier log, pas dans la console)"""
    logger.info(msg)


def error(msg):
    """Affiche un message d'erreur"""
    logger.error(msg)
    print(f"[ERROR] {msg}", file=sys.stderr)


def warning(msg):
    """Affiche un message d'avertissement"""
    logger.warning(msg)
    print(f"[WARNING] {msg}", file=sys.stderr)


def exception(msg):
    """Enregistre une erreur avec sa trace complète (fichier log uniquement)"""
    logger.exception(msg)
