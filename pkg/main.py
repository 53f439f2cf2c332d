"""
Point d'entrée principal de HA-GNN

Sous-commandes : synth, build, stats, train, eval, ablate, sweep, gradcheck.
Codes de sortie : 0 succès, 1 échec d'exécution, 2 erreur d'utilisation.
"""
import argparse
import os
import sys
from dataclasses import asdict
from typing import List, Optional

import pandas as pd

from debug_logger import close_logging, error, exception, info, setup_logging
from errors import (CheckpointError, ConfigError, HAGNNError, IngestionError, MetricError,
                    NumericError, ShapeError, SplitError)
from run_manifest import RunManifest, derive_seed, directory_digests, load_config

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Drapeaux ou configuration invalides (code 2)"""


def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"liste de nombres attendue: {text}")


def _int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"liste d'entiers attendue: {text}")


def _train_config(args, config: dict):
    """TrainConfig = config.json, puis drapeaux"""
    from training import TrainConfig

    values = dict(config["train"])
    overrides = {
        "seed": getattr(args, "seed", None),
        "variant": getattr(args, "variant", None),
        "epochs": getattr(args, "epochs", None),
        "lam": getattr(args, "lam", None),
        "profile": getattr(args, "profile", None),
        "train_fraction": getattr(args, "train_fraction", None),
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return TrainConfig.from_dict(values)
    except (ConfigError, TypeError) as e:
        raise UsageError(str(e))


def _load_config(args) -> dict:
    try:
        return load_config(getattr(args, "config", None))
    except ConfigError as e:
        raise UsageError(str(e))


def _load_data(path: str):
    from graph_store import load_graph

    if not os.path.isdir(path):
        raise UsageError(f"dossier de données introuvable: {path}")
    return load_graph(path)


def _start(command: str, out: str, config: dict, seed: int, inputs: List[str]) -> RunManifest:
    """Prépare le dossier de sortie, le log et le manifeste (écrit avant tout calcul)"""
    os.makedirs(out, exist_ok=True)
    setup_logging(out)
    info(f"Commande {command} → {out}")
    manifest = RunManifest(command=command, config=config, seed=seed, output_dir=out,
                           input_digests=directory_digests(inputs))
    manifest.write()
    return manifest


def _note(manifest: RunManifest, message: str):
    info(message)
    manifest.note(message)


# ---------------------------------------------------------------------------
# Commandes
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    from graph_store import SynthConfig, generate_synthetic, write_graph

    config = _load_config(args)
    values = dict(config["synth"])
    overrides = {
        "num_nodes": args.nodes,
        "fraud_fraction": args.fraud_frac,
        "num_relations": args.relations,
        "camouflage_rate": args.camouflage,
        "feature_camouflage_rate": args.feature_camouflage,
        "feature_dim": args.feature_dim,
        "intra_prob": args.intra_prob,
        "avg_degree": args.avg_degree,
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    synth = SynthConfig(**values, seed=derive_seed(args.seed, "synth"))
    try:
        synth.validate()
    except IngestionError as e:
        raise UsageError(str(e))

    manifest = _start("synth", args.out, {"synth": asdict(synth)}, args.seed, [])
    graph, echo = generate_synthetic(synth)
    meta = asdict(echo)
    meta["root_seed"] = args.seed
    write_graph(graph, args.out, meta)
    _note(manifest, f"{graph.num_nodes} nœuds, {int((graph.labels == 1).sum())} fraudeurs, "
                    f"{graph.num_relations} relations")
    manifest.write()
    print(f"✓ Graphe synthétique écrit dans {args.out}")
    return EXIT_OK


def cmd_build(args) -> int:
    from graph_store import RELATION_RULES, build_relations_from_events

    config = _load_config(args)
    rules = [r for r in args.rules.split(",") if r]
    unknown = [r for r in rules if r not in RELATION_RULES]
    if not rules or unknown:
        raise UsageError(f"règle(s) inconnue(s): {', '.join(unknown) or '(aucune)'}")
    if not os.path.exists(args.events):
        raise UsageError(f"table d'événements introuvable: {args.events}")

    cap = config["evaluation"]["clique_cap"]
    manifest = _start("build", args.out, {"rules": rules, "clique_cap": cap}, args.seed, [args.events])
    events = pd.read_csv(args.events)
    for r, rule in enumerate(rules):
        edges = build_relations_from_events(events, rule, r, cap=cap,
                                            seed=derive_seed(args.seed, f"clique:{rule}"))
        if edges.subsampled_groups:
            _note(manifest, f"{rule}: {edges.subsampled_groups} groupe(s) sous-échantillonné(s) à {cap} nœuds")
        path = os.path.join(args.out, f"edges_{rule}.csv")
        pd.DataFrame(edges.edges, columns=["src", "dst"]).to_csv(path, index=False, lineterminator="\n")
        print(f"✓ {path}: {len(edges)} arêtes")
    manifest.write()
    return EXIT_OK


def cmd_stats(args) -> int:
    from evaluation import camouflage_report

    config = _load_config(args)
    mode = args.mode or config["evaluation"]["feature_similarity_mode"]
    manifest = _start("stats", args.out, {"feature_similarity_mode": mode}, 0, [args.data])
    graph = _load_data(args.data)
    _note(manifest, "similarité de labels: part des arêtes dont les extrémités étiquetées ont le même label")
    _note(manifest, f"similarité de caractéristiques: mode {mode}")
    report = camouflage_report(graph, mode)
    path = os.path.join(args.out, "camouflage_report.csv")
    report.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    manifest.write()
    print(report.to_string(index=False))
    return EXIT_OK


def cmd_train(args) -> int:
    from graph_store import split_nodes
    from training import LOCAL_PROJ_THRESHOLD, evaluate_state, train

    config = _load_config(args)
    train_config = _train_config(args, config)
    graph = _load_data(args.data)
    resolved = train_config.resolved(graph.num_nodes)
    manifest = _start("train", args.out, {"train": asdict(resolved)}, resolved.seed, [args.data])
    _note(manifest, f"perte: λ={resolved.lam} sur les légitimes du train, poids 1 sur les fraudeurs")
    if resolved.local_proj:
        _note(manifest, f"projection locale activée (N={graph.num_nodes} > {LOCAL_PROJ_THRESHOLD} ou config)")

    split = split_nodes(graph, resolved.train_fraction, derive_seed(resolved.seed, "split"))
    _note(manifest, f"découpage {split.digest()}: {split.train.size} train, {split.test.size} test")
    threshold = config["evaluation"]["recall_threshold"]
    state, logs = train(graph, split, resolved, out_dir=args.out, progress=True, threshold=threshold)
    _, test_report, _ = evaluate_state(graph, split, state, threshold)
    manifest.write()
    print(f"✓ {len(logs)} époques, AUC test {test_report.auc:.4f}, rappel test {test_report.recall:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from graph_store import split_nodes
    from training import evaluate_state, load_checkpoint

    config = _load_config(args)
    threshold = args.threshold if args.threshold is not None else config["evaluation"]["recall_threshold"]
    if not os.path.exists(args.model):
        raise UsageError(f"modèle introuvable: {args.model}")
    manifest = _start("eval", args.out, {"recall_threshold": threshold}, 0, [args.model, args.data])
    state = load_checkpoint(args.model)
    manifest.seed = state.config.seed
    graph = _load_data(args.data)
    split = split_nodes(graph, state.config.train_fraction, derive_seed(state.config.seed, "split"))
    train_report, test_report, _ = evaluate_state(graph, split, state, threshold, strict=True)

    rows = [{"split": "train", **asdict(train_report)}, {"split": "test", **asdict(test_report)}]
    path = os.path.join(args.out, "metric_report.csv")
    pd.DataFrame(rows).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    manifest.write()
    print(f"✓ AUC test {test_report.auc:.4f}, rappel test {test_report.recall:.4f}")
    return EXIT_OK


def _seeds(args, config) -> List[int]:
    return args.seeds if args.seeds else list(config["evaluation"]["seeds"])


def cmd_ablate(args) -> int:
    from evaluation import ablate, mean_auc_by, results_frame

    config = _load_config(args)
    base = _train_config(args, config)
    seeds = _seeds(args, config)
    graph = _load_data(args.data)
    resolved = base.resolved(graph.num_nodes)
    manifest = _start("ablate", args.out, {"train": asdict(resolved), "seeds": seeds, "with_f": args.with_f},
                      seeds[0], [args.data])
    results = ablate(graph, None, resolved, seeds, with_f=args.with_f, jobs=args.jobs,
                     threshold=config["evaluation"]["recall_threshold"])
    results_frame(results).to_csv(os.path.join(args.out, "ablation.csv"), index=False,
                                  float_format="%.17g", lineterminator="\n")
    for key, value in mean_auc_by(results).items():
        _note(manifest, f"AUC moyenne {key}: {value:.4f}")
        print(f"{key}: AUC moyenne {value:.4f}")
    manifest.write()
    return EXIT_OK


def cmd_sweep(args) -> int:
    from evaluation import lambda_sweep, mean_auc_by, results_frame

    config = _load_config(args)
    base = _train_config(args, config)
    seeds = _seeds(args, config)
    lambdas = args.lambdas or list(config["evaluation"]["lambdas"])
    if any(not 0.0 < lam <= 1.0 for lam in lambdas):
        raise UsageError(f"λ doit être dans (0,1]: {lambdas}")
    graph = _load_data(args.data)
    resolved = base.resolved(graph.num_nodes)
    manifest = _start("sweep", args.out, {"train": asdict(resolved), "seeds": seeds, "lambdas": lambdas},
                      seeds[0], [args.data])
    results = lambda_sweep(graph, None, resolved, lambdas, seeds, jobs=args.jobs,
                           threshold=config["evaluation"]["recall_threshold"])
    results_frame(results).to_csv(os.path.join(args.out, "lambda_sweep.csv"), index=False,
                                  float_format="%.17g", lineterminator="\n")
    for key, value in mean_auc_by(results).items():
        _note(manifest, f"AUC moyenne λ={key}: {value:.4f}")
        print(f"λ={key}: AUC moyenne {value:.4f}")
    manifest.write()
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    import gradient_check

    manifest = _start("gradcheck", args.out, {"epsilon": gradient_check.EPSILON,
                                              "tolerance": gradient_check.TOLERANCE}, args.seed, [])
    report = gradient_check.run(args.seed)
    worst = report.worst
    _note(manifest, f"pire erreur relative {worst.max_rel_error:.3e} sur {worst.name}{list(worst.worst_index)}")
    manifest.write()
    print(f"worst relative error: {worst.max_rel_error:.3e} ({worst.name})")
    if not report.passed:
        error(f"Gradient incorrect pour {worst.name} (erreur {worst.max_rel_error:.3e} > {report.tolerance:g})")
        return EXIT_RUNTIME
    return EXIT_OK


# ---------------------------------------------------------------------------
# Analyse des arguments
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hagnn", description="Détection de fraude par GNN à attention hiérarchique")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="Générer un graphe synthétique camouflé")
    p.add_argument("--nodes", type=int)
    p.add_argument("--fraud-frac", type=float)
    p.add_argument("--relations", type=int)
    p.add_argument("--camouflage", type=float)
    p.add_argument("--feature-camouflage", type=float)
    p.add_argument("--feature-dim", type=int)
    p.add_argument("--intra-prob", type=_float_list)
    p.add_argument("--avg-degree", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build", help="Construire des relations depuis une table d'événements")
    p.add_argument("--events", required=True)
    p.add_argument("--rules", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("stats", help="Statistiques de camouflage")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("normalized", "raw"))
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    def add_train_flags(p, with_variant=True):
        p.add_argument("--data", required=True)
        p.add_argument("--config")
        p.add_argument("--epochs", type=int)
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--profile")
        p.add_argument("--train-fraction", type=float)
        if with_variant:
            p.add_argument("--variant")
        p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="Entraîner un modèle")
    add_train_flags(p)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="Évaluer un checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="Comparer V1, V2 et FULL")
    add_train_flags(p, with_variant=False)
    p.add_argument("--seeds", type=_int_list)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--with-f", action="store_true")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="Sensibilité à λ")
    add_train_flags(p)
    p.add_argument("--lambdas", type=_float_list)
    p.add_argument("--seeds", type=_int_list)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="Vérifier les gradients par différences finies")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    if getattr(args, "jobs", 1) < 1:
        error("--jobs doit être >= 1")
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError) as e:
        error(str(e))
        return EXIT_USAGE
    except (NumericError, CheckpointError, MetricError, SplitError, IngestionError, ShapeError) as e:
        exception(f"Échec de {args.command}")
        error(f"{type(e).__name__}: {e}")
        return EXIT_RUNTIME
    except HAGNNError as e:
        exception(f"Échec de {args.command}")
        error(str(e))
        return EXIT_RUNTIME
    finally:
        close_logging()


if __name__ == "__main__":
    sys.exit(main())
