"""
CLI Interface
Command-line harness: data preparation, training, evaluation, inductive
inference, verification suites and hyperparameter sweeps.

Every command takes --config FILE and repeated --set key=value overrides and
writes its artifacts under the configured output directory.
"""

import argparse
import csv
import sys
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import yaml

from src.core.config import ExperimentConfig, build_config, load_config, load_grid
from src.core.data.datasets import (
    DatasetBundle,
    IdMap,
    check_known_statistics,
    inductive_split,
    load_dataset,
    parse_interactions,
    read_split_manifest,
    synthetic_block_interactions,
    write_interaction_files,
    write_split_manifest,
)
from src.core.errors import ConfigError, TrainingDivergedError
from src.core.evaluation.ranking import EvalResult, evaluate_embeddings, format_report
from src.core.graph.interaction_graph import extend
from src.core.inductive.inference import (
    InductiveContext,
    inductive_embeddings,
    make_lightgcn_inductive,
    recommend_for,
    run_inductive_protocol,
)
from src.core.models.networks import LightGCNModel, RecommenderModel, build_model_from_config
from src.core.observability.logging import get_logger
from src.core.storage.checkpoint import load_checkpoint, save_checkpoint
from src.core.storage.history_db import ExperimentHistoryDB
from src.core.training.trainer import fit
from src.core.verification.verifier import SUITES, run_verification

logger = get_logger("cli")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING_FILE = 4
EXIT_VERIFICATION_FAILED = 5
EXIT_DIVERGED = 6

COMMANDS = ("synthetic", "prepare-data", "train", "evaluate", "infer-inductive", "verify", "sweep")

SPLIT_MANIFEST = "split_manifest.txt"
INDUCTIVE_MANIFEST = "inductive_manifest.txt"
CHECKPOINT_DIR = "checkpoint"
TRAINING_LOG = "training_log.csv"
METRICS_FILE = "metrics.csv"
REPORT_FILE = "report.txt"
RECOMMENDATIONS_FILE = "recommendations.txt"
LEADERBOARD_FILE = "leaderboard.csv"


# ============================================================================
# Metric files
# ============================================================================

@dataclass
class MetricRecord:
    """One row of a metrics file: a model configuration and its metrics per k."""
    model: str
    layers: int
    fusion: str
    results: Dict[int, EvalResult]
    seed: int
    wall_time: float = 0.0


def _metric_header(ks: Sequence[int]) -> List[str]:
    columns = ["model", "layers", "fusion"]
    for k in ks:
        columns.extend([f"recall@{k}", f"ndcg@{k}"])
    return columns + ["seed", "wall_time"]


def write_metrics(records: Sequence[MetricRecord], path) -> Path:
    """
    Append metric rows (percentages) to a CSV file, writing the header only
    when the file is new.

    Raises:
        ValueError: if records is empty or the existing header has other columns
        OSError: if the path cannot be written

    Example:
        >>> write_metrics([MetricRecord("twin_cf_lgcn_u", 3, "concat", {20: r}, 0, 12.5)], "runs/metrics.csv")
        PosixPath('runs/metrics.csv')
    """
    if not records:
        raise ValueError("write_metrics needs at least one record")
    ks = sorted(records[0].results)
    header = _metric_header(ks)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    existing = None
    if path.exists() and path.stat().st_size > 0:
        with open(path, "r", newline="", encoding="utf-8") as f:
            existing = next(csv.reader(f), None)
        if existing != header:
            raise ValueError(f"Metrics file {path} has columns {existing}, expected {header}")

    with open(path, "a", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        if existing is None:
            writer.writerow(header)
        for record in records:
            if sorted(record.results) != ks:
                raise ValueError(f"Record for {record.model} has cutoffs {sorted(record.results)}, expected {ks}")
            row: List[Any] = [record.model, record.layers, record.fusion]
            for k in ks:
                pct = record.results[k].as_percent()
                row.extend([f"{pct['recall']:.4f}", f"{pct['ndcg']:.4f}"])
            row.extend([record.seed, f"{record.wall_time:.2f}"])
            writer.writerow(row)
    return path


def read_metrics(path) -> List[Dict[str, Any]]:
    """Parse a metrics file back into typed dicts (metric values stay in percent)."""
    with open(path, "r", newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    parsed = []
    for row in rows:
        entry: Dict[str, Any] = {}
        for key, value in row.items():
            if key in ("layers", "seed"):
                entry[key] = int(value)
            elif key in ("model", "fusion"):
                entry[key] = value
            else:
                entry[key] = float(value)
        parsed.append(entry)
    return parsed


# ============================================================================
# Helpers
# ============================================================================

def _record_for(cfg: ExperimentConfig, results: Dict[int, EvalResult], wall_time: float, label: Optional[str] = None) -> MetricRecord:
    return MetricRecord(label or cfg.model_label, cfg.layers, cfg.fusion, results, cfg.seed, wall_time)


def _require_dataset(cfg: ExperimentConfig) -> str:
    if not cfg.dataset:
        raise ConfigError("This command needs 'dataset' (a directory with train.txt and test.txt)")
    return cfg.dataset


def _load_bundle(cfg: ExperimentConfig, run_id: str) -> DatasetBundle:
    """Replay the prepared split if one exists, else prepare it from the dataset directory."""
    manifest = cfg.resolved_output_dir() / SPLIT_MANIFEST
    if manifest.exists():
        return read_split_manifest(manifest)
    bundle = load_dataset(_require_dataset(cfg), np.random.default_rng(cfg.seed), cfg.val_fraction)
    write_split_manifest(bundle, manifest)
    logger.info("Split prepared for training", run_id=run_id, manifest=str(manifest))
    return bundle


def _load_inductive_bundle(cfg: ExperimentConfig, run_id: str, entities: str = "both") -> DatasetBundle:
    manifest = cfg.resolved_output_dir() / INDUCTIVE_MANIFEST
    if manifest.exists():
        return read_split_manifest(manifest)
    bundle = inductive_split(
        _load_bundle(cfg, run_id), np.random.default_rng(cfg.seed),
        holdout_fraction=cfg.holdout_fraction, inference_fraction=cfg.inference_fraction, entities=entities,
    )
    write_split_manifest(bundle, manifest)
    return bundle


def _test_results(model: RecommenderModel, bundle: DatasetBundle, cfg: ExperimentConfig, run_id: str) -> Dict[int, EvalResult]:
    user_emb, item_emb = model.embeddings(bundle.graph_train)
    return evaluate_embeddings(user_emb, item_emb, bundle.known_graph(), bundle.test_sets, cfg.k, run_id=run_id)


def _write_report(path: Path, results: Dict[str, Dict[int, EvalResult]]) -> str:
    report = format_report(results)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report + "\n", encoding="utf-8")
    return report


def _store_results(db: ExperimentHistoryDB, run_id: str, split: str, cfg: ExperimentConfig,
                   results: Dict[int, EvalResult], wall_time: float, label: Optional[str] = None):
    for result in results.values():
        db.add_result(run_id, split, label or cfg.model_label, cfg.layers, cfg.fusion, result, cfg.seed, wall_time)


# ============================================================================
# Commands
# ============================================================================

def cmd_synthetic(cfg: ExperimentConfig, options: Dict[str, Any], run_id: str, db: ExperimentHistoryDB) -> int:
    """Write the toy block dataset in the train.txt / test.txt format."""
    target = Path(cfg.dataset) if cfg.dataset else cfg.resolved_output_dir() / "synthetic"
    num_users = options.get("users", 20)
    num_items = options.get("items", 20)
    train, test = synthetic_block_interactions(
        np.random.default_rng(cfg.seed), num_users, num_items,
        blocks=options.get("blocks", 2), density=options.get("density", 0.8),
    )
    write_interaction_files(target, train, test, IdMap.identity(num_users, num_items))
    print(f"Synthetic dataset written to {target} ({len(train)} train, {len(test)} test interactions)")
    logger.info("Synthetic dataset written", run_id=run_id, directory=str(target), train=len(train), test=len(test))
    return EXIT_OK


def cmd_prepare_data(cfg: ExperimentConfig, options: Dict[str, Any], run_id: str, db: ExperimentHistoryDB) -> int:
    """Split a dataset and write the split manifests (transductive, and inductive on request)."""
    dataset = Path(_require_dataset(cfg))
    out = cfg.resolved_output_dir()
    bundle = load_dataset(dataset, np.random.default_rng(cfg.seed), cfg.val_fraction)
    write_split_manifest(bundle, out / SPLIT_MANIFEST)

    stats = bundle.statistics()
    print(f"Dataset {dataset.name}: {stats['users']} users, {stats['items']} items, "
          f"{stats['interactions']} interactions, density {stats['density']:.5f}")
    matches = check_known_statistics(dataset.name, bundle)
    if matches is not None and not all(matches.values()):
        print(f"Warning: statistics differ from the published ones for {dataset.name}: {matches}")

    if options.get("inductive"):
        inductive = inductive_split(
            bundle, np.random.default_rng(cfg.seed),
            holdout_fraction=cfg.holdout_fraction,
            inference_fraction=cfg.inference_fraction,
            entities=options.get("entities", "both"),
        )
        write_split_manifest(inductive, out / INDUCTIVE_MANIFEST)
        ind = inductive.inductive
        print(f"Inductive split: {len(ind.held_users)} held users, {len(ind.held_items)} held items")
    print(f"Split manifests written to {out}")
    return EXIT_OK


def cmd_train(cfg: ExperimentConfig, options: Dict[str, Any], run_id: str, db: ExperimentHistoryDB) -> int:
    """Train, then write the checkpoint, training log, metrics and report."""
    out = cfg.resolved_output_dir()
    bundle = _load_bundle(cfg, run_id)
    start = time.time()
    model = build_model_from_config(cfg, bundle.num_users, bundle.num_items, np.random.default_rng(cfg.seed))
    model, log = fit(model, bundle, cfg.train_config(), run_id=run_id)
    wall_time = time.time() - start

    log.to_csv(out / TRAINING_LOG)
    save_checkpoint(model, out / CHECKPOINT_DIR, run_id=run_id, metadata={
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "best_epoch": log.best_epoch,
        "epochs_run": log.epochs_run,
    })

    val_results = {}
    if bundle.val_sets:
        user_emb, item_emb = model.embeddings(bundle.graph_train)
        val_results = evaluate_embeddings(user_emb, item_emb, bundle.graph_train, bundle.val_sets, cfg.k, run_id=run_id)
        _store_results(db, run_id, "val", cfg, val_results, wall_time)
    test_results = _test_results(model, bundle, cfg, run_id)
    _store_results(db, run_id, "test", cfg, test_results, wall_time)

    write_metrics([_record_for(cfg, test_results, wall_time)], out / METRICS_FILE)
    print(_write_report(out / REPORT_FILE, {cfg.model_label: test_results}))
    print(f"\nTrained {log.epochs_run} epochs (best epoch {log.best_epoch}); artifacts in {out}")
    return EXIT_OK


def cmd_evaluate(cfg: ExperimentConfig, options: Dict[str, Any], run_id: str, db: ExperimentHistoryDB) -> int:
    """Evaluate a saved checkpoint on the test split."""
    out = cfg.resolved_output_dir()
    model = load_checkpoint(options.get("checkpoint") or out / CHECKPOINT_DIR)
    bundle = _load_bundle(cfg, run_id)
    start = time.time()
    results = _test_results(model, bundle, cfg, run_id)
    wall_time = time.time() - start

    _store_results(db, run_id, "test", cfg, results, wall_time)
    write_metrics([_record_for(cfg, results, wall_time)], out / METRICS_FILE)
    print(_write_report(out / REPORT_FILE, {cfg.model_label: results}))
    return EXIT_OK


def _write_recommendations(path: Path, recs: Dict[int, np.ndarray], ids: IdMap) -> Path:
    lines = [
        " ".join([str(int(ids.user_ids[u]))] + [str(int(ids.item_ids[i])) for i in items])
        for u, items in sorted(recs.items())
    ]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def cmd_infer_inductive(cfg: ExperimentConfig, options: Dict[str, Any], run_id: str, db: ExperimentHistoryDB) -> int:
    """
    Two modes:
      --edges FILE: load the checkpoint, add the file's interactions (new ids
        become new entities) and write top-k recommendations for its users.
      otherwise: run the lower / inductive / upper protocol on the inductive split.
    """
    out = cfg.resolved_output_dir()
    if not options.get("edges"):
        bundle = _load_inductive_bundle(cfg, run_id, options.get("entities", "both"))
        start = time.time()
        rows = run_inductive_protocol(bundle, cfg, run_id=run_id)
        wall_time = time.time() - start
        records = []
        for split, results in rows.items():
            label = f"{cfg.model_label}:{split}"
            _store_results(db, run_id, split, cfg, results, wall_time, label=label)
            records.append(_record_for(cfg, results, wall_time, label=label))
        write_metrics(records, out / METRICS_FILE)
        print(_write_report(out / REPORT_FILE, {f"{cfg.model_label} ({split})": r for split, r in rows.items()}))
        return EXIT_OK

    bundle = _load_bundle(cfg, run_id)
    model = load_checkpoint(options.get("checkpoint") or out / CHECKPOINT_DIR)
    if isinstance(model, LightGCNModel) and model.spec.include_layer0:
        model = make_lightgcn_inductive(model)
    ids = bundle.id_maps or IdMap.identity(bundle.num_users, bundle.num_items)
    edges_path = Path(options["edges"])
    with open(edges_path, "r", encoding="utf-8") as f:
        new_edges, ids = parse_interactions(f, id_map=ids, source=edges_path.name)

    big_m, big_n = ids.num_users, ids.num_items
    extended = extend(bundle.graph_train, new_edges, big_m, big_n)
    ctx = InductiveContext(model, bundle.graph_train, extended, cfg.refresh_user_embeddings)
    user_emb, item_emb = inductive_embeddings(ctx, options.get("scope", "all"))

    users = np.unique(new_edges[:, 0]) if len(new_edges) else np.zeros(0, dtype=np.int64)
    mask = extend(bundle.known_graph(), new_edges, big_m, big_n)
    k = max(cfg.k)
    recs = recommend_for(user_emb, item_emb, users, mask, k=k)
    path = _write_recommendations(out / RECOMMENDATIONS_FILE, recs, ids)
    print(f"Top-{k} recommendations for {len(recs)} users written to {path}")
    logger.info("Recommendations written", run_id=run_id, path=str(path), users=len(recs),
                new_users=len(ctx.new_users), new_items=len(ctx.new_items))
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, options: Dict[str, Any], run_id: str, db: ExperimentHistoryDB) -> int:
    """Run the property suites on in-process random instances."""
    result = run_verification(seed=cfg.seed, suites=options.get("suites"), run_id=run_id)
    for check in result.checks:
        status = "PASS" if check["passed"] else "FAIL"
        print(f"  [{status}] {check['name']:<40} max error {check['max_error']:.3e}")
    report_path = cfg.resolved_output_dir() / "verification.yaml"
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(
        yaml.dump(result.to_dict(), default_flow_style=False, sort_keys=False, allow_unicode=True, indent=2),
        encoding="utf-8",
    )
    if not result.valid:
        print("\nVerification FAILED:\n" + "\n".join(result.feedback))
        return EXIT_VERIFICATION_FAILED
    print(f"\nAll {len(result.checks)} checks passed")
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, options: Dict[str, Any], run_id: str, db: ExperimentHistoryDB) -> int:
    """Train every grid point in its own output directory and rank them by validation recall."""
    if not options.get("grid"):
        raise ConfigError("sweep needs --grid FILE")
    out = cfg.resolved_output_dir()
    base = cfg.to_dict()
    board = []
    for index, point in enumerate(load_grid(options["grid"])):
        point_cfg = build_config({**base, **point, "output_dir": str(out / "sweep" / f"{index:03d}")})
        point_dir = point_cfg.resolved_output_dir()
        point_dir.mkdir(parents=True, exist_ok=True)
        split = out / SPLIT_MANIFEST
        if split.exists() and not (point_dir / SPLIT_MANIFEST).exists():
            (point_dir / SPLIT_MANIFEST).write_text(split.read_text(encoding="utf-8"), encoding="utf-8")

        bundle = _load_bundle(point_cfg, run_id)
        start = time.time()
        model = build_model_from_config(point_cfg, bundle.num_users, bundle.num_items,
                                        np.random.default_rng(point_cfg.seed))
        model, log = fit(model, bundle, point_cfg.train_config(), run_id=run_id)
        wall_time = time.time() - start
        log.to_csv(point_dir / TRAINING_LOG)

        test_results = _test_results(model, bundle, point_cfg, run_id)
        _store_results(db, run_id, "test", point_cfg, test_results, wall_time)
        write_metrics([_record_for(point_cfg, test_results, wall_time)], out / METRICS_FILE)
        board.append({"point": index, **point, "val_recall": log.best_recall,
                      "best_epoch": log.best_epoch, "wall_time": round(wall_time, 2)})
        logger.info("Sweep point complete", run_id=run_id, point=index, val_recall=log.best_recall, **point)

    board.sort(key=lambda row: (-row["val_recall"], row["point"]))
    columns = list(dict.fromkeys(key for row in board for key in row))
    with open(out / LEADERBOARD_FILE, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=columns)
        writer.writeheader()
        writer.writerows(board)
    print(f"Sweep of {len(board)} points complete; leaderboard at {out / LEADERBOARD_FILE}")
    return EXIT_OK


HANDLERS = {
    "synthetic": cmd_synthetic,
    "prepare-data": cmd_prepare_data,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "infer-inductive": cmd_infer_inductive,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


def run(command: str, config: ExperimentConfig, options: Optional[Dict[str, Any]] = None,
        db: Optional[ExperimentHistoryDB] = None) -> int:
    """
    Execute one command and map failures onto exit codes.

    Args:
        command: One of COMMANDS
        config: Resolved experiment configuration
        options: Command-specific options (grid file, checkpoint, edge file, ...)
        db: Run history (default: ExperimentHistoryDB())

    Returns:
        Exit code (0 ok, 2 usage, 3 config, 4 missing file, 5 verification
        failure, 6 training diverged, 1 other)
    """
    handler = HANDLERS.get(command)
    if handler is None:
        print(f"Unknown command '{command}'. Expected one of: {', '.join(COMMANDS)}")
        return EXIT_USAGE

    run_id = str(uuid.uuid4())
    db = db or ExperimentHistoryDB()
    config_yaml = yaml.dump(config.to_dict(), default_flow_style=False, sort_keys=False, allow_unicode=True, indent=2)
    db.create_run(run_id, command, config_yaml)
    logger.info("Command started", run_id=run_id, command=command)
    start = time.time()

    try:
        code = handler(config, options or {}, run_id, db)
    except ConfigError as e:
        code, error = EXIT_CONFIG, f"Configuration error: {e}"
    except FileNotFoundError as e:
        code, error = EXIT_MISSING_FILE, f"Missing file: {e}"
    except TrainingDivergedError as e:
        code, error = EXIT_DIVERGED, str(e)
    except Exception as e:
        code, error = EXIT_ERROR, f"{type(e).__name__}: {e}"
    else:
        error = None if code == EXIT_OK else f"exit code {code}"

    if error and code != EXIT_VERIFICATION_FAILED:
        print(f"Error: {error}")
        logger.error("Command failed", run_id=run_id, command=command, error=error, exit_code=code)
    db.update_run_status(run_id, "completed" if code == EXIT_OK else "failed", error)
    logger.info("Command finished", run_id=run_id, command=command, exit_code=code,
                duration_ms=int((time.time() - start) * 1000))
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lightgraph", description="Light graph collaborative filtering experiments")
    subparsers = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Flat YAML configuration file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override one configuration key (repeatable)")

    synthetic = subparsers.add_parser("synthetic", parents=[common], help="Write the toy block dataset")
    synthetic.add_argument("--users", type=int, default=20)
    synthetic.add_argument("--items", type=int, default=20)
    synthetic.add_argument("--blocks", type=int, default=2)
    synthetic.add_argument("--density", type=float, default=0.8)

    prepare = subparsers.add_parser("prepare-data", parents=[common], help="Split a dataset and write manifests")
    prepare.add_argument("--inductive", action="store_true", help="Also write the inductive split")
    prepare.add_argument("--entities", choices=("both", "users", "items"), default="both")

    subparsers.add_parser("train", parents=[common], help="Train a model and save a checkpoint")

    evaluate = subparsers.add_parser("evaluate", parents=[common], help="Evaluate a checkpoint on the test split")
    evaluate.add_argument("--checkpoint", help="Checkpoint directory (default: <output_dir>/checkpoint)")

    infer = subparsers.add_parser("infer-inductive", parents=[common], help="Inductive inference")
    infer.add_argument("--checkpoint", help="Checkpoint directory (default: <output_dir>/checkpoint)")
    infer.add_argument("--edges", help="Interaction file with new users/items; omit to run the bound protocol")
    infer.add_argument("--scope", choices=("items", "users", "all"), default="all")
    infer.add_argument("--entities", choices=("both", "users", "items"), default="both")

    verify = subparsers.add_parser("verify", parents=[common], help="Run the property suites")
    verify.add_argument("--suite", dest="suites", action="append", choices=sorted(SUITES),
                        help="Run only this suite (repeatable)")

    sweep = subparsers.add_parser("sweep", parents=[common], help="Train over a hyperparameter grid")
    sweep.add_argument("--grid", required=True, help="YAML mapping of key to list of values")
    return parser


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, load the configuration and run the command."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    try:
        config = load_config(args.config, args.overrides)
    except ConfigError as e:
        print(f"Configuration error: {e}")
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"Missing file: {e}")
        return EXIT_MISSING_FILE

    options = {key: value for key, value in vars(args).items() if key not in ("command", "config", "overrides")}
    return run(args.command, config, options)


if __name__ == "__main__":
    sys.exit(run_cli(sys.argv[1:]))
