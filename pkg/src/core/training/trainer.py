"""
Trainer
Mini-batch BPR training with Adam, periodic validation and early stopping.

Each epoch visits every training interaction once in shuffled order with a
fresh uniform negative. Every eval_every epochs the validation recall@k is
computed on the undropped graph; the best parameters seen are restored when
training ends. An improvement must be strictly greater; ties keep the earlier
checkpoint.
"""

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from src.core.config import TrainConfig
from src.core.errors import TrainingDivergedError
from src.core.evaluation.ranking import EvalResult, evaluate_model
from src.core.models.networks import RecommenderModel
from src.core.observability.logging import get_logger
from src.core.training.bpr import batch_objective
from src.core.training.optimizer import AdamState, adam_step
from src.core.training.sampling import edge_dropout, epoch_triples

logger = get_logger("trainer")

Evaluator = Callable[[RecommenderModel], EvalResult]


@dataclass
class TrainingLog:
    """
    Per-epoch losses and per-evaluation validation metrics.

    Attributes:
        epoch_losses: Mean batch objective of every completed epoch
        rows: One dict per evaluation (epoch, loss, recall, ndcg)
        best_epoch: Epoch whose parameters were restored (None if never evaluated)
        best_recall: Validation recall at best_epoch
        stopped_early: Whether patience ran out before max_epochs
        wall_time: Seconds spent in fit()
    """
    eval_k: int = 20
    epoch_losses: List[float] = field(default_factory=list)
    rows: List[Dict[str, float]] = field(default_factory=list)
    best_epoch: Optional[int] = None
    best_recall: float = float("-inf")
    stopped_early: bool = False
    wall_time: float = 0.0

    @property
    def epochs_run(self) -> int:
        return len(self.epoch_losses)

    def to_csv(self, path) -> Path:
        """Write epoch, train loss, validation recall@k and ndcg@k, one row per evaluation."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "train_loss", f"val_recall@{self.eval_k}", f"val_ndcg@{self.eval_k}"])
            for row in self.rows:
                writer.writerow([row["epoch"], f"{row['loss']:.6f}", f"{row['recall']:.6f}", f"{row['ndcg']:.6f}"])
        return path


def default_evaluator(bundle, k: int = 20, run_id: Optional[str] = None) -> Evaluator:
    """Validation recall/ndcg@k on bundle.val_sets, masking training items."""
    def evaluate(model: RecommenderModel) -> EvalResult:
        return evaluate_model(model, bundle.graph_train, bundle.val_sets, k=k, run_id=run_id)
    return evaluate


def fit(
    model: RecommenderModel,
    bundle,
    cfg: TrainConfig,
    evaluator: Optional[Evaluator] = None,
    run_id: Optional[str] = None,
):
    """
    Train a model in place on bundle.graph_train.

    Args:
        model: Freshly built model; its parameters are updated in place
        bundle: DatasetBundle providing graph_train and val_sets
        cfg: Training hyperparameters
        evaluator: Model -> validation EvalResult (default: recall@cfg.eval_k on val_sets)
        run_id: Identifier grouping the log entries of this run

    Returns:
        (model, TrainingLog) with the best validation parameters restored

    Raises:
        TrainingDivergedError: on a non-finite batch objective
        SamplingError: if a user has interacted with every item
    """
    start_time = time.time()
    rng = np.random.default_rng(cfg.seed)
    evaluator = evaluator or default_evaluator(bundle, cfg.eval_k, run_id)
    graph = bundle.graph_train
    normalized = model.normalize(graph)
    state = AdamState()
    log = TrainingLog(eval_k=cfg.eval_k)
    best_params = None
    evals_without_gain = 0

    logger.info(
        "Training started",
        run_id=run_id,
        model=model.kind,
        num_parameters=model.num_parameters,
        num_edges=graph.num_edges,
        learning_rate=cfg.learning_rate,
        l2_lambda=cfg.l2_lambda,
        batch_size=cfg.batch_size,
        edge_dropout_p=cfg.edge_dropout_p,
        seed=cfg.seed,
    )

    for epoch in range(1, cfg.max_epochs + 1):
        triples = epoch_triples(rng, graph, cfg.negatives_per_positive)
        total, count = 0.0, 0
        for batch_idx, start in enumerate(range(0, len(triples), cfg.batch_size)):
            batch = triples[start:start + cfg.batch_size]
            batch_graph = edge_dropout(rng, normalized, cfg.edge_dropout_p)
            loss, grads = batch_objective(model, batch_graph, batch, cfg.l2_lambda)
            if not np.isfinite(loss):
                logger.error("Training diverged", run_id=run_id, epoch=epoch, batch=batch_idx, loss=loss)
                raise TrainingDivergedError(epoch, batch_idx, loss)
            adam_step(state, model.parameters, grads, cfg.learning_rate)
            total += loss * len(batch)
            count += len(batch)
        epoch_loss = total / max(count, 1)
        log.epoch_losses.append(epoch_loss)
        logger.debug("Epoch complete", run_id=run_id, epoch=epoch, loss=epoch_loss)

        if epoch % cfg.eval_every != 0 and epoch != cfg.max_epochs:
            continue

        result = evaluator(model)
        log.rows.append({"epoch": epoch, "loss": epoch_loss, "recall": result.recall, "ndcg": result.ndcg})
        improved = result.recall > log.best_recall
        if improved:
            log.best_recall = result.recall
            log.best_epoch = epoch
            best_params = {name: p.copy() for name, p in model.parameters.items()}
            evals_without_gain = 0
        else:
            evals_without_gain += 1
        logger.info(
            "Validation",
            run_id=run_id,
            epoch=epoch,
            loss=epoch_loss,
            recall=result.recall,
            ndcg=result.ndcg,
            improved=improved,
            evals_without_gain=evals_without_gain,
        )
        if evals_without_gain >= cfg.patience:
            log.stopped_early = True
            break

    if best_params is not None:
        for name, value in best_params.items():
            model.parameters[name][...] = value

    log.wall_time = time.time() - start_time
    logger.info(
        "Training finished",
        run_id=run_id,
        epochs_run=log.epochs_run,
        best_epoch=log.best_epoch,
        best_recall=log.best_recall,
        stopped_early=log.stopped_early,
        duration_ms=int(log.wall_time * 1000),
    )
    return model, log
