import csv

import numpy as np
import pytest

from src.core.config import TrainConfig
from src.core.data.datasets import synthetic_block_dataset
from src.core.errors import ConfigError, TrainingDivergedError
from src.core.evaluation.ranking import EvalResult, evaluate_embeddings
from src.core.models.networks import build_model
from src.core.models.propagation import FusionSpec
from src.core.training.trainer import TrainingLog, fit


@pytest.fixture
def toy(rng):
    return synthetic_block_dataset(rng, 20, 20, 2, 0.8)


def _model(bundle, seed=0, layers=1):
    return build_model("cf_lgcn_u", bundle.num_users, bundle.num_items, 8, layers, FusionSpec("concat"),
                       np.random.default_rng(seed), twin=True)


def test_training_reduces_loss(toy):
    cfg = TrainConfig(learning_rate=0.05, batch_size=64, max_epochs=15, eval_every=5, patience=10)
    _, log = fit(_model(toy), toy, cfg)
    assert log.epochs_run == 15
    assert log.epoch_losses[-1] < log.epoch_losses[0]
    assert [row["epoch"] for row in log.rows] == [5, 10, 15]


def test_early_stopping_counts_evaluations(toy):
    flat = lambda model: EvalResult(20, 0.5, 0.5, 1)
    cfg = TrainConfig(max_epochs=50, eval_every=1, patience=2)
    _, log = fit(_model(toy), toy, cfg, evaluator=flat)
    assert log.stopped_early
    assert log.epochs_run == 3
    assert log.best_epoch == 1


def test_best_parameters_are_restored(toy):
    snapshots = []

    def declining(model):
        snapshots.append({k: v.copy() for k, v in model.parameters.items()})
        return EvalResult(20, 1.0 / len(snapshots), 0.0, 1)

    cfg = TrainConfig(learning_rate=0.05, max_epochs=4, eval_every=1, patience=10)
    model, log = fit(_model(toy), toy, cfg, evaluator=declining)
    assert log.best_epoch == 1
    for name, value in model.parameters.items():
        np.testing.assert_array_equal(value, snapshots[0][name])


def test_last_epoch_is_always_evaluated(toy):
    cfg = TrainConfig(max_epochs=7, eval_every=5, patience=10)
    _, log = fit(_model(toy), toy, cfg, evaluator=lambda m: EvalResult(20, 0.1, 0.1, 1))
    assert [row["epoch"] for row in log.rows] == [5, 7]


def test_training_is_reproducible(toy):
    cfg = TrainConfig(learning_rate=0.01, max_epochs=3, eval_every=3, seed=4)
    a, _ = fit(_model(toy), toy, cfg)
    b, _ = fit(_model(toy), toy, cfg)
    for name in a.parameters:
        np.testing.assert_array_equal(a.parameters[name], b.parameters[name])


def test_non_finite_loss_raises(toy):
    model = _model(toy)
    model.parameters["user_embedding_a"][0, 0] = np.nan
    with pytest.raises(TrainingDivergedError) as info:
        fit(model, toy, TrainConfig(max_epochs=2))
    assert info.value.epoch == 1


def test_edge_dropout_training_runs(toy):
    cfg = TrainConfig(learning_rate=0.05, max_epochs=2, eval_every=1, edge_dropout_p=0.2)
    _, log = fit(_model(toy, layers=2), toy, cfg)
    assert all(np.isfinite(log.epoch_losses))


def test_log_csv(tmp_path):
    log = TrainingLog(eval_k=20, rows=[{"epoch": 5, "loss": 0.5, "recall": 0.25, "ndcg": 0.125}])
    path = log.to_csv(tmp_path / "log.csv")
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["epoch", "train_loss", "val_recall@20", "val_ndcg@20"]
    assert rows[1] == ["5", "0.500000", "0.250000", "0.125000"]


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(patience=0)
    with pytest.raises(ConfigError):
        TrainConfig(edge_dropout_p=1.0)


@pytest.mark.slow
def test_twin_model_learns_block_structure(rng):
    bundle = synthetic_block_dataset(rng, 20, 20, 2, 0.8)
    model = build_model("cf_lgcn_u", 20, 20, 8, 1, FusionSpec("concat"), np.random.default_rng(0), twin=True)
    cfg = TrainConfig(learning_rate=0.05, l2_lambda=1e-4, batch_size=1024, max_epochs=200,
                      eval_every=10, patience=5, eval_k=5)
    model, _ = fit(model, bundle, cfg)
    user_emb, item_emb = model.embeddings(bundle.graph_train)
    result = evaluate_embeddings(user_emb, item_emb, bundle.known_graph(), bundle.test_sets, [5])[5]
    assert result.recall >= 0.9
