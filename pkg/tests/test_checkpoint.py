import numpy as np
import pytest
import yaml

from src.core.errors import ConfigError, DimensionMismatchError
from src.core.models.networks import build_model
from src.core.models.propagation import FusionSpec
from src.core.storage.checkpoint import FORMAT_VERSION, MANIFEST_FILE, load_checkpoint, read_manifest, save_checkpoint


@pytest.mark.parametrize("variant,layers,twin", [
    ("cf_lgcn_u", 3, False),
    ("cf_lgcn_e", 2, False),
    ("lightgcn", 2, False),
    ("mf", 0, False),
    ("cf_lgcn_u", 2, True),
    ("cf_lgcn_e", 3, True),
])
def test_checkpoint_restores_identical_model(tmp_path, rng, small_graph, variant, layers, twin):
    model = build_model(variant, 3, 4, 5, layers, FusionSpec("mean"), rng, twin=twin, normalization="left")
    save_checkpoint(model, tmp_path / "ckpt", run_id="run-1", metadata={"seed": 7})
    loaded = load_checkpoint(tmp_path / "ckpt")

    assert loaded.kind == model.kind
    assert loaded.normalization == "left"
    assert loaded.fusion.mode == "mean"
    for name, table in model.parameters.items():
        np.testing.assert_array_equal(loaded.parameters[name], table)
    for a, b in zip(model.embeddings(small_graph), loaded.embeddings(small_graph)):
        np.testing.assert_array_equal(a, b)


def test_twin_layer_counts_survive(tmp_path, rng):
    model = build_model("cf_lgcn_u", 3, 4, 2, 2, FusionSpec("concat"), rng, twin=True, layers_b=3)
    save_checkpoint(model, tmp_path)
    loaded = load_checkpoint(tmp_path)
    assert loaded.spec_a.num_prop_layers == 2
    assert loaded.spec_b.num_prop_layers == 3


def test_twin_cf_lgcn_e_tables_restored_by_name(tmp_path, rng):
    model = build_model("cf_lgcn_e", 3, 4, 2, 1, FusionSpec("mean"), rng, twin=True, layers_b=2)
    save_checkpoint(model, tmp_path)
    assert {t["name"] for t in read_manifest(tmp_path)["parameters"]} == {"item_embedding_a", "item_embedding_b"}
    loaded = load_checkpoint(tmp_path)
    assert loaded.kind == "twin_cf_lgcn_e"
    assert loaded.spec_b.num_prop_layers == 2
    np.testing.assert_array_equal(loaded.parameters["item_embedding_b"], model.parameters["item_embedding_b"])


def test_manifest_contents(tmp_path, rng):
    model = build_model("lightgcn", 3, 4, 2, 1, FusionSpec("mean", [0.25, 0.75]), rng)
    save_checkpoint(model, tmp_path, run_id="abc", metadata={"best_epoch": 40})
    section = read_manifest(tmp_path)
    assert section["format_version"] == FORMAT_VERSION
    assert section["run_id"] == "abc"
    assert section["metadata"] == {"best_epoch": 40}
    assert section["fusion"]["weights"] == [0.25, 0.75]
    assert {t["name"] for t in section["parameters"]} == {"user_embedding", "item_embedding"}
    assert load_checkpoint(tmp_path).fusion.weights is not None


def test_missing_manifest(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path)


def test_version_mismatch(tmp_path, rng):
    save_checkpoint(build_model("mf", 3, 4, 2, 0, FusionSpec("mean"), rng), tmp_path)
    path = tmp_path / MANIFEST_FILE
    manifest = yaml.safe_load(path.read_text())
    manifest["Checkpoint"]["format_version"] = FORMAT_VERSION + 1
    path.write_text(yaml.dump(manifest))
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path)


def test_manifest_without_section(tmp_path):
    (tmp_path / MANIFEST_FILE).write_text("other: 1\n")
    with pytest.raises(ConfigError):
        read_manifest(tmp_path)


def test_truncated_table(tmp_path, rng):
    save_checkpoint(build_model("cf_lgcn_u", 3, 4, 2, 1, FusionSpec("mean"), rng), tmp_path)
    table = tmp_path / "user_embedding.bin"
    table.write_bytes(table.read_bytes()[:-8])
    with pytest.raises(DimensionMismatchError):
        load_checkpoint(tmp_path)
