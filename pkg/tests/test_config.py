import pytest

from src.core.config import ExperimentConfig, TrainConfig, build_config, load_config, load_grid, parse_override
from src.core.errors import ConfigError


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.variant == "cf_lgcn_u"
    assert cfg.twin
    assert cfg.k == [20]
    assert cfg.model_label == "twin_cf_lgcn_u"
    assert cfg.train_config() == TrainConfig()


def test_override_values_keep_their_types():
    assert parse_override("layers=2") == {"layers": 2}
    assert parse_override("learning-rate=0.005") == {"learning_rate": 0.005}
    assert parse_override("twin=false") == {"twin": False}
    assert parse_override("k=[10, 20]") == {"k": [10, 20]}
    assert parse_override("dataset=data/x=y") == {"dataset": "data/x=y"}
    with pytest.raises(ConfigError):
        parse_override("layers")


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        build_config({"layer": 3})


def test_load_config_applies_overrides_in_order(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("variant: lightgcn\ntwin: false\nlayers: 3\nk: 20\n")
    cfg = load_config(str(path), ["layers=1", "layers=2", "seed=5"])
    assert cfg.variant == "lightgcn"
    assert cfg.layers == 2
    assert cfg.k == [20]
    assert cfg.train_config().seed == 5


def test_load_config_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(str(tmp_path / "missing.yaml"))
    bad = tmp_path / "list.yaml"
    bad.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(str(bad))
    empty = tmp_path / "empty.yaml"
    empty.write_text("")
    assert load_config(str(empty)) == ExperimentConfig()


@pytest.mark.parametrize("values", [
    {"variant": "gcn"},
    {"fusion": "sum"},
    {"variant": "lightgcn", "twin": True},
    {"variant": "mf", "twin": True},
    {"layers": -1},
    {"dim": 0},
    {"k": [0]},
    {"patience": 0},
    {"edge_dropout_p": 1.5},
    {"learning_rate": 0.0},
])
def test_invalid_values(values):
    with pytest.raises(ConfigError):
        build_config(values)


def test_grid_expands_in_sorted_key_order(tmp_path):
    path = tmp_path / "grid.yaml"
    path.write_text("layers: [1, 2]\nfusion: [mean, concat]\nseed: 3\n")
    points = load_grid(str(path))
    assert points == [
        {"fusion": "mean", "layers": 1, "seed": 3},
        {"fusion": "mean", "layers": 2, "seed": 3},
        {"fusion": "concat", "layers": 1, "seed": 3},
        {"fusion": "concat", "layers": 2, "seed": 3},
    ]


def test_grid_rejects_unknown_keys(tmp_path):
    path = tmp_path / "grid.yaml"
    path.write_text("depth: [1, 2]\n")
    with pytest.raises(ConfigError):
        load_grid(str(path))


def test_output_dir_falls_back_to_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("OUTPUT_ROOT", str(tmp_path))
    assert ExperimentConfig().resolved_output_dir() == tmp_path
    assert ExperimentConfig(output_dir="elsewhere").resolved_output_dir().name == "elsewhere"


def test_unset_twin_follows_the_variant():
    assert build_config({"variant": "lightgcn"}).twin is False
    assert build_config({"variant": "cf_lgcn_e"}).twin is False
    assert build_config({"variant": "cf_lgcn_e", "twin": True}).model_label == "twin_cf_lgcn_e"
    assert load_config(None, ["variant=lightgcn"]).model_label == "lightgcn"


def test_twin_error_names_the_fix():
    with pytest.raises(ConfigError, match="twin=false"):
        build_config({"variant": "lightgcn", "twin": True})


def test_fusion_item_weights_key():
    cfg = load_config(None, ["variant=lightgcn", "layers=1", "fusion=mean", "fusion_item_weights=[0.5, 0.5]"])
    assert cfg.fusion_item_weights == [0.5, 0.5]
    assert cfg.fusion_weights is None
