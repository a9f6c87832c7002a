import numpy as np
import pytest

from src.core.config import ExperimentConfig
from src.core.errors import MissingCacheError
from src.core.models.networks import (
    CFLGCNModel,
    LightGCNModel,
    TwinModel,
    build_model,
    build_model_from_config,
    twin_forward,
)
from src.core.models.propagation import FusionSpec
from src.core.training.bpr import batch_objective


@pytest.mark.parametrize("variant,twin,expected", [
    ("cf_lgcn_u", False, lambda m, n, d: m * d),
    ("cf_lgcn_e", False, lambda m, n, d: n * d),
    ("lightgcn", False, lambda m, n, d: (m + n) * d),
    ("mf", False, lambda m, n, d: (m + n) * d),
    ("cf_lgcn_u", True, lambda m, n, d: 2 * m * d),
    ("cf_lgcn_e", True, lambda m, n, d: 2 * n * d),
])
def test_parameter_counts(rng, variant, twin, expected):
    model = build_model(variant, 9, 13, 5, 3, FusionSpec("mean"), rng, twin=twin)
    assert model.num_parameters == expected(9, 13, 5)


def test_factory_types(rng):
    fusion = FusionSpec("concat")
    assert isinstance(build_model("cf_lgcn_u", 3, 4, 2, 1, fusion, rng), CFLGCNModel)
    assert isinstance(build_model("lightgcn", 3, 4, 2, 1, fusion, rng), LightGCNModel)
    assert build_model("mf", 3, 4, 2, 5, fusion, rng).kind == "mf"
    assert isinstance(build_model("cf_lgcn_u", 3, 4, 2, 1, fusion, rng, twin=True), TwinModel)
    assert isinstance(build_model("cf_lgcn_e", 3, 4, 2, 1, fusion, rng, twin=True), TwinModel)
    with pytest.raises(ValueError):
        build_model("lightgcn", 3, 4, 2, 1, fusion, rng, twin=True)
    with pytest.raises(ValueError):
        build_model("mf", 3, 4, 2, 0, fusion, rng, twin=True)


def test_initialization_is_seeded():
    a = build_model("cf_lgcn_u", 4, 4, 3, 2, FusionSpec("mean"), np.random.default_rng(7))
    b = build_model("cf_lgcn_u", 4, 4, 3, 2, FusionSpec("mean"), np.random.default_rng(7))
    np.testing.assert_array_equal(a.parameters["user_embedding"], b.parameters["user_embedding"])


def test_embeddings_accept_raw_or_normalized_graph(rng, small_graph):
    model = build_model("cf_lgcn_u", 3, 4, 2, 3, FusionSpec("concat"), rng)
    raw = model.embeddings(small_graph)
    normalized = model.embeddings(model.normalize(small_graph))
    np.testing.assert_array_equal(raw[0], normalized[0])
    np.testing.assert_array_equal(raw[1], normalized[1])


def test_twin_concat_stacks_both_networks(rng, small_graph):
    model = build_model("cf_lgcn_u", 3, 4, 2, 3, FusionSpec("concat"), rng, twin=True, layers_b=2)
    user_emb, item_emb = twin_forward(model.normalize(small_graph), model)
    # first network keeps 2 + 2 sets, second 1 + 1 after the drop rule
    assert user_emb.shape == (3, 6)
    assert item_emb.shape == (4, 6)


def test_twin_with_identical_tables_doubles_single_scores(rng, small_graph):
    single = build_model("cf_lgcn_u", 3, 4, 2, 3, FusionSpec("concat"), rng)
    table = single.parameters["user_embedding"]
    twin = TwinModel(single.spec, single.spec, FusionSpec("concat"), table.copy(), table.copy())
    u1, e1 = single.embeddings(small_graph)
    u2, e2 = twin.embeddings(small_graph)
    np.testing.assert_allclose(u2 @ e2.T, 2 * (u1 @ e1.T), atol=1e-12)


def test_backward_requires_cache(rng):
    model = build_model("cf_lgcn_u", 3, 4, 2, 1, FusionSpec("mean"), rng)
    with pytest.raises(MissingCacheError):
        model.backward(None, np.zeros((3, 2)), np.zeros((4, 2)))


def test_copy_is_independent(rng):
    model = build_model("lightgcn", 3, 4, 2, 2, FusionSpec("mean"), rng)
    clone = model.copy()
    clone.parameters["user_embedding"][0, 0] += 1.0
    assert model.parameters["user_embedding"][0, 0] != clone.parameters["user_embedding"][0, 0]


def test_build_from_config(rng):
    cfg = ExperimentConfig(variant="cf_lgcn_e", twin=False, layers=2, dim=4, fusion="mean")
    model = build_model_from_config(cfg, 5, 6, rng)
    assert model.kind == "cf_lgcn_e"
    assert model.parameters["item_embedding"].shape == (6, 4)
    assert model.describe()["layers"] == 2


def test_twin_cf_lgcn_e_learns_two_item_tables(rng, small_graph):
    model = build_model("cf_lgcn_e", 3, 4, 2, 2, FusionSpec("concat"), rng, twin=True, layers_b=3)
    assert model.kind == "twin_cf_lgcn_e"
    assert set(model.parameters) == {"item_embedding_a", "item_embedding_b"}
    assert all(table.shape == (4, 2) for table in model.parameters.values())
    user_emb, item_emb = model.embeddings(small_graph)
    # first network keeps 1 + 1 sets after the drop rule, second 2 + 2
    assert user_emb.shape == (3, 6)
    assert item_emb.shape == (4, 6)
    assert model.describe()["variant"] == "cf_lgcn_e"


def test_twin_cf_lgcn_e_gradient_matches_central_differences(rng, small_graph):
    model = build_model("cf_lgcn_e", 3, 4, 2, 2, FusionSpec("mean"), rng, twin=True, layers_b=3)
    g = model.normalize(small_graph)
    triples = np.array([[0, 0, 2], [1, 2, 3], [2, 3, 1]])
    _, grads = batch_objective(model, g, triples, 1e-2)
    eps = 1e-6
    for name, table in model.parameters.items():
        numeric = np.zeros_like(table)
        for idx in np.ndindex(table.shape):
            original = table[idx]
            table[idx] = original + eps
            plus = batch_objective(model, g, triples, 1e-2)[0]
            table[idx] = original - eps
            minus = batch_objective(model, g, triples, 1e-2)[0]
            table[idx] = original
            numeric[idx] = (plus - minus) / (2 * eps)
        np.testing.assert_allclose(grads[name], numeric, rtol=1e-4, atol=1e-7)


def test_twin_mixed_variants_rejected(rng):
    u = build_model("cf_lgcn_u", 3, 4, 2, 1, FusionSpec("mean"), rng)
    e = build_model("cf_lgcn_e", 3, 4, 2, 1, FusionSpec("mean"), rng)
    with pytest.raises(ValueError):
        TwinModel(u.spec, e.spec, FusionSpec("mean"), np.zeros((3, 2)), np.zeros((4, 2)))


def test_build_from_config_passes_item_weights(rng, small_graph):
    cfg = ExperimentConfig(variant="lightgcn", layers=1, dim=2, fusion="mean",
                           fusion_weights=[0.0, 1.0], fusion_item_weights=[1.0, 0.0])
    model = build_model_from_config(cfg, 3, 4, rng)
    assert model.fusion.weights == (0.0, 1.0)
    assert model.fusion.item_weights == (1.0, 0.0)
    _, item_emb = model.embeddings(small_graph)
    np.testing.assert_allclose(item_emb, model.parameters["item_embedding"], atol=1e-12)
