import numpy as np
import pytest

from src.core.errors import DimensionMismatchError, FusionError
from src.core.graph.interaction_graph import normalize
from src.core.models.propagation import (
    FusionSpec,
    NetworkSpec,
    drop_surplus,
    forward_cf_lgcn_e,
    forward_cf_lgcn_u,
    forward_lightgcn,
    fuse,
    iter_score_rows,
    score_all,
    score_triples,
)


@pytest.fixture
def graph(random_bipartite):
    return normalize(random_bipartite, "symmetric")


@pytest.mark.parametrize("products,layer0,expected", [
    (1, True, (1, 1)),
    (2, True, (2, 1)),
    (3, True, (2, 2)),
    (3, False, (1, 2)),
    (4, False, (2, 2)),
])
def test_cf_lgcn_u_set_counts(rng, graph, products, layer0, expected):
    U0 = rng.normal(size=(graph.num_users, 4))
    outs = forward_cf_lgcn_u(graph, U0, NetworkSpec("cf_lgcn_u", products, "symmetric", layer0))
    assert (len(outs.user_sets), len(outs.item_sets)) == expected


def test_cf_lgcn_u_alternates_products(rng, graph):
    U0 = rng.normal(size=(graph.num_users, 3))
    outs = forward_cf_lgcn_u(graph, U0, NetworkSpec("cf_lgcn_u", 3))
    r = graph.user_op.toarray()
    E1 = r.T @ U0
    U2 = r @ E1
    np.testing.assert_allclose(outs.user_sets[0], U0)
    np.testing.assert_allclose(outs.item_sets[0], E1, atol=1e-12)
    np.testing.assert_allclose(outs.user_sets[1], U2, atol=1e-12)
    np.testing.assert_allclose(outs.item_sets[1], r.T @ U2, atol=1e-12)


def test_cf_lgcn_e_mirrors_cf_lgcn_u_on_transpose(rng, random_bipartite):
    g = normalize(random_bipartite, "symmetric")
    gt = normalize(random_bipartite.transpose(), "symmetric")
    E0 = rng.normal(size=(g.num_items, 3))
    spec = NetworkSpec("cf_lgcn_e", 3)
    outs_e = forward_cf_lgcn_e(g, E0, spec)
    outs_u = forward_cf_lgcn_u(gt, E0, NetworkSpec("cf_lgcn_u", 3))
    for a, b in zip(outs_e.item_sets, outs_u.user_sets):
        np.testing.assert_allclose(a, b, atol=1e-12)
    for a, b in zip(outs_e.user_sets, outs_u.item_sets):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_table_row_count_is_checked(graph):
    with pytest.raises(DimensionMismatchError):
        forward_cf_lgcn_u(graph, np.zeros((graph.num_users + 1, 2)), NetworkSpec("cf_lgcn_u", 1))


def test_lightgcn_zero_layers_is_matrix_factorization(rng, graph):
    U0, E0 = rng.normal(size=(graph.num_users, 3)), rng.normal(size=(graph.num_items, 3))
    user_emb, item_emb = fuse(forward_lightgcn(graph, U0, E0, 0), FusionSpec("mean"))
    np.testing.assert_array_equal(user_emb, U0)
    np.testing.assert_array_equal(item_emb, E0)


def test_lightgcn_layers_read_by_parity(rng, graph):
    U0, E0 = rng.normal(size=(graph.num_users, 2)), rng.normal(size=(graph.num_items, 2))
    outs = forward_lightgcn(graph, U0, E0, 2)
    r = graph.user_op.toarray()
    np.testing.assert_allclose(outs.user_sets[1], r @ E0, atol=1e-12)
    np.testing.assert_allclose(outs.item_sets[1], r.T @ U0, atol=1e-12)
    np.testing.assert_allclose(outs.user_sets[2], r @ r.T @ U0, atol=1e-12)


def test_drop_rule_removes_earliest_surplus_sets(rng, graph):
    U0 = rng.normal(size=(graph.num_users, 3))
    outs = forward_cf_lgcn_u(graph, U0, NetworkSpec("cf_lgcn_u", 2))
    trimmed = drop_surplus(outs)
    assert len(trimmed.user_sets) == len(trimmed.item_sets) == 1
    assert trimmed.user_sets[0] is outs.user_sets[1]
    user_emb, item_emb = fuse(outs, FusionSpec("concat"))
    assert user_emb.shape == (graph.num_users, 3)
    assert item_emb.shape == (graph.num_items, 3)


def test_concat_dimension_grows_with_sets(rng, graph):
    U0 = rng.normal(size=(graph.num_users, 3))
    outs = forward_cf_lgcn_u(graph, U0, NetworkSpec("cf_lgcn_u", 3))
    user_emb, item_emb = fuse(outs, FusionSpec("concat"))
    assert user_emb.shape[1] == item_emb.shape[1] == 6


def test_mean_fusion_defaults_to_uniform(rng, graph):
    U0 = rng.normal(size=(graph.num_users, 3))
    outs = forward_cf_lgcn_u(graph, U0, NetworkSpec("cf_lgcn_u", 3))
    user_emb, item_emb = fuse(outs, FusionSpec("mean"))
    np.testing.assert_allclose(user_emb, (outs.user_sets[0] + outs.user_sets[1]) / 2)
    np.testing.assert_allclose(item_emb, (outs.item_sets[0] + outs.item_sets[1]) / 2)


def test_mean_fusion_rejects_wrong_weight_count(rng, graph):
    U0 = rng.normal(size=(graph.num_users, 3))
    outs = forward_cf_lgcn_u(graph, U0, NetworkSpec("cf_lgcn_u", 3))
    with pytest.raises(FusionError):
        fuse(outs, FusionSpec("mean", weights=[1.0, 0.0, 0.0]))


def test_fusion_of_empty_side_fails(rng, graph):
    U0 = rng.normal(size=(graph.num_users, 3))
    outs = forward_cf_lgcn_u(graph, U0, NetworkSpec("cf_lgcn_u", 0))
    with pytest.raises(FusionError):
        fuse(outs, FusionSpec("mean"))


def test_invalid_specs():
    with pytest.raises(ValueError):
        NetworkSpec("gcn", 1)
    with pytest.raises(ValueError):
        NetworkSpec("cf_lgcn_u", -1)
    with pytest.raises(ValueError):
        FusionSpec("sum")


def test_score_helpers_agree(rng):
    U, E = rng.normal(size=(5, 3)), rng.normal(size=(4, 3))
    dense = score_all(U, E)
    streamed = np.vstack([block for _, block in iter_score_rows(U, E, batch_users=2)])
    np.testing.assert_allclose(streamed, dense)
    triples = np.array([[0, 1, 2], [4, 3, 0]])
    z_pos, z_neg = score_triples(U, E, triples)
    np.testing.assert_allclose(z_pos, [dense[0, 1], dense[4, 3]])
    np.testing.assert_allclose(z_neg, [dense[0, 2], dense[4, 0]])


def test_score_all_checks_dimensions(rng):
    with pytest.raises(DimensionMismatchError):
        score_all(rng.normal(size=(2, 3)), rng.normal(size=(2, 4)))


@pytest.mark.parametrize("normalization", ["none", "symmetric", "left", "right"])
def test_forward_is_linear_in_the_table(rng, random_bipartite, normalization):
    g = normalize(random_bipartite, normalization)
    m, n = random_bipartite.shape
    a, b = 1.7, -0.4
    X, Y = rng.normal(size=(m, 3)), rng.normal(size=(m, 3))
    spec = NetworkSpec("cf_lgcn_u", 4, normalization)
    combined = forward_cf_lgcn_u(g, a * X + b * Y, spec)
    parts = forward_cf_lgcn_u(g, X, spec), forward_cf_lgcn_u(g, Y, spec)
    for sets, x_sets, y_sets in ((combined.user_sets, parts[0].user_sets, parts[1].user_sets),
                                 (combined.item_sets, parts[0].item_sets, parts[1].item_sets)):
        for s, x, y in zip(sets, x_sets, y_sets):
            np.testing.assert_allclose(s, a * x + b * y, atol=1e-10)

    E1, E2 = rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
    lightgcn = forward_lightgcn(g, a * X + b * Y, a * E1 + b * E2, 3)
    x_outs, y_outs = forward_lightgcn(g, X, E1, 3), forward_lightgcn(g, Y, E2, 3)
    for s, x, y in zip(lightgcn.user_sets + lightgcn.item_sets, x_outs.user_sets + x_outs.item_sets,
                       y_outs.user_sets + y_outs.item_sets):
        np.testing.assert_allclose(s, a * x + b * y, atol=1e-10)
