import math

import numpy as np
import pytest

from src.core.errors import EvaluationError
from src.core.evaluation.ranking import (
    EvalResult,
    brute_force_evaluate,
    evaluate_embeddings,
    format_report,
    ndcg_at_k,
    recall_at_k,
    topk,
)
from src.core.graph.interaction_graph import from_edges


def test_topk_breaks_ties_by_lower_index():
    assert topk(np.array([1.0, 2.0, 2.0, 0.0]), [], 2).tolist() == [1, 2]


def test_topk_skips_masked_items():
    assert topk(np.array([5.0, 1.0, 3.0]), [0], 2).tolist() == [2, 1]


def test_topk_rejects_k_beyond_unmasked_items():
    with pytest.raises(EvaluationError):
        topk(np.array([1.0, 2.0, 3.0]), [0, 1], 2)


def test_recall_and_ndcg_by_hand():
    ranked, test = [3, 1, 4], {1, 5}
    assert recall_at_k(ranked, test) == pytest.approx(0.5)
    expected = (1 / math.log2(3)) / (1 + 1 / math.log2(3))
    assert ndcg_at_k(ranked, test) == pytest.approx(expected)


def test_perfect_ranking_has_unit_ndcg():
    assert ndcg_at_k([2, 7], {2, 7}, k=2) == pytest.approx(1.0)
    assert ndcg_at_k([2, 7, 1], {2}, k=3) == pytest.approx(1.0)


def test_recall_denominators():
    assert recall_at_k([1], {1, 2, 3}, k=1) == pytest.approx(1 / 3)
    assert recall_at_k([1], {1, 2, 3}, k=1, denominator="min_k") == pytest.approx(1.0)


def test_empty_test_set_is_an_error():
    with pytest.raises(EvaluationError):
        recall_at_k([1, 2], set())
    with pytest.raises(EvaluationError):
        ndcg_at_k([1, 2], set())


def test_streaming_matches_brute_force(rng):
    for _ in range(20):
        m, n = 12, 9
        user_emb = rng.integers(-2, 3, size=(m, 2)).astype(float)
        item_emb = rng.integers(-2, 3, size=(n, 2)).astype(float)
        graph = from_edges(m, n, np.argwhere(rng.random((m, n)) < 0.25))
        test_sets = {}
        for u in range(m):
            unseen = np.setdiff1d(np.arange(n), graph.items_of(u))
            test_sets[u] = rng.choice(unseen, size=min(2, len(unseen)), replace=False)
        train_sets = {u: graph.items_of(u).tolist() for u in range(m)}
        fast = evaluate_embeddings(user_emb, item_emb, graph, test_sets, [1, 3], batch_users=5)
        for k in (1, 3):
            slow = brute_force_evaluate(user_emb @ item_emb.T, train_sets, test_sets, k)
            assert fast[k].recall == pytest.approx(slow.recall, abs=1e-12)
            assert fast[k].ndcg == pytest.approx(slow.ndcg, abs=1e-12)
            assert fast[k].users_evaluated == slow.users_evaluated


def test_cold_users_score_zero_but_count():
    user_emb = np.array([[1.0, 0.0], [1.0, 0.0]])
    item_emb = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    result = evaluate_embeddings(user_emb, item_emb, None, {0: [0], 1: [0]}, [1], cold_users={1})[1]
    assert result.recall == pytest.approx(0.5)
    assert result.users_evaluated == 2


def test_users_beyond_embedding_rows_count_as_misses():
    user_emb = np.array([[1.0, 0.0]])
    item_emb = np.array([[1.0, 0.0], [0.0, 1.0]])
    result = evaluate_embeddings(user_emb, item_emb, None, {0: [0], 5: [0]}, [1])[1]
    assert result.recall == pytest.approx(0.5)


def test_cold_items_are_never_recommended():
    user_emb = np.array([[1.0, 0.0]])
    item_emb = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    result = evaluate_embeddings(user_emb, item_emb, None, {0: [1]}, [1], cold_items={0})[1]
    assert result.recall == pytest.approx(1.0)


def test_users_without_test_items_are_skipped():
    user_emb = np.eye(2)
    item_emb = np.eye(2)
    result = evaluate_embeddings(user_emb, item_emb, None, {0: [0], 1: []}, [1])[1]
    assert result.users_evaluated == 1
    assert result.recall == pytest.approx(1.0)


def test_no_evaluable_users():
    with pytest.raises(EvaluationError):
        evaluate_embeddings(np.eye(2), np.eye(2), None, {0: []}, [1])


def test_format_report_uses_percentages():
    report = format_report({"twin_cf_lgcn_u": {20: EvalResult(20, 0.0523, 0.0328, 10)}})
    assert "Recall@20" in report and "NDCG@20" in report
    assert "5.2300" in report and "3.2800" in report
    assert EvalResult(20, 0.5, 0.25, 1).as_percent() == {"recall": 50.0, "ndcg": 25.0}


def test_topk_rejects_mask_outside_items():
    with pytest.raises(EvaluationError):
        topk(np.array([1.0, 2.0, 3.0]), [3], 1)
    with pytest.raises(EvaluationError):
        topk(np.array([1.0, 2.0, 3.0]), [-1], 1)


def test_metrics_invariant_under_monotone_score_transform(rng):
    m, n = 15, 12
    user_emb = rng.normal(size=(m, 3))
    item_emb = rng.normal(size=(n, 3))
    graph = from_edges(m, n, np.argwhere(rng.random((m, n)) < 0.3))
    train_sets = {u: graph.items_of(u).tolist() for u in range(m)}
    test_sets = {}
    for u in range(m):
        unseen = np.setdiff1d(np.arange(n), graph.items_of(u))
        test_sets[u] = rng.choice(unseen, size=min(3, len(unseen)), replace=False)
    scores = user_emb @ item_emb.T
    for k in (1, 5):
        before = brute_force_evaluate(scores, train_sets, test_sets, k)
        for transformed in (np.exp(scores), 3.0 * scores - 5.0, scores ** 3 + scores):
            after = brute_force_evaluate(transformed, train_sets, test_sets, k)
            assert after.recall == pytest.approx(before.recall, abs=1e-12)
            assert after.ndcg == pytest.approx(before.ndcg, abs=1e-12)


def test_recall_is_monotone_in_k(rng):
    m, n = 20, 15
    user_emb = rng.normal(size=(m, 4))
    item_emb = rng.normal(size=(n, 4))
    graph = from_edges(m, n, np.argwhere(rng.random((m, n)) < 0.2))
    test_sets = {}
    for u in range(m):
        unseen = np.setdiff1d(np.arange(n), graph.items_of(u))
        test_sets[u] = rng.choice(unseen, size=min(4, len(unseen)), replace=False)
    ks = [1, 2, 3, 5, 8]
    results = evaluate_embeddings(user_emb, item_emb, graph, test_sets, ks)
    recalls = [results[k].recall for k in ks]
    assert all(a <= b + 1e-12 for a, b in zip(recalls, recalls[1:]))
