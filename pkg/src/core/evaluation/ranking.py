"""
Ranking Evaluation
Top-k ranking over unobserved items with recall@k and ndcg@k averaged over
users that have a nonempty test set.

Score rows are streamed in user blocks; the full m × n score matrix is never
held in memory. Ties are broken by ascending item index.
"""

import math
from dataclasses import dataclass
from typing import Collection, Dict, Iterable, Mapping, Optional, Sequence

import numpy as np

from src.core.errors import EvaluationError
from src.core.graph.interaction_graph import InteractionGraph
from src.core.models.propagation import iter_score_rows
from src.core.observability.logging import get_logger

logger = get_logger("ranking")


@dataclass(frozen=True)
class EvalResult:
    """
    Metrics at one cutoff. recall and ndcg are fractions in [0, 1];
    reports multiply by 100.
    """
    k: int
    recall: float
    ndcg: float
    users_evaluated: int

    def as_percent(self) -> Dict[str, float]:
        return {"recall": 100.0 * self.recall, "ndcg": 100.0 * self.ndcg}


def topk(user_scores: np.ndarray, mask: Collection[int], k: int) -> np.ndarray:
    """
    Highest-scoring k items outside the mask.

    Args:
        user_scores: Scores for every item (length n)
        mask: Item indices that may not be recommended
        k: Cutoff

    Returns:
        Item indices in descending score order, ties by ascending index

    Raises:
        EvaluationError: if a mask index is outside [0, n) or fewer than k
            items remain after masking

    Example:
        >>> topk(np.array([3.0, 1.0, 2.0]), [], 2)
        array([0, 2])
    """
    scores = np.array(user_scores, dtype=np.float64)
    masked = np.unique(np.asarray(list(mask), dtype=np.int64))
    if len(masked) and (masked[0] < 0 or masked[-1] >= scores.shape[0]):
        bad = masked[(masked < 0) | (masked >= scores.shape[0])]
        raise EvaluationError(f"mask indices {bad[:5].tolist()} are outside the {scores.shape[0]} scored items")
    available = scores.shape[0] - len(masked)
    if k > available:
        raise EvaluationError(f"k={k} exceeds the {available} unmasked items")
    scores[masked] = -np.inf
    order = np.argsort(-scores, kind="stable")
    return order[:k]


def _discounts(k: int) -> np.ndarray:
    return 1.0 / np.log2(np.arange(2, k + 2, dtype=np.float64))


def recall_at_k(topk_items: Sequence[int], test_items: Collection[int], k: Optional[int] = None,
                denominator: str = "test") -> float:
    """
    |topk ∩ test| / |test|.

    Args:
        topk_items: Ranked recommendations
        test_items: Held-out relevant items (nonempty)
        k: Cutoff used by the 'min_k' denominator (default len(topk_items))
        denominator: 'test' (|test|) or 'min_k' (min(k, |test|), diagnostic)

    Raises:
        EvaluationError: if the test set is empty
    """
    test = set(int(i) for i in test_items)
    if not test:
        raise EvaluationError("recall is undefined for an empty test set")
    hits = sum(1 for i in topk_items if int(i) in test)
    k = len(topk_items) if k is None else k
    denom = len(test) if denominator == "test" else min(k, len(test))
    return hits / denom


def ndcg_at_k(topk_items: Sequence[int], test_items: Collection[int], k: Optional[int] = None) -> float:
    """
    Binary-gain NDCG: DCG = Σ 1/log₂(rank+1) over hits, IDCG over the first
    min(k, |test|) ranks.

    Raises:
        EvaluationError: if the test set is empty
    """
    test = set(int(i) for i in test_items)
    if not test:
        raise EvaluationError("ndcg is undefined for an empty test set")
    k = len(topk_items) if k is None else k
    discounts = _discounts(max(k, len(topk_items)))
    dcg = sum(discounts[r] for r, item in enumerate(topk_items) if int(item) in test)
    idcg = discounts[:min(k, len(test))].sum()
    return float(dcg / idcg) if idcg > 0 else 0.0


def evaluate_embeddings(
    user_emb: np.ndarray,
    item_emb: np.ndarray,
    mask_graph: Optional[InteractionGraph],
    test_sets: Mapping[int, Collection[int]],
    ks: Iterable[int] = (20,),
    cold_users: Collection[int] = (),
    cold_items: Collection[int] = (),
    batch_users: int = 1024,
    recall_denominator: str = "test",
    run_id: Optional[str] = None,
) -> Dict[int, EvalResult]:
    """
    Streaming ranking evaluation from fused embeddings.

    Users without test items are skipped. Cold users (and users beyond the
    embedding table) cannot be served and score 0 but still count. Cold items
    (and items beyond the table) are never recommended.

    Args:
        user_emb: Fused user embeddings
        item_emb: Fused item embeddings
        mask_graph: Interactions whose items are excluded per user (train, or train + val)
        test_sets: user index -> relevant items
        ks: Cutoffs evaluated in one pass
        cold_users: Users that cannot receive recommendations
        cold_items: Items that cannot be recommended
        batch_users: Rows scored per block
        recall_denominator: 'test' or 'min_k'
        run_id: Optional run identifier for logging

    Returns:
        Dict k -> EvalResult

    Raises:
        EvaluationError: if no user has a nonempty test set
    """
    ks = sorted(set(int(k) for k in ks))
    max_k = ks[-1]
    num_rows, num_items = user_emb.shape[0], item_emb.shape[0]
    cold_u = set(int(u) for u in cold_users)
    cold_i = np.array(sorted(int(i) for i in cold_items if int(i) < num_items), dtype=np.int64)

    evaluable = sorted(int(u) for u, items in test_sets.items() if len(items) > 0)
    if not evaluable:
        raise EvaluationError("No users with nonempty test sets")

    sums = {k: [0.0, 0.0] for k in ks}
    served = np.array([u for u in evaluable if u < num_rows and u not in cold_u], dtype=np.int64)

    for start in range(0, len(served), batch_users):
        users = served[start:start + batch_users]
        _, block = next(iter_score_rows(user_emb[users], item_emb, batch_users=len(users)))
        block = np.array(block, dtype=np.float64)
        if len(cold_i):
            block[:, cold_i] = -np.inf
        masked_counts = np.full(len(users), len(cold_i), dtype=np.int64)
        if mask_graph is not None:
            for row, u in enumerate(users):
                if u < mask_graph.num_users:
                    seen = mask_graph.items_of(u)
                    seen = seen[seen < num_items]
                    fresh = seen[np.isfinite(block[row, seen])]
                    block[row, fresh] = -np.inf
                    masked_counts[row] += len(fresh)
        order = np.argsort(-block, axis=1, kind="stable")[:, :max_k]
        for row, u in enumerate(users):
            available = num_items - masked_counts[row]
            test = test_sets[u]
            for k in ks:
                ranked = order[row, :min(k, available)]
                sums[k][0] += recall_at_k(ranked, test, k=k, denominator=recall_denominator)
                sums[k][1] += ndcg_at_k(ranked, test, k=k)

    count = len(evaluable)
    results = {k: EvalResult(k, sums[k][0] / count, sums[k][1] / count, count) for k in ks}
    logger.debug(
        "Ranking evaluation complete",
        run_id=run_id,
        users_evaluated=count,
        cold_users=len(evaluable) - len(served),
        **{f"recall@{k}": r.recall for k, r in results.items()},
    )
    return results


def evaluate_model(model, g_train: InteractionGraph, test_sets: Mapping[int, Collection[int]], k: int = 20,
                   mask_graph: Optional[InteractionGraph] = None, **kwargs) -> EvalResult:
    """
    Evaluate a model whose embeddings come from propagating over g_train.

    Args:
        model: RecommenderModel
        g_train: Graph used for propagation (and masking unless mask_graph is given)
        test_sets: user index -> relevant items
        k: Cutoff
        mask_graph: Graph of items to exclude (default g_train)

    Returns:
        EvalResult at k
    """
    user_emb, item_emb = model.embeddings(g_train)
    mask = g_train if mask_graph is None else mask_graph
    return evaluate_embeddings(user_emb, item_emb, mask, test_sets, [k], **kwargs)[k]


def brute_force_evaluate(
    scores: np.ndarray,
    train_sets: Mapping[int, Collection[int]],
    test_sets: Mapping[int, Collection[int]],
    k: int,
) -> EvalResult:
    """
    Reference evaluator over a dense score matrix with plain loops; used to
    check the streaming evaluator.
    """
    recalls, ndcgs = [], []
    num_items = scores.shape[1]
    for u in sorted(test_sets):
        test = set(test_sets[u])
        if not test:
            continue
        seen = set(train_sets.get(u, ()))
        candidates = [i for i in range(num_items) if i not in seen]
        candidates.sort(key=lambda i: (-scores[u, i], i))
        ranked = candidates[:k]
        hits = [r for r, i in enumerate(ranked) if i in test]
        recalls.append(len(hits) / len(test))
        dcg = sum(1.0 / math.log2(r + 2) for r in hits)
        idcg = sum(1.0 / math.log2(r + 2) for r in range(min(k, len(test))))
        ndcgs.append(dcg / idcg)
    if not recalls:
        raise EvaluationError("No users with nonempty test sets")
    return EvalResult(k, float(np.mean(recalls)), float(np.mean(ndcgs)), len(recalls))


def format_report(results: Mapping[str, Mapping[int, EvalResult]]) -> str:
    """
    Human-readable table of Recall / NDCG @ k in percent, one row per label.

    Example:
        Model                 Recall@20   NDCG@20
        twin_cf_lgcn_u           5.2300    3.2800
    """
    ks = sorted({k for per_k in results.values() for k in per_k})
    header = f"{'Model':<28}" + "".join(f"{'Recall@' + str(k):>12}{'NDCG@' + str(k):>12}" for k in ks)
    lines = [header, "-" * len(header)]
    for label, per_k in results.items():
        cells = "".join(
            f"{100.0 * per_k[k].recall:>12.4f}{100.0 * per_k[k].ndcg:>12.4f}" if k in per_k else f"{'-':>12}{'-':>12}"
            for k in ks
        )
        lines.append(f"{label:<28}{cells}")
    return "\n".join(lines)
