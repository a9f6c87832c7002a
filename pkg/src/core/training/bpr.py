"""
BPR Objective
Pairwise ranking loss -Σ ln σ(z_pos - z_neg) averaged over a batch, plus
λ times the sum of squared parameter entries, and its exact gradient with
respect to every learnable table.
"""

from typing import Dict, Optional, Tuple

import numpy as np
from scipy.special import expit

from src.core.errors import MissingCacheError
from src.core.graph.interaction_graph import NormalizedGraph
from src.core.models.networks import ForwardCache, RecommenderModel
from src.core.models.propagation import score_triples


def bpr_loss(z_pos: np.ndarray, z_neg: np.ndarray) -> np.ndarray:
    """
    Per-triple loss -ln σ(z_pos - z_neg), computed as softplus(z_neg - z_pos)
    so large margins of either sign stay finite.

    Example:
        >>> float(bpr_loss(np.array([0.0]), np.array([0.0]))[0])
        0.6931471805599453
    """
    return np.logaddexp(0.0, -(np.asarray(z_pos) - np.asarray(z_neg)))


def l2_penalty(parameters: Dict[str, np.ndarray], l2_lambda: float) -> float:
    return float(l2_lambda * sum(np.sum(p * p) for p in parameters.values()))


def backward(
    model: RecommenderModel,
    cache: Optional[ForwardCache],
    triples: np.ndarray,
    scores: Tuple[np.ndarray, np.ndarray],
    l2_lambda: float,
) -> Dict[str, np.ndarray]:
    """
    Gradient of the batch objective w.r.t. every parameter table.

    Args:
        model: Model that produced the cache
        cache: Forward cache from model.forward on the batch graph
        triples: (k, 3) triples of the batch
        scores: (z_pos, z_neg) from the same forward pass
        l2_lambda: Regularization weight

    Returns:
        Dict parameter name -> gradient with the parameter's shape

    Raises:
        MissingCacheError: if cache is None
    """
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if cache is None:
        raise MissingCacheError("BPR backward requires the forward cache of the same batch")

    grad_user = np.zeros_like(cache.user_emb)
    grad_item = np.zeros_like(cache.item_emb)
    if len(triples):
        users, pos, neg = triples[:, 0], triples[:, 1], triples[:, 2]
        z_pos, z_neg = scores
        # d/dx softplus(-x) = -σ(-x), averaged over the batch
        coef = (-expit(-(z_pos - z_neg)) / len(triples))[:, None]
        u = cache.user_emb[users]
        np.add.at(grad_user, users, coef * (cache.item_emb[pos] - cache.item_emb[neg]))
        np.add.at(grad_item, pos, coef * u)
        np.add.at(grad_item, neg, -coef * u)

    grads = model.backward(cache, grad_user, grad_item)
    for name, param in model.parameters.items():
        grads[name] = grads[name] + 2.0 * l2_lambda * param
    return grads


def batch_objective(
    model: RecommenderModel,
    graph: NormalizedGraph,
    triples: np.ndarray,
    l2_lambda: float,
) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    Forward, loss and gradient for one batch.

    Returns:
        (loss, gradients) where loss = mean BPR + λ·Σ‖params‖²; an empty batch
        contributes only the regularizer
    """
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    cache = model.forward(graph)
    if len(triples):
        scores = score_triples(cache.user_emb, cache.item_emb, triples)
        data_loss = float(np.mean(bpr_loss(*scores)))
    else:
        scores = (np.zeros(0), np.zeros(0))
        data_loss = 0.0
    loss = data_loss + l2_penalty(model.parameters, l2_lambda)
    return loss, backward(model, cache, triples, scores, l2_lambda)
