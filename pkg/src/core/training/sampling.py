"""
Sampling
BPR triple sampling and per-batch edge dropout.

Triples are int64 arrays of shape (k, 3) with columns (user, pos_item, neg_item).
Negatives are drawn uniformly from the items the user has not interacted with,
by rejection.
"""

import numpy as np

from src.core.errors import SamplingError
from src.core.graph.interaction_graph import InteractionGraph, NormalizedGraph
from src.core.observability.logging import get_logger

logger = get_logger("sampling")

MAX_REJECTION_ROUNDS = 100


def sample_negatives(
    rng: np.random.Generator,
    graph: InteractionGraph,
    users: np.ndarray,
    max_rounds: int = MAX_REJECTION_ROUNDS,
) -> np.ndarray:
    """
    One uniformly drawn non-interacted item per entry of `users`.

    Args:
        rng: Seeded generator
        graph: Training interactions
        users: User index per draw
        max_rounds: Rejection rounds before giving up

    Returns:
        Item indices, same length as users

    Raises:
        SamplingError: if a user keeps hitting observed items (e.g. interacted with every item)
    """
    users = np.asarray(users, dtype=np.int64)
    negatives = rng.integers(0, graph.num_items, size=len(users))
    pending = np.flatnonzero(graph.has_edges(users, negatives))
    rounds = 1
    while len(pending):
        if rounds >= max_rounds:
            user = int(users[pending[0]])
            logger.error(
                "Negative sampling exhausted",
                user=user,
                degree=int(graph.user_degrees[user]),
                num_items=graph.num_items,
                rounds=rounds,
            )
            raise SamplingError(user, rounds)
        negatives[pending] = rng.integers(0, graph.num_items, size=len(pending))
        still = graph.has_edges(users[pending], negatives[pending])
        pending = pending[still]
        rounds += 1
    return negatives


def _triples_for_edges(
    rng: np.random.Generator,
    graph: InteractionGraph,
    users: np.ndarray,
    items: np.ndarray,
    negatives_per_positive: int,
) -> np.ndarray:
    if negatives_per_positive > 1:
        users = np.repeat(users, negatives_per_positive)
        items = np.repeat(items, negatives_per_positive)
    negatives = sample_negatives(rng, graph, users)
    return np.stack([users, items, negatives], axis=1).astype(np.int64)


def sample_batch(
    rng: np.random.Generator,
    graph: InteractionGraph,
    batch_size: int,
    negatives_per_positive: int = 1,
) -> np.ndarray:
    """
    Draw batch_size observed interactions uniformly (with replacement) and
    pair each with sampled negatives.

    Returns:
        Triples array of shape (batch_size · negatives_per_positive, 3)

    Example:
        >>> triples = sample_batch(np.random.default_rng(0), graph, 4)
        >>> triples.shape
        (4, 3)
    """
    if graph.num_edges == 0:
        raise ValueError("Cannot sample triples from a graph without interactions")
    users, items = graph.edges()
    picks = rng.integers(0, graph.num_edges, size=batch_size)
    return _triples_for_edges(rng, graph, users[picks], items[picks], negatives_per_positive)


def epoch_triples(rng: np.random.Generator, graph: InteractionGraph, negatives_per_positive: int = 1) -> np.ndarray:
    """
    One epoch: every observed interaction exactly once (per negative), in a
    shuffled order, each with a fresh negative.
    """
    if graph.num_edges == 0:
        raise ValueError("Cannot sample triples from a graph without interactions")
    users, items = graph.edges()
    order = rng.permutation(graph.num_edges)
    return _triples_for_edges(rng, graph, users[order], items[order], negatives_per_positive)


def edge_dropout(rng: np.random.Generator, graph: NormalizedGraph, p: float) -> NormalizedGraph:
    """
    Keep each edge independently with probability 1 - p and rescale kept
    weights by 1/(1 - p). Degrees (and therefore normalization) stay those of
    the full graph. p = 0 returns the input unchanged.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"Edge dropout probability must be in [0, 1), got {p}")
    if p == 0.0:
        return graph
    keep = rng.random(len(graph.users)) >= p
    scale = 1.0 / (1.0 - p)
    return NormalizedGraph.from_weights(
        graph.base,
        graph.variant,
        graph.users[keep],
        graph.items[keep],
        graph.user_weights[keep] * scale,
        graph.item_weights[keep] * scale,
    )
