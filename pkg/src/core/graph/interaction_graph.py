"""
Interaction Graph
Binary user-item bipartite graph with degree normalization and the two
directional sparse-dense products every propagation layer is built from.

Storage follows the scipy CSR layout: row i's column indices live in
indices[indptr[i]:indptr[i+1]]. The graph keeps a row-major (CSR) and a
column-major (CSC) view of the same edge set. Nothing here ever forms an
m×m or n×n matrix.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.sparse as sp

from src.core.errors import DimensionMismatchError, GraphIndexError
from src.core.observability.logging import get_logger

logger = get_logger("interaction_graph")

NORMALIZATIONS = ("none", "left", "right", "symmetric")


def _as_edge_arrays(edges) -> Tuple[np.ndarray, np.ndarray]:
    """Accept a list of pairs or an (k, 2) array and return (users, items)."""
    arr = np.asarray(edges, dtype=np.int64)
    if arr.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    arr = arr.reshape(-1, 2)
    return arr[:, 0].copy(), arr[:, 1].copy()


def _build_csr(rows: np.ndarray, cols: np.ndarray, data: np.ndarray, shape: Tuple[int, int]) -> sp.csr_matrix:
    """Build a canonical CSR matrix (sorted indices, deterministic layout)."""
    order = np.lexsort((cols, rows))
    rows, cols, data = rows[order], cols[order], data[order]
    indptr = np.zeros(shape[0] + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=shape[0]), out=indptr[1:])
    return sp.csr_matrix((data, cols, indptr), shape=shape)


class InteractionGraph:
    """
    Immutable binary interaction matrix R (m users × n items).

    Edges are deduplicated on construction. Row-major order (users ascending,
    items ascending within a user) is the canonical edge order returned by
    edges().
    """

    def __init__(self, num_users: int, num_items: int, users: np.ndarray, items: np.ndarray):
        """
        Build from already validated, deduplicated, row-major sorted edge arrays.
        Use from_edges() for raw input.
        """
        self._num_users = int(num_users)
        self._num_items = int(num_items)
        self._users = users
        self._items = items
        self._users.setflags(write=False)
        self._items.setflags(write=False)

        self._keys = users * max(self._num_items, 1) + items
        self._keys.setflags(write=False)

        data = np.ones(len(users), dtype=np.float64)
        self._csr = _build_csr(users, items, data, (self._num_users, self._num_items))
        self._csc = self._csr.tocsc()

        self._user_degrees = np.bincount(users, minlength=self._num_users).astype(np.float64)
        self._item_degrees = np.bincount(items, minlength=self._num_items).astype(np.float64)

    @property
    def num_users(self) -> int:
        return self._num_users

    @property
    def num_items(self) -> int:
        return self._num_items

    @property
    def num_edges(self) -> int:
        return len(self._users)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self._num_users, self._num_items)

    @property
    def csr(self) -> sp.csr_matrix:
        """Row-major view (user rows)."""
        return self._csr

    @property
    def csc(self) -> sp.csc_matrix:
        """Column-major view (item columns)."""
        return self._csc

    @property
    def user_degrees(self) -> np.ndarray:
        return self._user_degrees

    @property
    def item_degrees(self) -> np.ndarray:
        return self._item_degrees

    def edges(self) -> Tuple[np.ndarray, np.ndarray]:
        """Return (users, items) arrays in row-major order."""
        return self._users, self._items

    def edge_list(self):
        return list(zip(self._users.tolist(), self._items.tolist()))

    def items_of(self, user: int) -> np.ndarray:
        start, end = self._csr.indptr[user], self._csr.indptr[user + 1]
        return self._csr.indices[start:end]

    def users_of(self, item: int) -> np.ndarray:
        start, end = self._csc.indptr[item], self._csc.indptr[item + 1]
        return self._csc.indices[start:end]

    def has_edges(self, users: np.ndarray, items: np.ndarray) -> np.ndarray:
        """Vectorized membership test for (user, item) pairs."""
        query = np.asarray(users, dtype=np.int64) * max(self._num_items, 1) + np.asarray(items, dtype=np.int64)
        if len(self._keys) == 0:
            return np.zeros(query.shape, dtype=bool)
        pos = np.searchsorted(self._keys, query)
        pos = np.minimum(pos, len(self._keys) - 1)
        return self._keys[pos] == query

    def transpose(self) -> "InteractionGraph":
        """Same edges with user and item roles swapped (n × m)."""
        return from_edges(self._num_items, self._num_users, np.stack([self._items, self._users], axis=1))

    def restrict(self, num_users: int, num_items: int) -> "InteractionGraph":
        """Keep only edges whose user and item indices fall below the given bounds."""
        keep = (self._users < num_users) & (self._items < num_items)
        return InteractionGraph(num_users, num_items, self._users[keep].copy(), self._items[keep].copy())

    def __eq__(self, other) -> bool:
        if not isinstance(other, InteractionGraph):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self._users, other._users)
            and np.array_equal(self._items, other._items)
        )

    def __repr__(self) -> str:
        return f"InteractionGraph(num_users={self._num_users}, num_items={self._num_items}, num_edges={self.num_edges})"


def from_edges(num_users: int, num_items: int, edges) -> InteractionGraph:
    """
    Build an interaction graph from (user, item) pairs.

    Duplicate pairs are collapsed; all edge values are 1.

    Args:
        num_users: Number of user rows (m)
        num_items: Number of item columns (n)
        edges: Iterable of (user, item) pairs or an (k, 2) integer array

    Returns:
        InteractionGraph with row-major and column-major views

    Raises:
        GraphIndexError: if any pair is out of range

    Example:
        >>> g = from_edges(2, 2, [(0, 0), (1, 0), (1, 1)])
        >>> g.num_edges, g.user_degrees[1], g.item_degrees[0]
        (3, 2.0, 2.0)
    """
    users, items = _as_edge_arrays(edges)

    bad = (users < 0) | (users >= num_users) | (items < 0) | (items >= num_items)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise GraphIndexError(int(users[idx]), int(items[idx]), num_users, num_items)

    keys = np.unique(users * max(num_items, 1) + items)
    unique_users = keys // max(num_items, 1)
    unique_items = keys % max(num_items, 1)

    graph = InteractionGraph(num_users, num_items, unique_users, unique_items)
    duplicates = len(users) - graph.num_edges
    if duplicates:
        logger.debug("Collapsed duplicate interactions", duplicates=duplicates, num_edges=graph.num_edges)
    return graph


def extend(graph: InteractionGraph, new_edges, new_num_users: int, new_num_items: int) -> InteractionGraph:
    """
    Return an enlarged graph with appended users/items and extra edges.

    The input graph is untouched; every original edge is kept.

    Args:
        graph: Base graph
        new_edges: Additional (user, item) pairs, may reference old and new indices
        new_num_users: New user count (>= graph.num_users)
        new_num_items: New item count (>= graph.num_items)

    Raises:
        GraphIndexError: if a new edge exceeds the new bounds
        ValueError: if the new bounds shrink the graph
    """
    if new_num_users < graph.num_users or new_num_items < graph.num_items:
        raise ValueError(
            f"extend cannot shrink graph {graph.shape} to ({new_num_users}, {new_num_items})"
        )
    users, items = graph.edges()
    add_users, add_items = _as_edge_arrays(new_edges)
    combined = np.stack([np.concatenate([users, add_users]), np.concatenate([items, add_items])], axis=1)
    return from_edges(new_num_users, new_num_items, combined)


def _safe_inverse(values: np.ndarray, power: float) -> np.ndarray:
    """values ** -power, with 0 where values == 0."""
    out = np.zeros(values.shape, dtype=np.float64)
    base = np.sqrt(values) if power == 0.5 else values
    np.divide(1.0, base, out=out, where=values > 0)
    return out


@dataclass(frozen=True)
class NormalizedGraph:
    """
    Interaction graph with per-edge weights for both product directions.

    user_op (m × n) computes items → users (R̃ X); item_op (n × m) computes
    users → items (R̃ᵀ X). For 'none' and 'symmetric' item_op is exactly
    user_op transposed. For 'left' the row entity of each product is divided
    by its degree, for 'right' the column entity.
    """
    base: InteractionGraph
    variant: str
    users: np.ndarray
    items: np.ndarray
    user_weights: np.ndarray
    item_weights: np.ndarray
    user_op: sp.csr_matrix
    item_op: sp.csr_matrix

    @property
    def num_users(self) -> int:
        return self.base.num_users

    @property
    def num_items(self) -> int:
        return self.base.num_items

    @property
    def edge_weights(self) -> np.ndarray:
        """Per-edge weights of the items → users product, row-major order."""
        return self.user_weights

    def weight(self, user: int, item: int, toward: str = "users") -> float:
        """Weight of edge (user, item) in the product toward 'users' or 'items'."""
        op = self.user_op if toward == "users" else self.item_op
        row, col = (user, item) if toward == "users" else (item, user)
        return float(op[row, col])

    @classmethod
    def from_weights(
        cls,
        base: InteractionGraph,
        variant: str,
        users: np.ndarray,
        items: np.ndarray,
        user_weights: np.ndarray,
        item_weights: np.ndarray,
    ) -> "NormalizedGraph":
        m, n = base.shape
        user_op = _build_csr(users, items, user_weights, (m, n))
        item_op = _build_csr(items, users, item_weights, (n, m))
        return cls(base, variant, users, items, user_weights, item_weights, user_op, item_op)


def normalize(graph: InteractionGraph, variant: str = "symmetric") -> NormalizedGraph:
    """
    Compute edge weights for one of the normalization variants.

    Degrees come from the base graph without self-loops. Zero-degree entities
    own no edges, so their propagated rows are zero vectors.

    Args:
        graph: Interaction graph
        variant: none | left | right | symmetric

    Returns:
        NormalizedGraph carrying both directional operators

    Example:
        >>> g = from_edges(2, 2, [(0, 0), (1, 0), (1, 1)])
        >>> normalize(g, "symmetric").weight(1, 0)
        0.5
    """
    if variant not in NORMALIZATIONS:
        raise ValueError(f"Unknown normalization '{variant}', expected one of {NORMALIZATIONS}")

    users, items = graph.edges()
    du = graph.user_degrees
    di = graph.item_degrees

    if variant == "none":
        user_w = np.ones(len(users), dtype=np.float64)
        item_w = user_w.copy()
    elif variant == "symmetric":
        user_w = _safe_inverse(du[users] * di[items], 0.5)
        item_w = user_w.copy()
    elif variant == "left":
        user_w = _safe_inverse(du, 1.0)[users]
        item_w = _safe_inverse(di, 1.0)[items]
    else:
        user_w = _safe_inverse(di, 1.0)[items]
        item_w = _safe_inverse(du, 1.0)[users]

    return NormalizedGraph.from_weights(graph, variant, users, items, user_w, item_w)


def _check_rows(X: np.ndarray, rows: int, what: str) -> np.ndarray:
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != rows:
        raise DimensionMismatchError(what, f"({rows}, d)", X.shape)
    return X


def agg_items_to_users(graph: NormalizedGraph, X: np.ndarray) -> np.ndarray:
    """
    User-side aggregation R̃ X.

    Args:
        graph: Normalized graph
        X: Item-side matrix (n × d)

    Returns:
        User-side matrix (m × d)
    """
    X = _check_rows(X, graph.num_items, "item-side input")
    return np.asarray(graph.user_op @ X)


def agg_users_to_items(graph: NormalizedGraph, X: np.ndarray) -> np.ndarray:
    """
    Item-side aggregation R̃ᵀ X.

    Args:
        graph: Normalized graph
        X: User-side matrix (m × d)

    Returns:
        Item-side matrix (n × d)
    """
    X = _check_rows(X, graph.num_users, "user-side input")
    return np.asarray(graph.item_op @ X)


def adjoint_items_to_users(graph: NormalizedGraph, G: np.ndarray) -> np.ndarray:
    """Adjoint of agg_items_to_users: maps an m × d gradient back to item side."""
    G = _check_rows(G, graph.num_users, "user-side gradient")
    return np.asarray(graph.user_op.T @ G)


def adjoint_users_to_items(graph: NormalizedGraph, G: np.ndarray) -> np.ndarray:
    """Adjoint of agg_users_to_items: maps an n × d gradient back to user side."""
    G = _check_rows(G, graph.num_items, "item-side gradient")
    return np.asarray(graph.item_op.T @ G)
