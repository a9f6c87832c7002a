"""
Datasets
Interaction file parsing, dense re-indexing, transductive and inductive
splits, the lower/upper bound views and split manifests.

Interaction files use one line per user: "user_id item_id item_id ...".
External ids are re-indexed densely in order of first appearance; train and
test files share one id map.
"""

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

import numpy as np

from src.core.errors import DataFormatError, SplitError
from src.core.graph.interaction_graph import InteractionGraph, extend, from_edges
from src.core.observability.logging import get_logger

logger = get_logger("datasets")

TRAIN_FILE = "train.txt"
TEST_FILE = "test.txt"
MANIFEST_TAGS = ("train", "val", "test", "inference", "eval")

# Published statistics of the standard benchmark files, used to sanity check prepared data
KNOWN_DATASETS = {
    "gowalla": {"users": 29858, "items": 40981, "interactions": 1027370},
    "yelp2018": {"users": 31668, "items": 38048, "interactions": 1561406},
    "amazon-book": {"users": 52643, "items": 91599, "interactions": 2984108},
    "douban-movie": {"users": 3022, "items": 6971, "interactions": 195472},
}


@dataclass(frozen=True, eq=False)
class IdMap:
    """External ids by dense index, for users and items."""
    user_ids: np.ndarray
    item_ids: np.ndarray

    @property
    def num_users(self) -> int:
        return len(self.user_ids)

    @property
    def num_items(self) -> int:
        return len(self.item_ids)

    def user_index(self) -> Dict[int, int]:
        return {int(ext): idx for idx, ext in enumerate(self.user_ids)}

    def item_index(self) -> Dict[int, int]:
        return {int(ext): idx for idx, ext in enumerate(self.item_ids)}

    def reorder(self, user_order: np.ndarray, item_order: np.ndarray) -> "IdMap":
        """Id map after moving old index user_order[k] to new index k."""
        return IdMap(self.user_ids[user_order], self.item_ids[item_order])

    @classmethod
    def identity(cls, num_users: int, num_items: int) -> "IdMap":
        return cls(np.arange(num_users, dtype=np.int64), np.arange(num_items, dtype=np.int64))

    def __eq__(self, other) -> bool:
        if not isinstance(other, IdMap):
            return NotImplemented
        return np.array_equal(self.user_ids, other.user_ids) and np.array_equal(self.item_ids, other.item_ids)


class _IdRegistry:
    """Assigns dense indices in order of first appearance."""

    def __init__(self, ids: Iterable[int] = ()):
        self.index: Dict[int, int] = {}
        self.ids: List[int] = []
        for ext in ids:
            self.add(int(ext))

    def add(self, ext: int) -> int:
        idx = self.index.get(ext)
        if idx is None:
            idx = len(self.ids)
            self.index[ext] = idx
            self.ids.append(ext)
        return idx

    def to_array(self) -> np.ndarray:
        return np.asarray(self.ids, dtype=np.int64)


@dataclass
class InductiveBundle:
    """
    Held-out entities for the inductive protocol.

    Held users and items occupy the trailing indices of the remapped id
    space: users [base_users, num_users) and items [base_items, num_items).

    Attributes:
        held_users: Indices of held-out users
        held_items: Indices of held-out items
        inference_edges: (k, 2) interactions revealed at inference time
        eval_edges: (k, 2) interactions of held entities kept for evaluation
        num_users: Total users including held ones
        num_items: Total items including held ones
        base_users: Users seen during training
        base_items: Items seen during training
        eval_sets: user -> items of eval_edges merged with the base test sets
    """
    held_users: np.ndarray
    held_items: np.ndarray
    inference_edges: np.ndarray
    eval_edges: np.ndarray
    num_users: int
    num_items: int
    base_users: int
    base_items: int
    eval_sets: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def is_empty(self) -> bool:
        return len(self.held_users) == 0 and len(self.held_items) == 0

    @classmethod
    def empty(cls, num_users: int, num_items: int, eval_sets: Optional[Dict[int, np.ndarray]] = None) -> "InductiveBundle":
        none = np.zeros(0, dtype=np.int64)
        no_edges = np.zeros((0, 2), dtype=np.int64)
        return cls(none, none, no_edges, no_edges, num_users, num_items, num_users, num_items, dict(eval_sets or {}))


@dataclass
class DatasetBundle:
    """
    Training graph plus validation/test item sets for one protocol.

    Attributes:
        graph_train: Interactions used for training and propagation
        val_sets: user -> validation items
        test_sets: user -> test items
        id_maps: External ids of users and items
        inductive: Held-out entity data (inductive splits only)
        cold_users: Users that cannot be served in this view
        cold_items: Items that cannot be recommended in this view
    """
    graph_train: InteractionGraph
    val_sets: Dict[int, np.ndarray]
    test_sets: Dict[int, np.ndarray]
    id_maps: Optional[IdMap] = None
    inductive: Optional[InductiveBundle] = None
    cold_users: FrozenSet[int] = frozenset()
    cold_items: FrozenSet[int] = frozenset()

    @property
    def num_users(self) -> int:
        return self.graph_train.num_users

    @property
    def num_items(self) -> int:
        return self.graph_train.num_items

    def val_edges(self) -> np.ndarray:
        return edges_from_sets(self.val_sets)

    def test_edges(self) -> np.ndarray:
        return edges_from_sets(self.test_sets)

    def known_graph(self) -> InteractionGraph:
        """Training plus validation interactions, the items masked at test time."""
        return extend(self.graph_train, self.val_edges(), self.num_users, self.num_items)

    def statistics(self) -> Dict[str, float]:
        interactions = self.graph_train.num_edges + len(self.val_edges()) + len(self.test_edges())
        return {
            "users": self.num_users,
            "items": self.num_items,
            "interactions": interactions,
            "density": interactions / max(self.num_users * self.num_items, 1),
        }


def sets_from_edges(users: np.ndarray, items: np.ndarray) -> Dict[int, np.ndarray]:
    """Group (user, item) pairs into user -> sorted unique items."""
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    if len(users) == 0:
        return {}
    order = np.lexsort((items, users))
    users, items = users[order], items[order]
    starts = np.flatnonzero(np.r_[True, users[1:] != users[:-1]])
    groups = np.split(items, starts[1:])
    return {int(users[s]): np.unique(g) for s, g in zip(starts, groups)}


def edges_from_sets(sets: Dict[int, np.ndarray]) -> np.ndarray:
    """Flatten user -> items sets into a (k, 2) array ordered by user."""
    rows = [np.stack([np.full(len(items), u, dtype=np.int64), np.asarray(items, dtype=np.int64)], axis=1)
            for u, items in sorted(sets.items()) if len(items)]
    if not rows:
        return np.zeros((0, 2), dtype=np.int64)
    return np.concatenate(rows)


def _merge_sets(a: Dict[int, np.ndarray], b: Dict[int, np.ndarray]) -> Dict[int, np.ndarray]:
    merged = dict(a)
    for u, items in b.items():
        merged[u] = np.union1d(merged[u], items) if u in merged else np.asarray(items, dtype=np.int64)
    return merged


# ============================================================================
# Parsing
# ============================================================================

def parse_interactions(
    lines: Iterable[str],
    id_map: Optional[IdMap] = None,
    source: Optional[str] = None,
) -> Tuple[np.ndarray, IdMap]:
    """
    Parse "user item item ..." lines into dense (user, item) index pairs.

    Args:
        lines: Text lines; blank lines are skipped
        id_map: Existing ids to extend (so train and test share indices)
        source: File name used in error messages

    Returns:
        ((k, 2) edge array, IdMap)

    Raises:
        DataFormatError: on a non-integer token, with its line number

    Example:
        >>> edges, ids = parse_interactions(["7 3 5", "9 5"])
        >>> edges.tolist(), ids.user_ids.tolist(), ids.item_ids.tolist()
        ([[0, 0], [0, 1], [1, 1]], [7, 9], [3, 5])
    """
    users = _IdRegistry(id_map.user_ids if id_map is not None else ())
    items = _IdRegistry(id_map.item_ids if id_map is not None else ())
    pairs: List[Tuple[int, int]] = []
    for line_number, line in enumerate(lines, start=1):
        tokens = line.split()
        if not tokens:
            continue
        values = []
        for token in tokens:
            try:
                values.append(int(token))
            except ValueError:
                raise DataFormatError(line_number, token, source) from None
        u = users.add(values[0])
        pairs.extend((u, items.add(ext)) for ext in values[1:])
    edges = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return edges, IdMap(users.to_array(), items.to_array())


def serialize_interactions(edges: np.ndarray, id_map: IdMap, users: Optional[Iterable[int]] = None) -> str:
    """
    Write edges back in the line format, users in index order and each
    user's items in index order. Users without edges get a bare id line.

    Args:
        edges: (k, 2) interactions
        id_map: External ids
        users: Users to write (default: every user in the id map)
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    sets = sets_from_edges(edges[:, 0], edges[:, 1])
    lines = []
    for u in (range(id_map.num_users) if users is None else sorted(int(x) for x in users)):
        tokens = [str(int(id_map.user_ids[u]))]
        tokens.extend(str(int(id_map.item_ids[i])) for i in sets.get(u, ()))
        lines.append(" ".join(tokens))
    return "\n".join(lines) + "\n"


def load_interaction_file(path, id_map: Optional[IdMap] = None) -> Tuple[np.ndarray, IdMap]:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        return parse_interactions(f, id_map=id_map, source=path.name)


@dataclass
class RawInteractions:
    """Parsed train/test files before any split."""
    train_edges: np.ndarray
    test_edges: np.ndarray
    id_map: IdMap

    @property
    def num_users(self) -> int:
        return self.id_map.num_users

    @property
    def num_items(self) -> int:
        return self.id_map.num_items


def read_dataset(directory) -> RawInteractions:
    """
    Read train.txt and test.txt from a dataset directory with a shared id map.

    Raises:
        FileNotFoundError: if either file is missing
        DataFormatError: on malformed content
    """
    directory = Path(directory)
    train_edges, ids = load_interaction_file(directory / TRAIN_FILE)
    test_edges, ids = load_interaction_file(directory / TEST_FILE, id_map=ids)
    logger.info(
        "Dataset read",
        directory=str(directory),
        users=ids.num_users,
        items=ids.num_items,
        train_interactions=len(train_edges),
        test_interactions=len(test_edges),
    )
    return RawInteractions(train_edges, test_edges, ids)


def load_dataset(directory, rng: np.random.Generator, val_fraction: float = 0.10) -> DatasetBundle:
    """Read a dataset directory and carve the transductive validation split."""
    raw = read_dataset(directory)
    bundle = transductive_split(
        raw.train_edges, raw.test_edges, raw.num_users, raw.num_items, rng,
        id_maps=raw.id_map, val_fraction=val_fraction,
    )
    check_known_statistics(Path(directory).name, bundle)
    return bundle


def check_known_statistics(name: str, bundle: DatasetBundle) -> Optional[Dict[str, bool]]:
    """Compare prepared counts with the published ones for a known dataset name."""
    expected = KNOWN_DATASETS.get(name.lower())
    if expected is None:
        return None
    stats = bundle.statistics()
    matches = {key: int(stats[key]) == value for key, value in expected.items()}
    log = logger.info if all(matches.values()) else logger.warning
    log("Dataset statistics check", dataset=name, expected=expected,
        actual={k: int(stats[k]) for k in expected}, matches=matches)
    return matches


# ============================================================================
# Splits
# ============================================================================

def _split_count(fraction: float, count: int) -> int:
    return int(math.floor(fraction * count + 1e-9))


def transductive_split(
    train_edges: np.ndarray,
    test_edges: np.ndarray,
    num_users: int,
    num_items: int,
    rng: np.random.Generator,
    id_maps: Optional[IdMap] = None,
    val_fraction: float = 0.10,
) -> DatasetBundle:
    """
    Move a random floor(val_fraction · deg) of each user's training items
    (at least one when deg >= 2, none when deg == 1) into validation.

    Args:
        train_edges: (k, 2) training interactions
        test_edges: (k, 2) provided test interactions
        num_users: m
        num_items: n
        rng: Seeded generator
        id_maps: External ids carried into the bundle
        val_fraction: Share of each user's training items moved to validation

    Returns:
        DatasetBundle whose train, validation and test interactions are disjoint

    Raises:
        SplitError: if a user has test items but no training items
    """
    train = from_edges(num_users, num_items, train_edges)
    test = from_edges(num_users, num_items, test_edges)

    test_users, test_items = test.edges()
    overlap = train.has_edges(test_users, test_items)
    if overlap.any():
        logger.warning("Dropping test interactions already in training", count=int(overlap.sum()))
        test_users, test_items = test_users[~overlap], test_items[~overlap]

    orphaned = np.setdiff1d(np.unique(test_users), np.flatnonzero(train.user_degrees > 0))
    if len(orphaned):
        raise SplitError(f"{len(orphaned)} users have test items but no training items (first: {int(orphaned[0])})")

    val_users, val_items = [], []
    if val_fraction > 0:
        for u in np.flatnonzero(train.user_degrees >= 2):
            items = train.items_of(u)
            count = max(1, _split_count(val_fraction, len(items)))
            chosen = rng.choice(items, size=count, replace=False)
            val_users.append(np.full(count, u, dtype=np.int64))
            val_items.append(np.sort(chosen))
    val_users = np.concatenate(val_users) if val_users else np.zeros(0, dtype=np.int64)
    val_items = np.concatenate(val_items) if val_items else np.zeros(0, dtype=np.int64)

    users, items = train.edges()
    is_val = from_edges(num_users, num_items, np.stack([val_users, val_items], axis=1)).has_edges(users, items)
    graph_train = InteractionGraph(num_users, num_items, users[~is_val].copy(), items[~is_val].copy())

    bundle = DatasetBundle(
        graph_train=graph_train,
        val_sets=sets_from_edges(val_users, val_items),
        test_sets=sets_from_edges(test_users, test_items),
        id_maps=id_maps if id_maps is not None else IdMap.identity(num_users, num_items),
    )
    logger.info(
        "Transductive split",
        users=num_users,
        items=num_items,
        train=graph_train.num_edges,
        val=len(val_users),
        test=len(test_users),
    )
    return bundle


def _choose_held(rng, totals: np.ndarray, fraction: float, minimum: int, what: str) -> np.ndarray:
    count = max(1, _split_count(fraction, len(totals)))
    eligible = np.flatnonzero(totals >= minimum)
    if count > len(eligible):
        raise SplitError(
            f"Cannot hold out {count} {what}: only {len(eligible)} have at least {minimum} interactions"
        )
    return np.sort(rng.choice(eligible, size=count, replace=False))


def _order_with_held_last(is_held: np.ndarray) -> np.ndarray:
    return np.concatenate([np.flatnonzero(~is_held), np.flatnonzero(is_held)])


def _split_owned(rng, owners: np.ndarray, others: np.ndarray, fraction: float) -> np.ndarray:
    """Boolean mask over owned edges: True for edges revealed at inference time."""
    reveal = np.zeros(len(owners), dtype=bool)
    if len(owners) == 0:
        return reveal
    order = np.lexsort((others, owners))
    starts = np.flatnonzero(np.r_[True, owners[order][1:] != owners[order][:-1]])
    for group in np.split(order, starts[1:]):
        count = min(len(group), max(1, _split_count(fraction, len(group))))
        reveal[rng.permutation(group)[:count]] = True
    return reveal


def inductive_split(
    bundle: DatasetBundle,
    rng: np.random.Generator,
    holdout_fraction: float = 0.05,
    inference_fraction: float = 0.5,
    entities: str = "both",
    min_user_interactions: int = 10,
    min_item_interactions: int = 5,
) -> DatasetBundle:
    """
    Hold out users and/or items with all their interactions.

    Held entities are drawn among those with enough interactions. A held
    entity with no interactions toward non-held entities is returned to the
    base set (users first, then items). Each held entity's interactions with
    non-held entities are split into inference (max(1, floor(fraction·count)))
    and evaluation; interactions between two held entities go to evaluation.

    Indices are remapped so held users and items come last.

    Args:
        bundle: Transductive bundle
        rng: Seeded generator
        holdout_fraction: Share of users and of items held out (0 disables)
        inference_fraction: Share of each held entity's interactions revealed at inference
        entities: 'both', 'users' or 'items'
        min_user_interactions: Minimum interactions of an eligible user
        min_item_interactions: Minimum interactions of an eligible item

    Returns:
        DatasetBundle over the base entities with .inductive populated

    Raises:
        SplitError: if too few entities qualify
    """
    m, n = bundle.num_users, bundle.num_items
    if holdout_fraction <= 0:
        return replace(bundle, inductive=InductiveBundle.empty(m, n, bundle.test_sets))
    if entities not in ("both", "users", "items"):
        raise SplitError(f"entities must be 'both', 'users' or 'items', got '{entities}'")

    tr_u, tr_i = bundle.graph_train.edges()
    val, test = bundle.val_edges(), bundle.test_edges()
    users = np.concatenate([tr_u, val[:, 0], test[:, 0]])
    items = np.concatenate([tr_i, val[:, 1], test[:, 1]])
    tags = np.concatenate([
        np.zeros(len(tr_u), dtype=np.int8), np.ones(len(val), dtype=np.int8), np.full(len(test), 2, dtype=np.int8)
    ])

    is_hu = np.zeros(m, dtype=bool)
    is_hi = np.zeros(n, dtype=bool)
    if entities in ("both", "users"):
        is_hu[_choose_held(rng, np.bincount(users, minlength=m), holdout_fraction, min_user_interactions, "users")] = True
    if entities in ("both", "items"):
        is_hi[_choose_held(rng, np.bincount(items, minlength=n), holdout_fraction, min_item_interactions, "items")] = True

    reach = np.bincount(users[is_hu[users] & ~is_hi[items]], minlength=m)
    dropped_users = np.flatnonzero(is_hu & (reach == 0))
    is_hu[dropped_users] = False
    reach = np.bincount(items[is_hi[items] & ~is_hu[users]], minlength=n)
    dropped_items = np.flatnonzero(is_hi & (reach == 0))
    is_hi[dropped_items] = False
    if len(dropped_users) or len(dropped_items):
        logger.warning(
            "Held entities without interactions toward training entities returned to base",
            users=len(dropped_users),
            items=len(dropped_items),
        )

    user_order = _order_with_held_last(is_hu)
    item_order = _order_with_held_last(is_hi)
    new_u = np.empty(m, dtype=np.int64)
    new_u[user_order] = np.arange(m)
    new_i = np.empty(n, dtype=np.int64)
    new_i[item_order] = np.arange(n)
    m_base, n_base = int((~is_hu).sum()), int((~is_hi).sum())

    hu, hi = is_hu[users], is_hi[items]
    base = ~hu & ~hi
    user_owned = hu & ~hi
    item_owned = ~hu & hi

    reveal_u = _split_owned(rng, users[user_owned], items[user_owned], inference_fraction)
    reveal_i = _split_owned(rng, items[item_owned], users[item_owned], inference_fraction)

    def pairs(mask: np.ndarray) -> np.ndarray:
        return np.stack([new_u[users[mask]], new_i[items[mask]]], axis=1).astype(np.int64)

    owned_u, owned_i = pairs(user_owned), pairs(item_owned)
    inference_edges = np.concatenate([owned_u[reveal_u], owned_i[reveal_i]])
    eval_edges = np.concatenate([owned_u[~reveal_u], owned_i[~reveal_i], pairs(hu & hi)])

    train_edges = pairs(base & (tags == 0))
    val_edges = pairs(base & (tags == 1))
    test_edges = pairs(base & (tags == 2))
    test_sets = sets_from_edges(test_edges[:, 0], test_edges[:, 1])

    inductive = InductiveBundle(
        held_users=np.arange(m_base, m, dtype=np.int64),
        held_items=np.arange(n_base, n, dtype=np.int64),
        inference_edges=inference_edges,
        eval_edges=eval_edges,
        num_users=m,
        num_items=n,
        base_users=m_base,
        base_items=n_base,
        eval_sets=_merge_sets(sets_from_edges(eval_edges[:, 0], eval_edges[:, 1]), test_sets),
    )
    id_maps = bundle.id_maps.reorder(user_order, item_order) if bundle.id_maps is not None else None
    logger.info(
        "Inductive split",
        held_users=m - m_base,
        held_items=n - n_base,
        inference=len(inference_edges),
        eval=len(eval_edges),
        base_train=len(train_edges),
    )
    return DatasetBundle(
        graph_train=from_edges(m_base, n_base, train_edges),
        val_sets=sets_from_edges(val_edges[:, 0], val_edges[:, 1]),
        test_sets=test_sets,
        id_maps=id_maps,
        inductive=inductive,
    )


def extended_graph(bundle: DatasetBundle) -> InteractionGraph:
    """Training graph enlarged with the held entities and their inference interactions."""
    ind = _require_inductive(bundle)
    return extend(bundle.graph_train, ind.inference_edges, ind.num_users, ind.num_items)


def _require_inductive(bundle: DatasetBundle) -> InductiveBundle:
    if bundle.inductive is None:
        raise SplitError("Bundle has no inductive split")
    return bundle.inductive


def lower_upper_bound_views(bundle: DatasetBundle) -> Tuple[DatasetBundle, DatasetBundle]:
    """
    Bracketing views of an inductive split.

    lower: trains without held entities; held users cannot be served and held
    items cannot be recommended. upper: trains with the inference interactions
    included. Both are evaluated on the inductive eval sets.
    """
    ind = _require_inductive(bundle)
    lower = replace(
        bundle,
        test_sets=ind.eval_sets,
        cold_users=frozenset(int(u) for u in ind.held_users),
        cold_items=frozenset(int(i) for i in ind.held_items),
    )
    upper = replace(
        bundle,
        graph_train=extended_graph(bundle),
        test_sets=ind.eval_sets,
        cold_users=frozenset(),
        cold_items=frozenset(),
    )
    return lower, upper


# ============================================================================
# Synthetic data
# ============================================================================

def synthetic_block_interactions(
    rng: np.random.Generator,
    num_users: int = 20,
    num_items: int = 20,
    blocks: int = 2,
    density: float = 0.8,
    test_fraction: float = 0.2,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Block-structured interactions: users interact only with items of their own
    block, each with probability `density`. Every user gets at least two
    interactions; floor(test_fraction · deg) of them (at least one) are
    held out for testing.

    Returns:
        (train_edges, test_edges) as (k, 2) arrays
    """
    user_block = np.arange(num_users) * blocks // num_users
    item_block = np.arange(num_items) * blocks // num_items
    train, test = [], []
    for u in range(num_users):
        pool = np.flatnonzero(item_block == user_block[u])
        picked = pool[rng.random(len(pool)) < density]
        if len(picked) < 2:
            picked = np.sort(rng.choice(pool, size=min(2, len(pool)), replace=False))
        count = max(1, _split_count(test_fraction, len(picked))) if len(picked) >= 2 else 0
        held = set(rng.choice(picked, size=count, replace=False).tolist())
        for i in picked:
            (test if int(i) in held else train).append((u, int(i)))
    return np.asarray(train, dtype=np.int64).reshape(-1, 2), np.asarray(test, dtype=np.int64).reshape(-1, 2)


def synthetic_block_dataset(
    rng: np.random.Generator,
    num_users: int = 20,
    num_items: int = 20,
    blocks: int = 2,
    density: float = 0.8,
    test_fraction: float = 0.2,
    val_fraction: float = 0.10,
) -> DatasetBundle:
    """Synthetic block dataset with the transductive validation split applied."""
    train, test = synthetic_block_interactions(rng, num_users, num_items, blocks, density, test_fraction)
    return transductive_split(train, test, num_users, num_items, rng, val_fraction=val_fraction)


def write_interaction_files(directory, train_edges: np.ndarray, test_edges: np.ndarray, id_map: IdMap) -> Path:
    """Write train.txt and test.txt in the line format."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / TRAIN_FILE).write_text(serialize_interactions(train_edges, id_map), encoding="utf-8")
    test_users = np.unique(np.asarray(test_edges, dtype=np.int64).reshape(-1, 2)[:, 0])
    (directory / TEST_FILE).write_text(serialize_interactions(test_edges, id_map, users=test_users), encoding="utf-8")
    return directory


# ============================================================================
# Split manifests
# ============================================================================

def write_split_manifest(bundle: DatasetBundle, path) -> Path:
    """
    Record every interaction with its split tag so a split can be replayed.

    Lines are "user_id item_id tag" in external ids. Header comment lines
    carry the id maps (index order) and, for inductive splits, the base sizes.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ids = bundle.id_maps or IdMap.identity(*_total_shape(bundle))
    lines = [
        "# users " + " ".join(str(int(x)) for x in ids.user_ids),
        "# items " + " ".join(str(int(x)) for x in ids.item_ids),
    ]
    ind = bundle.inductive
    if ind is not None:
        lines.append(f"# base {ind.base_users} {ind.base_items}")

    def emit(edges: np.ndarray, tag: str):
        for u, i in np.asarray(edges, dtype=np.int64).reshape(-1, 2):
            lines.append(f"{int(ids.user_ids[u])} {int(ids.item_ids[i])} {tag}")

    emit(np.stack(bundle.graph_train.edges(), axis=1), "train")
    emit(bundle.val_edges(), "val")
    emit(bundle.test_edges(), "test")
    if ind is not None:
        emit(ind.inference_edges, "inference")
        emit(ind.eval_edges, "eval")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("Split manifest written", path=str(path), lines=len(lines))
    return path


def _total_shape(bundle: DatasetBundle) -> Tuple[int, int]:
    if bundle.inductive is not None:
        return bundle.inductive.num_users, bundle.inductive.num_items
    return bundle.num_users, bundle.num_items


def read_split_manifest(path) -> DatasetBundle:
    """
    Rebuild a DatasetBundle from a manifest written by write_split_manifest.

    Raises:
        FileNotFoundError: if the manifest is missing
        DataFormatError: on a malformed line or unknown tag
    """
    path = Path(path)
    users = _IdRegistry()
    items = _IdRegistry()
    base: Optional[Tuple[int, int]] = None
    tagged: Dict[str, List[Tuple[int, int]]] = {tag: [] for tag in MANIFEST_TAGS}

    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if tokens[0] == "#":
                if len(tokens) < 2:
                    continue
                kind, values = tokens[1], tokens[2:]
                try:
                    numbers = [int(v) for v in values]
                except ValueError as e:
                    raise DataFormatError(line_number, str(e), path.name) from None
                if kind == "users":
                    for ext in numbers:
                        users.add(ext)
                elif kind == "items":
                    for ext in numbers:
                        items.add(ext)
                elif kind == "base":
                    base = (numbers[0], numbers[1])
                continue
            if len(tokens) != 3 or tokens[2] not in tagged:
                raise DataFormatError(line_number, line.strip(), path.name)
            try:
                u_ext, i_ext = int(tokens[0]), int(tokens[1])
            except ValueError:
                raise DataFormatError(line_number, line.strip(), path.name) from None
            tagged[tokens[2]].append((users.add(u_ext), items.add(i_ext)))

    ids = IdMap(users.to_array(), items.to_array())
    m, n = ids.num_users, ids.num_items
    edges = {tag: np.asarray(pairs, dtype=np.int64).reshape(-1, 2) for tag, pairs in tagged.items()}
    m_base, n_base = base if base is not None else (m, n)

    test_sets = sets_from_edges(edges["test"][:, 0], edges["test"][:, 1])
    bundle = DatasetBundle(
        graph_train=from_edges(m_base, n_base, edges["train"]),
        val_sets=sets_from_edges(edges["val"][:, 0], edges["val"][:, 1]),
        test_sets=test_sets,
        id_maps=ids,
    )
    if base is not None:
        eval_edges = edges["eval"]
        bundle.inductive = InductiveBundle(
            held_users=np.arange(m_base, m, dtype=np.int64),
            held_items=np.arange(n_base, n, dtype=np.int64),
            inference_edges=edges["inference"],
            eval_edges=eval_edges,
            num_users=m,
            num_items=n,
            base_users=m_base,
            base_items=n_base,
            eval_sets=_merge_sets(sets_from_edges(eval_edges[:, 0], eval_edges[:, 1]), test_sets),
        )
    logger.info("Split manifest read", path=str(path), users=m, items=n, inductive=base is not None)
    return bundle
