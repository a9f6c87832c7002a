"""
Propagation
Forward computation shared by every light network variant, plus layer fusion
and inner-product scoring.

All variants are built from chains of alternating directional products:
a chain starts from one learnable table (user side or item side) and applies
R̃ᵀ / R̃ in turn. CF-LGCN-U is one chain from U⁽⁰⁾, CF-LGCN-E one chain from
E⁽⁰⁾, and LightGCN is exactly the two chains interleaved by layer parity.
Similarity matrices S_u = R̃R̃ᵀ and S_e = R̃ᵀR̃ only ever appear implicitly as
two consecutive products.
"""

from dataclasses import dataclass, field, replace
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import DimensionMismatchError, FusionError
from src.core.graph.interaction_graph import (
    NORMALIZATIONS,
    NormalizedGraph,
    adjoint_items_to_users,
    adjoint_users_to_items,
    agg_items_to_users,
    agg_users_to_items,
)

VARIANTS = ("cf_lgcn_u", "cf_lgcn_e", "lightgcn")
FUSION_MODES = ("mean", "concat")


@dataclass(frozen=True)
class NetworkSpec:
    """
    Configuration of one light network.

    Attributes:
        variant: cf_lgcn_u | cf_lgcn_e | lightgcn
        num_prop_layers: Graph products applied (LightGCN: layers L); 0 allowed
        normalization: none | left | right | symmetric
        include_layer0: Whether the learnable table itself is a fused set (α₀ ≠ 0)
    """
    variant: str = "cf_lgcn_u"
    num_prop_layers: int = 1
    normalization: str = "symmetric"
    include_layer0: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"Unknown variant '{self.variant}', expected one of {VARIANTS}")
        if self.num_prop_layers < 0:
            raise ValueError(f"num_prop_layers must be >= 0, got {self.num_prop_layers}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"Unknown normalization '{self.normalization}'")


@dataclass(frozen=True)
class FusionSpec:
    """
    How layer sets are combined.

    Mean mode uses `weights` (α_l) for user sets and `item_weights` for item
    sets when given, else `weights` on both sides; None means uniform
    1/(set count). Concat mode ignores weights.
    """
    mode: str = "mean"
    weights: Optional[Tuple[float, ...]] = None
    item_weights: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.mode not in FUSION_MODES:
            raise ValueError(f"Unknown fusion mode '{self.mode}', expected one of {FUSION_MODES}")
        if self.weights is not None:
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if self.item_weights is not None:
            object.__setattr__(self, "item_weights", tuple(float(w) for w in self.item_weights))

    def resolve_weights(self, num_user_sets: int, num_item_sets: int) -> Tuple[np.ndarray, np.ndarray]:
        """Mean-mode weights for each side, validated against the set counts."""
        def uniform(count: int) -> np.ndarray:
            return np.full(count, 1.0 / count)

        def checked(weights: Sequence[float], count: int, side: str) -> np.ndarray:
            if len(weights) != count:
                raise FusionError(f"{len(weights)} {side} weights given for {count} {side} sets")
            return np.asarray(weights, dtype=np.float64)

        user_w = uniform(num_user_sets) if self.weights is None else checked(self.weights, num_user_sets, "user")
        if self.item_weights is not None:
            item_w = checked(self.item_weights, num_item_sets, "item")
        elif self.weights is None:
            item_w = uniform(num_item_sets)
        else:
            item_w = checked(self.weights, num_item_sets, "item")
        return user_w, item_w


@dataclass(frozen=True)
class ChainInfo:
    """
    One propagation chain: which table it starts from and the graph used at
    each product (graphs[p - 1] for product p).
    """
    source: str
    start_side: str
    graphs: Tuple[NormalizedGraph, ...]

    @property
    def length(self) -> int:
        return len(self.graphs)

    def side_at(self, step: int) -> str:
        if step % 2 == 0:
            return self.start_side
        return "item" if self.start_side == "user" else "user"


@dataclass
class LayerOutputs:
    """
    Ordered user and item embedding sets produced by one or more networks.

    user_refs/item_refs give, for each set, the (chain index, step) it came
    from, which is all the backward pass needs since every layer is linear.
    """
    user_sets: List[np.ndarray]
    item_sets: List[np.ndarray]
    user_refs: List[Tuple[int, int]] = field(default_factory=list)
    item_refs: List[Tuple[int, int]] = field(default_factory=list)
    chains: List[ChainInfo] = field(default_factory=list)


def init_embedding_table(rng: np.random.Generator, rows: int, dim: int, std: float = 0.1) -> np.ndarray:
    """Zero-mean Gaussian embedding table (rows × dim)."""
    if dim <= 0:
        raise ValueError(f"Embedding dimension must be positive, got {dim}")
    return rng.normal(0.0, std, size=(rows, dim))


def _check_table(values: np.ndarray, rows: int, what: str) -> np.ndarray:
    values = np.asarray(values)
    if values.ndim != 2 or values.shape[0] != rows:
        raise DimensionMismatchError(what, f"({rows}, d)", values.shape)
    return values


def _chain_graphs(graph: NormalizedGraph, steps: int, first_graph: Optional[NormalizedGraph]) -> Tuple[NormalizedGraph, ...]:
    graphs = [graph] * steps
    if first_graph is not None and steps > 0:
        graphs[0] = first_graph
    return tuple(graphs)


def run_chain(chain: ChainInfo, x0: np.ndarray) -> List[np.ndarray]:
    """Apply the chain's alternating products; returns all states including x0."""
    states = [x0]
    x = x0
    for step, g in enumerate(chain.graphs, start=1):
        x = agg_users_to_items(g, x) if chain.side_at(step - 1) == "user" else agg_items_to_users(g, x)
        states.append(x)
    return states


def forward_cf_lgcn_u(
    graph: NormalizedGraph,
    U0: np.ndarray,
    spec: NetworkSpec,
    first_graph: Optional[NormalizedGraph] = None,
    source: str = "user_embedding",
) -> LayerOutputs:
    """
    CF-LGCN-U forward: E⁽¹⁾ = R̃ᵀU⁽⁰⁾, U⁽²⁾ = R̃E⁽¹⁾, E⁽³⁾ = R̃ᵀU⁽²⁾, ...

    Args:
        graph: Normalized graph used for every product
        U0: Learnable user table (m × d)
        spec: Network configuration (num_prop_layers products)
        first_graph: Optional different graph for the first product
            (inductive inference uses R_I there)
        source: Parameter name recorded for the backward pass

    Returns:
        LayerOutputs with user_sets = [U⁽⁰⁾?, U⁽²⁾, ...], item_sets = [E⁽¹⁾, E⁽³⁾, ...]
    """
    first = first_graph or graph
    U0 = _check_table(U0, first.num_users, "user table")
    chain = ChainInfo(source, "user", _chain_graphs(graph, spec.num_prop_layers, first_graph))
    return _single_chain_outputs(chain, U0, spec.include_layer0)


def forward_cf_lgcn_e(
    graph: NormalizedGraph,
    E0: np.ndarray,
    spec: NetworkSpec,
    first_graph: Optional[NormalizedGraph] = None,
    source: str = "item_embedding",
) -> LayerOutputs:
    """
    CF-LGCN-E forward, the mirror of CF-LGCN-U: U⁽¹⁾ = R̃E⁽⁰⁾ first.
    """
    first = first_graph or graph
    E0 = _check_table(E0, first.num_items, "item table")
    chain = ChainInfo(source, "item", _chain_graphs(graph, spec.num_prop_layers, first_graph))
    return _single_chain_outputs(chain, E0, spec.include_layer0)


def _single_chain_outputs(chain: ChainInfo, x0: np.ndarray, include_layer0: bool) -> LayerOutputs:
    states = run_chain(chain, x0)
    outs = LayerOutputs([], [], chains=[chain])
    for step, state in enumerate(states):
        if step == 0 and not include_layer0:
            continue
        if chain.side_at(step) == "user":
            outs.user_sets.append(state)
            outs.user_refs.append((0, step))
        else:
            outs.item_sets.append(state)
            outs.item_refs.append((0, step))
    return outs


def forward_lightgcn(
    graph: NormalizedGraph,
    U0: np.ndarray,
    E0: np.ndarray,
    num_layers: int,
    include_layer0: bool = True,
) -> LayerOutputs:
    """
    LightGCN forward H⁽ˡ⁺¹⁾ = Ã H⁽ˡ⁾ as the coupled pair
    U⁽ˡ⁺¹⁾ = R̃E⁽ˡ⁾, E⁽ˡ⁺¹⁾ = R̃ᵀU⁽ˡ⁾.

    Ã is off-block-diagonal, so U⁽ˡ⁾ depends only on U⁽⁰⁾ for even l and only
    on E⁽⁰⁾ for odd l. The forward therefore runs one chain from each table and
    reads layer l from the chain of matching parity.

    Args:
        graph: Normalized graph
        U0: User table (m × d)
        E0: Item table (n × d)
        num_layers: L (0 gives plain matrix factorization)
        include_layer0: Whether U⁽⁰⁾/E⁽⁰⁾ are fused sets

    Returns:
        LayerOutputs with L+1 (or L) user sets and item sets
    """
    U0 = _check_table(U0, graph.num_users, "user table")
    E0 = _check_table(E0, graph.num_items, "item table")
    if U0.shape[1] != E0.shape[1]:
        raise DimensionMismatchError("embedding dimension", U0.shape[1], E0.shape[1])

    graphs = _chain_graphs(graph, num_layers, None)
    from_users = ChainInfo("user_embedding", "user", graphs)
    from_items = ChainInfo("item_embedding", "item", graphs)
    user_chain = run_chain(from_users, U0)
    item_chain = run_chain(from_items, E0)

    outs = LayerOutputs([], [], chains=[from_users, from_items])
    for layer in range(num_layers + 1):
        if layer == 0 and not include_layer0:
            continue
        even = layer % 2 == 0
        outs.user_sets.append(user_chain[layer] if even else item_chain[layer])
        outs.user_refs.append((0 if even else 1, layer))
        outs.item_sets.append(item_chain[layer] if even else user_chain[layer])
        outs.item_refs.append((1 if even else 0, layer))
    return outs


def drop_surplus(outs: LayerOutputs) -> LayerOutputs:
    """
    Drop the earliest surplus sets on whichever side has more, so both sides
    have equal set counts for concat fusion.
    """
    nu, ni = len(outs.user_sets), len(outs.item_sets)
    skip_u = max(nu - ni, 0)
    skip_i = max(ni - nu, 0)
    return replace(
        outs,
        user_sets=outs.user_sets[skip_u:],
        user_refs=outs.user_refs[skip_u:],
        item_sets=outs.item_sets[skip_i:],
        item_refs=outs.item_refs[skip_i:],
    )


def merge_outputs(parts: Sequence[LayerOutputs]) -> LayerOutputs:
    """Concatenate the set lists of several networks, re-indexing chains."""
    merged = LayerOutputs([], [])
    for part in parts:
        offset = len(merged.chains)
        merged.chains.extend(part.chains)
        merged.user_sets.extend(part.user_sets)
        merged.item_sets.extend(part.item_sets)
        merged.user_refs.extend((c + offset, s) for c, s in part.user_refs)
        merged.item_refs.extend((c + offset, s) for c, s in part.item_refs)
    return merged


def fuse(outs: LayerOutputs, fusion: FusionSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    Combine layer sets into final user and item embeddings.

    Mean: weighted sum per side (d' = d). Concat: horizontal stack after the
    drop rule (d' = d × set count).

    Raises:
        FusionError: on weight/set count mismatch or an empty side
    """
    if fusion.mode == "concat":
        outs = drop_surplus(outs)
    nu, ni = len(outs.user_sets), len(outs.item_sets)
    if nu == 0 or ni == 0:
        raise FusionError(f"Cannot fuse {nu} user sets with {ni} item sets")

    if fusion.mode == "concat":
        return np.hstack(outs.user_sets), np.hstack(outs.item_sets)

    user_w, item_w = fusion.resolve_weights(nu, ni)
    user_emb = sum(w * s for w, s in zip(user_w, outs.user_sets))
    item_emb = sum(w * s for w, s in zip(item_w, outs.item_sets))
    return user_emb, item_emb


def fuse_backward(
    outs: LayerOutputs, fusion: FusionSpec, grad_user: np.ndarray, grad_item: np.ndarray
) -> Tuple[List[Optional[np.ndarray]], List[Optional[np.ndarray]]]:
    """
    Adjoint of fuse: gradient of each set given gradients of the fused outputs.
    Sets removed by the drop rule get None.
    """
    nu, ni = len(outs.user_sets), len(outs.item_sets)
    user_grads: List[Optional[np.ndarray]] = [None] * nu
    item_grads: List[Optional[np.ndarray]] = [None] * ni

    if fusion.mode == "concat":
        kept = min(nu, ni)
        d = outs.user_sets[0].shape[1]
        for k in range(kept):
            user_grads[nu - kept + k] = grad_user[:, k * d:(k + 1) * d]
            item_grads[ni - kept + k] = grad_item[:, k * d:(k + 1) * d]
        return user_grads, item_grads

    user_w, item_w = fusion.resolve_weights(nu, ni)
    user_grads = [w * grad_user for w in user_w]
    item_grads = [w * grad_item for w in item_w]
    return user_grads, item_grads


def backprop_chains(
    outs: LayerOutputs,
    user_grads: Sequence[Optional[np.ndarray]],
    item_grads: Sequence[Optional[np.ndarray]],
) -> dict:
    """
    Push per-set gradients back through every chain to its starting table.

    Returns:
        Dict mapping chain source (parameter name) to its gradient
    """
    per_step = [dict() for _ in outs.chains]
    for refs, grads in ((outs.user_refs, user_grads), (outs.item_refs, item_grads)):
        for (chain_idx, step), grad in zip(refs, grads):
            if grad is None:
                continue
            slot = per_step[chain_idx]
            slot[step] = grad if step not in slot else slot[step] + grad

    result = {}
    for chain, step_grads in zip(outs.chains, per_step):
        g = step_grads.get(chain.length)
        for step in range(chain.length, 0, -1):
            if g is not None:
                graph = chain.graphs[step - 1]
                if chain.side_at(step) == "item":
                    g = adjoint_users_to_items(graph, g)
                else:
                    g = adjoint_items_to_users(graph, g)
            earlier = step_grads.get(step - 1)
            if earlier is not None:
                g = earlier if g is None else g + earlier
        if g is None:
            continue
        result[chain.source] = g if chain.source not in result else result[chain.source] + g
    return result


def score_all(user_emb: np.ndarray, item_emb: np.ndarray) -> np.ndarray:
    """Dense score matrix Z = U Eᵀ (m × n). Use iter_score_rows for large m, n."""
    if user_emb.shape[1] != item_emb.shape[1]:
        raise DimensionMismatchError("fused embedding dimension", user_emb.shape[1], item_emb.shape[1])
    return user_emb @ item_emb.T


def iter_score_rows(
    user_emb: np.ndarray, item_emb: np.ndarray, batch_users: int = 1024
) -> Iterator[Tuple[int, np.ndarray]]:
    """Yield (first user index, score block) for consecutive user row blocks."""
    if user_emb.shape[1] != item_emb.shape[1]:
        raise DimensionMismatchError("fused embedding dimension", user_emb.shape[1], item_emb.shape[1])
    for start in range(0, user_emb.shape[0], batch_users):
        yield start, user_emb[start:start + batch_users] @ item_emb.T


def score_triples(user_emb: np.ndarray, item_emb: np.ndarray, triples: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Scores for (user, pos_item, neg_item) triples only.

    Returns:
        (z_pos, z_neg) arrays of length len(triples)
    """
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if user_emb.shape[1] != item_emb.shape[1]:
        raise DimensionMismatchError("fused embedding dimension", user_emb.shape[1], item_emb.shape[1])
    users, pos, neg = triples[:, 0], triples[:, 1], triples[:, 2]
    if len(triples) and (
        users.min() < 0 or users.max() >= user_emb.shape[0]
        or min(pos.min(), neg.min()) < 0 or max(pos.max(), neg.max()) >= item_emb.shape[0]
    ):
        raise IndexError("Triple references a user or item outside the embedding tables")
    u = user_emb[users]
    z_pos = np.einsum("ij,ij->i", u, item_emb[pos])
    z_neg = np.einsum("ij,ij->i", u, item_emb[neg])
    return z_pos, z_neg
