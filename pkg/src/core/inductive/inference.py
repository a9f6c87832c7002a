"""
Inductive Inference
Embed users and items that were never seen during training, using only the
frozen learned tables and an interaction graph extended with the new
entities' interactions. No parameter is updated here.

The first product of each chain consumes the learnable table, so it must use
a graph whose source-side entities all have a learned row; later products use
the fully extended graph.
"""

import time
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.data.datasets import extended_graph, lower_upper_bound_views
from src.core.errors import InductiveConfigError
from src.core.evaluation.ranking import EvalResult, evaluate_embeddings, topk
from src.core.graph.interaction_graph import InteractionGraph, NormalizedGraph, agg_users_to_items
from src.core.models.networks import CFLGCNModel, LightGCNModel, RecommenderModel, TwinModel, build_model_from_config
from src.core.models.propagation import (
    ChainInfo,
    LayerOutputs,
    NetworkSpec,
    forward_lightgcn,
    fuse,
    run_chain,
)
from src.core.observability.logging import get_logger
from src.core.training.trainer import fit

logger = get_logger("inductive")

SCOPES = ("items", "users", "all")


@dataclass
class InductiveContext:
    """
    Frozen model plus the graphs it is applied to.

    Attributes:
        frozen_model: Trained model (its parameters are only read)
        base_graph: Training graph (m × n)
        extended_graph: Graph with new users/items appended (M × N, M >= m, N >= n)
            containing every base interaction
        refresh_user_embeddings: For new items, recompute user layers on the
            extended graph instead of reusing the base ones
    """
    frozen_model: RecommenderModel
    base_graph: InteractionGraph
    extended_graph: InteractionGraph
    refresh_user_embeddings: bool = False

    def __post_init__(self):
        m, n = self.base_graph.shape
        big_m, big_n = self.extended_graph.shape
        if big_m < m or big_n < n:
            raise InductiveConfigError(f"Extended graph {self.extended_graph.shape} is smaller than base {self.base_graph.shape}")
        if self.base_graph.num_edges and not self.extended_graph.has_edges(*self.base_graph.edges()).all():
            raise InductiveConfigError("Extended graph must contain every base interaction")

    @property
    def new_users(self) -> np.ndarray:
        return np.arange(self.base_graph.num_users, self.extended_graph.num_users)

    @property
    def new_items(self) -> np.ndarray:
        return np.arange(self.base_graph.num_items, self.extended_graph.num_items)


def make_lightgcn_inductive(model: LightGCNModel) -> LightGCNModel:
    """
    LightGCN configuration with the layer-0 sets excluded from fusion, so new
    users/items can be embedded purely from propagated layers.

    Parameters are shared (not copied) with the input model.

    Raises:
        InductiveConfigError: for non-LightGCN models or L = 0
    """
    if not isinstance(model, LightGCNModel):
        raise InductiveConfigError("make_lightgcn_inductive requires a LightGCN model")
    if model.spec.num_prop_layers == 0:
        raise InductiveConfigError("A zero-layer model has nothing left after dropping layer 0")
    spec = replace(model.spec, include_layer0=False)
    return LightGCNModel(spec, model.fusion, model.parameters["user_embedding"], model.parameters["item_embedding"])


def _user_networks(model: RecommenderModel) -> List[Tuple[NetworkSpec, np.ndarray]]:
    if isinstance(model, TwinModel) and model.variant == "cf_lgcn_u":
        return [
            (model.spec_a, model.parameters[model.table_names[0]]),
            (model.spec_b, model.parameters[model.table_names[1]]),
        ]
    if isinstance(model, CFLGCNModel) and model.spec.variant == "cf_lgcn_u":
        return [(model.spec, model.parameters["user_embedding"])]
    raise InductiveConfigError(f"Operation requires a CF-LGCN-U model or its twin, got '{model.kind}'")


def _specs(model: RecommenderModel) -> List[NetworkSpec]:
    if isinstance(model, TwinModel):
        return [model.spec_a, model.spec_b]
    return [model.spec]


def _require_no_layer0(model: RecommenderModel, why: str):
    if any(spec.include_layer0 for spec in _specs(model)):
        raise InductiveConfigError(f"{why} requires include_layer0=False")


def _warn_isolated(graph: InteractionGraph, users: np.ndarray, items: np.ndarray):
    lonely_users = users[graph.user_degrees[users] == 0] if len(users) else users
    lonely_items = items[graph.item_degrees[items] == 0] if len(items) else items
    if len(lonely_users) or len(lonely_items):
        logger.warning(
            "New entities without interactions get zero embeddings",
            users=lonely_users.tolist()[:20],
            items=lonely_items.tolist()[:20],
            num_users=len(lonely_users),
            num_items=len(lonely_items),
        )


def _static_network(spec: NetworkSpec, table: np.ndarray, base: NormalizedGraph, items_graph: NormalizedGraph) -> LayerOutputs:
    """User sets from the base graph; each item set re-aggregated from the previous base user set."""
    chain = ChainInfo("frozen", "user", tuple([base] * spec.num_prop_layers))
    states = run_chain(chain, table)
    outs = LayerOutputs([], [])
    for step, state in enumerate(states):
        if step == 0 and not spec.include_layer0:
            continue
        if step % 2 == 0:
            outs.user_sets.append(state)
        else:
            outs.item_sets.append(agg_users_to_items(items_graph, states[step - 1]))
    return outs


def _new_items_forward(ctx: InductiveContext) -> Tuple[np.ndarray, np.ndarray]:
    model = ctx.frozen_model
    networks = _user_networks(model)
    m = ctx.base_graph.num_users
    items_graph = ctx.extended_graph.restrict(m, ctx.extended_graph.num_items)
    _warn_isolated(items_graph, np.zeros(0, dtype=np.int64), ctx.new_items)
    items_norm = model.normalize(items_graph)

    if ctx.refresh_user_embeddings:
        outs = model.layer_outputs(items_norm)
    else:
        base_norm = model.normalize(ctx.base_graph)
        parts = [_static_network(spec, table, base_norm, items_norm) for spec, table in networks]
        outs = model.combine(*parts) if isinstance(model, TwinModel) else parts[0]
    return fuse(outs, model.fusion)


def infer_new_items(ctx: InductiveContext) -> np.ndarray:
    """
    Item embeddings for base and new items of a CF-LGCN-U (or twin) model.

    New users are excluded (R_I = extended graph restricted to trained users).
    With refresh_user_embeddings every product uses R_I; otherwise user layers
    stay as on the base graph and each item layer is R̃_Iᵀ applied to the
    previous base user layer.

    Returns:
        Item embeddings (N × d')

    Raises:
        InductiveConfigError: for models without a learnable user table
    """
    return _new_items_forward(ctx)[1]


def _new_users_forward(ctx: InductiveContext) -> Tuple[np.ndarray, np.ndarray]:
    model = ctx.frozen_model
    _user_networks(model)
    _require_no_layer0(model, "New-user inference")
    if min(spec.num_prop_layers for spec in _specs(model)) < 2:
        raise InductiveConfigError("New-user inference needs at least two products per network")
    n = ctx.base_graph.num_items
    users_graph = ctx.extended_graph.restrict(ctx.extended_graph.num_users, n)
    _warn_isolated(users_graph, ctx.new_users, np.zeros(0, dtype=np.int64))
    outs = model.layer_outputs(model.normalize(users_graph), first_graph=model.normalize(ctx.base_graph))
    return fuse(outs, model.fusion)


def infer_new_users(ctx: InductiveContext) -> np.ndarray:
    """
    User embeddings for base and new users of a CF-LGCN-U (or twin) model with
    α₀ = 0: E⁽¹⁾ = R̃ᵀU⁽⁰⁾ on the base graph, then U⁽²⁾ = R̃_U E⁽¹⁾ with
    R_U = extended graph restricted to trained items, and so on.

    Returns:
        User embeddings (M × d')

    Raises:
        InductiveConfigError: if layer 0 is fused or a network has fewer than two products
    """
    return _new_users_forward(ctx)[0]


def _pad_rows(table: np.ndarray, rows: int) -> np.ndarray:
    if table.shape[0] == rows:
        return table
    return np.vstack([table, np.zeros((rows - table.shape[0], table.shape[1]))])


def infer_all(ctx: InductiveContext) -> Tuple[np.ndarray, np.ndarray]:
    """
    Embeddings of every user and item when new users and new items arrive
    together.

    CF-LGCN-U and its twin: the first product uses R_I (new users excluded),
    later products the full extended graph. CF-LGCN-E and its twin mirror
    this with new items excluded from the first product. LightGCN pads both
    tables with zero rows and propagates over the extended graph. With no new
    entities the result equals the transductive forward.

    Returns:
        (user embeddings M × d', item embeddings N × d')

    Raises:
        InductiveConfigError: if new entities would need a fused layer-0 row
    """
    model = ctx.frozen_model
    big_m, big_n = ctx.extended_graph.shape
    m, n = ctx.base_graph.shape
    _warn_isolated(ctx.extended_graph, ctx.new_users, ctx.new_items)
    extended = model.normalize(ctx.extended_graph)

    if isinstance(model, LightGCNModel):
        if (big_m > m or big_n > n) and model.spec.include_layer0:
            raise InductiveConfigError("LightGCN inference for new entities requires make_lightgcn_inductive")
        outs = forward_lightgcn(
            extended,
            _pad_rows(model.parameters["user_embedding"], big_m),
            _pad_rows(model.parameters["item_embedding"], big_n),
            model.spec.num_prop_layers,
            include_layer0=model.spec.include_layer0,
        )
        return fuse(outs, model.fusion)

    if _specs(model)[0].variant == "cf_lgcn_e":
        if big_n > n:
            _require_no_layer0(model, "Inference for new items of CF-LGCN-E")
        first = model.normalize(ctx.extended_graph.restrict(big_m, n))
    else:
        _user_networks(model)
        if big_m > m:
            _require_no_layer0(model, "Inference for new users")
        first = model.normalize(ctx.extended_graph.restrict(m, big_n))
    return fuse(model.layer_outputs(extended, first_graph=first), model.fusion)


def inductive_embeddings(ctx: InductiveContext, scope: str = "all") -> Tuple[np.ndarray, np.ndarray]:
    """
    Fused (user, item) embeddings for one inference scope.

    Args:
        ctx: Inference context
        scope: 'items' (new items only), 'users' (new users only) or 'all'
    """
    if scope not in SCOPES:
        raise InductiveConfigError(f"Unknown inference scope '{scope}', expected one of {SCOPES}")
    start = time.time()
    if scope == "items":
        result = _new_items_forward(ctx)
    elif scope == "users":
        result = _new_users_forward(ctx)
    else:
        result = infer_all(ctx)
    logger.info(
        "Inductive embeddings computed",
        scope=scope,
        model=ctx.frozen_model.kind,
        new_users=len(ctx.new_users),
        new_items=len(ctx.new_items),
        refresh_user_embeddings=ctx.refresh_user_embeddings,
        duration_ms=int((time.time() - start) * 1000),
    )
    return result


def recommend_for(
    user_emb: np.ndarray,
    item_emb: np.ndarray,
    users: Sequence[int],
    mask_graph: Optional[InteractionGraph],
    k: int = 20,
) -> Dict[int, np.ndarray]:
    """
    Top-k unobserved items for each requested user; users with fewer than k
    unobserved items get all of them.

    Example:
        >>> recs = recommend_for(U, E, [5, 6], extended_graph, k=10)
        >>> recs[5].shape
        (10,)
    """
    recs = {}
    for u in users:
        u = int(u)
        seen = ()
        if mask_graph is not None and u < mask_graph.num_users:
            seen = mask_graph.items_of(u)
            seen = seen[seen < item_emb.shape[0]]
        available = item_emb.shape[0] - len(np.unique(seen))
        recs[u] = topk(item_emb @ user_emb[u], seen, min(k, available))
    return recs


def protocol_config(cfg):
    """
    Configuration the inductive protocol trains with. LightGCN is trained
    without the layer-0 sets so the model that is evaluated on known entities
    is the same one that embeds new entities.
    """
    if cfg.variant == "lightgcn" and cfg.include_layer0:
        logger.info("Training LightGCN without layer 0 for the inductive protocol", layers=cfg.layers)
        return replace(cfg, include_layer0=False)
    return cfg


def run_inductive_protocol(bundle, cfg, run_id: Optional[str] = None) -> Dict[str, Dict[int, EvalResult]]:
    """
    Lower bound, inductive inference and upper bound on one inductive split.

    The lower and inductive rows share one model trained without the held
    entities (LightGCN without its layer-0 sets, see protocol_config); the
    upper row trains a second model with the inference interactions included.
    All three are scored on the same eval sets with the same mask (extended
    training plus validation interactions).

    Args:
        bundle: DatasetBundle from inductive_split
        cfg: ExperimentConfig
        run_id: Identifier grouping the log entries

    Returns:
        {'lower': {k: EvalResult}, 'inductive': {...}, 'upper': {...}}
    """
    if cfg.variant == "mf":
        raise InductiveConfigError("Matrix factorization has no propagated layers to infer new entities from")
    if cfg.variant != "lightgcn" and cfg.include_layer0:
        raise InductiveConfigError("The inductive protocol trains CF-LGCN models with include_layer0=False")

    cfg = protocol_config(cfg)
    lower, upper = lower_upper_bound_views(bundle)
    eval_sets = bundle.inductive.eval_sets
    mask = upper.known_graph()
    train_cfg = cfg.train_config()
    results: Dict[str, Dict[int, EvalResult]] = {}

    base_model = build_model_from_config(cfg, lower.num_users, lower.num_items, np.random.default_rng(cfg.seed))
    fit(base_model, lower, train_cfg, run_id=run_id)
    user_emb, item_emb = base_model.embeddings(lower.graph_train)
    results["lower"] = evaluate_embeddings(
        user_emb, item_emb, mask, eval_sets, cfg.k,
        cold_users=lower.cold_users, cold_items=lower.cold_items, run_id=run_id,
    )

    ctx = InductiveContext(base_model, lower.graph_train, extended_graph(bundle), cfg.refresh_user_embeddings)
    user_emb, item_emb = inductive_embeddings(ctx, "all")
    results["inductive"] = evaluate_embeddings(user_emb, item_emb, mask, eval_sets, cfg.k, run_id=run_id)

    upper_model = build_model_from_config(cfg, upper.num_users, upper.num_items, np.random.default_rng(cfg.seed))
    fit(upper_model, upper, train_cfg, run_id=run_id)
    user_emb, item_emb = upper_model.embeddings(upper.graph_train)
    results["upper"] = evaluate_embeddings(user_emb, item_emb, mask, eval_sets, cfg.k, run_id=run_id)

    logger.info(
        "Inductive protocol complete",
        run_id=run_id,
        **{f"{row}_recall@{k}": r.recall for row, per_k in results.items() for k, r in per_k.items()},
    )
    return results
