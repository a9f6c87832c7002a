"""
Networks
Model classes wrapping the propagation primitives: single CF-LGCN-U/E
networks, LightGCN (MF at zero layers) and twin CF-LGCN-U/E.

Every model exposes the same surface:
  - parameters: dict of learnable tables (the only trainable state)
  - forward(graph) -> ForwardCache with fused embeddings and layer sets
  - backward(cache, grad_user, grad_item) -> gradient per parameter table
"""

from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

import numpy as np

from src.core.errors import MissingCacheError
from src.core.graph.interaction_graph import InteractionGraph, NormalizedGraph, normalize
from src.core.models.propagation import (
    FusionSpec,
    LayerOutputs,
    NetworkSpec,
    backprop_chains,
    drop_surplus,
    forward_cf_lgcn_e,
    forward_cf_lgcn_u,
    forward_lightgcn,
    fuse,
    fuse_backward,
    init_embedding_table,
    merge_outputs,
)
from src.core.observability.logging import get_logger

logger = get_logger("networks")


@dataclass
class ForwardCache:
    """Everything backward() needs from one forward pass."""
    graph: NormalizedGraph
    outputs: LayerOutputs
    user_emb: np.ndarray
    item_emb: np.ndarray


class RecommenderModel:
    """
    Base class for light graph recommenders.

    Subclasses implement layer_outputs(); fusion, forward and backward are shared.
    """

    kind = "base"

    def __init__(self, fusion: FusionSpec, parameters: Dict[str, np.ndarray]):
        self.fusion = fusion
        self.parameters = parameters

    @property
    def normalization(self) -> str:
        raise NotImplementedError

    @property
    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters.values()))

    @property
    def dim(self) -> int:
        return next(iter(self.parameters.values())).shape[1]

    def normalize(self, graph: InteractionGraph) -> NormalizedGraph:
        return normalize(graph, self.normalization)

    def layer_outputs(self, graph: NormalizedGraph, first_graph: Optional[NormalizedGraph] = None) -> LayerOutputs:
        raise NotImplementedError

    def forward(self, graph: NormalizedGraph) -> ForwardCache:
        outs = self.layer_outputs(graph)
        user_emb, item_emb = fuse(outs, self.fusion)
        return ForwardCache(graph, outs, user_emb, item_emb)

    def embeddings(self, graph) -> Tuple[np.ndarray, np.ndarray]:
        """Fused (user, item) embeddings; accepts a raw or normalized graph."""
        if isinstance(graph, InteractionGraph):
            graph = self.normalize(graph)
        cache = self.forward(graph)
        return cache.user_emb, cache.item_emb

    def backward(
        self, cache: Optional[ForwardCache], grad_user: np.ndarray, grad_item: np.ndarray
    ) -> Dict[str, np.ndarray]:
        """
        Gradient of a scalar objective w.r.t. every parameter table, given its
        gradient w.r.t. the fused embeddings. Regularization is added by the caller.

        Raises:
            MissingCacheError: if no forward cache is supplied
        """
        if cache is None:
            raise MissingCacheError("backward() requires the cache of the forward pass on the same graph")
        user_grads, item_grads = fuse_backward(cache.outputs, self.fusion, grad_user, grad_item)
        grads = backprop_chains(cache.outputs, user_grads, item_grads)
        return {name: grads.get(name, np.zeros_like(p)) for name, p in self.parameters.items()}

    def with_parameters(self, parameters: Dict[str, np.ndarray]) -> "RecommenderModel":
        clone = self.copy()
        clone.parameters = {k: np.array(v, dtype=np.float64) for k, v in parameters.items()}
        return clone

    def copy(self) -> "RecommenderModel":
        raise NotImplementedError

    def describe(self) -> Dict[str, object]:
        raise NotImplementedError


class CFLGCNModel(RecommenderModel):
    """
    Single CF-LGCN network. cf_lgcn_u learns only U⁽⁰⁾ (m·d reals),
    cf_lgcn_e only E⁽⁰⁾ (n·d reals).
    """

    def __init__(self, spec: NetworkSpec, fusion: FusionSpec, table: np.ndarray):
        if spec.variant not in ("cf_lgcn_u", "cf_lgcn_e"):
            raise ValueError(f"CFLGCNModel does not support variant '{spec.variant}'")
        self.spec = spec
        self.kind = spec.variant
        name = "user_embedding" if spec.variant == "cf_lgcn_u" else "item_embedding"
        super().__init__(fusion, {name: table})

    @property
    def normalization(self) -> str:
        return self.spec.normalization

    @property
    def table_name(self) -> str:
        return "user_embedding" if self.spec.variant == "cf_lgcn_u" else "item_embedding"

    def layer_outputs(self, graph, first_graph=None):
        table = self.parameters[self.table_name]
        if self.spec.variant == "cf_lgcn_u":
            return forward_cf_lgcn_u(graph, table, self.spec, first_graph=first_graph)
        return forward_cf_lgcn_e(graph, table, self.spec, first_graph=first_graph)

    def copy(self):
        return CFLGCNModel(self.spec, self.fusion, self.parameters[self.table_name].copy())

    def describe(self):
        return {
            "variant": self.spec.variant,
            "layers": self.spec.num_prop_layers,
            "normalization": self.spec.normalization,
            "include_layer0": self.spec.include_layer0,
            "twin": False,
        }


class LightGCNModel(RecommenderModel):
    """
    LightGCN baseline learning both U⁽⁰⁾ and E⁽⁰⁾ ((m+n)·d reals).
    With zero layers the fused model is plain matrix factorization.
    """

    def __init__(self, spec: NetworkSpec, fusion: FusionSpec, user_table: np.ndarray, item_table: np.ndarray):
        if spec.variant != "lightgcn":
            raise ValueError(f"LightGCNModel requires variant 'lightgcn', got '{spec.variant}'")
        self.spec = spec
        self.kind = "mf" if spec.num_prop_layers == 0 else "lightgcn"
        super().__init__(fusion, {"user_embedding": user_table, "item_embedding": item_table})

    @property
    def normalization(self) -> str:
        return self.spec.normalization

    def layer_outputs(self, graph, first_graph=None):
        return forward_lightgcn(
            graph,
            self.parameters["user_embedding"],
            self.parameters["item_embedding"],
            self.spec.num_prop_layers,
            include_layer0=self.spec.include_layer0,
        )

    def copy(self):
        return LightGCNModel(
            self.spec, self.fusion,
            self.parameters["user_embedding"].copy(), self.parameters["item_embedding"].copy(),
        )

    def describe(self):
        return {
            "variant": "lightgcn",
            "layers": self.spec.num_prop_layers,
            "normalization": self.spec.normalization,
            "include_layer0": self.spec.include_layer0,
            "twin": False,
        }


TWIN_TABLES = {"cf_lgcn_u": "user_embedding", "cf_lgcn_e": "item_embedding"}


class TwinModel(RecommenderModel):
    """
    Two independently parameterized CF-LGCN networks of the same variant
    (U₁⁽⁰⁾, U₂⁽⁰⁾ for cf_lgcn_u, E₁⁽⁰⁾, E₂⁽⁰⁾ for cf_lgcn_e) whose layer sets
    are fused together. Concat applies the drop rule inside each network
    before stacking all sets; mean takes one weight per set across both
    networks.
    """

    def __init__(
        self,
        spec_a: NetworkSpec,
        spec_b: NetworkSpec,
        fusion: FusionSpec,
        table_a: np.ndarray,
        table_b: np.ndarray,
    ):
        if spec_a.variant not in TWIN_TABLES or spec_b.variant != spec_a.variant:
            raise ValueError("TwinModel is built from two cf_lgcn_u or two cf_lgcn_e networks")
        if table_a.shape[1] != table_b.shape[1]:
            raise ValueError("Twin networks must share the embedding dimension")
        if spec_a.normalization != spec_b.normalization:
            raise ValueError("Twin networks must share the graph normalization")
        self.spec_a = spec_a
        self.spec_b = spec_b
        self.kind = "twin" if spec_a.variant == "cf_lgcn_u" else "twin_cf_lgcn_e"
        prefix = TWIN_TABLES[spec_a.variant]
        self.table_names = (f"{prefix}_a", f"{prefix}_b")
        super().__init__(fusion, {self.table_names[0]: table_a, self.table_names[1]: table_b})

    @property
    def spec(self) -> NetworkSpec:
        return self.spec_a

    @property
    def variant(self) -> str:
        return self.spec_a.variant

    @property
    def normalization(self) -> str:
        return self.spec_a.normalization

    def network_outputs(self, graph, first_graph=None) -> Tuple[LayerOutputs, LayerOutputs]:
        forward = forward_cf_lgcn_u if self.variant == "cf_lgcn_u" else forward_cf_lgcn_e
        return tuple(
            forward(graph, self.parameters[name], spec, first_graph=first_graph, source=name)
            for name, spec in zip(self.table_names, (self.spec_a, self.spec_b))
        )

    def combine(self, out_a: LayerOutputs, out_b: LayerOutputs) -> LayerOutputs:
        if self.fusion.mode == "concat":
            return merge_outputs([drop_surplus(out_a), drop_surplus(out_b)])
        return merge_outputs([out_a, out_b])

    def layer_outputs(self, graph, first_graph=None):
        return self.combine(*self.network_outputs(graph, first_graph))

    def copy(self):
        return TwinModel(
            self.spec_a, self.spec_b, self.fusion,
            *(self.parameters[name].copy() for name in self.table_names),
        )

    def describe(self):
        return {
            "variant": self.variant,
            "layers": self.spec_a.num_prop_layers,
            "layers_b": self.spec_b.num_prop_layers,
            "normalization": self.spec_a.normalization,
            "include_layer0": self.spec_a.include_layer0,
            "twin": True,
        }


def twin_forward(graph: NormalizedGraph, model: TwinModel) -> Tuple[np.ndarray, np.ndarray]:
    """Run both twin networks and fuse the union of their layer sets."""
    cache = model.forward(graph)
    return cache.user_emb, cache.item_emb


def build_model(
    variant: str,
    num_users: int,
    num_items: int,
    dim: int,
    layers: int,
    fusion: FusionSpec,
    rng: np.random.Generator,
    normalization: str = "symmetric",
    include_layer0: bool = True,
    twin: bool = False,
    layers_b: Optional[int] = None,
    init_std: float = 0.1,
) -> RecommenderModel:
    """
    Construct a freshly initialized model.

    Args:
        variant: cf_lgcn_u | cf_lgcn_e | lightgcn | mf
        num_users: m
        num_items: n
        dim: Embedding dimension d
        layers: Propagation products (cf_lgcn_*) or LightGCN layers L
        fusion: Fusion settings
        rng: Seeded generator used for Gaussian initialization
        normalization: Graph normalization variant
        include_layer0: Fuse the learnable table itself (α₀ ≠ 0)
        twin: Build a twin model (variant cf_lgcn_u or cf_lgcn_e)
        layers_b: Product count of the second twin network (default: layers)
        init_std: Standard deviation of the initial tables

    Returns:
        RecommenderModel subclass instance
    """
    if variant == "mf":
        variant, layers = "lightgcn", 0

    if twin:
        if variant not in TWIN_TABLES:
            raise ValueError(f"Twin models are built from cf_lgcn_u or cf_lgcn_e networks, not '{variant}'")
        spec_a = NetworkSpec(variant, layers, normalization, include_layer0)
        spec_b = replace(spec_a, num_prop_layers=layers if layers_b is None else layers_b)
        rows = num_users if variant == "cf_lgcn_u" else num_items
        table_a = init_embedding_table(rng, rows, dim, init_std)
        table_b = init_embedding_table(rng, rows, dim, init_std)
        model = TwinModel(spec_a, spec_b, fusion, table_a, table_b)
    else:
        spec = NetworkSpec(variant, layers, normalization, include_layer0)
        if variant == "cf_lgcn_u":
            model = CFLGCNModel(spec, fusion, init_embedding_table(rng, num_users, dim, init_std))
        elif variant == "cf_lgcn_e":
            model = CFLGCNModel(spec, fusion, init_embedding_table(rng, num_items, dim, init_std))
        else:
            user_table = init_embedding_table(rng, num_users, dim, init_std)
            item_table = init_embedding_table(rng, num_items, dim, init_std)
            model = LightGCNModel(spec, fusion, user_table, item_table)

    logger.debug(
        "Model built",
        kind=model.kind,
        num_parameters=model.num_parameters,
        fusion=fusion.mode,
        **model.describe(),
    )
    return model


def build_model_from_config(cfg, num_users: int, num_items: int, rng: np.random.Generator) -> RecommenderModel:
    """build_model with every setting taken from an ExperimentConfig."""
    fusion = FusionSpec(cfg.fusion, cfg.fusion_weights, cfg.fusion_item_weights)
    return build_model(
        cfg.variant,
        num_users,
        num_items,
        cfg.dim,
        cfg.layers,
        fusion,
        rng,
        normalization=cfg.normalization,
        include_layer0=cfg.include_layer0,
        twin=cfg.twin,
        layers_b=cfg.layers_b,
        init_std=cfg.init_std,
    )
