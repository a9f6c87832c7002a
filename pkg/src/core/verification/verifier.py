"""
Verification Layer
Deterministic property checks on tiny random instances: propagation against
dense matrix powers, LightGCN decomposition, analytic against numeric
gradients, the streaming evaluator against a brute-force one, parameter
counts, BPR fixed points and inductive consistency.

Dense matrices are formed here only, and only for graphs of a few nodes.
"""

import itertools
from typing import Any, Callable, Dict, Iterable, List, Optional

import numpy as np

from src.core.evaluation.ranking import brute_force_evaluate, evaluate_embeddings
from src.core.graph.interaction_graph import NORMALIZATIONS, from_edges, normalize
from src.core.inductive.inference import InductiveContext, infer_all, infer_new_items, make_lightgcn_inductive
from src.core.models.networks import build_model
from src.core.models.propagation import FusionSpec, NetworkSpec, forward_cf_lgcn_u, forward_lightgcn, fuse, score_all
from src.core.observability.logging import get_logger
from src.core.training.bpr import batch_objective, bpr_loss
from src.core.training.sampling import epoch_triples

logger = get_logger("verify")

PROPAGATION_TOLERANCE = 1e-10
SCORE_TOLERANCE = 1e-8
GRADIENT_TOLERANCE = 1e-4
GRADIENT_STEP = 1e-5
METRIC_TOLERANCE = 1e-12


class VerificationResult:
    """
    Outcome of one verification run.

    Attributes:
        valid: Overall outcome
        checks: One entry per check with name, passed, max_error and detail
        feedback: Human-readable lines for failed checks
    """

    def __init__(self):
        self.valid: bool = True
        self.checks: List[Dict[str, Any]] = []
        self.feedback: List[str] = []

    def record(self, name: str, passed: bool, max_error: float = 0.0, detail: str = ""):
        self.checks.append({"name": name, "passed": bool(passed), "max_error": float(max_error), "detail": detail})
        if not passed:
            self.valid = False
            self.feedback.append(f"{name}: {detail or 'failed'} (max error {max_error:.3e})")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "valid": self.valid,
            "checks": self.checks,
            "feedback": "\n".join(self.feedback),
        }


def random_graph(rng: np.random.Generator, num_users: int = 6, num_items: int = 5, density: float = 0.5):
    """Random bipartite graph where every user has at least one observed and one unobserved item."""
    mask = rng.random((num_users, num_items)) < density
    rows = np.arange(num_users)
    mask[rows, rows % num_items] = True
    mask[rows, (rows + 1) % num_items] = False
    return from_edges(num_users, num_items, np.argwhere(mask))


def _random_shape(rng: np.random.Generator, low: int = 2, high: int = 16):
    return int(rng.integers(low, high + 1)), int(rng.integers(low, high + 1)), int(rng.integers(1, 9))


def _dense_ops(graph):
    return graph.user_op.toarray(), graph.item_op.toarray()


def check_commutation(result: VerificationResult, rng: np.random.Generator, instances: int = 100):
    """CF-LGCN-U layers equal S_u^l U⁽⁰⁾ and R̃ᵀ S_u^l U⁽⁰⁾ under every normalization."""
    errors = {variant: 0.0 for variant in NORMALIZATIONS}
    for _ in range(instances):
        m, n, d = _random_shape(rng)
        graph = random_graph(rng, m, n, float(rng.uniform(0.2, 0.7)))
        U0 = rng.normal(size=(m, d))
        for variant in NORMALIZATIONS:
            g = normalize(graph, variant)
            to_users, to_items = _dense_ops(g)
            outs = forward_cf_lgcn_u(g, U0, NetworkSpec("cf_lgcn_u", 5, variant, True))
            s_u = to_users @ to_items
            expected_users = [np.linalg.matrix_power(s_u, p) @ U0 for p in range(3)]
            expected_items = [to_items @ x for x in expected_users]
            error = max(
                max(np.abs(a - b).max() for a, b in zip(outs.user_sets, expected_users)),
                max(np.abs(a - b).max() for a, b in zip(outs.item_sets, expected_items)),
            )
            errors[variant] = max(errors[variant], error)
    for variant, error in errors.items():
        result.record(f"commutation[{variant}]", error < PROPAGATION_TOLERANCE, error)


def check_lightgcn_decomposition(result: VerificationResult, rng: np.random.Generator, instances: int = 50):
    """
    Parity-split LightGCN equals H⁽ˡ⁺¹⁾ = Ã H⁽ˡ⁾ on the bipartite block matrix.

    With P = Σ_l w_l Ãˡ split into user/item blocks, fused embeddings are
    P_uu U⁽⁰⁾ + P_ui E⁽⁰⁾ and P_iu U⁽⁰⁾ + P_ii E⁽⁰⁾, so scores split into a
    user-table-only term, an item-table-only term and the cross terms. Each
    term is compared with the model run on one zeroed table.
    """
    layer_error, fused_error, term_error = 0.0, 0.0, 0.0
    for _ in range(instances):
        m, n, d = _random_shape(rng)
        g = normalize(random_graph(rng, m, n), "symmetric")
        to_users, to_items = _dense_ops(g)
        adjacency = np.block([[np.zeros((m, m)), to_users], [to_items, np.zeros((n, n))]])
        U0, E0 = rng.normal(size=(m, d)), rng.normal(size=(n, d))
        layers = int(rng.integers(1, 5))
        outs = forward_lightgcn(g, U0, E0, layers)
        h = np.vstack([U0, E0])
        for layer in range(layers + 1):
            layer_error = max(
                layer_error,
                np.abs(outs.user_sets[layer] - h[:m]).max(),
                np.abs(outs.item_sets[layer] - h[m:]).max(),
            )
            h = adjacency @ h

        weights = rng.dirichlet(np.ones(layers + 1))
        fusion = FusionSpec("mean", weights)
        powers = sum(w * np.linalg.matrix_power(adjacency, layer) for layer, w in enumerate(weights))
        p_uu, p_ui, p_iu, p_ii = powers[:m, :m], powers[:m, m:], powers[m:, :m], powers[m:, m:]
        user_emb, item_emb = fuse(outs, fusion)
        fused_error = max(
            fused_error,
            np.abs(user_emb - (p_uu @ U0 + p_ui @ E0)).max(),
            np.abs(item_emb - (p_iu @ U0 + p_ii @ E0)).max(),
        )

        user_only = p_uu @ U0 @ U0.T @ p_iu.T
        item_only = p_ui @ E0 @ E0.T @ p_ii.T
        cross = p_uu @ U0 @ E0.T @ p_ii.T + p_ui @ E0 @ U0.T @ p_iu.T
        without_items = score_all(*fuse(forward_lightgcn(g, U0, np.zeros_like(E0), layers), fusion))
        without_users = score_all(*fuse(forward_lightgcn(g, np.zeros_like(U0), E0, layers), fusion))
        scores = score_all(user_emb, item_emb)
        term_error = max(
            term_error,
            np.abs(without_items - user_only).max(),
            np.abs(without_users - item_only).max(),
            np.abs(scores - without_items - without_users - cross).max(),
            np.abs(scores - (user_only + item_only + cross)).max(),
        )
    result.record("lightgcn_decomposition", layer_error < PROPAGATION_TOLERANCE, layer_error)
    result.record("lightgcn_fused_blocks", fused_error < SCORE_TOLERANCE, fused_error)
    result.record("lightgcn_score_terms", term_error < SCORE_TOLERANCE, term_error)


def _numeric_gradient(objective: Callable[[], float], table: np.ndarray, eps: float = GRADIENT_STEP) -> np.ndarray:
    grad = np.zeros_like(table)
    for idx in np.ndindex(table.shape):
        original = table[idx]
        table[idx] = original + eps
        plus = objective()
        table[idx] = original - eps
        minus = objective()
        table[idx] = original
        grad[idx] = (plus - minus) / (2 * eps)
    return grad


def gradient_cases():
    """Every variant and both twins × fusion mode × {1, 2, 3} layers, plus MF, unequal twins and non-symmetric normalizations."""
    cases = []
    for (label, variant, twin), mode, layers in itertools.product(
        (("cf_lgcn_u", "cf_lgcn_u", False), ("cf_lgcn_e", "cf_lgcn_e", False),
         ("lightgcn", "lightgcn", False), ("twin", "cf_lgcn_u", True), ("twin_e", "cf_lgcn_e", True)),
        ("mean", "concat"),
        (1, 2, 3),
    ):
        cases.append((f"{label} {mode} {layers}", dict(variant=variant, layers=layers, twin=twin, fusion=FusionSpec(mode))))
    cases.append(("mf", dict(variant="mf", layers=0, fusion=FusionSpec("mean"))))
    cases.append(("twin concat 2+3", dict(variant="cf_lgcn_u", layers=2, layers_b=3, twin=True, fusion=FusionSpec("concat"))))
    cases.append(("twin_e mean 1+3", dict(variant="cf_lgcn_e", layers=1, layers_b=3, twin=True, fusion=FusionSpec("mean"))))
    cases.append(("cf_lgcn_u left 3", dict(variant="cf_lgcn_u", layers=3, normalization="left", fusion=FusionSpec("mean"))))
    cases.append(("cf_lgcn_e right 2", dict(variant="cf_lgcn_e", layers=2, normalization="right", fusion=FusionSpec("mean"))))
    return cases


def check_gradients(result: VerificationResult, rng: np.random.Generator, l2_lambda: float = 1e-3):
    """Analytic BPR gradients agree with central differences for every model kind."""
    graph = random_graph(rng)
    triples = epoch_triples(rng, graph)
    for name, kwargs in gradient_cases():
        model = build_model(num_users=graph.num_users, num_items=graph.num_items, dim=3, rng=rng, **kwargs)
        g = model.normalize(graph)
        _, grads = batch_objective(model, g, triples, l2_lambda)
        error = 0.0
        for param_name, table in model.parameters.items():
            numeric = _numeric_gradient(lambda: batch_objective(model, g, triples, l2_lambda)[0], table)
            scale = max(np.abs(numeric).max(), 1e-8)
            error = max(error, np.abs(grads[param_name] - numeric).max() / scale)
        result.record(f"gradient[{name}]", error < GRADIENT_TOLERANCE, error)


def check_metric_oracle(result: VerificationResult, rng: np.random.Generator, instances: int = 200):
    """Streaming evaluation matches brute force on integer scores, ties included."""
    error = 0.0
    for _ in range(instances):
        m, n = int(rng.integers(2, 21)), int(rng.integers(2, 21))
        graph = random_graph(rng, m, n, 0.3)
        user_emb = rng.integers(-2, 3, size=(m, 2)).astype(np.float64)
        item_emb = rng.integers(-2, 3, size=(n, 2)).astype(np.float64)
        test_sets = {}
        for u in range(m):
            unseen = np.setdiff1d(np.arange(n), graph.items_of(u))
            if rng.random() < 0.8:
                test_sets[u] = rng.choice(unseen, size=min(3, len(unseen)), replace=False)
        if not test_sets:
            continue
        train_sets = {u: graph.items_of(u).tolist() for u in range(m)}
        scores = user_emb @ item_emb.T
        for k in (1, 3, 5):
            fast = evaluate_embeddings(user_emb, item_emb, graph, test_sets, [k], batch_users=3)[k]
            slow = brute_force_evaluate(scores, train_sets, test_sets, k)
            error = max(error, abs(fast.recall - slow.recall), abs(fast.ndcg - slow.ndcg))
    result.record("metric_oracle", error < METRIC_TOLERANCE, error)


def check_parameter_counts(result: VerificationResult, rng: np.random.Generator):
    m, n, d = 7, 11, 4
    expected = {
        "cf_lgcn_u": m * d,
        "cf_lgcn_e": n * d,
        "lightgcn": (m + n) * d,
        "twin": 2 * m * d,
        "twin_e": 2 * n * d,
    }
    fusion = FusionSpec("mean")
    actual = {
        "cf_lgcn_u": build_model("cf_lgcn_u", m, n, d, 3, fusion, rng).num_parameters,
        "cf_lgcn_e": build_model("cf_lgcn_e", m, n, d, 3, fusion, rng).num_parameters,
        "lightgcn": build_model("lightgcn", m, n, d, 3, fusion, rng).num_parameters,
        "twin": build_model("cf_lgcn_u", m, n, d, 3, fusion, rng, twin=True).num_parameters,
        "twin_e": build_model("cf_lgcn_e", m, n, d, 3, fusion, rng, twin=True).num_parameters,
    }
    mismatched = [k for k in expected if expected[k] != actual[k]]
    result.record("parameter_counts", not mismatched, float(len(mismatched)), f"mismatched: {mismatched}" if mismatched else "")


def check_bpr_fixed_points(result: VerificationResult, rng: np.random.Generator):
    at_zero = abs(float(bpr_loss(np.zeros(1), np.zeros(1))[0]) - np.log(2.0))
    large = float(bpr_loss(np.array([50.0]), np.array([0.0]))[0])
    reversed_margin = float(bpr_loss(np.array([0.0]), np.array([50.0]))[0])
    margins = np.linspace(-30.0, 30.0, 601)
    losses = bpr_loss(margins, np.zeros_like(margins))
    monotone = bool(np.all(np.diff(losses) < 0))
    passed = at_zero < 1e-12 and large < 1e-20 and abs(reversed_margin - 50.0) < 1e-9 and monotone
    result.record(
        "bpr_fixed_points", passed, max(at_zero, large, abs(reversed_margin - 50.0)),
        "" if monotone else "loss is not strictly decreasing in the margin",
    )


def check_inductive_consistency(result: VerificationResult, rng: np.random.Generator):
    """With no new entities, inductive inference reproduces the transductive forward exactly."""
    graph = random_graph(rng)
    cases = {
        "cf_lgcn_u": build_model("cf_lgcn_u", *graph.shape, 3, 4, FusionSpec("mean"), rng, include_layer0=False),
        "twin": build_model("cf_lgcn_u", *graph.shape, 3, 3, FusionSpec("concat"), rng, twin=True, layers_b=4),
        "twin_e": build_model("cf_lgcn_e", *graph.shape, 3, 2, FusionSpec("mean"), rng, twin=True, layers_b=3),
        "lightgcn": make_lightgcn_inductive(build_model("lightgcn", *graph.shape, 3, 3, FusionSpec("mean"), rng)),
    }
    for name, model in cases.items():
        user_emb, item_emb = model.embeddings(graph)
        ctx = InductiveContext(model, graph, graph)
        inferred_users, inferred_items = infer_all(ctx)
        error = max(np.abs(inferred_users - user_emb).max(), np.abs(inferred_items - item_emb).max())
        if name in ("cf_lgcn_u", "twin"):
            error = max(error, np.abs(infer_new_items(ctx) - item_emb).max())
        result.record(f"inductive_consistency[{name}]", error < PROPAGATION_TOLERANCE, error)


SUITES: Dict[str, Callable[[VerificationResult, np.random.Generator], None]] = {
    "commutation": check_commutation,
    "lightgcn_decomposition": check_lightgcn_decomposition,
    "gradients": check_gradients,
    "metric_oracle": check_metric_oracle,
    "parameter_counts": check_parameter_counts,
    "bpr_fixed_points": check_bpr_fixed_points,
    "inductive_consistency": check_inductive_consistency,
}


def run_verification(seed: int = 0, suites: Optional[Iterable[str]] = None, run_id: Optional[str] = None) -> VerificationResult:
    """
    Run the named suites (default: all) on seeded random instances.

    Args:
        seed: Seed for every random instance
        suites: Subset of SUITES keys
        run_id: Identifier grouping the log entries

    Returns:
        VerificationResult; valid is False if any check failed

    Example:
        >>> run_verification(seed=0, suites=["bpr_fixed_points"]).valid
        True
    """
    names = list(SUITES) if suites is None else list(suites)
    unknown = [name for name in names if name not in SUITES]
    if unknown:
        raise ValueError(f"Unknown verification suites: {unknown}")

    result = VerificationResult()
    logger.info("Starting verification", run_id=run_id, suites=names, seed=seed)
    for name in names:
        SUITES[name](result, np.random.default_rng(seed))

    failed = [c["name"] for c in result.checks if not c["passed"]]
    if failed:
        logger.warning("Verification failed", run_id=run_id, failed=failed)
    else:
        logger.info("Verification passed", run_id=run_id, checks=len(result.checks))
    return result
