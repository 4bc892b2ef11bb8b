"""Query-steered re-ranking: blend a projected text query into a user's
layer-0 state, rebuild the layer average for that user, and rank again.

The item side and the user's higher smoothing layers stay frozen; only the
layer-0 component moves. Optional full re-propagation for one user exists for
what-if inspection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import DatasetSplit
from .embed import EmbeddingMatrix
from .evaluate import RankingMetrics, top_k_from_scores
from .graph import BipartiteGraph, multi_layer
from .model import AlphaRecParams, ModelOutput, ModelParams, ProbeParams, mlp_forward, probe_forward


@dataclass
class IntentQuerySet:
    """Query feature rows aligned to item indices (row k belongs to item k)."""

    matrix: EmbeddingMatrix


@dataclass
class IntentEvalCase:
    """One user, one held-out target item, and the query row standing in for
    the user's stated intention."""

    user: int
    target_item: int
    query_row: int


def project_query(params: ModelParams, x_query: np.ndarray) -> np.ndarray:
    """Map a language-space query through the frozen item projection."""
    x = np.asarray(x_query)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if isinstance(params, AlphaRecParams):
        out = mlp_forward(params, x)
    elif isinstance(params, ProbeParams):
        out = probe_forward(params, x)
    else:
        raise ValueError("identifier-table models cannot project language queries")
    return out[0] if squeeze else out


def blend(e_u0: np.ndarray, e_int: np.ndarray, alpha: float) -> np.ndarray:
    """Convex combination (1-alpha)*user_layer0 + alpha*intention."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if e_u0.shape != e_int.shape:
        raise ValueError("blend operands must share a shape")
    return (1.0 - alpha) * e_u0 + alpha * e_int


def intent_rank(
    output: ModelOutput,
    user: int,
    e_int: np.ndarray,
    alpha: float,
    mask: np.ndarray | None,
    k: int,
    g: BipartiteGraph | None = None,
    repropagate: bool = False,
) -> np.ndarray:
    """Top-k items for one user after blending the intention into layer 0.

    Requires a ModelOutput built with keep_layers. Default: the user's final
    state is rebuilt as (blended_layer0 + frozen higher layers) / (L+1) and
    scored against the frozen final item states. With repropagate (needs g),
    the whole smoothing stack is re-run with the user's layer-0 row replaced.
    """
    if not output.user_layers:
        raise ValueError("intent ranking needs per-layer states (keep_layers=True)")
    n_layers = output.n_layers
    blended = blend(output.user_layers[0][user].astype(np.float64), e_int.astype(np.float64), alpha)
    if repropagate:
        if g is None:
            raise ValueError("repropagate needs the interaction graph")
        e_u0 = output.user_layers[0].astype(np.float64).copy()
        e_u0[user] = blended
        final_u, final_i, _, _ = multi_layer(g, e_u0, output.item_layers[0], n_layers)
        user_vec = final_u[user]
        item_matrix = final_i
    else:
        higher = sum(layer[user].astype(np.float64) for layer in output.user_layers[1:])
        user_vec = (blended + higher) / (n_layers + 1)
        item_matrix = output.items
    u_norm = float(np.linalg.norm(user_vec))
    if u_norm == 0.0:
        raise ValueError("blended user vector has zero norm")
    i_norm = np.linalg.norm(item_matrix.astype(np.float64), axis=1)
    if (i_norm == 0).any():
        raise ValueError("cosine undefined: zero-norm item representation")
    scores = (item_matrix.astype(np.float64) @ user_vec) / (i_norm * u_norm)
    return top_k_from_scores(scores, mask, k)


def build_cases(split: DatasetSplit) -> list[IntentEvalCase]:
    """One case per user with held-out items: the lowest-index test item is the
    target and names the query row."""
    cases = []
    for u in range(split.n_users):
        if len(split.test[u]):
            target = int(split.test[u][0])
            cases.append(IntentEvalCase(u, target, target))
    if not cases:
        raise ValueError("no users with test items")
    return cases


def intent_evaluate(
    params: ModelParams,
    output: ModelOutput,
    queries: IntentQuerySet,
    split: DatasetSplit,
    alpha: float,
    k: int = 5,
    cases: list[IntentEvalCase] | None = None,
) -> RankingMetrics:
    """Single-target evaluation: hit ratio and 1/log2(rank+1) gain at k.

    Each case ranks with its query blended at the given alpha; the user's
    training positives are masked. With one target per case, recall equals the
    hit ratio and the ideal gain is 1.
    """
    if queries.matrix.rows < split.n_items:
        raise ValueError(
            f"{queries.matrix.rows} query rows for {split.n_items} items"
        )
    if cases is None:
        cases = build_cases(split)
    if not cases:
        raise ValueError("no intent cases to evaluate")
    hits = []
    gains = []
    for case in cases:
        e_int = project_query(params, queries.matrix.data[case.query_row])
        topk = intent_rank(output, case.user, e_int, alpha, split.train[case.user], k)
        where = np.flatnonzero(topk == case.target_item)
        if where.size:
            rank = int(where[0]) + 1
            hits.append(1.0)
            gains.append(1.0 / float(np.log2(rank + 1)))
        else:
            hits.append(0.0)
            gains.append(0.0)
    hr = float(np.mean(hits))
    return RankingMetrics(k, hr, float(np.mean(gains)), hr, len(cases))
