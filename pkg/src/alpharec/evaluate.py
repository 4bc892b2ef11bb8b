"""Full-corpus ranking evaluation, ranking metrics, and strategy baselines.

Every unmasked item is scored for each evaluated user (no candidate
sampling). Ranking is by descending score with ties broken by ascending item
index. Training positives are always masked; masking validation positives
during test evaluation sits behind a flag and is off by default.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .corpus import DatasetSplit
from .embed import EmbeddingMatrix
from .graph import build_graph
from .model import IdEmbeddingParams, ModelOutput, ModelParams, full_forward
from .seeding import rng_for


@dataclass
class RankingMetrics:
    k: int
    recall: float
    ndcg: float
    hit_ratio: float
    n_users_evaluated: int

    def to_dict(self, dataset: str) -> dict:
        return {
            "dataset": dataset,
            "k": self.k,
            "recall": self.recall,
            "ndcg": self.ndcg,
            "hit_ratio": self.hit_ratio,
            "n_users": self.n_users_evaluated,
        }


def top_k_from_scores(scores: np.ndarray, mask: np.ndarray | None, k: int) -> np.ndarray:
    """Indices of the k best scores, masked entries excluded, ties by index."""
    n = scores.shape[0]
    n_masked = 0 if mask is None else int(np.asarray(mask).shape[0])
    if k < 1 or k > n - n_masked:
        raise ValueError(f"k={k} outside [1, {n - n_masked}]")
    s = scores.astype(np.float64, copy=True)
    if n_masked:
        s[mask] = -np.inf
    order = np.lexsort((np.arange(n), -s))
    return order[:k]


def rank_items(
    user_vec: np.ndarray, item_matrix: np.ndarray, mask: np.ndarray | None, k: int
) -> np.ndarray:
    """Top-k item indices by cosine similarity to one user vector."""
    u_norm = float(np.linalg.norm(user_vec))
    if u_norm == 0.0:
        raise ValueError("cosine undefined for a zero-norm user vector")
    i_norm = np.linalg.norm(item_matrix, axis=1)
    if (i_norm == 0).any():
        bad = int(np.flatnonzero(i_norm == 0)[0])
        raise ValueError(f"cosine undefined: item row {bad} has zero norm")
    scores = (item_matrix @ user_vec) / (i_norm * u_norm)
    return top_k_from_scores(scores, mask, k)


def metrics_at_k(
    topk_lists: dict[int, np.ndarray] | list[np.ndarray],
    test_sets: list[np.ndarray],
    k: int,
) -> RankingMetrics:
    """Average recall, binary-gain ndcg, and hit ratio over users with targets.

    recall = hits/|test|; dcg sums 1/log2(rank+1) at hit ranks (1-based);
    idcg is the same sum over the first min(k, |test|) ranks.
    """
    items = topk_lists.items() if isinstance(topk_lists, dict) else enumerate(topk_lists)
    recalls: list[float] = []
    ndcgs: list[float] = []
    hrs: list[float] = []
    for u, topk in items:
        test_u = test_sets[u]
        if len(test_u) == 0:
            continue
        if len(topk) > k:
            raise ValueError(f"user {u}: top list longer than k={k}")
        members = set(test_u.tolist())
        hits = 0
        dcg = 0.0
        for rank, item in enumerate(topk.tolist(), start=1):
            if item in members:
                hits += 1
                dcg += 1.0 / np.log2(rank + 1)
        idcg = sum(1.0 / np.log2(r + 1) for r in range(1, min(k, len(test_u)) + 1))
        recalls.append(hits / len(test_u))
        ndcgs.append(dcg / idcg)
        hrs.append(1.0 if hits else 0.0)
    if not recalls:
        raise ValueError("no users with target items to evaluate")
    return RankingMetrics(
        k,
        float(np.mean(recalls)),
        float(np.mean(ndcgs)),
        float(np.mean(hrs)),
        len(recalls),
    )


def _normalized(matrix: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(matrix.astype(np.float64), axis=1)
    if (norms == 0).any():
        bad = int(np.flatnonzero(norms == 0)[0])
        raise ValueError(f"cosine undefined: {what} row {bad} has zero norm")
    return matrix.astype(np.float64) / norms[:, None]


def evaluate_output(
    output: ModelOutput,
    split: DatasetSplit,
    k: int,
    on: str = "test",
    mask_validation: bool = False,
    threads: int = 1,
) -> RankingMetrics:
    """Rank all items for every user holding target interactions.

    `on` picks the target lists ("test" or "validation"). Training positives
    are masked; with mask_validation (test mode only), validation positives are
    masked too. `threads` partitions users across workers; results do not
    depend on the partition.
    """
    if on not in ("test", "validation"):
        raise ValueError(f"unknown evaluation target {on!r}")
    targets = split.test if on == "test" else split.validation
    eligible = [u for u in range(split.n_users) if len(targets[u])]
    if not eligible:
        raise ValueError("no users with target items to evaluate")
    uh = _normalized(output.users, "user")
    ih = _normalized(output.items, "item")
    topk: dict[int, np.ndarray] = {}

    def do_chunk(chunk: list[int]) -> list[tuple[int, np.ndarray]]:
        scores = uh[chunk] @ ih.T
        out = []
        for row, u in enumerate(chunk):
            mask = split.train[u]
            if on == "test" and mask_validation and len(split.validation[u]):
                mask = np.concatenate([mask, split.validation[u]])
            out.append((u, top_k_from_scores(scores[row], mask, k)))
        return out

    chunk_size = 512
    chunks = [eligible[i : i + chunk_size] for i in range(0, len(eligible), chunk_size)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for result in pool.map(do_chunk, chunks):
                topk.update(result)
    else:
        for chunk in chunks:
            topk.update(do_chunk(chunk))
    return metrics_at_k(topk, targets, k)


def strategy_baseline(kind: str, split: DatasetSplit, k: int, seed: int = 0) -> RankingMetrics:
    """Score-free baselines: seeded random top-k or global popularity top-k.

    Both skip each user's training positives and are judged on test targets.
    """
    if kind not in ("random", "pop"):
        raise ValueError(f"unknown baseline {kind!r}")
    all_items = np.arange(split.n_items, dtype=np.int64)
    if kind == "pop":
        counts = np.bincount(np.concatenate(split.train), minlength=split.n_items)
        pop_order = np.lexsort((all_items, -counts))
    topk: dict[int, np.ndarray] = {}
    for u in range(split.n_users):
        if len(split.test[u]) == 0:
            continue
        train_u = set(split.train[u].tolist())
        if kind == "random":
            allowed = np.array([i for i in all_items.tolist() if i not in train_u], dtype=np.int64)
            if k > allowed.shape[0]:
                raise ValueError(f"k={k} exceeds {allowed.shape[0]} unmasked items")
            topk[u] = rng_for(seed, "baseline-random", u).choice(allowed, size=k, replace=False)
        else:
            picks = [i for i in pop_order.tolist() if i not in train_u][:k]
            if len(picks) < k:
                raise ValueError(f"k={k} exceeds unmasked item count")
            topk[u] = np.array(picks, dtype=np.int64)
    return metrics_at_k(topk, split.test, k)


def zero_shot_evaluate(
    params: ModelParams,
    target_split: DatasetSplit,
    target_features,
    n_layers: int,
    k: int = 20,
    mask_validation: bool = False,
    threads: int = 1,
) -> RankingMetrics:
    """Evaluate frozen parameters on an unseen dataset.

    The target's own training interactions supply the graph and the user
    aggregation; no parameter is updated. Identifier-table models cannot
    transfer.
    """
    if isinstance(params, IdEmbeddingParams):
        raise ValueError("identifier-table models cannot transfer to a new dataset")
    data = target_features.data if isinstance(target_features, EmbeddingMatrix) else target_features
    data = np.asarray(data)
    if data.shape[0] < target_split.n_items:
        raise ValueError(
            f"{data.shape[0]} feature rows for {target_split.n_items} target items"
        )
    if data.shape[1] != params.input_dim:
        raise ValueError(
            f"feature dim {data.shape[1]} != model input dim {params.input_dim}"
        )
    g = build_graph(target_split)
    output = full_forward(params, data[: target_split.n_items], g, n_layers, keep_layers=False)
    return evaluate_output(output, target_split, k, "test", mask_validation, threads)


def export_representations(
    output: ModelOutput, users_path: str | os.PathLike, items_path: str | os.PathLike
) -> None:
    """Write final representations as `index<TAB>v1,...,vd` TSVs."""
    for path, matrix in ((users_path, output.users), (items_path, output.items)):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for idx in range(matrix.shape[0]):
                values = ",".join(f"{v:.8g}" for v in matrix[idx].tolist())
                fh.write(f"{idx}\t{values}\n")
