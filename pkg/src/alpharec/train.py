"""Training: negative sampling, contrastive and pairwise losses, analytic
gradients through the whole forward composition, Adam, and the fit loop.

The backward pass is written by hand and is validated against central finite
differences in the test suite; keep any change to the forward math mirrored
here.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .corpus import DatasetSplit, MixedDataset
from .embed import EmbeddingMatrix
from .evaluate import evaluate_output
from .graph import (
    BipartiteGraph,
    build_graph,
    propagate,
    scatter_add_rows,
    user_mean,
    user_mean_backward,
)
from .model import (
    AlphaRecParams,
    IdEmbeddingParams,
    ModelOutput,
    ModelParams,
    ProbeParams,
    full_forward,
    init_id,
    init_mlp,
    init_probe,
    mlp_forward,
)
from .seeding import rng_for


class TrainingDiverged(RuntimeError):
    """Loss or gradients became non-finite."""


@dataclass
class TrainConfig:
    temperature: float = 0.15
    n_negatives: int = 256
    batch_size: int = 1024
    learning_rate: float = 5e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_epochs: int = 300
    eval_every: int = 1
    patience: int = 20
    n_layers: int = 2
    loss_kind: str = "infonce"
    seed: int = 0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.n_negatives < 1:
            raise ValueError("n_negatives must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("bad batch_size or max_epochs")
        if self.eval_every < 1 or self.patience < 1:
            raise ValueError("eval_every and patience must be >= 1")
        if self.n_layers < 0:
            raise ValueError("n_layers must be >= 0")
        if self.loss_kind not in ("infonce", "bpr"):
            raise ValueError(f"unknown loss {self.loss_kind!r}")


@dataclass
class TrainBatch:
    """Positive (user, item) pairs with per-positive sampled negatives."""

    users: np.ndarray
    pos_items: np.ndarray
    negatives: np.ndarray  # (len(users), n_negatives)


def sample_negatives(
    train_items: np.ndarray, item_range: tuple[int, int], n: int, rng: np.random.Generator
) -> np.ndarray:
    """Uniform draws with replacement from item_range, rejecting the user's
    training items; errors when the user exhausts the pool."""
    lo, hi = item_range
    in_range = train_items[(train_items >= lo) & (train_items < hi)]
    if hi - lo - in_range.shape[0] <= 0:
        raise ValueError("user has interacted with every item in the sampling pool")
    out = rng.integers(lo, hi, size=n)
    bad = np.isin(out, in_range)
    while bad.any():
        out[bad] = rng.integers(lo, hi, size=int(bad.sum()))
        bad = np.isin(out, in_range)
    return out


def infonce_loss(s_pos: np.ndarray, s_neg: np.ndarray, temperature: float) -> float:
    """Temperature-scaled contrastive loss, summed over positives.

    Per positive: -log softmax over [positive | negatives] similarities at
    index 0. Stabilized by max subtraction.
    """
    loss, _ = _infonce_loss_grad(s_pos, s_neg, temperature)
    return loss


def _infonce_loss_grad(
    s_pos: np.ndarray, s_neg: np.ndarray, temperature: float
) -> tuple[float, np.ndarray]:
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    logits = np.concatenate([np.asarray(s_pos)[:, None], np.asarray(s_neg)], axis=1)
    logits = logits.astype(np.float64) / temperature
    m = logits.max(axis=1, keepdims=True)
    expd = np.exp(logits - m)
    denom = expd.sum(axis=1)
    loss = float(np.sum(np.log(denom) + m[:, 0] - logits[:, 0]))
    grad = expd / denom[:, None]
    grad[:, 0] -= 1.0
    grad /= temperature
    return loss, grad


def bpr_loss(s_pos: np.ndarray, s_neg: np.ndarray) -> float:
    """Pairwise softplus loss, summed: softplus(s_neg - s_pos) per pair.

    Exactly one negative per positive.
    """
    loss, _ = _bpr_loss_grad(s_pos, s_neg)
    return loss


def _bpr_loss_grad(s_pos: np.ndarray, s_neg: np.ndarray) -> tuple[float, np.ndarray]:
    s_neg = np.asarray(s_neg)
    if s_neg.ndim == 2:
        if s_neg.shape[1] != 1:
            raise ValueError("pairwise loss takes exactly one negative per positive")
        s_neg = s_neg[:, 0]
    d = (np.asarray(s_pos) - s_neg).astype(np.float64)
    # softplus(-d) = max(-d, 0) + log1p(exp(-|d|))
    t = np.exp(-np.abs(d))
    loss = float(np.sum(np.maximum(-d, 0.0) + np.log1p(t)))
    sig_neg_d = np.where(d >= 0, t / (1.0 + t), 1.0 / (1.0 + t))
    grad = np.empty((d.shape[0], 2), dtype=np.float64)
    grad[:, 0] = -sig_neg_d
    grad[:, 1] = sig_neg_d
    return loss, grad


def _loss_grad_for(config: TrainConfig, scores: np.ndarray) -> tuple[float, np.ndarray]:
    if config.loss_kind == "infonce":
        return _infonce_loss_grad(scores[:, 0], scores[:, 1:], config.temperature)
    loss, grad2 = _bpr_loss_grad(scores[:, 0], scores[:, 1:])
    return loss, grad2


def _forward_state(
    params: ModelParams,
    item_features: np.ndarray | None,
    g: BipartiteGraph,
    n_layers: int,
):
    """Forward pass keeping exactly what the backward pass needs."""
    preact = None
    if isinstance(params, IdEmbeddingParams):
        e_i0 = params.item_table
        e_u0 = params.user_table
    elif isinstance(params, AlphaRecParams):
        e_i0, preact = mlp_forward(params, item_features, return_preact=True)
        e_u0 = user_mean(g, e_i0)
    else:
        e_i0 = item_features.astype(params.W.dtype) @ params.W
        e_u0 = user_mean(g, e_i0)
    acc_u = e_u0.astype(np.float64).copy()
    acc_i = e_i0.astype(np.float64).copy()
    cur_u, cur_i = e_u0, e_i0
    for _ in range(n_layers):
        cur_u, cur_i = propagate(g, cur_u, cur_i)
        acc_u += cur_u
        acc_i += cur_i
    scale = 1.0 / (n_layers + 1)
    final_u = (acc_u * scale).astype(e_u0.dtype)
    final_i = (acc_i * scale).astype(e_i0.dtype)
    return final_u, final_i, preact


def _batch_scores(final_u, final_i, batch: TrainBatch):
    u_norm = np.linalg.norm(final_u, axis=1)
    i_norm = np.linalg.norm(final_i, axis=1)
    cand = np.concatenate([batch.pos_items[:, None], batch.negatives], axis=1)
    if (u_norm[batch.users] == 0).any() or (i_norm[cand] == 0).any():
        raise ValueError("cosine undefined: zero-norm representation in batch")
    uh = final_u / np.where(u_norm == 0, 1.0, u_norm)[:, None]
    ih = final_i / np.where(i_norm == 0, 1.0, i_norm)[:, None]
    scores = np.einsum("bd,bjd->bj", uh[batch.users], ih[cand])
    return scores, cand, uh, ih, u_norm, i_norm


def batch_loss(
    params: ModelParams,
    batch: TrainBatch,
    item_features: np.ndarray | None,
    g: BipartiteGraph,
    config: TrainConfig,
) -> float:
    """Loss of one batch under the full forward pass (no gradients)."""
    final_u, final_i, _ = _forward_state(params, item_features, g, config.n_layers)
    scores, _, _, _, _, _ = _batch_scores(final_u, final_i, batch)
    loss, _ = _loss_grad_for(config, scores)
    return loss


def compute_gradients(
    params: ModelParams,
    batch: TrainBatch,
    item_features: np.ndarray | None,
    g: BipartiteGraph,
    config: TrainConfig,
) -> tuple[float, dict[str, np.ndarray]]:
    """Batch loss and analytic parameter gradients.

    Differentiates cosine scoring, layer averaging, the smoothing recurrence,
    the user mean, and the item projection in one chain.
    """
    final_u, final_i, preact = _forward_state(params, item_features, g, config.n_layers)
    scores, cand, uh, ih, u_norm, i_norm = _batch_scores(final_u, final_i, batch)
    loss, g_scores = _loss_grad_for(config, scores)

    dtype = final_u.dtype
    g_scores = g_scores.astype(dtype)
    uh_b = uh[batch.users]
    ih_c = ih[cand]
    # cosine: ds/du = (ih - s*uh)/|u| ; ds/dv = (uh - s*ih)/|v|
    num_u = np.einsum("bj,bjd->bd", g_scores, ih_c)
    coef = np.einsum("bj,bj->b", g_scores, scores.astype(dtype))
    du_rows = (num_u - coef[:, None] * uh_b) / u_norm[batch.users][:, None]
    d_final_u = scatter_add_rows(g.n_users, batch.users, du_rows)

    di_rows = g_scores[:, :, None] * uh_b[:, None, :] - (g_scores * scores.astype(dtype))[
        :, :, None
    ] * ih_c
    di_rows /= i_norm[cand][:, :, None]
    d_final_i = scatter_add_rows(g.n_items, cand.ravel(), di_rows.reshape(-1, di_rows.shape[2]))

    # layer averaging spreads 1/(K+1) to every layer; walk the smoothing
    # recurrence backwards (its adjoint is itself with sides swapped)
    scale = 1.0 / (config.n_layers + 1)
    delta_u = d_final_u * scale
    delta_i = d_final_i * scale
    acc_u = delta_u.copy()
    acc_i = delta_i.copy()
    for _ in range(config.n_layers):
        add_u, add_i = propagate(g, acc_u, acc_i)
        acc_u = delta_u + add_u
        acc_i = delta_i + add_i

    if isinstance(params, IdEmbeddingParams):
        return loss, {"user_table": acc_u, "item_table": acc_i}

    g_i0 = acc_i + user_mean_backward(g, acc_u)
    x = item_features.astype(dtype)
    if isinstance(params, ProbeParams):
        return loss, {"W": x.T @ g_i0}
    z = np.where(preact >= 0, preact, params.leaky_slope * preact)
    g_w2 = z.T @ g_i0
    g_b2 = g_i0.sum(axis=0)
    g_z = g_i0 @ params.W2.T
    g_h = g_z * np.where(preact >= 0, 1.0, params.leaky_slope).astype(dtype)
    return loss, {"W1": x.T @ g_h, "b1": g_h.sum(axis=0), "W2": g_w2, "b2": g_b2}


@dataclass
class OptimState:
    """Per-tensor Adam moments and the shared step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "OptimState":
        return cls(
            {k: np.zeros_like(t) for k, t in params.tensors().items()},
            {k: np.zeros_like(t) for k, t in params.tensors().items()},
        )


def adam_step(
    params: ModelParams,
    grads: dict[str, np.ndarray],
    state: OptimState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update, in place."""
    state.step += 1
    t = state.step
    for name, theta in params.tensors().items():
        grad = grads[name].astype(theta.dtype)
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        theta -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(theta.dtype)


def clone_params(params: ModelParams) -> ModelParams:
    if isinstance(params, ProbeParams):
        return ProbeParams(params.W.copy())
    if isinstance(params, AlphaRecParams):
        return AlphaRecParams(
            params.W1.copy(), params.b1.copy(), params.W2.copy(), params.b2.copy(), params.leaky_slope
        )
    return IdEmbeddingParams(params.user_table.copy(), params.item_table.copy())


@dataclass
class FitResult:
    params: ModelParams
    n_layers: int
    log: list[dict]
    best_epoch: int
    best_val_recall: float | None
    graph: BipartiteGraph = field(repr=False, default=None)


def _positive_pairs(split: DatasetSplit) -> tuple[np.ndarray, np.ndarray]:
    users = np.concatenate(
        [np.full(len(t), u, dtype=np.int64) for u, t in enumerate(split.train)]
    )
    items = np.concatenate(split.train).astype(np.int64)
    return users, items


def fit(
    model_kind: str,
    data: DatasetSplit | MixedDataset,
    item_features: EmbeddingMatrix | np.ndarray | None,
    config: TrainConfig,
    *,
    hidden_dim: int = 1536,
    out_dim: int = 64,
    leaky_slope: float = 0.01,
    dtype=np.float32,
    log_path: str | None = None,
) -> FitResult:
    """Train one model with early stopping on validation recall@20.

    Args:
        model_kind: "mlp", "probe", or "id".
        data: a single split or a merged multi-dataset view; with the latter,
            negatives are drawn from the positive item's own dataset block.
        item_features: language features aligned to item indices (None for "id").
        config: optimization settings; one seed drives every random stream.
        hidden_dim/out_dim/leaky_slope: representation sizes for fresh params.
        dtype: compute/storage precision (float64 for gradient checking).
        log_path: optional JSON-lines file receiving one record per epoch.

    Returns a FitResult carrying the best-validation parameters and the log.
    """
    mixed = data if isinstance(data, MixedDataset) else None
    split = mixed.combined() if mixed is not None else data
    g = build_graph(split)
    x = None
    if model_kind in ("mlp", "probe"):
        if item_features is None:
            raise ValueError(f"model kind {model_kind!r} needs item features")
        x = (item_features.data if isinstance(item_features, EmbeddingMatrix) else item_features)
        if x.shape[0] < split.n_items:
            raise ValueError(f"{x.shape[0]} feature rows for {split.n_items} items")
        x = x[: split.n_items].astype(dtype)

    if model_kind == "mlp":
        params: ModelParams = init_mlp(x.shape[1], hidden_dim, out_dim, config.seed, leaky_slope, dtype)
    elif model_kind == "probe":
        params = init_probe(x.shape[1], out_dim, config.seed, dtype)
    elif model_kind == "id":
        params = init_id(split.n_users, split.n_items, out_dim, config.seed, dtype)
    else:
        raise ValueError(f"unknown model kind {model_kind!r}")

    pos_users, pos_items = _positive_pairs(split)
    n_pos = pos_users.shape[0]
    if mixed is not None:
        ordinals = np.searchsorted(mixed.item_offsets, pos_items, side="right") - 1
        pos_lo = mixed.item_offsets[ordinals]
        pos_hi = mixed.item_offsets[ordinals + 1]
    else:
        pos_lo = np.zeros(n_pos, dtype=np.int64)
        pos_hi = np.full(n_pos, split.n_items, dtype=np.int64)

    n_neg = 1 if config.loss_kind == "bpr" else config.n_negatives
    # validation monitor: cap k so every eligible user has k unmasked items
    val_users = [u for u in range(split.n_users) if len(split.validation[u])]
    k_val = 20
    if val_users:
        k_val = min(20, min(split.n_items - len(split.train[u]) for u in val_users))
    state = OptimState.for_params(params)
    log: list[dict] = []
    best_params = None
    best_recall = -math.inf
    best_epoch = 0
    bad_evals = 0
    log_fh = open(log_path, "w", encoding="utf-8", newline="\n") if log_path else None
    try:
        for epoch in range(1, config.max_epochs + 1):
            tic = time.perf_counter()
            order = rng_for(config.seed, "epoch-order", epoch).permutation(n_pos)
            epoch_loss = 0.0
            for b_idx, start in enumerate(range(0, n_pos, config.batch_size)):
                sel = order[start : start + config.batch_size]
                rng = rng_for(config.seed, "negatives", epoch, b_idx)
                negs = np.empty((sel.shape[0], n_neg), dtype=np.int64)
                for row, p in enumerate(sel.tolist()):
                    negs[row] = sample_negatives(
                        split.train[pos_users[p]], (int(pos_lo[p]), int(pos_hi[p])), n_neg, rng
                    )
                batch = TrainBatch(pos_users[sel], pos_items[sel], negs)
                loss, grads = compute_gradients(params, batch, x, g, config)
                if not math.isfinite(loss):
                    raise TrainingDiverged(f"non-finite loss at epoch {epoch} batch {b_idx}")
                adam_step(
                    params,
                    grads,
                    state,
                    config.learning_rate,
                    config.adam_beta1,
                    config.adam_beta2,
                    config.adam_eps,
                )
                epoch_loss += loss
            entry: dict = {"epoch": epoch, "loss": epoch_loss / n_pos}
            stop = False
            if val_users and epoch % config.eval_every == 0:
                output = full_forward(params, x, g, config.n_layers, keep_layers=False)
                recall = evaluate_output(output, split, k_val, on="validation").recall
                entry["recall20_val"] = recall
                if recall > best_recall:
                    best_recall = recall
                    best_params = clone_params(params)
                    best_epoch = epoch
                    bad_evals = 0
                else:
                    bad_evals += 1
                    stop = bad_evals >= config.patience
            else:
                entry["recall20_val"] = None
            entry["seconds"] = time.perf_counter() - tic
            log.append(entry)
            if log_fh:
                log_fh.write(json.dumps(entry) + "\n")
                log_fh.flush()
            if stop:
                break
    finally:
        if log_fh:
            log_fh.close()
    if best_params is None:
        best_params = clone_params(params)
        best_epoch = len(log)
        best_val = None
    else:
        best_val = best_recall
    return FitResult(best_params, config.n_layers, log, best_epoch, best_val, g)
