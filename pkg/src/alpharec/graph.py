"""Bipartite interaction graph and symmetric-normalized neighborhood smoothing.

One propagation step maps user states to degree-normalized sums of their
training items' states and vice versa: next_u = sum_{i in N(u)} e_i /
(sqrt|N(u)| sqrt|N(i)|), symmetrically for items. Stacked steps are averaged
together with the layer-0 states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import DatasetSplit


@dataclass
class BipartiteGraph:
    """CSR adjacency in both directions; neighbor lists sorted ascending."""

    n_users: int
    n_items: int
    user_offsets: np.ndarray
    user_items: np.ndarray
    item_offsets: np.ndarray
    item_users: np.ndarray

    @property
    def user_degree(self) -> np.ndarray:
        return np.diff(self.user_offsets)

    @property
    def item_degree(self) -> np.ndarray:
        return np.diff(self.item_offsets)

    @property
    def n_edges(self) -> int:
        return int(self.user_items.shape[0])


def build_graph(split: DatasetSplit) -> BipartiteGraph:
    """Graph over the split's training interactions only."""
    n_users, n_items = split.n_users, split.n_items
    lengths = np.array([len(t) for t in split.train], dtype=np.int64)
    if (lengths == 0).any():
        u = int(np.flatnonzero(lengths == 0)[0])
        raise ValueError(f"user index {u} has no training interactions")
    user_offsets = np.concatenate([[0], np.cumsum(lengths)])
    user_items = (
        np.concatenate(split.train) if len(split.train) else np.empty(0, dtype=np.int64)
    ).astype(np.int64)
    if user_items.size and (user_items.min() < 0 or user_items.max() >= n_items):
        raise ValueError("item index out of range in training lists")

    # invert: stable sort of user-major edges by item leaves users ascending per item
    item_degree = np.bincount(user_items, minlength=n_items).astype(np.int64)
    item_offsets = np.concatenate([[0], np.cumsum(item_degree)])
    edge_users = np.repeat(np.arange(n_users, dtype=np.int64), lengths)
    item_users = edge_users[np.argsort(user_items, kind="stable")]
    return BipartiteGraph(n_users, n_items, user_offsets, user_items, item_offsets, item_users)


def _inv_sqrt(degree: np.ndarray) -> np.ndarray:
    out = np.zeros(degree.shape[0], dtype=np.float64)
    nz = degree > 0
    out[nz] = 1.0 / np.sqrt(degree[nz].astype(np.float64))
    return out


def _segment_rows(offsets: np.ndarray, gathered: np.ndarray, n_rows: int) -> np.ndarray:
    """Sum gathered CSR-ordered rows per segment; empty segments give zeros."""
    lengths = np.diff(offsets)
    nz = np.flatnonzero(lengths)
    out = np.zeros((n_rows, gathered.shape[1]), dtype=np.float64)
    if nz.size:
        out[nz] = np.add.reduceat(gathered, offsets[nz], axis=0)
    return out


def propagate(
    g: BipartiteGraph, e_users: np.ndarray, e_items: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """One symmetric-normalized smoothing step in both directions.

    Accumulates in float64 regardless of input dtype (results cast back), with
    a fixed per-row reduction order over ascending neighbor indices, so results
    are deterministic and match a dense-adjacency oracle tightly even for f32
    inputs. Zero-degree rows come back as zeros.
    """
    if e_users.shape[0] != g.n_users or e_items.shape[0] != g.n_items:
        raise ValueError("state row counts do not match graph")
    if e_users.shape[1] != e_items.shape[1]:
        raise ValueError("user and item state widths differ")
    inv_u = _inv_sqrt(g.user_degree)
    inv_i = _inv_sqrt(g.item_degree)

    scaled_items = e_items.astype(np.float64) * inv_i[:, None]
    next_users = _segment_rows(g.user_offsets, scaled_items[g.user_items], g.n_users)
    next_users *= inv_u[:, None]

    scaled_users = e_users.astype(np.float64) * inv_u[:, None]
    next_items = _segment_rows(g.item_offsets, scaled_users[g.item_users], g.n_items)
    next_items *= inv_i[:, None]
    return next_users.astype(e_users.dtype), next_items.astype(e_items.dtype)


def user_mean(g: BipartiteGraph, e_items: np.ndarray) -> np.ndarray:
    """Plain mean of each user's training items' rows (float64 accumulate)."""
    if e_items.shape[0] != g.n_items:
        raise ValueError("item state row count does not match graph")
    sums = _segment_rows(g.user_offsets, e_items.astype(np.float64)[g.user_items], g.n_users)
    deg = g.user_degree
    if (deg == 0).any():
        raise ValueError("user with no training interactions")
    return (sums / deg[:, None]).astype(e_items.dtype)


def user_mean_backward(g: BipartiteGraph, grad_users: np.ndarray) -> np.ndarray:
    """Adjoint of user_mean: spread each user row back over its items / degree."""
    scaled = grad_users.astype(np.float64) / g.user_degree[:, None]
    out = _segment_rows(g.item_offsets, scaled[g.item_users], g.n_items)
    return out.astype(grad_users.dtype)


def multi_layer(
    g: BipartiteGraph,
    e_users0: np.ndarray,
    e_items0: np.ndarray,
    n_layers: int,
    keep_layers: bool = False,
) -> tuple[np.ndarray, np.ndarray, list[np.ndarray], list[np.ndarray]]:
    """Run n_layers smoothing steps and average all layer states.

    Returns (final_users, final_items, user_layers, item_layers); the layer
    lists are empty unless keep_layers is set.
    """
    if n_layers < 0:
        raise ValueError("n_layers must be >= 0")
    acc_u = e_users0.astype(np.float64).copy()
    acc_i = e_items0.astype(np.float64).copy()
    layers_u = [e_users0] if keep_layers else []
    layers_i = [e_items0] if keep_layers else []
    cur_u, cur_i = e_users0, e_items0
    for _ in range(n_layers):
        cur_u, cur_i = propagate(g, cur_u, cur_i)
        acc_u += cur_u
        acc_i += cur_i
        if keep_layers:
            layers_u.append(cur_u)
            layers_i.append(cur_i)
    scale = 1.0 / (n_layers + 1)
    final_u = (acc_u * scale).astype(e_users0.dtype)
    final_i = (acc_i * scale).astype(e_items0.dtype)
    return final_u, final_i, layers_u, layers_i


def scatter_add_rows(n_rows: int, idx: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Deterministic segment scatter-add: out[idx[k]] += rows[k].

    Stable-sorts by destination first so the reduction order is fixed.
    """
    out = np.zeros((n_rows, rows.shape[1]), dtype=rows.dtype)
    if idx.size == 0:
        return out
    order = np.argsort(idx, kind="stable")
    sidx = idx[order]
    srows = rows[order]
    starts = np.flatnonzero(np.concatenate([[True], sidx[1:] != sidx[:-1]]))
    out[sidx[starts]] = np.add.reduceat(srows, starts, axis=0)
    return out
