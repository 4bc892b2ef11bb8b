"""Model parameterizations and the shared forward pass.

Three ways to produce layer-0 representations:
  probe  - single linear map of item language features
  mlp    - two-layer leaky-ReLU projection of item language features
  id     - learned per-user / per-item lookup tables (no language input)
Language-feature models derive user layer-0 states as the mean of their
training items' layer-0 rows; the id model looks users up directly. All models
then share neighborhood smoothing, layer averaging, and cosine scoring.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .embed import EmbeddingMatrix
from .graph import BipartiteGraph, multi_layer, user_mean
from .seeding import rng_for

DEFAULT_HIDDEN_DIM = 1536
DEFAULT_OUT_DIM = 64
DEFAULT_LEAKY_SLOPE = 0.01

CKPT_MAGIC = b"ARCK"
CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sII")
_TENSOR_HEADER = struct.Struct("<QQ")
META_TENSOR = "__meta__"


def _as_array(x: np.ndarray | EmbeddingMatrix) -> np.ndarray:
    return x.data if isinstance(x, EmbeddingMatrix) else x


def glorot_uniform(rows: int, cols: int, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols)).astype(dtype)


@dataclass
class ProbeParams:
    """Single linear map W: d_in -> d_out."""

    W: np.ndarray
    kind: str = field(default="probe", init=False)

    @property
    def input_dim(self) -> int:
        return self.W.shape[0]

    @property
    def out_dim(self) -> int:
        return self.W.shape[1]

    def tensors(self) -> dict[str, np.ndarray]:
        return {"W": self.W}


@dataclass
class AlphaRecParams:
    """Two-layer projection: leaky_relu(X W1 + b1) W2 + b2."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    leaky_slope: float = DEFAULT_LEAKY_SLOPE
    kind: str = field(default="mlp", init=False)

    @property
    def input_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W2.shape[1]

    def tensors(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}


@dataclass
class IdEmbeddingParams:
    """Free embedding tables for users and items."""

    user_table: np.ndarray
    item_table: np.ndarray
    kind: str = field(default="id", init=False)

    @property
    def out_dim(self) -> int:
        return self.item_table.shape[1]

    def tensors(self) -> dict[str, np.ndarray]:
        return {"user_table": self.user_table, "item_table": self.item_table}


ModelParams = ProbeParams | AlphaRecParams | IdEmbeddingParams


def init_probe(d_in: int, d_out: int, seed: int, dtype=np.float32) -> ProbeParams:
    return ProbeParams(glorot_uniform(d_in, d_out, rng_for(seed, "init", "probe", "W"), dtype))


def init_mlp(
    d_in: int,
    d_hidden: int = DEFAULT_HIDDEN_DIM,
    d_out: int = DEFAULT_OUT_DIM,
    seed: int = 0,
    leaky_slope: float = DEFAULT_LEAKY_SLOPE,
    dtype=np.float32,
) -> AlphaRecParams:
    return AlphaRecParams(
        glorot_uniform(d_in, d_hidden, rng_for(seed, "init", "mlp", "W1"), dtype),
        np.zeros(d_hidden, dtype=dtype),
        glorot_uniform(d_hidden, d_out, rng_for(seed, "init", "mlp", "W2"), dtype),
        np.zeros(d_out, dtype=dtype),
        leaky_slope,
    )


def init_id(n_users: int, n_items: int, d_out: int, seed: int, dtype=np.float32) -> IdEmbeddingParams:
    return IdEmbeddingParams(
        glorot_uniform(n_users, d_out, rng_for(seed, "init", "id", "users"), dtype),
        glorot_uniform(n_items, d_out, rng_for(seed, "init", "id", "items"), dtype),
    )


def probe_forward(params: ProbeParams, x: np.ndarray | EmbeddingMatrix) -> np.ndarray:
    x = _as_array(x)
    if x.shape[-1] != params.input_dim:
        raise ValueError(f"feature dim {x.shape[-1]} != probe input dim {params.input_dim}")
    return x.astype(params.W.dtype) @ params.W


def mlp_forward(
    params: AlphaRecParams, x: np.ndarray | EmbeddingMatrix, return_preact: bool = False
):
    """Two-layer projection; optionally also return the hidden pre-activation."""
    x = _as_array(x)
    if x.shape[-1] != params.input_dim:
        raise ValueError(f"feature dim {x.shape[-1]} != projection input dim {params.input_dim}")
    x = x.astype(params.W1.dtype)
    h = x @ params.W1 + params.b1
    z = np.where(h >= 0, h, params.leaky_slope * h)
    out = z @ params.W2 + params.b2
    if return_preact:
        return out, h
    return out


def item_layer0(params: ModelParams, x: np.ndarray | EmbeddingMatrix | None) -> np.ndarray:
    if isinstance(params, IdEmbeddingParams):
        return params.item_table
    if x is None:
        raise ValueError("language-feature model needs an item feature matrix")
    if isinstance(params, AlphaRecParams):
        return mlp_forward(params, x)
    return probe_forward(params, x)


@dataclass
class ModelOutput:
    """Final representations plus (optionally) every layer's states."""

    users: np.ndarray
    items: np.ndarray
    user_layers: list[np.ndarray]
    item_layers: list[np.ndarray]
    n_layers: int


def full_forward(
    params: ModelParams,
    item_features: np.ndarray | EmbeddingMatrix | None,
    g: BipartiteGraph,
    n_layers: int,
    keep_layers: bool = True,
) -> ModelOutput:
    """Layer-0 states -> n_layers smoothing steps -> layer-averaged finals."""
    e_i0 = item_layer0(params, item_features)
    if e_i0.shape[0] != g.n_items:
        raise ValueError(f"{e_i0.shape[0]} item rows for a graph of {g.n_items} items")
    if isinstance(params, IdEmbeddingParams):
        if params.user_table.shape[0] != g.n_users:
            raise ValueError("user table row count does not match graph")
        e_u0 = params.user_table
    else:
        e_u0 = user_mean(g, e_i0)
    final_u, final_i, layers_u, layers_i = multi_layer(g, e_u0, e_i0, n_layers, keep_layers)
    return ModelOutput(final_u, final_i, layers_u, layers_i, n_layers)


def cosine_score(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity of two vectors; zero-norm input is an error."""
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine undefined for a zero-norm vector")
    return float(np.dot(u, v) / (nu * nv))


def _encode_meta(meta: dict) -> np.ndarray:
    raw = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.float32).reshape(1, -1)


def _decode_meta(tensor: np.ndarray) -> dict:
    raw = bytes(np.rint(tensor.ravel()).astype(np.uint8).tolist())
    return json.loads(raw.decode("utf-8"))


def save_checkpoint(
    path: str | os.PathLike,
    params: ModelParams,
    n_layers: int,
    extra_meta: dict | None = None,
) -> None:
    """Binary checkpoint: magic, version, tensor count, then named f32 tensors.

    A leading __meta__ tensor carries byte-encoded JSON with the model kind,
    layer count, and shapes, so loading needs no side information.
    """
    meta: dict = {"kind": params.kind, "n_layers": int(n_layers)}
    if isinstance(params, AlphaRecParams):
        meta["leaky_slope"] = float(params.leaky_slope)
    if extra_meta:
        overlap = set(extra_meta) & set(meta)
        if overlap:
            raise ValueError(f"extra_meta collides with reserved keys {sorted(overlap)}")
        meta.update(extra_meta)
    tensors: list[tuple[str, np.ndarray]] = [(META_TENSOR, _encode_meta(meta))]
    for name, arr in params.tensors().items():
        arr2 = np.ascontiguousarray(arr, dtype=np.float32)
        if arr2.ndim == 1:
            arr2 = arr2.reshape(1, -1)
        tensors.append((name, arr2))
    with open(path, "wb") as fh:
        fh.write(_CKPT_HEADER.pack(CKPT_MAGIC, CKPT_VERSION, len(tensors)))
        for name, arr in tensors:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(_TENSOR_HEADER.pack(arr.shape[0], arr.shape[1]))
            fh.write(arr.tobytes())


def load_checkpoint(path: str | os.PathLike) -> tuple[ModelParams, dict]:
    """Inverse of save_checkpoint; returns (params, meta)."""
    with open(path, "rb") as fh:
        header = fh.read(_CKPT_HEADER.size)
        if len(header) < _CKPT_HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, version, count = _CKPT_HEADER.unpack(header)
        if magic != CKPT_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if version != CKPT_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            rows, cols = _TENSOR_HEADER.unpack(fh.read(_TENSOR_HEADER.size))
            payload = fh.read(rows * cols * 4)
            if len(payload) != rows * cols * 4:
                raise ValueError(f"{path}: truncated tensor {name!r}")
            tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()
    if META_TENSOR not in tensors:
        raise ValueError(f"{path}: missing metadata tensor")
    meta = _decode_meta(tensors.pop(META_TENSOR))
    kind = meta.get("kind")
    if kind == "probe":
        params: ModelParams = ProbeParams(tensors["W"])
    elif kind == "mlp":
        params = AlphaRecParams(
            tensors["W1"],
            tensors["b1"].ravel(),
            tensors["W2"],
            tensors["b2"].ravel(),
            float(meta.get("leaky_slope", DEFAULT_LEAKY_SLOPE)),
        )
    elif kind == "id":
        params = IdEmbeddingParams(tensors["user_table"], tensors["item_table"])
    else:
        raise ValueError(f"{path}: unknown model kind {kind!r}")
    return params, meta
