"""Dense float32 feature matrices and their on-disk format.

Binary layout (little-endian): magic `AREC`, version u32 = 1, rows u64,
cols u64, then rows*cols float32 values row-major. An optional sidecar
`<file>.ids.tsv` maps row_index -> external item id -> title; lines starting
with `#` are comments.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .corpus import DatasetSplit, IdMaps
from .seeding import rng_for

MAGIC = b"AREC"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


@dataclass
class EmbeddingMatrix:
    """Row-major float32 matrix, optionally tagged with external row ids."""

    data: np.ndarray
    row_ids: list[str] | None = None

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise ValueError(f"expected a 2-d matrix, got shape {self.data.shape}")
        if not np.isfinite(self.data).all():
            flat = int(np.flatnonzero(~np.isfinite(self.data))[0])
            raise ValueError(f"non-finite value at element offset {flat}")
        if self.row_ids is not None:
            if len(self.row_ids) != self.data.shape[0]:
                raise ValueError("row_ids length does not match row count")
            if len(set(self.row_ids)) != len(self.row_ids):
                raise ValueError("row_ids must be unique")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def sidecar_path(path: str | os.PathLike) -> str:
    return f"{path}.ids.tsv"


def write_matrix(
    m: EmbeddingMatrix,
    path: str | os.PathLike,
    titles: list[str] | None = None,
    header_comment: str | None = None,
) -> None:
    """Write the binary matrix; write the id sidecar when row_ids are present."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, m.rows, m.dim))
        fh.write(m.data.tobytes())
    if m.row_ids is not None:
        if titles is not None and len(titles) != m.rows:
            raise ValueError("titles length does not match row count")
        with open(sidecar_path(path), "w", encoding="utf-8", newline="\n") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            for k, ext in enumerate(m.row_ids):
                title = titles[k] if titles is not None else ""
                fh.write(f"{k}\t{ext}\t{title}\n")


def _read_sidecar(path: str) -> tuple[list[str], list[str]]:
    ids: list[str] = []
    titles: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}: line {lineno}: expected 3 fields")
            if int(parts[0]) != len(ids):
                raise ValueError(f"{path}: line {lineno}: non-contiguous row index")
            ids.append(parts[1])
            titles.append(parts[2])
    return ids, titles


def load_matrix(path: str | os.PathLike) -> EmbeddingMatrix:
    """Load a binary matrix, validating magic, version, size, and finiteness."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, version, rows, cols = _HEADER.unpack(header)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        payload = fh.read()
    expected = rows * cols * 4
    if len(payload) != expected:
        raise ValueError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()
    if not np.isfinite(data).all():
        flat = int(np.flatnonzero(~np.isfinite(data))[0])
        byte_off = _HEADER.size + flat * 4
        raise ValueError(f"{path}: non-finite value at element {flat} (byte offset {byte_off})")
    row_ids = None
    side = sidecar_path(path)
    if os.path.exists(side):
        ids, _ = _read_sidecar(side)
        if len(ids) != rows:
            raise ValueError(f"{side}: {len(ids)} ids for {rows} rows")
        row_ids = ids
    return EmbeddingMatrix(data, row_ids)


def align_to_items(m: EmbeddingMatrix, id_maps: IdMaps) -> EmbeddingMatrix:
    """Reorder rows so row k holds the features of item index k.

    Requires row_ids; every indexed item id must be present. Extra rows are
    dropped.
    """
    if m.row_ids is None:
        raise ValueError("matrix has no row ids to align by")
    index_of = {ext: k for k, ext in enumerate(m.row_ids)}
    missing = [ext for ext in id_maps.items if ext not in index_of]
    if missing:
        raise ValueError(f"{len(missing)} item ids missing from matrix (first: {missing[0]!r})")
    rows = np.array([index_of[ext] for ext in id_maps.items], dtype=np.int64)
    return EmbeddingMatrix(m.data[rows], list(id_maps.items))


def user_language_features(split: DatasetSplit, items: EmbeddingMatrix) -> EmbeddingMatrix:
    """Mean of each user's training items' rows (float64 accumulate, f32 out)."""
    if items.rows < split.n_items:
        raise ValueError(f"matrix has {items.rows} rows, split indexes {split.n_items} items")
    out = np.empty((split.n_users, items.dim), dtype=np.float32)
    data = items.data
    for u, train_u in enumerate(split.train):
        if len(train_u) == 0:
            raise ValueError(f"user index {u} has an empty training list")
        out[u] = data[train_u].astype(np.float64).mean(axis=0)
    return EmbeddingMatrix(out)


def shuffle_permutation(rows: int, seed: int) -> np.ndarray:
    """The row permutation shuffle_rows applies for a given seed."""
    return rng_for(seed, "shuffle-rows").permutation(rows)


def shuffle_rows(m: EmbeddingMatrix, seed: int) -> EmbeddingMatrix:
    """Seeded permutation of the data rows.

    Row ids keep their positions: row k still claims id k's identity but now
    holds another row's values, which is exactly the misalignment the shuffled
    control experiment needs.
    """
    perm = shuffle_permutation(m.rows, seed)
    row_ids = list(m.row_ids) if m.row_ids is not None else None
    return EmbeddingMatrix(m.data[perm], row_ids)
