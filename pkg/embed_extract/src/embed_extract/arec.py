"""The engine's binary matrix format, written independently of its reader.

Layout (little-endian): magic `AREC`, version u32 = 1, rows u64, cols u64,
then rows*cols float32 values row-major. The id sidecar `<file>.ids.tsv`
holds `row_index<TAB>external_id<TAB>title` lines; `#` lines are comments.
This module is the extractor's half of that file contract; the engine's
loader is the other half, and the integration tests hold the two together.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"AREC"
VERSION = 1
HEADER = struct.Struct("<4sIQQ")


def row_offset(row: int, cols: int) -> int:
    return HEADER.size + row * cols * 4


def allocate(path: str | os.PathLike, rows: int, cols: int) -> None:
    """Create the file at full size: header plus a zeroed payload."""
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, rows, cols))
        fh.truncate(row_offset(rows, cols))


def read_header(path: str | os.PathLike) -> tuple[int, int]:
    with open(path, "rb") as fh:
        header = fh.read(HEADER.size)
    if len(header) < HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, rows, cols = HEADER.unpack(header)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    return int(rows), int(cols)


def write_rows(fh, row_indices, vectors: np.ndarray, cols: int) -> None:
    """Place float32 rows at their fixed offsets; caller syncs."""
    data = np.ascontiguousarray(vectors, dtype="<f4")
    for k, row in enumerate(row_indices):
        fh.seek(row_offset(row, cols))
        fh.write(data[k].tobytes())


def write_sidecar(path: str | os.PathLike, ids, titles, comment: str) -> None:
    side = f"{path}.ids.tsv"
    with open(side, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {comment}\n")
        for k, (ext, title) in enumerate(zip(ids, titles)):
            fh.write(f"{k}\t{ext}\t{title}\n")
