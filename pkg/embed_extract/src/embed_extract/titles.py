"""Tab-separated (external id, text) tables feeding the extractor.

The same shape serves item titles and intention queries; the extractor does
not care which it is given.
"""

from __future__ import annotations

import os
from dataclasses import dataclass


@dataclass
class TitleTable:
    """Parallel id/text lists in input order; ids unique, texts non-empty."""

    ids: list[str]
    titles: list[str]

    def __post_init__(self):
        if len(self.ids) != len(self.titles):
            raise ValueError("ids and titles length mismatch")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate external id")
        for k, t in enumerate(self.titles):
            if not t.strip():
                raise ValueError(f"empty title for row {k} (id {self.ids[k]!r})")

    @property
    def rows(self) -> int:
        return len(self.ids)


def parse_titles(path: str | os.PathLike) -> TitleTable:
    """Read `id<TAB>text` lines; blank lines are skipped.

    Whitespace is trimmed from both fields. Duplicate ids and texts that are
    empty after trimming are errors, reported with their line number.
    """
    ids: list[str] = []
    titles: list[str] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}: line {lineno}: expected 2 tab-separated fields")
            ext, title = parts[0].strip(), parts[1].strip()
            if not ext:
                raise ValueError(f"{path}: line {lineno}: empty id")
            if ext in seen:
                raise ValueError(f"{path}: line {lineno}: duplicate id {ext!r}")
            if not title:
                raise ValueError(f"{path}: line {lineno}: empty title for id {ext!r}")
            seen.add(ext)
            ids.append(ext)
            titles.append(title)
    if not ids:
        raise ValueError(f"{path}: no rows")
    return TitleTable(ids, titles)
