"""Interaction ingestion, user filtering, dense indexing, and seeded splitting.

Input is implicit feedback as TSV lines `user<TAB>item[<TAB>timestamp]`.
Users below a minimum interaction count are dropped in a single pass, survivors
are reindexed densely in order of first appearance, and each user's records are
partitioned into train/validation/test by ratio with per-user seeded shuffling.
Validation/test items that never occur in any training list are pruned without
re-filtering.
"""

from __future__ import annotations

import math
import os
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .seeding import rng_for

DEFAULT_RATIOS = (0.4, 0.3, 0.3)
DEFAULT_MIN_INTERACTIONS = 20


class ParseError(ValueError):
    """Malformed interaction input."""


@dataclass
class RawInteractions:
    """Deduplicated (user, item, timestamp|None) records in file order."""

    records: list[tuple[str, str, int | None]]


@dataclass
class IdMaps:
    """Bijections between external string ids and dense indices."""

    users: list[str]
    items: list[str]
    user_index: dict[str, int] = field(init=False, repr=False)
    item_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.user_index = {u: k for k, u in enumerate(self.users)}
        self.item_index = {i: k for k, i in enumerate(self.items)}
        if len(self.user_index) != len(self.users):
            raise ValueError("duplicate external user id")
        if len(self.item_index) != len(self.items):
            raise ValueError("duplicate external item id")


@dataclass
class DatasetSplit:
    """Per-user sorted item-index lists for train/validation/test."""

    train: list[np.ndarray]
    validation: list[np.ndarray]
    test: list[np.ndarray]
    id_maps: IdMaps
    n_users: int
    n_items: int
    dataset_tag: int = 0


def parse_interactions(path: str | os.PathLike) -> RawInteractions:
    """Read a TSV interaction file.

    Lines starting with `#` and blank lines are skipped. Duplicate (user, item)
    pairs collapse to one record keeping the earliest timestamp; first-occurrence
    file order is preserved. Malformed lines raise ParseError naming the line.
    """
    records: list[tuple[str, str, int | None]] = []
    seen: dict[tuple[str, str], int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise ParseError(
                    f"{path}: line {lineno}: expected 2 or 3 tab-separated fields, got {len(parts)}"
                )
            user, item = parts[0], parts[1]
            if not user or not item:
                raise ParseError(f"{path}: line {lineno}: empty user or item id")
            ts: int | None = None
            if len(parts) == 3:
                try:
                    ts = int(parts[2])
                except ValueError:
                    raise ParseError(
                        f"{path}: line {lineno}: bad timestamp {parts[2]!r}"
                    ) from None
            key = (user, item)
            if key in seen:
                pos = seen[key]
                old_ts = records[pos][2]
                if ts is not None and (old_ts is None or ts < old_ts):
                    records[pos] = (user, item, ts)
                continue
            seen[key] = len(records)
            records.append((user, item, ts))
    if not records:
        raise ParseError(f"{path}: no interaction records")
    return RawInteractions(records)


def filter_and_index(
    raw: RawInteractions, min_interactions: int = DEFAULT_MIN_INTERACTIONS
) -> tuple[list[tuple[int, int, int | None]], IdMaps]:
    """Drop users with fewer than min_interactions records, then index densely.

    Indexing order is first appearance among surviving records, so the result is
    stable for identical input ordering. Single pass: items left with no
    surviving interactions later (after splitting) are not re-filtered.
    """
    if min_interactions < 1:
        raise ValueError("min_interactions must be >= 1")
    counts = Counter(u for u, _, _ in raw.records)
    keep = {u for u, c in counts.items() if c >= min_interactions}
    if not keep:
        raise ValueError(f"no users have >= {min_interactions} interactions")
    users: list[str] = []
    items: list[str] = []
    uidx: dict[str, int] = {}
    iidx: dict[str, int] = {}
    out: list[tuple[int, int, int | None]] = []
    for user, item, ts in raw.records:
        if user not in keep:
            continue
        if user not in uidx:
            uidx[user] = len(users)
            users.append(user)
        if item not in iidx:
            iidx[item] = len(items)
            items.append(item)
        out.append((uidx[user], iidx[item], ts))
    return out, IdMaps(users, items)


def _round_half_up(x: float) -> int:
    # small guard so decimal halves computed in binary (e.g. 0.3*25) still round up
    return int(math.floor(x + 0.5 + 1e-9))


def split_dataset(
    records: list[tuple[int, int, int | None]],
    id_maps: IdMaps,
    ratios: tuple[float, float, float] = DEFAULT_RATIOS,
    seed: int = 0,
    dataset_tag: int = 0,
    order: str = "random",
) -> DatasetSplit:
    """Partition each user's records into train/validation/test by ratio.

    Counts use round-half-up on n*ratio for train and validation; the remainder
    is test. Users with fewer than 3 records put everything in train. `order`
    selects per-user shuffling ("random", seeded per user) or timestamp order
    ("time", stable ascending; falls back to file order when any timestamp is
    missing). Validation/test items absent from every training list are pruned.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    if any(r < 0 for r in ratios):
        raise ValueError("ratios must be non-negative")
    if order not in ("random", "time"):
        raise ValueError(f"unknown split order {order!r}")
    n_users = len(id_maps.users)
    n_items = len(id_maps.items)
    per_user: list[list[tuple[int, int | None]]] = [[] for _ in range(n_users)]
    for u, i, ts in records:
        if not (0 <= u < n_users and 0 <= i < n_items):
            raise ValueError(f"record ({u}, {i}) outside id map range")
        per_user[u].append((i, ts))

    train: list[np.ndarray] = []
    val: list[list[int]] = []
    test: list[list[int]] = []
    for u, recs in enumerate(per_user):
        n = len(recs)
        if n == 0:
            raise ValueError(f"user index {u} has no records")
        if n < 3:
            ordered = [i for i, _ in recs]
            n_train, n_val = n, 0
        else:
            if order == "random":
                perm = rng_for(seed, "split", u).permutation(n)
                ordered = [recs[p][0] for p in perm]
            else:
                if all(ts is not None for _, ts in recs):
                    ordered = [i for i, _ in sorted(recs, key=lambda r: r[1])]
                else:
                    ordered = [i for i, _ in recs]
            n_train = _round_half_up(ratios[0] * n)
            n_train = max(1, min(n_train, n))
            n_val = min(_round_half_up(ratios[1] * n), n - n_train)
        train.append(np.array(sorted(ordered[:n_train]), dtype=np.int64))
        val.append(sorted(ordered[n_train : n_train + n_val]))
        test.append(sorted(ordered[n_train + n_val :]))

    in_train = np.zeros(n_items, dtype=bool)
    for t in train:
        in_train[t] = True
    val_arr = [np.array([i for i in v if in_train[i]], dtype=np.int64) for v in val]
    test_arr = [np.array([i for i in t if in_train[i]], dtype=np.int64) for t in test]
    return DatasetSplit(train, val_arr, test_arr, id_maps, n_users, n_items, dataset_tag)


def _write_pairs(path: str, lists: list[np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, items in enumerate(lists):
            for i in items.tolist():
                fh.write(f"{u}\t{i}\n")


def _write_idmap(path: str, ids: list[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k, ext in enumerate(ids):
            fh.write(f"{k}\t{ext}\n")


def write_split(split: DatasetSplit, out_dir: str | os.PathLike) -> None:
    """Serialize a split as train/val/test pair TSVs plus id map TSVs."""
    os.makedirs(out_dir, exist_ok=True)
    _write_pairs(os.path.join(out_dir, "train.tsv"), split.train)
    _write_pairs(os.path.join(out_dir, "val.tsv"), split.validation)
    _write_pairs(os.path.join(out_dir, "test.tsv"), split.test)
    _write_idmap(os.path.join(out_dir, "idmap.users.tsv"), split.id_maps.users)
    _write_idmap(os.path.join(out_dir, "idmap.items.tsv"), split.id_maps.items)


def _read_idmap(path: str) -> list[str]:
    ids: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(f"{path}: line {lineno}: expected 2 fields")
            if int(parts[0]) != len(ids):
                raise ParseError(f"{path}: line {lineno}: non-contiguous index")
            ids.append(parts[1])
    if not ids:
        raise ParseError(f"{path}: empty id map")
    return ids


def _read_pairs(path: str, n_users: int, n_items: int) -> list[np.ndarray]:
    lists: list[list[int]] = [[] for _ in range(n_users)]
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(f"{path}: line {lineno}: expected 2 fields")
            u, i = int(parts[0]), int(parts[1])
            if not (0 <= u < n_users and 0 <= i < n_items):
                raise ParseError(f"{path}: line {lineno}: index out of range")
            lists[u].append(i)
    return [np.array(sorted(set(l)), dtype=np.int64) for l in lists]


def load_split(split_dir: str | os.PathLike, dataset_tag: int = 0) -> DatasetSplit:
    """Load a split serialized by write_split."""
    users = _read_idmap(os.path.join(split_dir, "idmap.users.tsv"))
    items = _read_idmap(os.path.join(split_dir, "idmap.items.tsv"))
    id_maps = IdMaps(users, items)
    n_users, n_items = len(users), len(items)
    train = _read_pairs(os.path.join(split_dir, "train.tsv"), n_users, n_items)
    val = _read_pairs(os.path.join(split_dir, "val.tsv"), n_users, n_items)
    test = _read_pairs(os.path.join(split_dir, "test.tsv"), n_users, n_items)
    for u in range(n_users):
        if len(train[u]) == 0:
            raise ParseError(f"user index {u} has an empty training list")
    return DatasetSplit(train, val, test, id_maps, n_users, n_items, dataset_tag)


@dataclass
class MixedDataset:
    """Several splits packed into one index space by cumulative offsets."""

    splits: list[DatasetSplit]
    user_offsets: np.ndarray
    item_offsets: np.ndarray
    _combined: DatasetSplit | None = field(default=None, repr=False)

    @property
    def tags(self) -> list[int]:
        return [s.dataset_tag for s in self.splits]

    def ordinal_of_item(self, global_item: int) -> int:
        """Position in `splits` of the dataset owning a global item index."""
        if not (0 <= global_item < int(self.item_offsets[-1])):
            raise ValueError(f"global item index {global_item} out of range")
        return int(np.searchsorted(self.item_offsets, global_item, side="right")) - 1

    def tag_of_item(self, global_item: int) -> int:
        return self.splits[self.ordinal_of_item(global_item)].dataset_tag

    def item_range(self, ordinal: int) -> tuple[int, int]:
        return int(self.item_offsets[ordinal]), int(self.item_offsets[ordinal + 1])

    def combined(self) -> DatasetSplit:
        """Single DatasetSplit over the global index space (block structure)."""
        if self._combined is not None:
            return self._combined
        users: list[str] = []
        items: list[str] = []
        train: list[np.ndarray] = []
        val: list[np.ndarray] = []
        test: list[np.ndarray] = []
        for s, u_off, i_off in zip(
            self.splits, self.user_offsets[:-1].tolist(), self.item_offsets[:-1].tolist()
        ):
            users.extend(f"d{s.dataset_tag}/{ext}" for ext in s.id_maps.users)
            items.extend(f"d{s.dataset_tag}/{ext}" for ext in s.id_maps.items)
            train.extend(t + i_off for t in s.train)
            val.extend(v + i_off for v in s.validation)
            test.extend(t + i_off for t in s.test)
        combined = DatasetSplit(
            train,
            val,
            test,
            IdMaps(users, items),
            int(self.user_offsets[-1]),
            int(self.item_offsets[-1]),
            dataset_tag=-1,
        )
        self._combined = combined
        return combined


def merge_datasets(splits: list[DatasetSplit]) -> MixedDataset:
    """Pack splits into one global index space; tags must be distinct."""
    if not splits:
        raise ValueError("nothing to merge")
    tags = [s.dataset_tag for s in splits]
    if len(set(tags)) != len(tags):
        raise ValueError(f"dataset tags must be distinct, got {tags}")
    user_offsets = np.cumsum([0] + [s.n_users for s in splits], dtype=np.int64)
    item_offsets = np.cumsum([0] + [s.n_items for s in splits], dtype=np.int64)
    return MixedDataset(list(splits), user_offsets, item_offsets)


def unmerge(mixed: MixedDataset) -> list[DatasetSplit]:
    """Rebuild the original splits from the merged global view."""
    combined = mixed.combined()
    out: list[DatasetSplit] = []
    for ordinal, s in enumerate(mixed.splits):
        u_lo = int(mixed.user_offsets[ordinal])
        u_hi = int(mixed.user_offsets[ordinal + 1])
        i_lo = int(mixed.item_offsets[ordinal])
        prefix = f"d{s.dataset_tag}/"
        users = [ext.removeprefix(prefix) for ext in combined.id_maps.users[u_lo:u_hi]]
        items = [
            ext.removeprefix(prefix)
            for ext in combined.id_maps.items[i_lo : int(mixed.item_offsets[ordinal + 1])]
        ]
        out.append(
            DatasetSplit(
                [t - i_lo for t in combined.train[u_lo:u_hi]],
                [v - i_lo for v in combined.validation[u_lo:u_hi]],
                [t - i_lo for t in combined.test[u_lo:u_hi]],
                IdMaps(users, items),
                u_hi - u_lo,
                int(mixed.item_offsets[ordinal + 1]) - i_lo,
                s.dataset_tag,
            )
        )
    return out
