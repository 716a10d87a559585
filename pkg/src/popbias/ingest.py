"""Rating-file ingestion, activity filtering, and cross-validation folds.

Raw interaction files (MovieLens ``::`` format or generic CSV) are parsed
into an immutable :class:`RatingsTable`. Under-active users and rarely-rated
items are then removed in a single users-then-items pass, and the surviving
table is split into per-user stratified k-folds for evaluation.
"""

from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

USERS_THEN_ITEMS = "users-then-items"
ITEMS_THEN_USERS = "items-then-users"

CANONICAL_HEADER = ["user_id", "item_id", "rating", "timestamp"]


class ParseError(ValueError):
    """Malformed input line; carries the 1-based line number."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class DuplicateRatingError(ValueError):
    """The same (user, item) pair appeared twice; carries both line numbers."""

    def __init__(self, user: str, item: str, first_line: int, second_line: int):
        super().__init__(
            f"duplicate rating for user={user!r} item={item!r}: "
            f"lines {first_line} and {second_line}"
        )
        self.first_line = first_line
        self.second_line = second_line


class EmptyTableError(ValueError):
    """A filter or split produced a table with no records."""


@dataclass(frozen=True, slots=True)
class RatingRecord:
    """One interaction: opaque external ids, the rating value, optional epoch seconds."""

    user: str
    item: str
    value: float
    timestamp: int | None = None


@dataclass(frozen=True)
class RatingsTable:
    """Immutable set of rating records plus dense index maps.

    ``user_index`` / ``item_index`` map external ids to contiguous dense ints.
    Fold tables share their parent's index maps so dense ids stay aligned
    across train/test; equality therefore compares records and id universes,
    not the dense assignment itself.
    """

    records: tuple[RatingRecord, ...]
    user_index: dict[str, int]
    item_index: dict[str, int]

    @classmethod
    def from_records(
        cls,
        records: list[RatingRecord] | tuple[RatingRecord, ...],
        user_index: dict[str, int] | None = None,
        item_index: dict[str, int] | None = None,
    ) -> "RatingsTable":
        """Build a table; indices default to first-appearance order."""
        if user_index is None:
            user_index = {}
            for r in records:
                if r.user not in user_index:
                    user_index[r.user] = len(user_index)
        if item_index is None:
            item_index = {}
            for r in records:
                if r.item not in item_index:
                    item_index[r.item] = len(item_index)
        return cls(tuple(records), user_index, item_index)

    @property
    def n_users(self) -> int:
        return len(self.user_index)

    @property
    def n_items(self) -> int:
        return len(self.item_index)

    @property
    def n_ratings(self) -> int:
        return len(self.records)

    def dense_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense (user, item) id arrays, aligned with ``records``."""
        u = np.fromiter((self.user_index[r.user] for r in self.records), dtype=np.int64)
        i = np.fromiter((self.item_index[r.item] for r in self.records), dtype=np.int64)
        return u, i

    def user_profiles(self) -> dict[int, set[int]]:
        """Dense user id -> set of dense item ids rated by that user."""
        profiles: dict[int, set[int]] = {u: set() for u in self.user_index.values()}
        for r in self.records:
            profiles[self.user_index[r.user]].add(self.item_index[r.item])
        return profiles

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RatingsTable):
            return NotImplemented
        return (
            sorted(self.records, key=lambda r: (r.user, r.item)) ==
            sorted(other.records, key=lambda r: (r.user, r.item))
            and set(self.user_index) == set(other.user_index)
            and set(self.item_index) == set(other.item_index)
        )

    def __hash__(self):  # pragma: no cover - tables are not used as keys
        return hash((len(self.records), len(self.user_index), len(self.item_index)))


@dataclass(frozen=True)
class FoldSplit:
    """One cross-validation fold; train and test partition the parent records."""

    fold_id: int
    train: RatingsTable
    test: RatingsTable


def _build_table(
    rows: list[tuple[str, str, float, int | None, int]],
    on_duplicate: str,
) -> RatingsTable:
    """Assemble records from (user, item, value, ts, line_no) tuples.

    on_duplicate: "error" raises DuplicateRatingError; "keep_last" keeps the
    final occurrence and logs one warning with the total duplicate count.
    """
    if on_duplicate not in ("error", "keep_last"):
        raise ValueError(f"unknown duplicate policy: {on_duplicate!r}")
    seen: dict[tuple[str, str], int] = {}
    dup_count = 0
    kept: dict[tuple[str, str], RatingRecord] = {}
    for user, item, value, ts, line_no in rows:
        key = (user, item)
        if key in seen:
            if on_duplicate == "error":
                raise DuplicateRatingError(user, item, seen[key], line_no)
            dup_count += 1
        seen.setdefault(key, line_no)
        kept[key] = RatingRecord(user, item, value, ts)
    if dup_count:
        logger.warning("kept last occurrence of %d duplicate (user,item) pairs", dup_count)
    return RatingsTable.from_records(list(kept.values()))


def parse_movielens(path: str | Path, on_duplicate: str = "error") -> RatingsTable:
    """Parse a ``UserID::MovieID::Rating::Timestamp`` file (UTF-8, LF or CRLF)."""
    path = Path(path)
    rows: list[tuple[str, str, float, int | None, int]] = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("::")
            if len(parts) != 4:
                raise ParseError(f"expected 4 '::'-separated fields, got {len(parts)}", line_no)
            user, item, rating, ts = parts
            if not user or not item:
                raise ParseError("empty user or item id", line_no)
            try:
                value = float(rating)
                timestamp = int(ts)
            except ValueError as exc:
                raise ParseError(str(exc), line_no) from None
            if not np.isfinite(value):
                raise ParseError(f"non-finite rating {rating!r}", line_no)
            rows.append((user, item, value, timestamp, line_no))
    return _build_table(rows, on_duplicate)


def parse_generic_csv(
    path: str | Path,
    has_header: bool = False,
    on_duplicate: str = "error",
) -> RatingsTable:
    """Parse ``user,item,rating[,timestamp]`` CSV rows; optional single header row."""
    path = Path(path)
    rows: list[tuple[str, str, float, int | None, int]] = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for line_no, parts in enumerate(reader, start=1):
            if not parts:
                continue
            if has_header and line_no == 1:
                continue
            if len(parts) not in (3, 4):
                raise ParseError(f"expected 3 or 4 comma-separated fields, got {len(parts)}", line_no)
            user, item, rating = parts[0], parts[1], parts[2]
            if not user or not item:
                raise ParseError("empty user or item id", line_no)
            try:
                value = float(rating)
            except ValueError:
                raise ParseError(f"non-numeric rating {rating!r}", line_no) from None
            if not np.isfinite(value):
                raise ParseError(f"non-finite rating {rating!r}", line_no)
            timestamp: int | None = None
            if len(parts) == 4 and parts[3] != "":
                try:
                    timestamp = int(parts[3])
                except ValueError:
                    raise ParseError(f"non-integer timestamp {parts[3]!r}", line_no) from None
            rows.append((user, item, value, timestamp, line_no))
    return _build_table(rows, on_duplicate)


def filter_table(
    table: RatingsTable,
    min_user_ratings: int,
    min_item_ratings: int,
    order: str = USERS_THEN_ITEMS,
) -> RatingsTable:
    """Drop under-threshold users and items, each filter applied exactly once.

    With the default users-then-items order, user counts come from the input
    table and item counts from the user-filtered records; neither filter is
    re-applied afterwards, so e.g. users may end up below the threshold once
    rare items have been removed. Indices are re-densified.
    """
    if min_user_ratings < 0 or min_item_ratings < 0:
        raise ValueError("rating-count thresholds must be >= 0")
    if order not in (USERS_THEN_ITEMS, ITEMS_THEN_USERS):
        raise ValueError(f"unknown filter order: {order!r}")

    def drop_users(records: tuple[RatingRecord, ...]) -> tuple[RatingRecord, ...]:
        counts = Counter(r.user for r in records)
        return tuple(r for r in records if counts[r.user] >= min_user_ratings)

    def drop_items(records: tuple[RatingRecord, ...]) -> tuple[RatingRecord, ...]:
        counts = Counter(r.item for r in records)
        return tuple(r for r in records if counts[r.item] >= min_item_ratings)

    records = table.records
    if order == USERS_THEN_ITEMS:
        records = drop_items(drop_users(records))
    else:
        records = drop_users(drop_items(records))
    if not records:
        raise EmptyTableError(
            f"filtering with (min_user={min_user_ratings}, min_item={min_item_ratings}) "
            "left no records"
        )
    return RatingsTable.from_records(list(records))


def kfold_split(table: RatingsTable, k_folds: int, seed: int) -> list[FoldSplit]:
    """Per-user stratified k-fold split.

    Each user's records are randomly permuted and dealt round-robin into k
    folds, so every user contributes floor(n/k)..ceil(n/k) test records to
    every fold. Train and test tables share the parent's index maps.
    Deterministic given the seed.
    """
    if k_folds < 2:
        raise ValueError("k_folds must be >= 2")
    per_user: dict[str, list[int]] = {}
    for idx, r in enumerate(table.records):
        per_user.setdefault(r.user, []).append(idx)
    for user, idxs in per_user.items():
        if len(idxs) < k_folds:
            raise ValueError(
                f"user {user!r} has only {len(idxs)} ratings; needs >= {k_folds} for a "
                f"{k_folds}-fold split"
            )

    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(table.records), dtype=np.int64)
    # users visited in dense-index order so the RNG stream is reproducible
    by_dense = sorted(per_user, key=lambda u: table.user_index[u])
    for user in by_dense:
        idxs = per_user[user]
        perm = rng.permutation(len(idxs))
        for pos, which in enumerate(perm):
            fold_of[idxs[which]] = pos % k_folds

    folds = []
    for f in range(k_folds):
        train_records = [r for idx, r in enumerate(table.records) if fold_of[idx] != f]
        test_records = [r for idx, r in enumerate(table.records) if fold_of[idx] == f]
        train = RatingsTable(tuple(train_records), table.user_index, table.item_index)
        test = RatingsTable(tuple(test_records), table.user_index, table.item_index)
        folds.append(FoldSplit(f, train, test))
    return folds


def reverse_index(index: dict[str, int]) -> dict[int, str]:
    """Dense id -> external id."""
    return {dense: ext for ext, dense in index.items()}


def share_index(primary: RatingsTable, secondary: RatingsTable) -> tuple[RatingsTable, RatingsTable]:
    """Rebuild two tables over one id universe (primary's ids first).

    Used when train/test tables are re-read from separate files and dense
    ids must line up again, as they do for freshly split folds.
    """
    user_index = dict(primary.user_index)
    item_index = dict(primary.item_index)
    for ext in secondary.user_index:
        if ext not in user_index:
            user_index[ext] = len(user_index)
    for ext in secondary.item_index:
        if ext not in item_index:
            item_index[ext] = len(item_index)
    return (
        RatingsTable(primary.records, user_index, item_index),
        RatingsTable(secondary.records, user_index, item_index),
    )


def write_canonical_csv(table: RatingsTable, path: str | Path) -> None:
    """Serialize as ``user_id,item_id,rating,timestamp`` sorted by (user_id, item_id)."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CANONICAL_HEADER)
        for r in sorted(table.records, key=lambda r: (r.user, r.item)):
            writer.writerow([r.user, r.item, r.value, "" if r.timestamp is None else r.timestamp])


def read_canonical_csv(path: str | Path) -> RatingsTable:
    """Inverse of :func:`write_canonical_csv`."""
    return parse_generic_csv(path, has_header=True)
