"""Item popularity counts, short-head/long-tail partition, and user propensity.

Popularity of an item is the number of times it was rated in the training
records. Sorting the catalog by popularity and cutting at the point where
the cumulative count first reaches a target share (default 80%) splits it
into a short head and a long tail. A user's propensity toward each side is
the fraction of their training profile falling in it.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .ingest import RatingsTable

SHORT_HEAD = "short_head"
LONG_TAIL = "long_tail"


@dataclass(frozen=True)
class PopularityPartition:
    """Disjoint short-head / long-tail cover of the items seen in training.

    ``threshold`` is the minimum popularity among short-head items; every
    short-head item is at least as popular as every long-tail item.
    """

    phi: dict[int, int]
    short_head: frozenset[int]
    long_tail: frozenset[int]
    head_ratio: float
    threshold: int


@dataclass(frozen=True)
class UserPropensity:
    """P(long tail | user) and its exact complement P(short head | user)."""

    p_long_tail: float
    p_short_head: float


def item_popularity(train: RatingsTable) -> dict[int, int]:
    """Rating count per dense item id, over training records only.

    Items without training records are absent from the map (callers treat
    them as popularity 0, i.e. long tail).
    """
    counts = Counter(train.item_index[r.item] for r in train.records)
    return dict(counts)


def partition_items(phi: dict[int, int], head_ratio: float) -> PopularityPartition:
    """Cut the popularity-sorted catalog at the ``head_ratio`` cumulative share.

    Items are sorted by count descending (ties by ascending dense id) and the
    shortest prefix whose cumulative count reaches ``head_ratio`` of the total
    becomes the short head; minimality of that prefix is guaranteed by
    construction.
    """
    if not phi:
        raise ValueError("popularity map is empty")
    if not 0.0 < head_ratio < 1.0:
        raise ValueError(f"head_ratio must be in (0, 1), got {head_ratio}")
    ranked = sorted(phi, key=lambda i: (-phi[i], i))
    total = sum(phi.values())
    target = head_ratio * total
    head: list[int] = []
    cum = 0
    for item in ranked:
        head.append(item)
        cum += phi[item]
        if cum >= target:
            break
    short_head = frozenset(head)
    long_tail = frozenset(i for i in phi if i not in short_head)
    threshold = min(phi[i] for i in short_head)
    return PopularityPartition(dict(phi), short_head, long_tail, head_ratio, threshold)


def user_propensity(user_profile: set[int], partition: PopularityPartition) -> UserPropensity:
    """Fraction of the profile in the long tail; complement for the short head.

    Profile items absent from the partition (unseen in training) are excluded
    from both numerator and denominator.
    """
    if not user_profile:
        raise ValueError("user profile is empty")
    eligible = [i for i in user_profile if i in partition.phi]
    if not eligible:
        raise ValueError("user profile has no items seen in training")
    n_long = sum(1 for i in eligible if i in partition.long_tail)
    p_long = n_long / len(eligible)
    return UserPropensity(p_long_tail=p_long, p_short_head=1.0 - p_long)


def write_partition_csv(
    partition: PopularityPartition,
    id_of: dict[int, str],
    path: str | Path,
) -> None:
    """Audit export: ``item_id,phi,category`` sorted by count desc, id asc."""
    ranked = sorted(partition.phi, key=lambda i: (-partition.phi[i], i))
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["item_id", "phi", "category"])
        for item in ranked:
            category = SHORT_HEAD if item in partition.short_head else LONG_TAIL
            writer.writerow([id_of[item], partition.phi[item], category])
