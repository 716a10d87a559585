"""Ranking accuracy and popularity-bias metrics over recommendation logs.

A recommendation log maps each test user to their ordered top-k item list.
The suite reports:

* NDCG@k  - binary-relevance ranking accuracy against the fold's test set.
* ARP     - mean training popularity of recommended items (per list, then
            averaged over users).
* APLT    - mean fraction of each list that is long tail.
* ACLT    - mean count of long-tail items per list (equals APLT * k on
            uniform-length logs).
* long-tail coverage - fraction of the long-tail catalog recommended to at
            least one user.

User-level averages use exact summation, so all metrics are invariant to
the order users are visited in.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .ingest import RatingsTable

logger = logging.getLogger(__name__)

RecommendationLog = dict[int, list[int]]


@dataclass(frozen=True)
class MetricsReport:
    """One evaluation row's worth of metric values."""

    ndcg: float
    arp: float
    aplt: float
    aclt_literal: float
    lt_coverage: float
    n_users: int


def _check_log(log: RecommendationLog) -> None:
    if not log:
        raise ValueError("recommendation log is empty")


def arp(log: RecommendationLog, phi: dict[int, int]) -> float:
    """Average recommendation popularity; items unseen in training count 0."""
    _check_log(log)
    per_user = [sum(phi.get(i, 0) for i in items) / len(items) for items in log.values()]
    return math.fsum(per_user) / len(per_user)


def aplt(log: RecommendationLog, long_tail: frozenset[int] | set[int]) -> float:
    """Average percentage of long-tail items per recommended list."""
    _check_log(log)
    per_user = [sum(1 for i in items if i in long_tail) / len(items) for items in log.values()]
    return math.fsum(per_user) / len(per_user)


def aclt_literal(log: RecommendationLog, long_tail: frozenset[int] | set[int]) -> float:
    """Average count of long-tail items per recommended list."""
    _check_log(log)
    total = sum(sum(1 for i in items if i in long_tail) for items in log.values())
    return total / len(log)


def lt_coverage(log: RecommendationLog, long_tail: frozenset[int] | set[int]) -> float:
    """Fraction of the long-tail catalog exposed in at least one list."""
    if not long_tail:
        raise ValueError("long-tail item set is empty")
    _check_log(log)
    exposed: set[int] = set()
    for items in log.values():
        exposed.update(i for i in items if i in long_tail)
    return len(exposed) / len(long_tail)


def ndcg_at_k(log: RecommendationLog, test: RatingsTable, k: int) -> float:
    """Mean NDCG@k with binary relevance from the fold's test pairs.

    The ideal DCG for a user uses min(k, number of their test items)
    relevant positions. Users without test items are excluded from the mean
    (a count is logged); an all-excluded log is an error.
    """
    _check_log(log)
    if k < 1:
        raise ValueError("k must be >= 1")
    test_items: dict[int, set[int]] = {}
    for r in test.records:
        test_items.setdefault(test.user_index[r.user], set()).add(test.item_index[r.item])

    discounts = [1.0 / math.log2(rank + 1) for rank in range(1, k + 1)]
    values = []
    skipped = 0
    for user, items in log.items():
        relevant = test_items.get(user)
        if not relevant:
            skipped += 1
            continue
        dcg = math.fsum(
            discounts[rank] for rank, item in enumerate(items[:k]) if item in relevant
        )
        idcg = math.fsum(discounts[: min(k, len(relevant))])
        values.append(dcg / idcg)
    if skipped:
        logger.warning("ndcg: excluded %d users with no test ratings", skipped)
    if not values:
        raise ValueError("no log user has test ratings")
    return math.fsum(values) / len(values)


def evaluate_log(
    log: RecommendationLog,
    phi: dict[int, int],
    long_tail: frozenset[int] | set[int],
    test: RatingsTable,
    k: int,
) -> MetricsReport:
    """Run the full metric suite on one recommendation log."""
    return MetricsReport(
        ndcg=ndcg_at_k(log, test, k),
        arp=arp(log, phi),
        aplt=aplt(log, long_tail),
        aclt_literal=aclt_literal(log, long_tail),
        lt_coverage=lt_coverage(log, long_tail),
        n_users=len(log),
    )
