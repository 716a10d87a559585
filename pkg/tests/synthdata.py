"""Deterministic desk-scale synthetic ratings with a planted long tail.

Item popularity follows a Zipf(1.0) profile and users carry one of four
taste clusters, so the factorization baseline has real signal while the
rating mass still concentrates on a short head of items.
"""

from __future__ import annotations

import numpy as np

from popbias.ingest import RatingRecord, RatingsTable


def synthetic_table(
    n_users: int = 200,
    n_items: int = 400,
    seed: int = 7,
    n_clusters: int = 4,
    min_profile: int = 20,
    max_profile: int = 40,
) -> RatingsTable:
    rng = np.random.default_rng(seed)
    weights = np.arange(1, n_items + 1) ** -1.0
    item_cluster = np.arange(n_items) % n_clusters
    records = []
    for u in range(n_users):
        cluster = u % n_clusters
        probs = weights * np.where(item_cluster == cluster, 3.0, 1.0)
        probs /= probs.sum()
        n_u = int(rng.integers(min_profile, max_profile + 1))
        items = rng.choice(n_items, size=n_u, replace=False, p=probs)
        for i in items:
            value = 5.0 if item_cluster[i] == cluster else float(rng.integers(2, 5))
            records.append(RatingRecord(f"u{u:03d}", f"i{i:03d}", value))
    return RatingsTable.from_records(records)
