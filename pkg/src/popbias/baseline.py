"""Pairwise learning-to-rank matrix factorization and candidate generation.

The trainer is an alternating-least-squares ranker over implicit positives:
every training rating, regardless of value, should score one unit above the
catalog at large. The objective is the pairwise squared rank loss

    L = sum_u sum_{i in pos(u)} sum_{j in catalog} (x_u . (y_i - y_j) - 1)^2
        + reg * (|X|^2 + |Y|^2)

Each user row has a closed-form solve; items are updated one at a time
(Gauss-Seidel) with running sums kept exact, so the objective never
increases. Scores are dot products; per-user candidate lists are min-max
normalized so they can be mixed with probabilities downstream.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ingest import RatingsTable

logger = logging.getLogger(__name__)

_CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters: latent dimension, L2 weight, ALS sweeps, RNG seed."""

    factors: int = 10
    regularization: float = 0.01
    sweeps: int = 20
    seed: int = 42

    def __post_init__(self):
        if self.factors < 1:
            raise ValueError(f"latent dimension must be >= 1, got {self.factors}")
        if self.regularization < 0:
            raise ValueError("regularization must be >= 0")
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")


@dataclass
class FactorModel:
    """Learned user/item factor matrices plus the training objective trace."""

    user_factors: np.ndarray
    item_factors: np.ndarray
    config: TrainConfig
    objective: list[float] = field(default_factory=list)

    @property
    def n_users(self) -> int:
        return self.user_factors.shape[0]

    @property
    def n_items(self) -> int:
        return self.item_factors.shape[0]


@dataclass
class CandidateList:
    """Top-N items for one user, scores descending.

    ``norm_scores`` is filled by :func:`normalize_scores`; it preserves the
    raw order and lives in [0, 1].
    """

    user: int
    items: list[int]
    raw_scores: list[float]
    norm_scores: list[float] | None = None


def _solve(A: np.ndarray, b: np.ndarray, ridge: float) -> np.ndarray:
    """Solve A x = b, escalating the ridge if the system is singular."""
    try:
        return np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(len(b))
    boost = max(ridge, 1e-8)
    for _ in range(3):
        boost *= 10.0
        try:
            return np.linalg.solve(A + boost * eye, b)
        except np.linalg.LinAlgError:
            continue
    return np.linalg.lstsq(A, b, rcond=None)[0]


def _pair_loss(
    X: np.ndarray,
    Y: np.ndarray,
    uarr: np.ndarray,
    iarr: np.ndarray,
    n_arr: np.ndarray,
) -> float:
    """Exact pairwise squared rank loss, computed from sufficient statistics."""
    m = Y.shape[0]
    G = Y.T @ Y
    s_y = Y.sum(axis=0)
    sc = np.einsum("rf,rf->r", X[uarr], Y[iarr])
    suma = np.bincount(uarr, weights=sc, minlength=X.shape[0])
    suma2 = np.bincount(uarr, weights=sc * sc, minlength=X.shape[0])
    s1 = X @ s_y
    s2 = np.einsum("uf,fg,ug->u", X, G, X)
    per_user = m * suma2 - 2.0 * s1 * suma - 2.0 * m * suma + n_arr * (s2 + 2.0 * s1 + m)
    return float(per_user.sum())


def train(train_table: RatingsTable, config: TrainConfig = TrainConfig()) -> FactorModel:
    """Fit the ranker on a training table. Deterministic given the seed.

    Raises RuntimeError naming the sweep if factors go non-finite.
    """
    if train_table.n_ratings == 0:
        raise ValueError("training table is empty")
    n_users = train_table.n_users
    n_items = train_table.n_items
    if n_items < 2:
        raise ValueError("need at least 2 items to rank")
    f = config.factors
    reg = config.regularization
    m = n_items

    uarr, iarr = train_table.dense_pairs()
    n_arr = np.bincount(uarr, minlength=n_users).astype(np.float64)
    # per-user positive items and per-item rater lists, in record order
    order_u = np.argsort(uarr, kind="stable")
    pos_items = np.split(iarr[order_u], np.cumsum(np.bincount(uarr, minlength=n_users))[:-1])
    order_i = np.argsort(iarr, kind="stable")
    raters = np.split(uarr[order_i], np.cumsum(np.bincount(iarr, minlength=n_items))[:-1])

    rng = np.random.default_rng(config.seed)
    X = 0.1 * rng.standard_normal((n_users, f))
    Y = 0.1 * rng.standard_normal((n_items, f))
    eye = reg * np.eye(f)

    objective: list[float] = []
    for sweep in range(config.sweeps):
        # user step: rows are independent given Y
        G = Y.T @ Y
        s_y = Y.sum(axis=0)
        for u in range(n_users):
            Yp = Y[pos_items[u]]
            p = Yp.sum(axis=0)
            Q = Yp.T @ Yp
            n_u = len(pos_items[u])
            A = m * Q + n_u * G - np.outer(p, s_y) - np.outer(s_y, p) + eye
            b = m * p - n_u * s_y
            X[u] = _solve(A, b, reg)

        # item step: one exact coordinate solve per item, sums updated in place
        W = (X * n_arr[:, None]).T @ X
        p_mat = np.zeros((n_users, f))
        np.add.at(p_mat, uarr, Y[iarr])
        g = X.T @ (np.einsum("uf,uf->u", X, p_mat) - n_arr)
        s_y = Y.sum(axis=0)
        for i in range(n_items):
            Xi = X[raters[i]]
            C = Xi.T @ Xi
            cx = Xi.sum(axis=0)
            A = (m - 2.0) * C + W + eye
            b = C @ (s_y - 2.0 * Y[i]) + m * cx + g
            y_new = _solve(A, b, reg)
            delta = y_new - Y[i]
            s_y += delta
            g += C @ delta
            Y[i] = y_new

        if not (np.isfinite(X).all() and np.isfinite(Y).all()):
            raise RuntimeError(f"non-finite factors after sweep {sweep}")
        pair = _pair_loss(X, Y, uarr, iarr, n_arr)
        obj = pair + reg * (float((X * X).sum()) + float((Y * Y).sum()))
        objective.append(obj)
        logger.info("sweep %d: objective=%.6e pair_loss=%.6e", sweep, obj, pair)

    return FactorModel(X, Y, config, objective)


def top_n(model: FactorModel, user: int, n: int, exclude: set[int]) -> CandidateList:
    """Highest-scoring ``n`` catalog items for ``user``, skipping ``exclude``.

    Ties break toward the lower item id. Returns fewer than ``n`` items only
    when the eligible catalog is smaller.
    """
    if not 0 <= user < model.n_users:
        raise ValueError(f"unknown user {user}")
    if n < 1:
        raise ValueError("n must be >= 1")
    scores = model.item_factors @ model.user_factors[user]
    masked = scores.copy()
    excluded = [i for i in exclude if 0 <= i < model.n_items]
    masked[excluded] = -np.inf
    order = np.lexsort((np.arange(model.n_items), -masked))
    take = min(n, model.n_items - len(excluded))
    chosen = order[:take]
    return CandidateList(
        user=user,
        items=[int(i) for i in chosen],
        raw_scores=[float(scores[i]) for i in chosen],
    )


def normalize_scores(candidates: CandidateList) -> CandidateList:
    """Min-max normalize raw scores within the list; constant lists map to 1."""
    if not candidates.items:
        raise ValueError("candidate list is empty")
    raw = candidates.raw_scores
    lo, hi = min(raw), max(raw)
    if hi == lo:
        norm = [1.0] * len(raw)
    else:
        span = hi - lo
        norm = [(s - lo) / span for s in raw]
    return CandidateList(candidates.user, list(candidates.items), list(raw), norm)


def save_model(model: FactorModel, path: str | Path) -> None:
    """Checkpoint: versioned binary dump of dimensions and factor matrices."""
    np.savez(
        Path(path),
        format_version=np.int64(_CHECKPOINT_VERSION),
        user_factors=model.user_factors,
        item_factors=model.item_factors,
        factors=np.int64(model.config.factors),
        regularization=np.float64(model.config.regularization),
        sweeps=np.int64(model.config.sweeps),
        seed=np.int64(model.config.seed),
        objective=np.asarray(model.objective, dtype=np.float64),
    )


def load_model(path: str | Path) -> FactorModel:
    with np.load(Path(path)) as data:
        version = int(data["format_version"])
        if version != _CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        config = TrainConfig(
            factors=int(data["factors"]),
            regularization=float(data["regularization"]),
            sweeps=int(data["sweeps"]),
            seed=int(data["seed"]),
        )
        return FactorModel(
            user_factors=data["user_factors"],
            item_factors=data["item_factors"],
            config=config,
            objective=[float(v) for v in data["objective"]],
        )


def write_candidates_csv(
    lists: list[CandidateList],
    id_of_user: dict[int, str],
    id_of_item: dict[int, str],
    path: str | Path,
) -> None:
    """Export ``user_id,rank,item_id,raw_score,norm_score`` rows."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "rank", "item_id", "raw_score", "norm_score"])
        for cl in lists:
            if cl.norm_scores is None:
                raise ValueError(f"candidate list for user {cl.user} is not normalized")
            for rank, (item, raw, norm) in enumerate(
                zip(cl.items, cl.raw_scores, cl.norm_scores), start=1
            ):
                writer.writerow([id_of_user[cl.user], rank, id_of_item[item], raw, norm])


def read_candidates_csv(
    path: str | Path,
    user_index: dict[str, int],
    item_index: dict[str, int],
) -> list[CandidateList]:
    """Inverse of :func:`write_candidates_csv`; rows must be rank-ordered per user."""
    lists: dict[int, CandidateList] = {}
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            user = user_index[row["user_id"]]
            cl = lists.get(user)
            if cl is None:
                cl = CandidateList(user, [], [], [])
                lists[user] = cl
            cl.items.append(item_index[row["item_id"]])
            cl.raw_scores.append(float(row["raw_score"]))
            cl.norm_scores.append(float(row["norm_score"]))
    return list(lists.values())
