"""End-to-end orchestration: lambda sweeps over cross-validated folds.

For every fold the pipeline is: filter -> popularity partition -> train the
pairwise ranker -> top-N candidates per test user -> re-rank to top-k for
each (variant, lambda) -> metric suite. Per-fold rows and cross-fold means
are emitted as CSV, alongside a JSON run manifest (config snapshot, stage
timings, dataset counts, per-fold partition thresholds). Outputs are fully
determined by the config and seed; all orderings come from sort keys, never
from scheduling.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import baseline, ingest, metrics, popularity, rerank

logger = logging.getLogger(__name__)

RESULT_COLUMNS = [
    "dataset", "fold", "variant", "lambda",
    "ndcg", "arp", "aplt", "aclt_literal", "lt_coverage", "n_users",
]

BASELINE_VARIANT = "baseline"


class PipelineError(RuntimeError):
    """A pipeline stage failed; the message names the stage and fold."""


@contextmanager
def _stage(name: str, fold: int | None = None):
    where = name if fold is None else f"{name} (fold {fold})"
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(f"stage {where!r} failed: {exc}") from exc


def default_lambda_grid() -> list[float]:
    """Eleven evenly spaced weights from 0.0 to 1.0 inclusive."""
    return [i / 10 for i in range(11)]


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; defaults follow the evaluation protocol."""

    dataset: str
    out_dir: str
    format: str = "movielens"
    min_user_ratings: int = 20
    min_item_ratings: int = 20
    head_ratio: float = 0.8
    k_folds: int = 5
    seed: int = 42
    factors: int = 10
    regularization: float = 0.01
    sweeps: int = 20
    candidate_depth: int = 100
    k: int = 10
    lambda_values: tuple[float, ...] = field(default_factory=lambda: tuple(default_lambda_grid()))
    variants: tuple[str, ...] = rerank.VARIANTS

    def __post_init__(self):
        if self.format not in ("movielens", "csv"):
            raise ValueError(f"format must be 'movielens' or 'csv', got {self.format!r}")
        if not self.lambda_values:
            raise ValueError("need at least one lambda value")
        for lam in self.lambda_values:
            if not 0.0 <= lam <= 1.0:
                raise ValueError(f"lambda {lam} outside [0, 1]")
        if not self.variants:
            raise ValueError("need at least one variant")
        for v in self.variants:
            if v not in rerank.VARIANTS:
                raise ValueError(f"unknown variant {v!r}")
        if not 1 <= self.k <= self.candidate_depth:
            raise ValueError("need 1 <= topk <= candidates")
        if not 0.0 < self.head_ratio < 1.0:
            raise ValueError("head-ratio must be in (0, 1)")

    def train_config(self, fold_id: int) -> baseline.TrainConfig:
        # per-fold seed offset keeps folds deterministic but independent
        return baseline.TrainConfig(
            factors=self.factors,
            regularization=self.regularization,
            sweeps=self.sweeps,
            seed=self.seed + fold_id,
        )


@dataclass(frozen=True)
class MetricRow:
    """One results-CSV row; ``fold`` is an integer or the string "mean"."""

    dataset: str
    fold: int | str
    variant: str
    lam: float
    report: metrics.MetricsReport

    def as_csv_row(self) -> list[str]:
        r = self.report
        return [
            self.dataset, str(self.fold), self.variant, str(self.lam),
            str(r.ndcg), str(r.arp), str(r.aplt), str(r.aclt_literal),
            str(r.lt_coverage), str(r.n_users),
        ]


def load_ratings(path: str | Path, fmt: str) -> ingest.RatingsTable:
    """Parse per declared format; CSV header is sniffed from the first row.

    CSV ingestion keeps the last of any duplicate (user, item) pair (raw
    opinion-site dumps contain re-reviews); the MovieLens format treats
    duplicates as corruption.
    """
    if fmt == "movielens":
        return ingest.parse_movielens(path)
    has_header = False
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        first = next(csv.reader(fh), None)
    if first is not None and len(first) >= 3:
        try:
            float(first[2])
        except ValueError:
            has_header = True
    return ingest.parse_generic_csv(path, has_header=has_header, on_duplicate="keep_last")


def _fold_rows(
    config: ExperimentConfig,
    dataset_name: str,
    fold: ingest.FoldSplit,
    fold_info: dict,
) -> list[MetricRow]:
    """All metric rows for one fold: baseline plus every (variant, lambda)."""
    with _stage("popularity", fold.fold_id):
        phi = popularity.item_popularity(fold.train)
        partition = popularity.partition_items(phi, config.head_ratio)
        fold_info["partition_threshold"] = partition.threshold
        fold_info["short_head_items"] = len(partition.short_head)

    with _stage("train", fold.fold_id):
        model = baseline.train(fold.train, config.train_config(fold.fold_id))

    with _stage("candidates", fold.fold_id):
        profiles = fold.train.user_profiles()
        test_users = sorted({fold.test.user_index[r.user] for r in fold.test.records})
        candidates: dict[int, baseline.CandidateList] = {}
        propensities: dict[int, popularity.UserPropensity] = {}
        for u in test_users:
            cl = baseline.top_n(model, u, config.candidate_depth, profiles[u])
            candidates[u] = baseline.normalize_scores(cl)
            propensities[u] = popularity.user_propensity(profiles[u], partition)

    rows = []
    with _stage("evaluate", fold.fold_id):
        baseline_log = {u: candidates[u].items[: config.k] for u in test_users}
        rows.append(MetricRow(
            dataset_name, fold.fold_id, BASELINE_VARIANT, 0.0,
            metrics.evaluate_log(baseline_log, phi, partition.long_tail, fold.test, config.k),
        ))
        for variant in config.variants:
            for lam in config.lambda_values:
                rcfg = rerank.RerankConfig(
                    lam=lam, variant=variant, k=config.k,
                    candidate_depth=config.candidate_depth,
                )
                log = {
                    u: rerank.rerank(candidates[u], partition, propensities[u], rcfg)
                    for u in test_users
                }
                rows.append(MetricRow(
                    dataset_name, fold.fold_id, variant, lam,
                    metrics.evaluate_log(log, phi, partition.long_tail, fold.test, config.k),
                ))
    return rows


def aggregate(rows: list[MetricRow], k_folds: int) -> list[MetricRow]:
    """Cross-fold arithmetic means, one "mean" row per (dataset, variant, lambda)."""
    groups: dict[tuple[str, str, float], dict[int, MetricRow]] = {}
    for row in rows:
        if not isinstance(row.fold, int):
            raise ValueError("aggregate expects per-fold rows only")
        groups.setdefault((row.dataset, row.variant, row.lam), {})[row.fold] = row
    out = []
    expected = set(range(k_folds))
    for (dataset, variant, lam), by_fold in sorted(groups.items()):
        missing = expected - set(by_fold)
        if missing:
            raise ValueError(
                f"missing folds {sorted(missing)} for variant={variant} lambda={lam}"
            )
        reports = [by_fold[f].report for f in sorted(by_fold)]
        n = len(reports)
        mean = metrics.MetricsReport(
            ndcg=math.fsum(r.ndcg for r in reports) / n,
            arp=math.fsum(r.arp for r in reports) / n,
            aplt=math.fsum(r.aplt for r in reports) / n,
            aclt_literal=math.fsum(r.aclt_literal for r in reports) / n,
            lt_coverage=math.fsum(r.lt_coverage for r in reports) / n,
            n_users=round(math.fsum(r.n_users for r in reports) / n),
        )
        out.append(MetricRow(dataset, "mean", variant, lam, mean))
    return out


def _row_sort_key(row: MetricRow):
    is_mean = 1 if row.fold == "mean" else 0
    fold = -1 if is_mean else int(row.fold)
    return (row.dataset, row.variant, row.lam, is_mean, fold)


def write_results_csv(rows: list[MetricRow], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for row in sorted(rows, key=_row_sort_key):
            writer.writerow(row.as_csv_row())


def run_experiment(config: ExperimentConfig) -> tuple[list[MetricRow], dict]:
    """Execute the full pipeline in memory; returns all rows plus the manifest."""
    t_start = time.perf_counter()
    timings: dict[str, float] = {}
    manifest: dict = {
        "tool_version": _tool_version(),
        "completed": False,
        "config": _config_snapshot(config),
        "timings_seconds": timings,
    }

    dataset_name = Path(config.dataset).name
    t0 = time.perf_counter()
    with _stage("parse"):
        raw = load_ratings(config.dataset, config.format)
    timings["parse"] = time.perf_counter() - t0
    manifest["raw_counts"] = _counts(raw)

    t0 = time.perf_counter()
    with _stage("filter"):
        filtered = ingest.filter_table(
            raw, config.min_user_ratings, config.min_item_ratings
        )
    timings["filter"] = time.perf_counter() - t0
    manifest["filtered_counts"] = _counts(filtered)
    logger.info(
        "filtered %s: %d users, %d items, %d ratings",
        dataset_name, filtered.n_users, filtered.n_items, filtered.n_ratings,
    )

    t0 = time.perf_counter()
    with _stage("split"):
        folds = ingest.kfold_split(filtered, config.k_folds, config.seed)
    timings["split"] = time.perf_counter() - t0

    fold_rows: list[MetricRow] = []
    manifest["folds"] = []
    for fold in folds:
        fold_info: dict = {
            "fold": fold.fold_id,
            "train_ratings": fold.train.n_ratings,
            "test_ratings": fold.test.n_ratings,
        }
        t0 = time.perf_counter()
        fold_rows.extend(_fold_rows(config, dataset_name, fold, fold_info))
        fold_info["seconds"] = time.perf_counter() - t0
        manifest["folds"].append(fold_info)

    mean_rows = aggregate(fold_rows, config.k_folds)
    timings["total"] = time.perf_counter() - t_start
    manifest["completed"] = True
    return fold_rows + mean_rows, manifest


def run_and_write(config: ExperimentConfig) -> tuple[list[MetricRow], dict]:
    """Run end-to-end and write ``results.csv`` + ``manifest.json`` to out_dir."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        rows, manifest = run_experiment(config)
    except Exception as exc:
        manifest = {
            "tool_version": _tool_version(),
            "completed": False,
            "error": str(exc),
            "config": _config_snapshot(config),
        }
        _write_json(manifest, out / "manifest.json")
        raise
    write_results_csv(rows, out / "results.csv")
    _write_json(manifest, out / "manifest.json")
    logger.info("wrote %s and %s", out / "results.csv", out / "manifest.json")
    return rows, manifest


def _counts(table: ingest.RatingsTable) -> dict:
    return {"users": table.n_users, "items": table.n_items, "ratings": table.n_ratings}


def _config_snapshot(config: ExperimentConfig) -> dict:
    snap = asdict(config)
    snap["lambda_values"] = list(config.lambda_values)
    snap["variants"] = list(config.variants)
    return snap


def _write_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _tool_version() -> str:
    from . import __version__

    return __version__
