"""Command-line interface.

Subcommands mirror the pipeline stages and share one workspace directory:

* ``prep``   parse + filter + split; writes canonical CSVs under ``--out``.
* ``train``  fit the ranker per fold; writes model checkpoints + candidates.
* ``rerank`` re-rank stored candidates for every (variant, lambda).
* ``eval``   score stored lists; writes ``results.csv``.
* ``run``    the whole pipeline in memory; writes results + manifest.

Every flag can also come from a flat YAML config file (``--config``), keyed
by the flag names; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import yaml

from . import baseline, experiment, ingest, popularity, rerank
from .experiment import ExperimentConfig

logger = logging.getLogger(__name__)

# flag name -> (config field, value parser)
_FLAGS: dict[str, tuple[str, type]] = {
    "dataset": ("dataset", str),
    "format": ("format", str),
    "min-user-ratings": ("min_user_ratings", int),
    "min-item-ratings": ("min_item_ratings", int),
    "head-ratio": ("head_ratio", float),
    "folds": ("k_folds", int),
    "seed": ("seed", int),
    "lambdas": ("lambda_values", str),
    "variants": ("variants", str),
    "candidates": ("candidate_depth", int),
    "topk": ("k", int),
    "out": ("out_dir", str),
    "factors": ("factors", int),
    "regularization": ("regularization", float),
    "sweeps": ("sweeps", int),
}


def _add_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None,
                        help="flat YAML key-value file; keys match the flag names")
    parser.add_argument("--dataset", type=str, default=None, help="path to the ratings file")
    parser.add_argument("--format", type=str, default=None, choices=("movielens", "csv"),
                        help="input format (default movielens)")
    parser.add_argument("--min-user-ratings", type=int, default=None)
    parser.add_argument("--min-item-ratings", type=int, default=None)
    parser.add_argument("--head-ratio", type=float, default=None)
    parser.add_argument("--folds", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--lambdas", type=str, default=None,
                        help="comma list of trade-off weights, e.g. 0.0,0.2,0.8")
    parser.add_argument("--variants", type=str, default=None,
                        help="comma subset of {binary,smooth}")
    parser.add_argument("--candidates", type=int, default=None,
                        help="candidate list depth fed to the re-ranker")
    parser.add_argument("--topk", type=int, default=None, help="final list length")
    parser.add_argument("--out", type=str, default=None, help="workspace/output directory")
    parser.add_argument("--factors", type=int, default=None)
    parser.add_argument("--regularization", type=float, default=None)
    parser.add_argument("--sweeps", type=int, default=None)


def _parse_lambdas(value) -> tuple[float, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(float(v) for v in value)
    return tuple(float(part) for part in str(value).split(",") if part.strip() != "")


def _parse_variants(value) -> tuple[str, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(str(v) for v in value)
    return tuple(part.strip() for part in str(value).split(",") if part.strip() != "")


def build_config(args: argparse.Namespace, *, need_dataset: bool) -> ExperimentConfig:
    """Merge defaults < config file < explicit flags into an ExperimentConfig."""
    file_values: dict[str, object] = {}
    if args.config:
        raw = yaml.safe_load(Path(args.config).read_text(encoding="utf-8")) or {}
        if not isinstance(raw, dict):
            raise SystemExit(f"config file {args.config} must be a flat mapping")
        for key, value in raw.items():
            norm = str(key).replace("_", "-")
            if norm not in _FLAGS:
                raise SystemExit(f"unknown config key {key!r}")
            file_values[_FLAGS[norm][0]] = value

    merged: dict[str, object] = dict(file_values)
    for flag, (field_name, _) in _FLAGS.items():
        cli_value = getattr(args, flag.replace("-", "_"))
        if cli_value is not None:
            merged[field_name] = cli_value

    if "lambda_values" in merged:
        merged["lambda_values"] = _parse_lambdas(merged["lambda_values"])
    if "variants" in merged:
        merged["variants"] = _parse_variants(merged["variants"])
    for field_name in ("min_user_ratings", "min_item_ratings", "k_folds", "seed",
                       "factors", "sweeps", "candidate_depth", "k"):
        if field_name in merged:
            merged[field_name] = int(merged[field_name])
    for field_name in ("head_ratio", "regularization"):
        if field_name in merged:
            merged[field_name] = float(merged[field_name])

    if need_dataset and not merged.get("dataset"):
        raise SystemExit("--dataset is required for this command")
    if not merged.get("out_dir"):
        raise SystemExit("--out is required")
    merged.setdefault("dataset", "")

    valid = {f.name for f in fields(ExperimentConfig)}
    assert set(merged) <= valid
    return ExperimentConfig(**merged)


def _folds_dir(config: ExperimentConfig) -> Path:
    return Path(config.out_dir) / "folds"


def _load_fold(config: ExperimentConfig, fold_id: int) -> tuple[ingest.RatingsTable, ingest.RatingsTable]:
    folds = _folds_dir(config)
    train = ingest.read_canonical_csv(folds / f"fold{fold_id}.train.csv")
    test = ingest.read_canonical_csv(folds / f"fold{fold_id}.test.csv")
    return ingest.share_index(train, test)


def _dataset_name(config: ExperimentConfig) -> str:
    prep_path = Path(config.out_dir) / "prep.json"
    if prep_path.exists():
        return json.loads(prep_path.read_text(encoding="utf-8"))["dataset_name"]
    return Path(config.dataset).name


def cmd_prep(config: ExperimentConfig) -> None:
    out = Path(config.out_dir)
    folds_dir = _folds_dir(config)
    folds_dir.mkdir(parents=True, exist_ok=True)

    raw = experiment.load_ratings(config.dataset, config.format)
    filtered = ingest.filter_table(raw, config.min_user_ratings, config.min_item_ratings)
    ingest.write_canonical_csv(filtered, out / "filtered.csv")
    folds = ingest.kfold_split(filtered, config.k_folds, config.seed)
    for fold in folds:
        ingest.write_canonical_csv(fold.train, folds_dir / f"fold{fold.fold_id}.train.csv")
        ingest.write_canonical_csv(fold.test, folds_dir / f"fold{fold.fold_id}.test.csv")

    prep_info = {
        "dataset_name": Path(config.dataset).name,
        "raw": {"users": raw.n_users, "items": raw.n_items, "ratings": raw.n_ratings},
        "filtered": {"users": filtered.n_users, "items": filtered.n_items,
                     "ratings": filtered.n_ratings},
        "k_folds": config.k_folds,
        "seed": config.seed,
    }
    (out / "prep.json").write_text(json.dumps(prep_info, indent=2) + "\n", encoding="utf-8")
    print(f"prep: {filtered.n_users} users, {filtered.n_items} items, "
          f"{filtered.n_ratings} ratings -> {out}")


def cmd_train(config: ExperimentConfig) -> None:
    folds_dir = _folds_dir(config)
    for fold_id in range(config.k_folds):
        train_t, test_t = _load_fold(config, fold_id)
        model = baseline.train(train_t, config.train_config(fold_id))
        baseline.save_model(model, folds_dir / f"fold{fold_id}.model.npz")

        profiles = train_t.user_profiles()
        test_users = sorted({test_t.user_index[r.user] for r in test_t.records})
        lists = []
        for u in test_users:
            cl = baseline.top_n(model, u, config.candidate_depth, profiles[u])
            lists.append(baseline.normalize_scores(cl))
        baseline.write_candidates_csv(
            lists,
            ingest.reverse_index(train_t.user_index),
            ingest.reverse_index(train_t.item_index),
            folds_dir / f"fold{fold_id}.candidates.csv",
        )
        print(f"train: fold {fold_id} done ({len(test_users)} candidate lists)")


def cmd_rerank(config: ExperimentConfig) -> None:
    folds_dir = _folds_dir(config)
    for fold_id in range(config.k_folds):
        train_t, _ = _load_fold(config, fold_id)
        phi = popularity.item_popularity(train_t)
        partition = popularity.partition_items(phi, config.head_ratio)
        profiles = train_t.user_profiles()
        candidates = baseline.read_candidates_csv(
            folds_dir / f"fold{fold_id}.candidates.csv",
            train_t.user_index, train_t.item_index,
        )
        id_of_user = ingest.reverse_index(train_t.user_index)
        id_of_item = ingest.reverse_index(train_t.item_index)
        for variant in config.variants:
            for lam in config.lambda_values:
                rcfg = rerank.RerankConfig(lam=lam, variant=variant, k=config.k,
                                           candidate_depth=config.candidate_depth)
                traces = {}
                for cl in candidates:
                    prop = popularity.user_propensity(profiles[cl.user], partition)
                    traces[cl.user] = rerank.rerank_trace(cl, partition, prop, rcfg)
                rerank.write_reranked_csv(
                    traces, id_of_user, id_of_item,
                    folds_dir / f"fold{fold_id}.rerank.{variant}.{lam}.csv",
                )
        print(f"rerank: fold {fold_id} done")


def cmd_eval(config: ExperimentConfig) -> None:
    from . import metrics

    folds_dir = _folds_dir(config)
    dataset_name = _dataset_name(config)
    rows: list[experiment.MetricRow] = []
    for fold_id in range(config.k_folds):
        train_t, test_t = _load_fold(config, fold_id)
        phi = popularity.item_popularity(train_t)
        partition = popularity.partition_items(phi, config.head_ratio)
        candidates = baseline.read_candidates_csv(
            folds_dir / f"fold{fold_id}.candidates.csv",
            train_t.user_index, train_t.item_index,
        )
        baseline_log = {cl.user: cl.items[: config.k] for cl in candidates}
        rows.append(experiment.MetricRow(
            dataset_name, fold_id, experiment.BASELINE_VARIANT, 0.0,
            metrics.evaluate_log(baseline_log, phi, partition.long_tail, test_t, config.k),
        ))
        for variant in config.variants:
            for lam in config.lambda_values:
                log = rerank.read_reranked_csv(
                    folds_dir / f"fold{fold_id}.rerank.{variant}.{lam}.csv",
                    train_t.user_index, train_t.item_index,
                )
                rows.append(experiment.MetricRow(
                    dataset_name, fold_id, variant, lam,
                    metrics.evaluate_log(log, phi, partition.long_tail, test_t, config.k),
                ))
    rows = rows + experiment.aggregate(rows, config.k_folds)
    out_path = Path(config.out_dir) / "results.csv"
    experiment.write_results_csv(rows, out_path)
    print(f"eval: wrote {out_path}")


def cmd_run(config: ExperimentConfig) -> None:
    rows, _ = experiment.run_and_write(config)
    means = [r for r in rows if r.fold == "mean"]
    for row in sorted(means, key=experiment._row_sort_key):
        print(f"{row.variant:>8} lambda={row.lam:<4} ndcg={row.report.ndcg:.4f} "
              f"aplt={row.report.aplt:.4f} lt_coverage={row.report.lt_coverage:.4f}")


_COMMANDS = {
    "prep": (cmd_prep, True),
    "train": (cmd_train, False),
    "rerank": (cmd_rerank, False),
    "eval": (cmd_eval, False),
    "run": (cmd_run, True),
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="popbias",
        description="Long-tail promotion for top-N recommenders: xQuAD re-ranking "
                    "over a pairwise-ranking MF baseline, with bias metrics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("prep", "parse, filter, and split the dataset into fold CSVs"),
        ("train", "train the baseline per fold and emit candidate lists"),
        ("rerank", "re-rank stored candidates for every variant and lambda"),
        ("eval", "compute metrics from stored lists and write results.csv"),
        ("run", "end-to-end pipeline; writes results.csv and manifest.json"),
    ):
        _add_flags(sub.add_parser(name, help=help_text))

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    handler, need_dataset = _COMMANDS[args.command]
    config = build_config(args, need_dataset=need_dataset)
    handler(config)
    return 0


if __name__ == "__main__":
    sys.exit(main())
