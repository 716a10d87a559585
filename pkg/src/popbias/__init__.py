"""Popularity-bias management for top-N recommenders.

Pipeline pieces: rating ingestion and cross-validation folds, short-head /
long-tail catalog partitioning, a pairwise learning-to-rank MF baseline,
personalized xQuAD re-ranking (Binary and Smooth), and a popularity-bias
metric suite (NDCG@k, ARP, APLT, ACLT, long-tail coverage).
"""

from .baseline import (
    CandidateList,
    FactorModel,
    TrainConfig,
    load_model,
    normalize_scores,
    save_model,
    top_n,
    train,
)
from .experiment import (
    ExperimentConfig,
    MetricRow,
    aggregate,
    default_lambda_grid,
    run_and_write,
    run_experiment,
)
from .ingest import (
    FoldSplit,
    RatingRecord,
    RatingsTable,
    filter_table,
    kfold_split,
    parse_generic_csv,
    parse_movielens,
    read_canonical_csv,
    write_canonical_csv,
)
from .metrics import (
    MetricsReport,
    aclt_literal,
    aplt,
    arp,
    evaluate_log,
    lt_coverage,
    ndcg_at_k,
)
from .popularity import (
    LONG_TAIL,
    SHORT_HEAD,
    PopularityPartition,
    UserPropensity,
    item_popularity,
    partition_items,
    user_propensity,
)
from .rerank import (
    BINARY,
    SMOOTH,
    RerankConfig,
    RerankState,
    category_of,
    coverage_factor,
    rerank,
    rerank_trace,
    xquad_score,
)

__version__ = "0.1.0"
