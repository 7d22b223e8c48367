"""Composed image retrieval by late fusion of refined similarities."""

from ._cirfuse import (
    CalibrationStats,
    CirfuseError,
    EmbeddingSet,
    ProjectionOperator,
    ScoredItem,
    average_precision,
    build_projection,
    compute_mean,
    compute_min_stats,
    expand_query,
    fuse,
    harris_fuse,
    load_embedding_set,
    load_projection,
    load_stats,
    map_at_k,
    min_normalize,
    project,
    rank,
    recall_at_k,
    run_cli,
    save_embedding_set,
    save_projection,
    save_stats,
)

__all__ = [
    "CalibrationStats",
    "CirfuseError",
    "EmbeddingSet",
    "ProjectionOperator",
    "ScoredItem",
    "average_precision",
    "build_projection",
    "compute_mean",
    "compute_min_stats",
    "expand_query",
    "fuse",
    "harris_fuse",
    "load_embedding_set",
    "load_projection",
    "load_stats",
    "map_at_k",
    "min_normalize",
    "project",
    "rank",
    "recall_at_k",
    "run_cli",
    "save_embedding_set",
    "save_projection",
    "save_stats",
]
