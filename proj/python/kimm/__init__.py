"""Python bindings for the kimm knowledge-infused multimodal pipeline."""

from ._core import (
    ConceptIndex,
    EmbeddingStore,
    IoError,
    KgeConfig,
    KnowledgeGraph,
    ValidationError,
    auc,
    classify_metrics,
    congruence_report,
    fusion_predict,
    read_checkpoint,
    read_store,
    run_command,
    synth_midpoint_pairs,
    train_kge,
    write_store,
)

__all__ = [
    "ConceptIndex",
    "EmbeddingStore",
    "IoError",
    "KgeConfig",
    "KnowledgeGraph",
    "ValidationError",
    "auc",
    "classify_metrics",
    "congruence_report",
    "fusion_predict",
    "read_checkpoint",
    "read_store",
    "run_command",
    "synth_midpoint_pairs",
    "train_kge",
    "write_store",
]
