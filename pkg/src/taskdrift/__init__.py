"""Online task identification for domain-incremental embedding streams.

The engine ingests batches of unit-norm embeddings, detects distribution
drift against remembered task signatures, assigns task ids without labels,
and routes inference through a per-task head registry.
"""

from .clustering import ClusterParams, cluster_embeddings
from .domain import (
    ClusterAssignment,
    DecisionKind,
    DriftVerdict,
    EmbeddingBatch,
    EngineError,
    MismatchWarning,
    OnlineDecision,
    TaskMemory,
    TaskSignature,
    normalize_batch,
)
from .drift import DriftParams, calibrate_threshold, drift_check, median_bandwidth, mmd_statistic
from .emb_io import (
    read_embedding_file,
    restore_state,
    snapshot_state,
    write_embedding_file,
)
from .orchestrator import EngineConfig, HeadRegistry, LinearHead, Orchestrator
from .signature import build_signature, compute_centroids, nearest_neighbors
from .synth import (
    RecallReport,
    Scenario,
    ScenarioReport,
    SyntheticTaskSpec,
    drift_confusion_matrix,
    generate_batch,
    orthogonal_task_specs,
    recall_report,
    replay_batches,
    run_scenario,
)
from .task_classifier import TaskClassifier

__version__ = "0.1.0"

__all__ = [
    "ClusterAssignment",
    "ClusterParams",
    "DecisionKind",
    "DriftParams",
    "DriftVerdict",
    "EmbeddingBatch",
    "EngineConfig",
    "EngineError",
    "HeadRegistry",
    "LinearHead",
    "MismatchWarning",
    "OnlineDecision",
    "Orchestrator",
    "RecallReport",
    "Scenario",
    "ScenarioReport",
    "SyntheticTaskSpec",
    "TaskClassifier",
    "TaskMemory",
    "TaskSignature",
    "build_signature",
    "calibrate_threshold",
    "cluster_embeddings",
    "compute_centroids",
    "drift_check",
    "drift_confusion_matrix",
    "generate_batch",
    "median_bandwidth",
    "mmd_statistic",
    "nearest_neighbors",
    "normalize_batch",
    "orthogonal_task_specs",
    "read_embedding_file",
    "recall_report",
    "replay_batches",
    "restore_state",
    "run_scenario",
    "snapshot_state",
    "write_embedding_file",
]
