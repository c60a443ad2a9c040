"""Core data types shared by the whole engine.

Everything downstream (clustering, drift detection, task classification,
orchestration) operates on the types defined here. All of them are immutable
after construction and safe to share read-only across workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

DEFAULT_DIM = 512
UNIT_NORM_TOL = 1e-6
ZERO_NORM_TOL = 1e-12


class EngineError(Exception):
    """Base class for every error raised by this package."""


class ZeroVectorError(EngineError):
    """A row has (near-)zero Euclidean norm and cannot be normalized."""


class NonFiniteError(EngineError):
    """Input contains NaN or infinite entries."""


class DimensionMismatchError(EngineError):
    """Vector dimensionality disagrees with the expected embedding size."""


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class EmbeddingBatch:
    """One batch of unit-norm embedding vectors arriving at a time step.

    ``true_task`` is evaluation-only ground truth; the online decision path
    never reads it.
    """

    batch_id: int
    vectors: np.ndarray  # m x dim, rows unit-norm
    true_task: Optional[int] = None

    def __post_init__(self) -> None:
        v = self.vectors
        if v.ndim != 2 or v.shape[0] < 1:
            raise DimensionMismatchError(
                f"batch {self.batch_id}: expected a non-empty 2-D matrix, got shape {v.shape}"
            )
        if not np.isfinite(v).all():
            raise NonFiniteError(f"batch {self.batch_id}: non-finite entries")
        norms = np.linalg.norm(v, axis=1)
        worst = float(np.abs(norms - 1.0).max())
        if worst > UNIT_NORM_TOL:
            raise ValueError(
                f"batch {self.batch_id}: rows not unit-norm (max deviation {worst:.3g}); "
                "use normalize_batch() on raw data"
            )
        object.__setattr__(self, "vectors", _freeze(v))

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def size(self) -> int:
        return int(self.vectors.shape[0])


def normalize_batch(
    raw: np.ndarray,
    batch_id: int = 0,
    dim: Optional[int] = None,
    true_task: Optional[int] = None,
) -> EmbeddingBatch:
    """Scale every row of ``raw`` to unit Euclidean norm and wrap as a batch.

    Idempotent: normalizing an already-normalized batch reproduces it within
    1e-9 elementwise. Batch ids are assigned by the caller; stream ingestion
    paths number batches sequentially from 0.

    Raises:
        NonFiniteError: ``raw`` contains NaN/Inf.
        ZeroVectorError: a row has norm below 1e-12.
        DimensionMismatchError: ``raw`` is not 2-D or disagrees with ``dim``.
    """
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise DimensionMismatchError(f"expected a non-empty 2-D matrix, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise DimensionMismatchError(f"expected dim={dim}, got {arr.shape[1]}")
    if not np.isfinite(arr).all():
        raise NonFiniteError("raw batch contains non-finite entries")
    norms = np.linalg.norm(arr, axis=1, keepdims=True)
    if float(norms.min()) < ZERO_NORM_TOL:
        row = int(np.argmin(norms))
        raise ZeroVectorError(f"row {row} has norm {float(norms[row, 0]):.3g}")
    return EmbeddingBatch(batch_id=batch_id, vectors=arr / norms, true_task=true_task)


@dataclass(frozen=True)
class ClusterAssignment:
    """Per-row cluster labels for one batch; -1 marks noise."""

    labels: np.ndarray  # int labels, one per batch row
    num_clusters: int

    def __post_init__(self) -> None:
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        non_noise = labels[labels >= 0]
        expected = set(range(self.num_clusters))
        if set(non_noise.tolist()) != expected:
            raise ValueError(
                f"labels {sorted(set(non_noise.tolist()))} inconsistent with num_clusters={self.num_clusters}"
            )


@dataclass(frozen=True)
class TaskSignature:
    """Compact representative set for one task.

    One centroid per cluster found in the originating batch, plus each
    centroid's ``k`` nearest member embeddings ranked by Manhattan distance
    (ascending). Neighbor vectors are stored by value: signatures outlive
    the batches that produced them.
    """

    task_id: int
    centroids: np.ndarray  # num_clusters x dim
    neighbor_sets: tuple[np.ndarray, ...]  # per centroid, <=k member rows
    k: int
    created_at: int  # batch_id of origin

    def __post_init__(self) -> None:
        cents = _freeze(np.atleast_2d(self.centroids))
        if cents.shape[0] < 1:
            raise ValueError("a signature needs at least one centroid")
        sets = tuple(_freeze(np.atleast_2d(s)) for s in self.neighbor_sets)
        if len(sets) != cents.shape[0]:
            raise ValueError(
                f"{cents.shape[0]} centroids but {len(sets)} neighbor sets"
            )
        for s in sets:
            if s.shape[0] < 1 or s.shape[0] > self.k:
                raise ValueError(f"neighbor set size {s.shape[0]} outside 1..k={self.k}")
            if s.shape[1] != cents.shape[1]:
                raise DimensionMismatchError("neighbor dim disagrees with centroid dim")
        object.__setattr__(self, "centroids", cents)
        object.__setattr__(self, "neighbor_sets", sets)

    @property
    def dim(self) -> int:
        return int(self.centroids.shape[1])

    @property
    def num_clusters(self) -> int:
        return int(self.centroids.shape[0])

    def pooled_neighbors(self) -> np.ndarray:
        """All neighbor sets concatenated, cluster-major order."""
        return np.vstack(self.neighbor_sets)


class TaskMemory:
    """Append-only ordered store of task signatures.

    Task ids equal insertion order (0, 1, 2, ...). Drift checks iterate the
    store most-recent-first.
    """

    def __init__(self) -> None:
        self._signatures: list[TaskSignature] = []

    def __len__(self) -> int:
        return len(self._signatures)

    @property
    def signatures(self) -> tuple[TaskSignature, ...]:
        return tuple(self._signatures)

    def append(self, sig: TaskSignature) -> None:
        if sig.task_id != len(self._signatures):
            raise ValueError(
                f"signature task_id {sig.task_id} != next insertion index {len(self._signatures)}"
            )
        self._signatures.append(sig)

    def most_recent_first(self) -> Sequence[TaskSignature]:
        return tuple(reversed(self._signatures))


@dataclass(frozen=True)
class DriftVerdict:
    """Outcome of one two-sample drift comparison.

    ``score = statistic - threshold``; negative means no drift, positive
    means drift.
    """

    statistic: float
    threshold: float

    @property
    def score(self) -> float:
        return self.statistic - self.threshold

    @property
    def drifted(self) -> bool:
        return self.score > 0.0


class DecisionKind(str, Enum):
    KNOWN_TASK = "known_task"
    NEW_TASK = "new_task"


@dataclass(frozen=True)
class MismatchWarning:
    """Classifier and memory disagreed on the task id for a non-drifting batch."""

    classifier_predicted: int
    memory_matched: int


@dataclass(frozen=True)
class OnlineDecision:
    kind: DecisionKind
    task_id: int
    warning: Optional[MismatchWarning] = None

    def __post_init__(self) -> None:
        if self.kind is DecisionKind.NEW_TASK and self.warning is not None:
            raise ValueError("a new-task decision carries no warning")
