"""Incremental exemplar classifier mapping embeddings to task ids.

Training a task appends that signature's pooled neighbors as labeled
exemplars; nothing already stored is ever touched, so earlier tasks cannot
be forgotten. Prediction is nearest-exemplar by Manhattan distance, and
batch prediction takes the mode over rows.

Single-writer, multi-reader: fits must not interleave with predictions.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

from .domain import DimensionMismatchError, EmbeddingBatch, EngineError, TaskSignature


class DuplicateTaskError(EngineError):
    """The task id was already trained; exemplars are append-only."""


class EmptyClassifierError(EngineError):
    """Prediction requires at least one trained task."""


class TaskClassifier:
    """Grows one exemplar block per task, in ascending task-id order."""

    def __init__(self, dim: int) -> None:
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = dim
        self._exemplars = np.empty((0, dim), dtype=np.float64)
        self._labels = np.empty(0, dtype=np.int64)
        self._centroids_by_task: dict[int, np.ndarray] = {}

    @property
    def trained_tasks(self) -> frozenset[int]:
        return frozenset(self._centroids_by_task)

    @property
    def exemplar_count(self) -> int:
        return len(self._labels)

    @property
    def exemplars(self) -> np.ndarray:
        return self._exemplars

    @property
    def exemplar_labels(self) -> np.ndarray:
        return self._labels

    @property
    def centroids_by_task(self) -> dict[int, np.ndarray]:
        return dict(self._centroids_by_task)

    def fit_increment(self, sig: TaskSignature) -> "TaskClassifier":
        """Append the signature's pooled neighbors as exemplars for its task.

        Raises:
            DuplicateTaskError: ``sig.task_id`` was already trained.
        """
        if sig.task_id in self._centroids_by_task:
            raise DuplicateTaskError(f"task {sig.task_id} already trained")
        if sig.dim != self.dim:
            raise DimensionMismatchError(f"signature dim {sig.dim} != classifier dim {self.dim}")
        pooled = sig.pooled_neighbors()
        self._exemplars = np.vstack([self._exemplars, pooled])
        self._labels = np.concatenate(
            [self._labels, np.full(len(pooled), sig.task_id, dtype=np.int64)]
        )
        self._centroids_by_task[sig.task_id] = sig.centroids
        return self

    def predict_sample(self, x: np.ndarray) -> int:
        """Task id of the L1-nearest exemplar.

        Exact distance ties resolve to the lower task id, then the earlier
        insertion index. Exemplar blocks are stored in ascending task order,
        so the first minimum in storage order realizes both rules.
        """
        if not self._centroids_by_task:
            raise EmptyClassifierError("no tasks trained")
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.shape[0] != self.dim:
            raise DimensionMismatchError(f"input dim {x.shape[0]} != classifier dim {self.dim}")
        dists = np.abs(self._exemplars - x).sum(axis=1)
        return int(self._labels[int(np.argmin(dists))])

    def predict_batch(self, batch: EmbeddingBatch) -> int:
        """Mode of per-row predictions; count ties resolve to the lower task id."""
        if not self._centroids_by_task:
            raise EmptyClassifierError("no tasks trained")
        if batch.dim != self.dim:
            raise DimensionMismatchError(f"batch dim {batch.dim} != classifier dim {self.dim}")
        dists = cdist(batch.vectors, self._exemplars, "cityblock")
        preds = self._labels[np.argmin(dists, axis=1)]
        counts = np.bincount(preds, minlength=int(self._labels.max()) + 1)
        return int(np.argmax(counts))

    def predict_rows(self, batch: EmbeddingBatch) -> np.ndarray:
        """Per-row task predictions (evaluation helper)."""
        if not self._centroids_by_task:
            raise EmptyClassifierError("no tasks trained")
        dists = cdist(batch.vectors, self._exemplars, "cityblock")
        return self._labels[np.argmin(dists, axis=1)]
