"""The online task-identification loop and the per-task head registry.

Per arriving batch: build its signature, scan stored signatures most recent
first, and either route to the first non-drifting task's head or mint a new
task (signature into memory, exemplars into the classifier, fresh head into
the registry). A step is transactional: everything that can fail runs
before any state mutation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .clustering import ClusterParams
from .domain import (
    DecisionKind,
    EmbeddingBatch,
    EngineError,
    MismatchWarning,
    OnlineDecision,
    TaskMemory,
)
from .drift import DriftParams, drift_check
from .signature import DEFAULT_NEIGHBORS, build_signature
from .task_classifier import TaskClassifier


class UnknownTaskError(EngineError):
    """No head is registered for the requested task id."""


class EmptyTrainingSetError(EngineError):
    """Head training needs at least one sample."""


class NoActiveTaskError(EngineError):
    """Inference requires a prior online step to select a head."""


@dataclass(frozen=True)
class EngineConfig:
    """Everything the online loop needs, bundled."""

    dim: int = 512
    k: int = DEFAULT_NEIGHBORS
    cluster: ClusterParams = field(default_factory=ClusterParams)
    drift: DriftParams = field(default_factory=DriftParams)
    head_learning_rate: float = 0.5
    head_iterations: int = 200
    seed: int = 0


class LinearHead:
    """Multinomial linear classifier over embedding features.

    Trained by full-batch gradient descent on softmax cross-entropy with a
    fixed step size, fixed iteration budget, and seeded initialization.
    A head that was never fitted predicts class 0.
    """

    def __init__(self, dim: int, seed: int) -> None:
        self.dim = dim
        self.seed = seed
        self.weights: Optional[np.ndarray] = None  # num_classes x dim
        self.bias: Optional[np.ndarray] = None

    def fit(
        self,
        vectors: np.ndarray,
        class_labels: np.ndarray,
        learning_rate: float = 0.5,
        iterations: int = 200,
    ) -> "LinearHead":
        x = np.asarray(vectors, dtype=np.float64)
        y = np.asarray(class_labels, dtype=np.int64)
        if x.ndim != 2 or len(x) == 0:
            raise EmptyTrainingSetError("head training needs a nonempty 2-D sample matrix")
        if len(y) != len(x):
            raise ValueError(f"{len(x)} samples but {len(y)} labels")
        if y.min() < 0:
            raise ValueError("class labels must be >= 0")
        n, num_classes = len(x), int(y.max()) + 1
        rng = np.random.default_rng(self.seed)
        w = 0.01 * rng.standard_normal((num_classes, self.dim))
        b = np.zeros(num_classes)
        onehot = np.zeros((n, num_classes))
        onehot[np.arange(n), y] = 1.0
        for _ in range(iterations):
            logits = x @ w.T + b
            logits -= logits.max(axis=1, keepdims=True)
            p = np.exp(logits)
            p /= p.sum(axis=1, keepdims=True)
            g = (p - onehot) / n
            w -= learning_rate * (g.T @ x)
            b -= learning_rate * g.sum(axis=0)
        self.weights, self.bias = w, b
        return self

    def infer(self, x: np.ndarray) -> int:
        if self.weights is None:
            return 0
        scores = self.weights @ np.asarray(x, dtype=np.float64) + self.bias
        return int(np.argmax(scores))

    def accuracy(self, vectors: np.ndarray, class_labels: np.ndarray) -> float:
        preds = [self.infer(row) for row in np.asarray(vectors, dtype=np.float64)]
        return float(np.mean(np.asarray(preds) == np.asarray(class_labels)))


class HeadRegistry:
    """One head per known task; heads never share parameters."""

    def __init__(self) -> None:
        self._heads: dict[int, LinearHead] = {}

    def __len__(self) -> int:
        return len(self._heads)

    def __contains__(self, task_id: int) -> bool:
        return task_id in self._heads

    @property
    def heads(self) -> dict[int, LinearHead]:
        return dict(self._heads)

    def add(self, task_id: int, head: LinearHead) -> None:
        if task_id in self._heads:
            raise ValueError(f"head for task {task_id} already registered")
        self._heads[task_id] = head

    def get(self, task_id: int) -> LinearHead:
        if task_id not in self._heads:
            raise UnknownTaskError(f"no head for task {task_id}")
        return self._heads[task_id]


@dataclass(frozen=True)
class DriftComparison:
    against_task: int
    statistic: float
    threshold: float
    score: float
    drifted: bool


@dataclass(frozen=True)
class StepRecord:
    """One event-log entry per online step."""

    batch_id: int
    kind: DecisionKind
    task_id: int
    comparisons: tuple[DriftComparison, ...]
    warning: Optional[MismatchWarning] = None

    def to_dict(self) -> dict:
        return {
            "batch_id": self.batch_id,
            "kind": self.kind.value,
            "task_id": self.task_id,
            "drift": [
                {
                    "against": c.against_task,
                    "statistic": c.statistic,
                    "threshold": c.threshold,
                    "score": c.score,
                    "drifted": c.drifted,
                }
                for c in self.comparisons
            ],
            "warning": (
                None
                if self.warning is None
                else {
                    "classifier_predicted": self.warning.classifier_predicted,
                    "memory_matched": self.warning.memory_matched,
                }
            ),
        }


class Orchestrator:
    """Holds memory, classifier, and head registry; one writer per stream."""

    def __init__(self, config: EngineConfig) -> None:
        self.config = config
        self.memory = TaskMemory()
        self.classifier = TaskClassifier(config.dim)
        self.heads = HeadRegistry()
        self.active_task: Optional[int] = None
        self.event_log: list[StepRecord] = []

    @property
    def num_tasks(self) -> int:
        return len(self.memory)

    def online_step(self, batch: EmbeddingBatch) -> OnlineDecision:
        """Process one batch: reuse the first non-drifting task or mint a new one.

        The scan walks stored signatures most recent first and stops at the
        first signature the batch does not drift from; the task classifier's
        batch prediction is recorded, and a disagreement with the matched
        task raises a warning in the event log without changing the routing.
        If everything drifts (or memory is empty) the batch founds a new
        task.
        """
        if batch.dim != self.config.dim:
            raise EngineError(f"batch dim {batch.dim} != configured dim {self.config.dim}")
        candidate = build_signature(
            batch, self.config.cluster, k=self.config.k, task_id=len(self.memory)
        )
        comparisons: list[DriftComparison] = []
        for stored in self.memory.most_recent_first():
            verdict = drift_check(candidate, stored, self.config.drift)
            comparisons.append(
                DriftComparison(
                    against_task=stored.task_id,
                    statistic=verdict.statistic,
                    threshold=verdict.threshold,
                    score=verdict.score,
                    drifted=verdict.drifted,
                )
            )
            if not verdict.drifted:
                predicted = self.classifier.predict_batch(batch)
                warning = None
                if predicted != stored.task_id:
                    warning = MismatchWarning(
                        classifier_predicted=predicted, memory_matched=stored.task_id
                    )
                decision = OnlineDecision(
                    kind=DecisionKind.KNOWN_TASK, task_id=stored.task_id, warning=warning
                )
                self.active_task = stored.task_id
                self.event_log.append(
                    StepRecord(
                        batch_id=batch.batch_id,
                        kind=decision.kind,
                        task_id=decision.task_id,
                        comparisons=tuple(comparisons),
                        warning=warning,
                    )
                )
                return decision

        new_id = len(self.memory)
        head = LinearHead(self.config.dim, seed=int(self.config.seed + new_id))
        # Commit point: nothing below can fail for a validated batch.
        self.memory.append(candidate)
        self.classifier.fit_increment(candidate)
        self.heads.add(new_id, head)
        self.active_task = new_id
        decision = OnlineDecision(kind=DecisionKind.NEW_TASK, task_id=new_id)
        self.event_log.append(
            StepRecord(
                batch_id=batch.batch_id,
                kind=decision.kind,
                task_id=new_id,
                comparisons=tuple(comparisons),
            )
        )
        return decision

    def infer(self, x: np.ndarray) -> int:
        """Class label from the active task's head.

        Raises:
            NoActiveTaskError: no online step has selected a task yet.
        """
        if self.active_task is None:
            raise NoActiveTaskError("run online_step before infer")
        return self.heads.get(self.active_task).infer(x)

    def train_head(
        self, task_id: int, vectors: np.ndarray, class_labels: np.ndarray
    ) -> LinearHead:
        """Fit the given task's head on labeled embeddings; other heads untouched.

        Raises:
            UnknownTaskError: ``task_id`` has no registered head.
            EmptyTrainingSetError: ``vectors`` is empty.
        """
        head = self.heads.get(task_id)
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or len(vectors) == 0:
            raise EmptyTrainingSetError("head training needs a nonempty 2-D sample matrix")
        return head.fit(
            vectors,
            np.asarray(class_labels),
            learning_rate=self.config.head_learning_rate,
            iterations=self.config.head_iterations,
        )

    def check_invariants(self) -> None:
        """Registry, memory, and classifier must stay the same size."""
        sizes = (len(self.memory), len(self.heads), len(self.classifier.trained_tasks))
        if len(set(sizes)) != 1:
            raise EngineError(f"cardinality invariant violated: memory/heads/classifier = {sizes}")
        if self.active_task is not None and self.active_task not in self.classifier.trained_tasks:
            raise EngineError(f"active task {self.active_task} is not trained")
