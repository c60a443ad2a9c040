"""Synthetic embedding streams, scenario sequencing, and evaluation reporters.

Synthetic tasks are Gaussian blobs on the unit sphere: a direction vector
plus isotropic noise, renormalized. ``spread`` is the expected Euclidean
norm of the perturbation before renormalization (per-coordinate sd is
``spread / sqrt(dim)``), which keeps the blob's angular size independent of
the embedding dimensionality.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .domain import DecisionKind, EmbeddingBatch, TaskSignature, normalize_batch
from .drift import DriftParams, drift_check
from .orchestrator import EngineConfig, Orchestrator, StepRecord
from .signature import build_signature
from .task_classifier import TaskClassifier


@dataclass(frozen=True)
class SyntheticTaskSpec:
    """One synthetic task domain."""

    task_id: int
    mean: np.ndarray
    spread: float = 0.05
    num_classes: int = 2

    def __post_init__(self) -> None:
        if self.spread <= 0:
            raise ValueError(f"spread must be > 0, got {self.spread}")
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {self.num_classes}")
        mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        mean.setflags(write=False)
        object.__setattr__(self, "mean", mean)

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])


@dataclass(frozen=True)
class Scenario:
    """A task-id sequence (repetitions allowed) fed batch by batch."""

    sequence: tuple[int, ...]
    batches_per_step: int = 1
    batch_size: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "sequence", tuple(int(t) for t in self.sequence))
        if len(self.sequence) == 0:
            raise ValueError("scenario sequence is empty")
        if self.batches_per_step < 1 or self.batch_size < 1:
            raise ValueError("batches_per_step and batch_size must be >= 1")


def orthogonal_task_specs(
    num_tasks: int, dim: int = 512, spread: float = 0.05, num_classes: int = 2
) -> list[SyntheticTaskSpec]:
    """Task specs with pairwise-orthogonal basis-vector means."""
    if num_tasks > dim:
        raise ValueError(f"cannot place {num_tasks} orthogonal means in {dim} dims")
    eye = np.eye(dim)
    return [
        SyntheticTaskSpec(task_id=t, mean=eye[t], spread=spread, num_classes=num_classes)
        for t in range(num_tasks)
    ]


def generate_batch(
    spec: SyntheticTaskSpec,
    batch_size: int,
    seed,
    batch_id: int = 0,
) -> EmbeddingBatch:
    """Draw one unit-normalized batch from the spec's blob.

    Deterministic given ``seed`` (an int or a seed sequence list).
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((batch_size, spec.dim)) * (spec.spread / np.sqrt(spec.dim))
    return normalize_batch(spec.mean + noise, batch_id=batch_id, true_task=spec.task_id)


@dataclass(frozen=True)
class ScenarioStep:
    step: int
    batch_id: int
    true_task: Optional[int]
    expected_task: Optional[int]  # first-occurrence relabeling of true_task
    decided_task: int
    kind: DecisionKind
    warned: bool

    @property
    def correct(self) -> Optional[bool]:
        if self.expected_task is None:
            return None
        return self.decided_task == self.expected_task


@dataclass(frozen=True)
class ScenarioReport:
    """Outcome of one scenario run."""

    steps: tuple[ScenarioStep, ...]
    events: tuple[StepRecord, ...]
    new_task_count: int
    warning_count: int
    task_id_accuracy: Optional[float]  # None when the stream carries no ground truth
    expected_relabeling: dict[int, int]  # true id -> rank of first occurrence in the sequence
    observed_relabeling: dict[int, int]  # true id -> online task id decided at first occurrence

    def to_dict(self) -> dict:
        return {
            "new_task_count": self.new_task_count,
            "warning_count": self.warning_count,
            "task_id_accuracy": self.task_id_accuracy,
            "expected_relabeling": {str(k): v for k, v in sorted(self.expected_relabeling.items())},
            "observed_relabeling": {str(k): v for k, v in sorted(self.observed_relabeling.items())},
            "steps": [
                {
                    "step": s.step,
                    "batch_id": s.batch_id,
                    "true_task": s.true_task,
                    "expected_task": s.expected_task,
                    "decided_task": s.decided_task,
                    "kind": s.kind.value,
                    "warned": s.warned,
                    "correct": s.correct,
                }
                for s in self.steps
            ],
            "events": [e.to_dict() for e in self.events],
        }


def run_scenario(
    scenario: Scenario,
    specs: Sequence[SyntheticTaskSpec],
    config: EngineConfig,
    orchestrator: Optional[Orchestrator] = None,
    train_heads: bool = True,
) -> ScenarioReport:
    """Feed generated batches through the online loop in sequence order.

    Every new task's head is trained on the founding batch's embeddings
    with synthetic class labels drawn from the scenario's seed stream.
    Accuracy compares each decision with the true task under
    first-occurrence relabeling.
    """
    by_id = {spec.task_id: spec for spec in specs}
    missing = [t for t in scenario.sequence if t not in by_id]
    if missing:
        raise ValueError(f"sequence references tasks without specs: {sorted(set(missing))}")

    orch = orchestrator if orchestrator is not None else Orchestrator(config)
    expected: dict[int, int] = {}
    for t in scenario.sequence:
        if t not in expected:
            expected[t] = len(expected)
    observed: dict[int, int] = {}
    steps: list[ScenarioStep] = []
    batch_id = 0
    for step_idx, true_task in enumerate(scenario.sequence):
        spec = by_id[true_task]
        for sub in range(scenario.batches_per_step):
            batch = generate_batch(
                spec,
                scenario.batch_size,
                seed=[scenario.seed, step_idx, sub],
                batch_id=batch_id,
            )
            decision = orch.online_step(batch)
            if true_task not in observed:
                observed[true_task] = decision.task_id
            if decision.kind is DecisionKind.NEW_TASK and train_heads:
                label_rng = np.random.default_rng([scenario.seed, step_idx, sub, 1])
                labels = label_rng.integers(0, spec.num_classes, size=scenario.batch_size)
                orch.train_head(decision.task_id, batch.vectors, labels)
            steps.append(
                ScenarioStep(
                    step=step_idx,
                    batch_id=batch_id,
                    true_task=true_task,
                    expected_task=expected[true_task],
                    decided_task=decision.task_id,
                    kind=decision.kind,
                    warned=decision.warning is not None,
                )
            )
            batch_id += 1

    events = tuple(orch.event_log)
    new_tasks = sum(1 for s in steps if s.kind is DecisionKind.NEW_TASK)
    warnings = sum(1 for s in steps if s.warned)
    accuracy = float(np.mean([s.correct for s in steps]))
    return ScenarioReport(
        steps=tuple(steps),
        events=events,
        new_task_count=new_tasks,
        warning_count=warnings,
        task_id_accuracy=accuracy,
        expected_relabeling=expected,
        observed_relabeling=observed,
    )


def replay_batches(
    batches: Sequence[EmbeddingBatch],
    config: EngineConfig,
    orchestrator: Optional[Orchestrator] = None,
) -> ScenarioReport:
    """Feed pre-built batches (e.g. from an embedding file) through the loop.

    Accuracy is reported only when every batch carries a ``true_task``
    label; unlabeled streams still produce decisions and events.
    """
    if len(batches) == 0:
        raise ValueError("no batches to replay")
    orch = orchestrator if orchestrator is not None else Orchestrator(config)
    labeled = all(b.true_task is not None for b in batches)
    expected: dict[int, int] = {}
    observed: dict[int, int] = {}
    if labeled:
        for b in batches:
            if b.true_task not in expected:
                expected[int(b.true_task)] = len(expected)
    steps: list[ScenarioStep] = []
    for step_idx, batch in enumerate(batches):
        decision = orch.online_step(batch)
        truth = None if batch.true_task is None else int(batch.true_task)
        if truth is not None and truth not in observed:
            observed[truth] = decision.task_id
        steps.append(
            ScenarioStep(
                step=step_idx,
                batch_id=batch.batch_id,
                true_task=truth,
                expected_task=expected.get(truth) if labeled else None,
                decided_task=decision.task_id,
                kind=decision.kind,
                warned=decision.warning is not None,
            )
        )
    accuracy = float(np.mean([s.correct for s in steps])) if labeled else None
    return ScenarioReport(
        steps=tuple(steps),
        events=tuple(orch.event_log),
        new_task_count=sum(1 for s in steps if s.kind is DecisionKind.NEW_TASK),
        warning_count=sum(1 for s in steps if s.warned),
        task_id_accuracy=accuracy,
        expected_relabeling=expected,
        observed_relabeling=observed,
    )


def drift_confusion_matrix(
    signatures: Sequence[TaskSignature],
    alt_signatures: Sequence[TaskSignature],
    params: DriftParams,
) -> np.ndarray:
    """Signed drift scores for every signature pair.

    Entry (i, j) with i != j is the score of signature i against signature
    j. The diagonal compares signature i against ``alt_signatures[i]``, an
    independently drawn second signature of the same task, so a correct
    detector shows negative entries exactly on the diagonal.
    """
    if len(signatures) < 2:
        raise ValueError("need at least two signatures")
    if len(alt_signatures) != len(signatures):
        raise ValueError("need one alternate same-task signature per signature")
    n = len(signatures)
    scores = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(n):
            other = alt_signatures[i] if i == j else signatures[j]
            scores[i, j] = drift_check(signatures[i], other, params).score
    return scores


def signature_pair_for_spec(
    spec: SyntheticTaskSpec,
    config: EngineConfig,
    batch_size: int,
    seed: int,
) -> tuple[TaskSignature, TaskSignature]:
    """Two signatures of the same task from independent batches."""
    sigs = []
    for draw in (0, 1):
        batch = generate_batch(spec, batch_size, seed=[seed, spec.task_id, draw])
        sigs.append(
            build_signature(batch, config.cluster, k=config.k, task_id=spec.task_id)
        )
    return sigs[0], sigs[1]


@dataclass(frozen=True)
class RecallReport:
    """Per-task per-sample recall against the 1/T majority-vote floor."""

    num_tasks: int
    min_required: float  # 1 / num_tasks
    per_task_recall: dict[int, float]
    per_batch_recall: tuple[tuple[int, float], ...]  # (true task, recall within batch)
    insufficient_tasks: tuple[int, ...]  # recall <= 1/T

    def to_dict(self) -> dict:
        return {
            "num_tasks": self.num_tasks,
            "min_required": self.min_required,
            "per_task_recall": {str(k): v for k, v in sorted(self.per_task_recall.items())},
            "per_batch_recall": [
                {"true_task": t, "recall": r} for t, r in self.per_batch_recall
            ],
            "insufficient_tasks": list(self.insufficient_tasks),
        }


def recall_report(
    clf: TaskClassifier, eval_batches: Sequence[EmbeddingBatch]
) -> RecallReport:
    """Per-sample recall of the task classifier on labeled evaluation batches.

    The floor is 1/T for T trained tasks; a task at or below the floor is
    flagged because only a strictly larger share guarantees a correct
    batch-mode vote.
    """
    tasks = sorted(clf.trained_tasks)
    if len(tasks) < 2:
        raise ValueError("recall reporting needs a classifier trained on >= 2 tasks")
    for b in eval_batches:
        if b.true_task is None:
            raise ValueError(f"batch {b.batch_id} carries no true_task label")

    min_required = 1.0 / len(tasks)
    hits: dict[int, int] = {t: 0 for t in tasks}
    totals: dict[int, int] = {t: 0 for t in tasks}
    per_batch: list[tuple[int, float]] = []
    for batch in eval_batches:
        preds = clf.predict_rows(batch)
        truth = int(batch.true_task)
        correct = int((preds == truth).sum())
        per_batch.append((truth, correct / batch.size))
        hits[truth] = hits.get(truth, 0) + correct
        totals[truth] = totals.get(truth, 0) + batch.size

    per_task = {
        t: (hits[t] / totals[t]) if totals.get(t) else float("nan") for t in sorted(totals)
    }
    insufficient = tuple(
        t for t, r in sorted(per_task.items()) if not np.isnan(r) and r <= min_required
    )
    return RecallReport(
        num_tasks=len(tasks),
        min_required=min_required,
        per_task_recall=per_task,
        per_batch_recall=tuple(per_batch),
        insufficient_tasks=insufficient,
    )
