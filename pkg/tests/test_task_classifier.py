from __future__ import annotations

import numpy as np
import pytest

from taskdrift import (
    ClusterParams,
    TaskClassifier,
    TaskSignature,
    build_signature,
    generate_batch,
    normalize_batch,
    orthogonal_task_specs,
)
from taskdrift.task_classifier import DuplicateTaskError, EmptyClassifierError

from .oracles import mode_reference


def signature_for_task(task, dim=32, seed=0, k=10):
    spec = orthogonal_task_specs(task + 1, dim=dim, spread=0.05)[task]
    batch = generate_batch(spec, 100, seed=[seed, task])
    return build_signature(batch, ClusterParams(eps=0.3, min_pts=10), k=k, task_id=task)


def exemplar_signature(task, rows):
    """Signature whose pooled neighbors are exactly the given unit rows."""
    rows = np.atleast_2d(rows)
    return TaskSignature(
        task_id=task,
        centroids=rows.mean(axis=0, keepdims=True),
        neighbor_sets=(rows,),
        k=len(rows),
        created_at=0,
    )


def test_first_fit_populates_classifier():
    clf = TaskClassifier(dim=32)
    sig = signature_for_task(0)
    clf.fit_increment(sig)
    assert clf.trained_tasks == {0}
    assert clf.exemplar_count == len(sig.pooled_neighbors())


def test_sequential_fits_accumulate():
    clf = TaskClassifier(dim=32)
    total = 0
    for task in range(6):
        sig = signature_for_task(task)
        clf.fit_increment(sig)
        total += len(sig.pooled_neighbors())
    assert clf.trained_tasks == set(range(6))
    assert clf.exemplar_count == total


def test_refit_same_task_rejected():
    clf = TaskClassifier(dim=32)
    clf.fit_increment(signature_for_task(0))
    with pytest.raises(DuplicateTaskError):
        clf.fit_increment(signature_for_task(0, seed=9))


def test_stored_exemplar_predicts_its_own_task():
    clf = TaskClassifier(dim=32)
    for task in range(4):
        clf.fit_increment(signature_for_task(task))
    probe = clf.exemplars[clf.exemplar_labels == 3][0]
    assert clf.predict_sample(probe) == 3


def test_blob_samples_recover_their_task():
    dim = 64
    specs = orthogonal_task_specs(6, dim=dim, spread=0.05)
    clf = TaskClassifier(dim=dim)
    for spec in specs:
        batch = generate_batch(spec, 100, seed=[1, spec.task_id])
        clf.fit_increment(
            build_signature(batch, ClusterParams(eps=0.3, min_pts=10), k=10, task_id=spec.task_id)
        )
    eval_batch = generate_batch(specs[1], 200, seed=999)
    preds = clf.predict_rows(eval_batch)
    assert (preds == 1).mean() >= 0.95


def test_single_task_classifier_always_answers_it(rng):
    clf = TaskClassifier(dim=32)
    clf.fit_increment(signature_for_task(0))
    x = normalize_batch(rng.normal(size=(1, 32))).vectors[0]
    assert clf.predict_sample(x) == 0


def test_empty_classifier_rejects_prediction(rng):
    clf = TaskClassifier(dim=8)
    with pytest.raises(EmptyClassifierError):
        clf.predict_sample(np.ones(8))
    with pytest.raises(EmptyClassifierError):
        clf.predict_batch(normalize_batch(rng.normal(size=(3, 8))))


def test_unanimous_batch_prediction():
    e = np.eye(8)
    clf = TaskClassifier(dim=8)
    for task in range(3):
        clf.fit_increment(exemplar_signature(task, e[task]))
    batch = normalize_batch(np.tile(e[2], (30, 1)))
    assert clf.predict_batch(batch) == 2


def test_batch_mode_matches_counting_oracle():
    e = np.eye(8)
    clf = TaskClassifier(dim=8)
    for task in range(5):
        clf.fit_increment(exemplar_signature(task, e[task]))
    # 120 rows onto task 4's exemplar, 80 rows onto task 1's
    rows = np.vstack([np.tile(e[4], (120, 1)), np.tile(e[1], (80, 1))])
    batch = normalize_batch(rows)
    per_row = clf.predict_rows(batch).tolist()
    assert clf.predict_batch(batch) == mode_reference(per_row) == 4


def test_batch_mode_tie_breaks_to_lower_task():
    e = np.eye(8)
    clf = TaskClassifier(dim=8)
    for task in range(3):
        clf.fit_increment(exemplar_signature(task, e[task]))
    rows = np.vstack([np.tile(e[2], (10, 1)), np.tile(e[0], (10, 1))])
    assert clf.predict_batch(normalize_batch(rows)) == 0


def test_majority_share_wins_by_construction():
    # true task's share strictly exceeds every other share => mode is the true task
    e = np.eye(16)
    clf = TaskClassifier(dim=16)
    for task in range(4):
        clf.fit_increment(exemplar_signature(task, e[task]))
    counts = {0: 7, 1: 6, 2: 4, 3: 3}  # task 0 strictly ahead
    rows = np.vstack([np.tile(e[t], (c, 1)) for t, c in counts.items()])
    assert clf.predict_batch(normalize_batch(rows)) == 0


def test_sample_tie_breaks_to_lower_task_then_insertion():
    e = np.eye(8)
    clf = TaskClassifier(dim=8)
    clf.fit_increment(exemplar_signature(0, np.vstack([e[0], e[1]])))
    clf.fit_increment(exemplar_signature(1, np.vstack([e[1], e[0]])))
    # equidistant from exemplars of both tasks
    assert clf.predict_sample(e[0]) == 0
    assert clf.predict_sample(e[1]) == 0


def test_new_task_far_away_leaves_old_predictions_unchanged():
    dim = 64
    specs = orthogonal_task_specs(3, dim=dim, spread=0.05)
    clf = TaskClassifier(dim=dim)
    for spec in specs[:2]:
        batch = generate_batch(spec, 80, seed=[5, spec.task_id])
        clf.fit_increment(
            build_signature(batch, ClusterParams(eps=0.3, min_pts=10), k=10, task_id=spec.task_id)
        )
    probes = generate_batch(specs[0], 50, seed=77)
    before = clf.predict_rows(probes).copy()
    batch3 = generate_batch(specs[2], 80, seed=[5, 2])
    clf.fit_increment(
        build_signature(batch3, ClusterParams(eps=0.3, min_pts=10), k=10, task_id=2)
    )
    after = clf.predict_rows(probes)
    np.testing.assert_array_equal(before, after)


def test_prediction_is_deterministic(rng):
    clf = TaskClassifier(dim=32)
    for task in range(3):
        clf.fit_increment(signature_for_task(task))
    x = normalize_batch(rng.normal(size=(1, 32))).vectors[0]
    assert clf.predict_sample(x) == clf.predict_sample(x)
