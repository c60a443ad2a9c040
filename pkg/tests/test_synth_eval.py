from __future__ import annotations

import json

import numpy as np
import pytest

from taskdrift import (
    ClusterParams,
    DriftParams,
    EngineConfig,
    Scenario,
    SyntheticTaskSpec,
    TaskClassifier,
    build_signature,
    drift_confusion_matrix,
    generate_batch,
    orthogonal_task_specs,
    recall_report,
    run_scenario,
)
from taskdrift.synth import signature_pair_for_spec

from .test_task_classifier import exemplar_signature


def test_tiny_spread_collapses_to_mean():
    spec = SyntheticTaskSpec(task_id=0, mean=np.eye(16)[0], spread=1e-9)
    batch = generate_batch(spec, 50, seed=3)
    target = spec.mean / np.linalg.norm(spec.mean)
    assert np.abs(batch.vectors - target).max() < 1e-6


def test_generation_is_bit_deterministic():
    spec = SyntheticTaskSpec(task_id=2, mean=np.eye(8)[2], spread=0.05)
    a = generate_batch(spec, 40, seed=11)
    b = generate_batch(spec, 40, seed=11)
    np.testing.assert_array_equal(np.asarray(a.vectors), np.asarray(b.vectors))
    assert a.true_task == b.true_task == 2


def test_orthogonal_specs_separate_on_the_sphere():
    specs = orthogonal_task_specs(2, dim=64, spread=0.05)
    a = np.asarray(generate_batch(specs[0], 80, seed=1).vectors)
    b = np.asarray(generate_batch(specs[1], 80, seed=2).vectors)
    cross = 1.0 - a @ b.T
    intra = 1.0 - a @ a.T
    assert abs(cross.mean() - 1.0) < 0.05
    assert intra.max() <= 0.3


def test_boundary_scenario_all_new_tasks(small_config, small_specs):
    scenario = Scenario(sequence=(0, 1, 2, 3, 4, 5), batch_size=100, seed=5)
    rep = run_scenario(scenario, small_specs, small_config)
    assert rep.new_task_count == 6
    assert rep.task_id_accuracy == 1.0
    assert rep.warning_count == 0
    assert [s.decided_task for s in rep.steps] == [0, 1, 2, 3, 4, 5]


def test_repetition_scenario_reuses_tasks(small_config, small_specs):
    scenario = Scenario(sequence=(1, 2, 3, 2, 4, 4, 5, 5, 5, 6), batch_size=100, seed=5)
    specs = orthogonal_task_specs(7, dim=small_config.dim, spread=0.05)
    rep = run_scenario(scenario, specs, small_config)
    assert rep.new_task_count == 6
    assert len(rep.steps) - rep.new_task_count == 4
    assert rep.task_id_accuracy == 1.0
    assert rep.warning_count == 0
    assert rep.expected_relabeling == {1: 0, 2: 1, 3: 2, 4: 3, 5: 4, 6: 5}
    assert rep.observed_relabeling == rep.expected_relabeling


def test_single_task_scenario(small_config, small_specs):
    scenario = Scenario(sequence=(0, 0, 0), batch_size=100, seed=2)
    rep = run_scenario(scenario, small_specs, small_config)
    kinds = [s.kind.value for s in rep.steps]
    assert kinds == ["new_task", "known_task", "known_task"]
    assert all(s.decided_task == 0 for s in rep.steps)


def test_scenario_new_task_count_equals_distinct_tasks(small_config, small_specs):
    scenario = Scenario(sequence=(3, 1, 3, 1, 2), batch_size=100, seed=8)
    rep = run_scenario(scenario, small_specs, small_config)
    assert rep.new_task_count == len(set(scenario.sequence))


def test_scenario_requires_specs_for_all_tasks(small_config, small_specs):
    scenario = Scenario(sequence=(0, 9), batch_size=50, seed=1)
    with pytest.raises(ValueError):
        run_scenario(scenario, small_specs, small_config)


def test_scenario_reports_are_byte_identical(small_config, small_specs):
    scenario = Scenario(sequence=(0, 1, 0, 2), batch_size=100, seed=13)
    rep_a = run_scenario(scenario, small_specs, small_config)
    rep_b = run_scenario(scenario, small_specs, small_config)
    assert json.dumps(rep_a.to_dict()) == json.dumps(rep_b.to_dict())


def test_confusion_matrix_sign_pattern_fixed_threshold(small_config, small_specs):
    pairs = [
        signature_pair_for_spec(spec, small_config, batch_size=100, seed=21)
        for spec in small_specs
    ]
    matrix = drift_confusion_matrix(
        [p[0] for p in pairs], [p[1] for p in pairs], small_config.drift
    )
    diag = np.diag(matrix)
    off = matrix[~np.eye(6, dtype=bool)]
    assert (diag < 0).all()
    assert (off > 0).all()


def test_confusion_matrix_with_permutation_null_averaged_over_seeds(small_config):
    # a level-alpha permutation test flips ~alpha of same-task entries per
    # seed; the seed-averaged matrix shows the clean sign pattern
    specs = orthogonal_task_specs(4, dim=small_config.dim, spread=0.05)
    params = DriftParams(permutations=100, significance=0.05, rng_seed=3)
    acc = np.zeros((4, 4))
    seeds = range(10)
    for seed in seeds:
        pairs = [
            signature_pair_for_spec(spec, small_config, batch_size=100, seed=seed)
            for spec in specs
        ]
        acc += drift_confusion_matrix(
            [p[0] for p in pairs], [p[1] for p in pairs], params
        )
    acc /= len(list(seeds))
    assert (np.diag(acc) < 0).all()
    assert (acc[~np.eye(4, dtype=bool)] > 0).all()


def test_identical_distribution_tasks_do_not_drift_across_indices(small_config):
    # two specs with the same mean: "task" means domain, not index
    mean = np.eye(small_config.dim)[0]
    specs = [
        SyntheticTaskSpec(task_id=0, mean=mean, spread=0.05),
        SyntheticTaskSpec(task_id=1, mean=mean, spread=0.05),
    ]
    pairs = [
        signature_pair_for_spec(spec, small_config, batch_size=100, seed=31)
        for spec in specs
    ]
    matrix = drift_confusion_matrix(
        [p[0] for p in pairs], [p[1] for p in pairs], small_config.drift
    )
    assert matrix[0, 1] < 0
    assert matrix[1, 0] < 0


def test_confusion_matrix_is_symmetric_under_fixed_seeds(small_config):
    specs = orthogonal_task_specs(3, dim=small_config.dim, spread=0.05)
    params = DriftParams(permutations=50, significance=0.05, rng_seed=17)
    pairs = [
        signature_pair_for_spec(spec, small_config, batch_size=100, seed=41)
        for spec in specs
    ]
    matrix = drift_confusion_matrix(
        [p[0] for p in pairs], [p[1] for p in pairs], params
    )
    assert np.abs(matrix - matrix.T).max() < 1e-9


def test_confusion_matrix_requires_alternates(small_config, small_specs):
    pairs = [
        signature_pair_for_spec(spec, small_config, batch_size=80, seed=2)
        for spec in small_specs[:2]
    ]
    with pytest.raises(ValueError):
        drift_confusion_matrix([p[0] for p in pairs], [pairs[0][1]], small_config.drift)


def build_stage_classifier(num_tasks, dim=64, seed=0, batch_size=100):
    specs = orthogonal_task_specs(num_tasks, dim=dim, spread=0.05)
    clf = TaskClassifier(dim)
    for spec in specs:
        batch = generate_batch(spec, batch_size, seed=[seed, spec.task_id])
        clf.fit_increment(
            build_signature(batch, ClusterParams(eps=0.3, min_pts=10), k=10, task_id=spec.task_id)
        )
    return clf, specs


def test_two_task_recalls_clear_the_half_threshold():
    clf, specs = build_stage_classifier(2)
    eval_batches = [
        generate_batch(specs[i % 2], 100, seed=[7, i], batch_id=i) for i in range(6)
    ]
    rep = recall_report(clf, eval_batches)
    assert rep.min_required == 0.5
    assert all(r > 0.5 for r in rep.per_task_recall.values())
    assert rep.insufficient_tasks == ()


def test_six_task_threshold_is_one_sixth():
    clf, specs = build_stage_classifier(6)
    eval_batches = [
        generate_batch(specs[i % 6], 60, seed=[8, i], batch_id=i) for i in range(6)
    ]
    rep = recall_report(clf, eval_batches)
    assert rep.min_required == pytest.approx(1 / 6)


def test_recall_exactly_at_threshold_is_flagged():
    e = np.eye(8)
    clf = TaskClassifier(dim=8)
    clf.fit_increment(exemplar_signature(0, e[0]))
    clf.fit_increment(exemplar_signature(1, e[1]))
    # batch labeled task 0 where exactly half the rows predict task 0
    rows = np.vstack([np.tile(e[0], (10, 1)), np.tile(e[1], (10, 1))])
    from taskdrift import EmbeddingBatch

    batch = EmbeddingBatch(batch_id=0, vectors=rows, true_task=0)
    other = EmbeddingBatch(batch_id=1, vectors=np.tile(e[1], (10, 1)), true_task=1)
    rep = recall_report(clf, [batch, other])
    assert rep.per_task_recall[0] == 0.5
    assert 0 in rep.insufficient_tasks
    assert 1 not in rep.insufficient_tasks


def test_recall_report_needs_labels_and_two_tasks():
    clf, specs = build_stage_classifier(2)
    unlabeled = generate_batch(specs[0], 30, seed=1)
    unlabeled = type(unlabeled)(batch_id=0, vectors=unlabeled.vectors, true_task=None)
    with pytest.raises(ValueError):
        recall_report(clf, [unlabeled])
    single = TaskClassifier(dim=64)
    single.fit_increment(
        build_signature(
            generate_batch(specs[0], 60, seed=2),
            ClusterParams(eps=0.3, min_pts=10),
            k=10,
            task_id=0,
        )
    )
    with pytest.raises(ValueError):
        recall_report(single, [generate_batch(specs[0], 30, seed=3)])


def test_well_separated_geometry_invariants_over_10_seeds(small_config):
    # means with pairwise cosine distance 1.0 and spread 0.05: every
    # boundary scenario is perfect and the averaged sign pattern is clean
    specs = orthogonal_task_specs(3, dim=small_config.dim, spread=0.05)
    params = DriftParams(permutations=60, significance=0.05, rng_seed=5)
    config = EngineConfig(dim=small_config.dim, cluster=small_config.cluster, drift=params, seed=5)
    acc = np.zeros((3, 3))
    for seed in range(10):
        scenario = Scenario(sequence=(0, 1, 2), batch_size=100, seed=seed)
        rep = run_scenario(scenario, specs, config, train_heads=False)
        assert rep.task_id_accuracy == 1.0
        pairs = [
            signature_pair_for_spec(spec, config, batch_size=100, seed=seed)
            for spec in specs
        ]
        acc += drift_confusion_matrix([p[0] for p in pairs], [p[1] for p in pairs], params)
    acc /= 10
    assert (np.diag(acc) < 0).all()
    assert (acc[~np.eye(3, dtype=bool)] > 0).all()
