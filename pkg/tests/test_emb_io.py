from __future__ import annotations

import json
import os
import struct

import numpy as np
import pytest

from taskdrift import (
    DecisionKind,
    Orchestrator,
    generate_batch,
    normalize_batch,
    read_embedding_file,
    restore_state,
    snapshot_state,
    write_embedding_file,
)
from taskdrift.emb_io import (
    BadMagicError,
    CorruptError,
    TruncatedFileError,
    VersionMismatchError,
    VersionUnsupportedError,
    atomic_write_bytes,
    events_to_jsonl,
    load_snapshot,
    save_snapshot,
    write_event_log,
)


def make_batches(rng, count=3, size=20, dim=16, labeled=True):
    out = []
    for i in range(count):
        raw = rng.normal(size=(size, dim))
        out.append(normalize_batch(raw, batch_id=i, true_task=i if labeled else None))
    return out


def quantize(batches):
    """Round-trip through float32 once, as the binary format stores f32."""
    return [
        type(b)(
            batch_id=b.batch_id,
            vectors=np.asarray(b.vectors, dtype=np.float32).astype(np.float64),
            true_task=b.true_task,
        )
        for b in batches
    ]


def test_single_record_decodes_to_one_batch(tmp_path, rng):
    path = tmp_path / "one.emb"
    batch = normalize_batch(rng.normal(size=(200, 512)), true_task=None)
    write_embedding_file(path, [batch])
    out = read_embedding_file(path)
    assert len(out) == 1
    assert out[0].size == 200 and out[0].dim == 512
    assert out[0].true_task is None


def test_binary_round_trip_is_bit_exact(tmp_path, rng):
    path = tmp_path / "batches.emb"
    batches = quantize(make_batches(rng))
    write_embedding_file(path, batches)
    first_bytes = path.read_bytes()
    again = read_embedding_file(path)
    for orig, back in zip(batches, again):
        np.testing.assert_array_equal(np.asarray(orig.vectors), np.asarray(back.vectors))
        assert orig.true_task == back.true_task
    write_embedding_file(path, again)
    assert path.read_bytes() == first_bytes


def test_batch_size_override_rechunks_rows(tmp_path, rng):
    path = tmp_path / "chunk.emb"
    batches = make_batches(rng, count=2, size=30, labeled=True)
    write_embedding_file(path, batches)
    out = read_embedding_file(path, batch_size=20)
    assert [b.size for b in out] == [20, 20, 20]
    assert [b.batch_id for b in out] == [0, 1, 2]
    # chunk 2 mixes rows of tasks 0 and 1: no uniform label
    assert out[0].true_task == 0
    assert out[1].true_task is None
    assert out[2].true_task == 1


def test_truncated_file_reports_offset(tmp_path, rng):
    path = tmp_path / "trunc.emb"
    write_embedding_file(path, make_batches(rng, count=1, size=10))
    blob = path.read_bytes()
    cut = tmp_path / "cut.emb"
    cut.write_bytes(blob[: len(blob) - 7])  # mid-row
    with pytest.raises(TruncatedFileError) as err:
        read_embedding_file(cut)
    assert err.value.offset > 0


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.emb"
    path.write_bytes(b"\x00\x01\x02\x03" + b"\x00" * 60)
    with pytest.raises(BadMagicError):
        read_embedding_file(path)


def test_unsupported_version_rejected(tmp_path, rng):
    path = tmp_path / "v9.emb"
    write_embedding_file(path, make_batches(rng, count=1, size=5))
    blob = bytearray(path.read_bytes())
    struct.pack_into("<I", blob, 4, 9)
    path.write_bytes(bytes(blob))
    with pytest.raises(VersionUnsupportedError):
        read_embedding_file(path)


def test_non_finite_file_rejected(tmp_path):
    head = b"EMB1" + struct.pack("<IIIB", 1, 4, 2, 0)
    vecs = np.array([[1, 0, 0, 0], [np.nan, 0, 0, 0]], dtype="<f4").tobytes()
    path = tmp_path / "nan.emb"
    path.write_bytes(head + vecs)
    from taskdrift.domain import NonFiniteError

    with pytest.raises(NonFiniteError):
        read_embedding_file(path)


def test_non_normalized_rows_are_normalized_on_read(tmp_path):
    head = b"EMB1" + struct.pack("<IIIB", 1, 4, 2, 0)
    vecs = np.array([[3, 4, 0, 0], [0, 0, 2, 0]], dtype="<f4").tobytes()
    path = tmp_path / "raw.emb"
    path.write_bytes(head + vecs)
    out = read_embedding_file(path)
    np.testing.assert_allclose(out[0].vectors[0], [0.6, 0.8, 0, 0], atol=1e-7)
    np.testing.assert_allclose(out[0].vectors[1], [0, 0, 1, 0], atol=1e-7)


def test_text_round_trip(tmp_path, rng):
    path = tmp_path / "stream.jsonl"
    batches = make_batches(rng, count=2, size=10, dim=8)
    write_embedding_file(path, batches)
    out = read_embedding_file(path, batch_size=10)
    assert len(out) == 2
    for orig, back in zip(batches, out):
        np.testing.assert_array_equal(np.asarray(orig.vectors), np.asarray(back.vectors))
        assert back.true_task == orig.true_task
    bad = tmp_path / "bad.jsonl"
    bad.write_text("not a record\n")
    with pytest.raises(BadMagicError):
        read_embedding_file(bad)


def played_orchestrator(small_config, small_specs, steps=(0, 1, 0)):
    orch = Orchestrator(small_config)
    for i, task in enumerate(steps):
        batch = generate_batch(small_specs[task], 100, seed=[14, i], batch_id=i)
        orch.online_step(batch)
        if orch.event_log[-1].kind is DecisionKind.NEW_TASK:
            orch.train_head(
                orch.event_log[-1].task_id,
                np.asarray(batch.vectors),
                np.arange(batch.size) % 2,
            )
    return orch


def test_snapshot_round_trip_preserves_next_step(small_config, small_specs):
    orch = played_orchestrator(small_config, small_specs)
    clone = restore_state(snapshot_state(orch))

    assert clone.num_tasks == orch.num_tasks
    assert clone.active_task == orch.active_task
    assert [r.to_dict() for r in clone.event_log] == [r.to_dict() for r in orch.event_log]
    np.testing.assert_array_equal(clone.classifier.exemplars, orch.classifier.exemplars)
    for t in range(orch.num_tasks):
        np.testing.assert_array_equal(clone.heads.get(t).weights, orch.heads.get(t).weights)

    probe = generate_batch(small_specs[1], 100, seed=77, batch_id=99)
    d1 = orch.online_step(probe)
    d2 = clone.online_step(probe)
    assert d1 == d2
    assert orch.event_log[-1].to_dict() == clone.event_log[-1].to_dict()


def test_snapshot_of_empty_state(small_config):
    orch = Orchestrator(small_config)
    clone = restore_state(snapshot_state(orch))
    assert clone.num_tasks == 0
    assert clone.active_task is None
    assert clone.event_log == []


def test_snapshot_is_byte_stable(small_config, small_specs):
    orch = played_orchestrator(small_config, small_specs)
    assert snapshot_state(orch) == snapshot_state(orch)


def test_corrupted_snapshot_detected(small_config, small_specs, tmp_path):
    orch = played_orchestrator(small_config, small_specs)
    blob = snapshot_state(orch)
    for pos in (0, 41, len(blob) - 1):
        corrupted = bytearray(blob)
        corrupted[pos] ^= 0xFF
        with pytest.raises((CorruptError, VersionMismatchError)):
            restore_state(bytes(corrupted))
    with pytest.raises(CorruptError):
        restore_state(b"")


def test_snapshot_version_mismatch(small_config):
    blob = bytearray(snapshot_state(Orchestrator(small_config)))
    struct.pack_into("<I", blob, 4, 99)
    with pytest.raises(VersionMismatchError):
        restore_state(bytes(blob))


def test_snapshot_file_round_trip(small_config, small_specs, tmp_path):
    orch = played_orchestrator(small_config, small_specs)
    path = tmp_path / "state.bin"
    save_snapshot(path, orch)
    clone = load_snapshot(path)
    assert clone.num_tasks == orch.num_tasks


def test_atomic_write_leaves_target_on_failure(tmp_path, monkeypatch):
    target = tmp_path / "data.bin"
    target.write_bytes(b"original")

    import taskdrift.emb_io as emb_io

    def boom(src, dst):
        raise OSError("simulated crash")

    monkeypatch.setattr(emb_io.os, "replace", boom)
    with pytest.raises(OSError):
        atomic_write_bytes(target, b"replacement")
    monkeypatch.undo()
    assert target.read_bytes() == b"original"
    assert list(tmp_path.iterdir()) == [target]  # no temp litter


def test_event_log_bytes_are_replayable(small_config, small_specs, tmp_path):
    log_a = played_orchestrator(small_config, small_specs).event_log
    log_b = played_orchestrator(small_config, small_specs).event_log
    assert events_to_jsonl(log_a) == events_to_jsonl(log_b)
    path = tmp_path / "events.jsonl"
    write_event_log(path, log_a)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == len(log_a)
    first = json.loads(lines[0])
    assert set(first) == {"batch_id", "kind", "task_id", "drift", "warning"}


def test_empty_file_rejected(tmp_path):
    path = tmp_path / "empty.emb"
    path.write_bytes(b"")
    with pytest.raises(TruncatedFileError):
        read_embedding_file(path)


def test_mixed_dims_cannot_be_rechunked(tmp_path, rng):
    from taskdrift.domain import DimensionMismatchError

    path = tmp_path / "mixed.emb"
    batches = [
        normalize_batch(rng.normal(size=(4, 8)), batch_id=0),
        normalize_batch(rng.normal(size=(4, 16)), batch_id=1),
    ]
    write_embedding_file(path, batches)
    assert [b.dim for b in read_embedding_file(path)] == [8, 16]  # per-record is fine
    with pytest.raises(DimensionMismatchError):
        read_embedding_file(path, batch_size=4)
