"""On-disk formats: embedding files, state snapshots, event logs.

Embedding interchange format (EMB1), little-endian throughout:

    magic   4 bytes  b"EMB1"
    version u32      1
    dim     u32
    count   u32
    labels  u8       1 if a label section follows the vectors
    vectors count * dim * f32, row-major
    labels  count * u32 task labels (only if the flag is set)

A file holds one or more records back to back; each record is one batch
unless a ``batch_size`` override re-chunks the concatenated rows. The text
alternative is one JSON object per line with a ``vector`` array and an
optional integer ``task``.

All writes are atomic (temp file + rename), so a crash mid-write never
leaves a partially valid file at the target path.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .clustering import ClusterParams
from .domain import (
    DecisionKind,
    DimensionMismatchError,
    EmbeddingBatch,
    EngineError,
    MismatchWarning,
    NonFiniteError,
    TaskSignature,
    UNIT_NORM_TOL,
    normalize_batch,
)
from .drift import DriftParams
from .orchestrator import (
    DriftComparison,
    EngineConfig,
    LinearHead,
    Orchestrator,
    StepRecord,
)

EMB_MAGIC = b"EMB1"
EMB_VERSION = 1
SNAPSHOT_MAGIC = b"TDS1"
SNAPSHOT_VERSION = 1


class BadMagicError(EngineError):
    """The file does not start with the expected magic bytes."""


class VersionUnsupportedError(EngineError):
    """The embedding file declares a version this reader cannot decode."""


class TruncatedFileError(EngineError):
    """The file ends before the declared payload; carries the byte offset."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class VersionMismatchError(EngineError):
    """The snapshot container version is not supported."""


class CorruptError(EngineError):
    """The snapshot container failed integrity checks."""


PathLike = Union[str, Path]


def atomic_write_bytes(path: PathLike, data: bytes) -> None:
    """Write ``data`` to ``path`` via a same-directory temp file and rename."""
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# embedding files
# ---------------------------------------------------------------------------


def _encode_record(vectors: np.ndarray, labels: Optional[np.ndarray]) -> bytes:
    count, dim = vectors.shape
    head = EMB_MAGIC + struct.pack(
        "<IIIB", EMB_VERSION, dim, count, 1 if labels is not None else 0
    )
    body = np.ascontiguousarray(vectors, dtype="<f4").tobytes()
    tail = b"" if labels is None else np.ascontiguousarray(labels, dtype="<u4").tobytes()
    return head + body + tail


def write_embedding_file(path: PathLike, batches: Sequence[EmbeddingBatch]) -> None:
    """Write one EMB1 record per batch (or the text form for .jsonl/.txt paths)."""
    if _is_text_path(path):
        write_embedding_text(path, batches)
        return
    chunks = []
    for batch in batches:
        labels = (
            None
            if batch.true_task is None
            else np.full(batch.size, batch.true_task, dtype=np.uint32)
        )
        chunks.append(_encode_record(batch.vectors, labels))
    atomic_write_bytes(path, b"".join(chunks))


def _is_text_path(path: PathLike) -> bool:
    return Path(path).suffix.lower() in {".jsonl", ".txt", ".json"}


def write_embedding_text(path: PathLike, batches: Sequence[EmbeddingBatch]) -> None:
    lines = []
    for batch in batches:
        for row in batch.vectors:
            rec: dict = {"vector": row.tolist()}
            if batch.true_task is not None:
                rec["task"] = int(batch.true_task)
            lines.append(json.dumps(rec))
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode())


def _decode_records(data: bytes) -> list[tuple[np.ndarray, Optional[np.ndarray]]]:
    records = []
    offset = 0
    total = len(data)
    while offset < total:
        if total - offset < 4:
            raise TruncatedFileError("incomplete record header", offset)
        magic = data[offset : offset + 4]
        if magic != EMB_MAGIC:
            raise BadMagicError(f"expected {EMB_MAGIC!r}, found {magic!r} at offset {offset}")
        offset += 4
        if total - offset < 13:
            raise TruncatedFileError("incomplete record header", offset)
        version, dim, count, has_labels = struct.unpack_from("<IIIB", data, offset)
        offset += 13
        if version != EMB_VERSION:
            raise VersionUnsupportedError(f"version {version} unsupported (expected {EMB_VERSION})")
        if dim == 0 or count == 0:
            raise EngineError(f"record at offset {offset} declares dim={dim}, count={count}")
        vec_bytes = 4 * dim * count
        if total - offset < vec_bytes:
            raise TruncatedFileError(
                f"vector section needs {vec_bytes} bytes, file ends early", total
            )
        vectors = (
            np.frombuffer(data, dtype="<f4", count=dim * count, offset=offset)
            .reshape(count, dim)
            .astype(np.float64)
        )
        offset += vec_bytes
        labels = None
        if has_labels:
            lab_bytes = 4 * count
            if total - offset < lab_bytes:
                raise TruncatedFileError(
                    f"label section needs {lab_bytes} bytes, file ends early", total
                )
            labels = np.frombuffer(data, dtype="<u4", count=count, offset=offset).astype(
                np.int64
            )
            offset += lab_bytes
        records.append((vectors, labels))
    return records


def _rows_to_batch(vectors: np.ndarray, labels: Optional[np.ndarray], batch_id: int) -> EmbeddingBatch:
    if not np.isfinite(vectors).all():
        raise NonFiniteError(f"batch {batch_id}: non-finite embedding values")
    true_task: Optional[int] = None
    if labels is not None and len(labels) and (labels == labels[0]).all():
        true_task = int(labels[0])
    norms = np.linalg.norm(vectors, axis=1)
    if np.abs(norms - 1.0).max() <= UNIT_NORM_TOL:
        # Conforming rows keep their exact bits so round-trips stay bit-exact.
        return EmbeddingBatch(batch_id=batch_id, vectors=vectors, true_task=true_task)
    return normalize_batch(vectors, batch_id=batch_id, true_task=true_task)


def read_embedding_file(
    path: PathLike, batch_size: Optional[int] = None
) -> list[EmbeddingBatch]:
    """Decode an EMB1 or line-delimited text file into embedding batches.

    Without ``batch_size``, each EMB1 record is one batch (a text file is a
    single batch). With it, all rows are concatenated and re-chunked. Rows
    already unit-norm are kept bit-exact; anything else is normalized at
    ingestion. A batch's ``true_task`` is set only when its label rows are
    uniform.
    """
    data = Path(path).read_bytes()
    if len(data) == 0:
        raise TruncatedFileError("empty file", 0)
    if data[:4] == EMB_MAGIC:
        records = _decode_records(data)
    else:
        records = _parse_text_records(data, path)

    if batch_size is None:
        return [
            _rows_to_batch(vectors, labels, batch_id)
            for batch_id, (vectors, labels) in enumerate(records)
        ]

    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    dims = {vectors.shape[1] for vectors, _ in records}
    if len(dims) > 1:
        raise DimensionMismatchError(
            f"records mix dims {sorted(dims)}; cannot re-chunk into one stream"
        )
    all_vecs = np.vstack([vectors for vectors, _ in records])
    if any(labels is not None for _, labels in records):
        all_labels = np.concatenate(
            [
                labels if labels is not None else np.full(len(vectors), -1, dtype=np.int64)
                for vectors, labels in records
            ]
        )
    else:
        all_labels = None
    batches = []
    for batch_id, start in enumerate(range(0, len(all_vecs), batch_size)):
        chunk = all_vecs[start : start + batch_size]
        chunk_labels = None if all_labels is None else all_labels[start : start + batch_size]
        if chunk_labels is not None and (chunk_labels < 0).any():
            chunk_labels = None
        batches.append(_rows_to_batch(chunk, chunk_labels, batch_id))
    return batches


def _parse_text_records(
    data: bytes, path: PathLike
) -> list[tuple[np.ndarray, Optional[np.ndarray]]]:
    try:
        text = data.decode()
    except UnicodeDecodeError as exc:
        raise BadMagicError(f"{path}: neither EMB1 nor utf-8 text") from exc
    rows: list[list[float]] = []
    labels: list[int] = []
    any_label = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            vec = rec["vector"]
        except (json.JSONDecodeError, TypeError, KeyError) as exc:
            raise BadMagicError(f"{path}:{lineno}: not a vector record") from exc
        rows.append([float(v) for v in vec])
        if "task" in rec and rec["task"] is not None:
            any_label = True
            labels.append(int(rec["task"]))
        else:
            labels.append(-1)
    if not rows:
        raise TruncatedFileError("no vector records in text file", len(data))
    vectors = np.asarray(rows, dtype=np.float64)
    lab = np.asarray(labels, dtype=np.int64) if any_label else None
    return [(vectors, lab)]


# ---------------------------------------------------------------------------
# event log
# ---------------------------------------------------------------------------


def events_to_jsonl(records: Iterable[StepRecord]) -> str:
    """One JSON object per line, stable field order; byte-identical on replay."""
    return "".join(json.dumps(r.to_dict()) + "\n" for r in records)


def write_event_log(path: PathLike, records: Iterable[StepRecord]) -> None:
    atomic_write_bytes(path, events_to_jsonl(records).encode())


# ---------------------------------------------------------------------------
# state snapshots
# ---------------------------------------------------------------------------


def _pack_array(arr: Optional[np.ndarray]) -> Optional[dict]:
    if arr is None:
        return None
    a = np.ascontiguousarray(arr, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode()}


def _unpack_array(obj: Optional[dict]) -> Optional[np.ndarray]:
    if obj is None:
        return None
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(obj["shape"]).astype(np.float64)


def _record_from_dict(d: dict) -> StepRecord:
    return StepRecord(
        batch_id=int(d["batch_id"]),
        kind=DecisionKind(d["kind"]),
        task_id=int(d["task_id"]),
        comparisons=tuple(
            DriftComparison(
                against_task=int(c["against"]),
                statistic=float(c["statistic"]),
                threshold=float(c["threshold"]),
                score=float(c["score"]),
                drifted=bool(c["drifted"]),
            )
            for c in d["drift"]
        ),
        warning=(
            None
            if d.get("warning") is None
            else MismatchWarning(
                classifier_predicted=int(d["warning"]["classifier_predicted"]),
                memory_matched=int(d["warning"]["memory_matched"]),
            )
        ),
    )


def snapshot_state(orch: Orchestrator) -> bytes:
    """Serialize the orchestrator losslessly into a version-tagged container."""
    cfg = orch.config
    payload = {
        "config": {
            "dim": cfg.dim,
            "k": cfg.k,
            "cluster": {"eps": cfg.cluster.eps, "min_pts": cfg.cluster.min_pts},
            "drift": {
                "kernel_bandwidth": cfg.drift.kernel_bandwidth,
                "permutations": cfg.drift.permutations,
                "significance": cfg.drift.significance,
                "fixed_threshold": cfg.drift.fixed_threshold,
                "rng_seed": cfg.drift.rng_seed,
            },
            "head_learning_rate": cfg.head_learning_rate,
            "head_iterations": cfg.head_iterations,
            "seed": cfg.seed,
        },
        "signatures": [
            {
                "task_id": sig.task_id,
                "k": sig.k,
                "created_at": sig.created_at,
                "centroids": _pack_array(sig.centroids),
                "neighbor_sets": [_pack_array(s) for s in sig.neighbor_sets],
            }
            for sig in orch.memory.signatures
        ],
        "heads": {
            str(task_id): {
                "seed": head.seed,
                "weights": _pack_array(head.weights),
                "bias": _pack_array(head.bias),
            }
            for task_id, head in orch.heads.heads.items()
        },
        "active_task": orch.active_task,
        "event_log": [r.to_dict() for r in orch.event_log],
    }
    body = json.dumps(payload).encode()
    digest = hashlib.sha256(body).digest()
    return SNAPSHOT_MAGIC + struct.pack("<I", SNAPSHOT_VERSION) + digest + body


def restore_state(blob: bytes) -> Orchestrator:
    """Rebuild an orchestrator from :func:`snapshot_state` output.

    Raises:
        VersionMismatchError: the container declares an unsupported version.
        CorruptError: bad magic, failed digest, or undecodable payload.
    """
    if len(blob) < 40:
        raise CorruptError("snapshot too short")
    if blob[:4] != SNAPSHOT_MAGIC:
        raise CorruptError(f"bad snapshot magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != SNAPSHOT_VERSION:
        raise VersionMismatchError(f"snapshot version {version} unsupported")
    digest, body = blob[8:40], blob[40:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptError("snapshot digest mismatch")
    try:
        payload = json.loads(body.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptError("snapshot payload undecodable") from exc

    c = payload["config"]
    config = EngineConfig(
        dim=int(c["dim"]),
        k=int(c["k"]),
        cluster=ClusterParams(eps=float(c["cluster"]["eps"]), min_pts=int(c["cluster"]["min_pts"])),
        drift=DriftParams(
            kernel_bandwidth=c["drift"]["kernel_bandwidth"],
            permutations=int(c["drift"]["permutations"]),
            significance=float(c["drift"]["significance"]),
            fixed_threshold=c["drift"]["fixed_threshold"],
            rng_seed=int(c["drift"]["rng_seed"]),
        ),
        head_learning_rate=float(c["head_learning_rate"]),
        head_iterations=int(c["head_iterations"]),
        seed=int(c["seed"]),
    )
    orch = Orchestrator(config)
    for s in payload["signatures"]:
        sig = TaskSignature(
            task_id=int(s["task_id"]),
            centroids=_unpack_array(s["centroids"]),
            neighbor_sets=tuple(_unpack_array(n) for n in s["neighbor_sets"]),
            k=int(s["k"]),
            created_at=int(s["created_at"]),
        )
        orch.memory.append(sig)
        orch.classifier.fit_increment(sig)
    for task_str, h in payload["heads"].items():
        head = LinearHead(config.dim, seed=int(h["seed"]))
        head.weights = _unpack_array(h["weights"])
        head.bias = _unpack_array(h["bias"])
        orch.heads.add(int(task_str), head)
    orch.active_task = None if payload["active_task"] is None else int(payload["active_task"])
    orch.event_log = [_record_from_dict(d) for d in payload["event_log"]]
    return orch


def save_snapshot(path: PathLike, orch: Orchestrator) -> None:
    atomic_write_bytes(path, snapshot_state(orch))


def load_snapshot(path: PathLike) -> Orchestrator:
    return restore_state(Path(path).read_bytes())
