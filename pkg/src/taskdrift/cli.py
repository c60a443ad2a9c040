"""Command-line surface for the engine.

Verbs: ``run`` (scenario or embedding-file stream), ``drift-matrix``,
``recall-report``, ``snapshot``, ``restore``, ``gen-synthetic``. Every
report path writes delimited output plus a rendered PNG next to it.

Seeds resolve as: ``--seed`` flag, else the ``TADIL_SEED`` environment
variable, else 0.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import report as rpt
from .clustering import ClusterParams
from .domain import EngineError
from .drift import DriftParams
from .emb_io import (
    load_snapshot,
    read_embedding_file,
    save_snapshot,
    write_embedding_file,
    write_event_log,
)
from .orchestrator import EngineConfig, Orchestrator
from .synth import (
    Scenario,
    drift_confusion_matrix,
    generate_batch,
    orthogonal_task_specs,
    recall_report,
    replay_batches,
    run_scenario,
    signature_pair_for_spec,
)
from .task_classifier import TaskClassifier

SEED_ENV = "TADIL_SEED"


def _add_shared_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eps", type=float, default=0.3, help="DBSCAN cosine-distance radius")
    p.add_argument("--min-pts", type=int, default=10, help="DBSCAN core-point density")
    p.add_argument("--k", type=int, default=10, help="neighbors kept per centroid")
    p.add_argument("--dim", type=int, default=512, help="embedding dimensionality")
    p.add_argument("--batch-size", type=int, default=200, help="rows per batch")
    p.add_argument("--permutations", type=int, default=100, help="permutation-test draws")
    p.add_argument("--significance", type=float, default=0.05, help="drift significance level")
    p.add_argument(
        "--fixed-threshold",
        type=float,
        default=None,
        help="fixed drift threshold; bypasses permutation calibration",
    )
    p.add_argument("--seed", type=int, default=None, help=f"RNG seed (default: ${SEED_ENV} or 0)")
    p.add_argument("--out-dir", type=Path, default=Path("out"), help="output directory")


def _resolve_seed(args: argparse.Namespace) -> int:
    if args.seed is not None:
        return args.seed
    return int(os.environ.get(SEED_ENV, "0"))


def _config(args: argparse.Namespace) -> EngineConfig:
    seed = _resolve_seed(args)
    return EngineConfig(
        dim=args.dim,
        k=args.k,
        cluster=ClusterParams(eps=args.eps, min_pts=args.min_pts),
        drift=DriftParams(
            permutations=args.permutations,
            significance=args.significance,
            fixed_threshold=args.fixed_threshold,
            rng_seed=seed,
        ),
        seed=seed,
    )


def _parse_sequence(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in text.replace(",", " ").split())
    except ValueError as exc:
        raise SystemExit(f"bad --sequence {text!r}: {exc}")


def _outdir(args: argparse.Namespace) -> Path:
    args.out_dir.mkdir(parents=True, exist_ok=True)
    return args.out_dir


def _run_stream(args: argparse.Namespace, save_state: Path | None = None) -> int:
    config = _config(args)
    out = _outdir(args)
    orch = Orchestrator(config)
    if args.input is not None:
        batches = read_embedding_file(args.input, batch_size=args.batch_size)
        rep = replay_batches(batches, config, orchestrator=orch)
    elif args.sequence is not None:
        seq = _parse_sequence(args.sequence)
        specs = orthogonal_task_specs(
            max(seq) + 1, dim=args.dim, spread=args.spread, num_classes=args.classes
        )
        scenario = Scenario(
            sequence=seq,
            batches_per_step=args.batches_per_step,
            batch_size=args.batch_size,
            seed=_resolve_seed(args),
        )
        rep = run_scenario(scenario, specs, config, orchestrator=orch)
    else:
        raise SystemExit("run needs --input FILE or --sequence IDS")

    write_event_log(out / "events.jsonl", rep.events)
    rpt.write_scenario_json(out / "report.json", rep)
    rpt.render_scenario_timeline(out / "timeline.png", rep)
    if save_state is not None:
        save_snapshot(save_state, orch)
        print(f"state -> {save_state}")
    acc = "n/a" if rep.task_id_accuracy is None else f"{rep.task_id_accuracy:.3f}"
    print(
        f"steps={len(rep.steps)} new_tasks={rep.new_task_count} "
        f"warnings={rep.warning_count} task_id_accuracy={acc}"
    )
    print(f"events -> {out / 'events.jsonl'}")
    print(f"report -> {out / 'report.json'}, timeline -> {out / 'timeline.png'}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    return _run_stream(args, save_state=args.save_state)


def cmd_snapshot(args: argparse.Namespace) -> int:
    return _run_stream(args, save_state=args.state)


def cmd_restore(args: argparse.Namespace) -> int:
    orch = load_snapshot(args.state)
    print(
        f"restored: tasks={orch.num_tasks} active_task={orch.active_task} "
        f"events={len(orch.event_log)}"
    )
    if args.input is not None:
        out = _outdir(args)
        batches = read_embedding_file(args.input, batch_size=args.batch_size)
        rep = replay_batches(batches, orch.config, orchestrator=orch)
        write_event_log(out / "events.jsonl", orch.event_log)
        rpt.write_scenario_json(out / "report.json", rep)
        rpt.render_scenario_timeline(out / "timeline.png", rep)
        print(f"continued {len(batches)} batches: now tasks={orch.num_tasks}")
        if args.save_state is not None:
            save_snapshot(args.save_state, orch)
            print(f"state -> {args.save_state}")
    return 0


def cmd_drift_matrix(args: argparse.Namespace) -> int:
    config = _config(args)
    out = _outdir(args)
    seed = _resolve_seed(args)
    if args.input is not None:
        sigs, alts, labels = _signatures_from_file(args, config)
    else:
        specs = orthogonal_task_specs(args.tasks, dim=args.dim, spread=args.spread)
        pairs = [
            signature_pair_for_spec(spec, config, args.batch_size, seed) for spec in specs
        ]
        sigs = [p[0] for p in pairs]
        alts = [p[1] for p in pairs]
        labels = [spec.task_id for spec in specs]
    matrix = drift_confusion_matrix(sigs, alts, config.drift)
    rpt.write_matrix_csv(out / "drift_matrix.csv", matrix, labels)
    rpt.render_drift_matrix(out / "drift_matrix.png", matrix, labels)
    diag = np.diag(matrix)
    off = matrix[~np.eye(len(matrix), dtype=bool)]
    print(f"diagonal (same task): min={diag.min():+.4f} max={diag.max():+.4f}")
    print(f"off-diagonal (cross task): min={off.min():+.4f} max={off.max():+.4f}")
    ok = bool((diag < 0).all() and (off > 0).all())
    print(f"sign pattern {'OK' if ok else 'VIOLATED'}")
    print(f"matrix -> {out / 'drift_matrix.csv'}, figure -> {out / 'drift_matrix.png'}")
    return 0 if ok else 1


def _signatures_from_file(args: argparse.Namespace, config: EngineConfig):
    from .signature import build_signature

    batches = read_embedding_file(args.input)
    by_task: dict[int, list] = {}
    for b in batches:
        if b.true_task is None:
            raise SystemExit("drift-matrix --input needs per-record task labels")
        by_task.setdefault(int(b.true_task), []).append(b)
    labels = sorted(by_task)
    short = [t for t, lst in by_task.items() if len(lst) < 2]
    if short:
        raise SystemExit(f"tasks {short} need two batches each (signature + alternate)")
    sigs, alts = [], []
    for t in labels:
        sigs.append(build_signature(by_task[t][0], config.cluster, k=config.k, task_id=t))
        alts.append(build_signature(by_task[t][1], config.cluster, k=config.k, task_id=t))
    return sigs, alts, labels


def cmd_recall_report(args: argparse.Namespace) -> int:
    config = _config(args)
    out = _outdir(args)
    seed = _resolve_seed(args)
    specs = orthogonal_task_specs(args.tasks, dim=args.dim, spread=args.spread)
    clf = TaskClassifier(config.dim)
    from .signature import build_signature

    reports = {}
    for stage_size in range(1, args.tasks + 1):
        spec = specs[stage_size - 1]
        batch = generate_batch(spec, args.batch_size, seed=[seed, spec.task_id, 0])
        clf.fit_increment(
            build_signature(batch, config.cluster, k=config.k, task_id=spec.task_id)
        )
        if stage_size < 2:
            continue
        eval_batches = [
            generate_batch(
                specs[i % stage_size],
                args.batch_size,
                seed=[seed, 1000 + stage_size, i],
                batch_id=i,
            )
            for i in range(args.eval_batches)
        ]
        reports[stage_size] = recall_report(clf, eval_batches)
    rpt.write_recall_csv(out / "recall_report.csv", reports)
    rpt.render_recall_bars(out / "recall_report.png", reports)
    worst = min(
        (r for rep in reports.values() for r in rep.per_task_recall.values()), default=1.0
    )
    flagged = sorted({t for rep in reports.values() for t in rep.insufficient_tasks})
    print(f"stages={sorted(reports)} worst_recall={worst:.3f} flagged_tasks={flagged}")
    print(f"table -> {out / 'recall_report.csv'}, figure -> {out / 'recall_report.png'}")
    return 0 if not flagged else 1


def cmd_gen_synthetic(args: argparse.Namespace) -> int:
    seed = _resolve_seed(args)
    if args.sequence is not None:
        seq = _parse_sequence(args.sequence)
    else:
        seq = tuple(t for t in range(args.tasks) for _ in range(args.batches))
    specs = orthogonal_task_specs(max(seq) + 1, dim=args.dim, spread=args.spread)
    by_id = {s.task_id: s for s in specs}
    batches = []
    for i, task in enumerate(seq):
        batch = generate_batch(by_id[task], args.batch_size, seed=[seed, i], batch_id=i)
        if args.no_labels:
            batch = type(batch)(batch_id=i, vectors=batch.vectors, true_task=None)
        batches.append(batch)
    write_embedding_file(args.out, batches)
    total = sum(b.size for b in batches)
    print(f"wrote {len(batches)} batches ({total} rows, dim={args.dim}) -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taskdrift",
        description="Online task identification over embedding streams",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="process a stream and emit events + reports")
    p_run.add_argument("--input", type=Path, default=None, help="EMB1 or .jsonl embedding file")
    p_run.add_argument("--sequence", type=str, default=None, help="synthetic task sequence, e.g. 0,1,2,1")
    p_run.add_argument("--spread", type=float, default=0.05, help="synthetic blob spread")
    p_run.add_argument("--classes", type=int, default=2, help="classes per synthetic task")
    p_run.add_argument("--batches-per-step", type=int, default=1)
    p_run.add_argument("--save-state", type=Path, default=None, help="also snapshot final state")
    _add_shared_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_snap = sub.add_parser("snapshot", help="process a stream and save the final state")
    p_snap.add_argument("--input", type=Path, default=None)
    p_snap.add_argument("--sequence", type=str, default=None)
    p_snap.add_argument("--spread", type=float, default=0.05)
    p_snap.add_argument("--classes", type=int, default=2)
    p_snap.add_argument("--batches-per-step", type=int, default=1)
    p_snap.add_argument("--state", type=Path, required=True, help="snapshot output path")
    _add_shared_flags(p_snap)
    p_snap.set_defaults(func=cmd_snapshot)

    p_rest = sub.add_parser("restore", help="load a state snapshot; optionally continue a stream")
    p_rest.add_argument("--state", type=Path, required=True)
    p_rest.add_argument("--input", type=Path, default=None, help="continue with this stream")
    p_rest.add_argument("--save-state", type=Path, default=None)
    _add_shared_flags(p_rest)
    p_rest.set_defaults(func=cmd_restore)

    p_mat = sub.add_parser("drift-matrix", help="pairwise drift scores across tasks")
    p_mat.add_argument("--tasks", type=int, default=6, help="synthetic task count")
    p_mat.add_argument("--spread", type=float, default=0.05)
    p_mat.add_argument("--input", type=Path, default=None, help="labeled embedding file instead")
    _add_shared_flags(p_mat)
    p_mat.set_defaults(func=cmd_drift_matrix)

    p_rec = sub.add_parser("recall-report", help="per-task recall per classifier stage")
    p_rec.add_argument("--tasks", type=int, default=6)
    p_rec.add_argument("--spread", type=float, default=0.05)
    p_rec.add_argument("--eval-batches", type=int, default=12, help="eval batches per stage")
    _add_shared_flags(p_rec)
    p_rec.set_defaults(func=cmd_recall_report)

    p_gen = sub.add_parser("gen-synthetic", help="write a synthetic EMB1 embedding file")
    p_gen.add_argument("--tasks", type=int, default=6)
    p_gen.add_argument("--batches", type=int, default=2, help="batches per task (without --sequence)")
    p_gen.add_argument("--sequence", type=str, default=None)
    p_gen.add_argument("--spread", type=float, default=0.05)
    p_gen.add_argument("--no-labels", action="store_true")
    p_gen.add_argument("--out", type=Path, required=True)
    _add_shared_flags(p_gen)
    p_gen.set_defaults(func=cmd_gen_synthetic)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (EngineError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
