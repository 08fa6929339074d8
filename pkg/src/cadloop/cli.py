"""``cadloop`` command line.

Exit codes: 0 success, 2 usage or input error, 3 pipeline error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import config as config_mod
from .corpus import ManifestMismatch, generate_corpus, load_corpus, load_programs, read_manifest
from .dsl import DslError, DslRenderer, GenerationExhausted, parse
from .mesh import MeshError, TriangleMesh
from .mesh_io import load_mesh, save_mesh
from .metrics import MetricReport, Scorer, aggregate, evaluate_candidate

EXIT_OK, EXIT_USAGE, EXIT_PIPELINE = 0, 2, 3


class UsageError(ValueError):
    pass


def _complexity(text: str) -> int:
    value = int(text)
    if not 1 <= value <= 8:
        raise argparse.ArgumentTypeError("complexity must be in [1, 8]")
    return value


def _write_run_files(out: Path, cfg: dict, outputs: list[Path]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved").write_text(config_mod.dump(cfg), encoding="utf-8")
    files = {}
    for p in sorted(set(outputs)):
        if p.is_file():
            files[p.relative_to(out).as_posix()] = hashlib.sha256(p.read_bytes()).hexdigest()
    (out / "manifest.json").write_text(json.dumps({"files": files}, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _resolve(args, flags: dict) -> dict:
    merged = dict(config_mod.parse_overrides(args.set or []))
    merged.update({k: v for k, v in flags.items() if v is not None})
    return config_mod.resolve(args.config, merged)


def _make_editor(cfg: dict, gt: str | None):
    from .loop import NoisyOracleEditor, OracleEditor, RemoteEditor, ScriptedEditor

    kind = cfg["editor.kind"]
    if kind in ("oracle", "noisy"):
        if gt is None:
            raise UsageError(f"editor {kind} needs a ground-truth program")
        if kind == "oracle":
            return OracleEditor(gt)
        return NoisyOracleEditor(gt, float(cfg["editor.magnitude"]), int(cfg["editor.seed"]), float(cfg["editor.decay"]))
    if kind == "scripted":
        if not cfg["editor.script"]:
            raise UsageError("editor.script is required for the scripted editor")
        return ScriptedEditor.from_file(cfg["editor.script"])
    if kind == "remote":
        if not cfg["editor.endpoint"]:
            raise UsageError("editor.endpoint is required for the remote editor")
        return RemoteEditor(str(cfg["editor.endpoint"]), float(cfg["editor.timeout"]), int(cfg["editor.retries"]))
    raise UsageError(f"unknown editor kind {kind!r}")


# --- commands -----------------------------------------------------------------


def cmd_gen_corpus(args) -> int:
    cfg = _resolve(
        args,
        {
            "corpus.count": args.count,
            "corpus.complexity": args.complexity,
            "corpus.seed": args.seed,
            "render.resolution": args.resolution,
            "run.out_dir": args.out,
        },
    )
    if not 1 <= int(cfg["corpus.complexity"]) <= 8:
        raise UsageError("complexity must be in [1, 8]")
    out = Path(cfg["run.out_dir"])
    rows = generate_corpus(int(cfg["corpus.count"]), int(cfg["corpus.complexity"]), int(cfg["corpus.seed"]), out, int(cfg["render.resolution"]))
    outputs = [out / "manifest.jsonl"] + [out / r["program"] for r in rows] + [out / r["mesh"] for r in rows]
    _write_run_files(out, cfg, outputs)
    print(f"wrote {len(rows)} programs to {out}")
    return EXIT_OK


def cmd_scan(args) -> int:
    from .scan import ScanConfig, simulate_scan

    cfg = _resolve(args, {"run.out_dir": args.out, "scan.seed": args.seed})
    mesh = load_mesh(args.mesh)
    scfg = ScanConfig.from_mapping(config_mod.section(cfg, "scan"))
    result = simulate_scan(mesh, scfg)
    out = Path(cfg["run.out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    mesh_path = save_mesh(result.scan_mesh, out / "scan.stl")
    meta = {
        "per_view_counts": result.per_view_counts,
        "merged_count": result.merged_count,
        "triangles": result.scan_mesh.n_triangles,
        "boundary_edges": result.scan_mesh.boundary_edge_count(),
    }
    meta_path = out / "scan.json"
    meta_path.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    _write_run_files(out, cfg, [mesh_path, meta_path])
    print(json.dumps(meta))
    return EXIT_OK


def _load_targets(root: Path) -> dict[str, Path]:
    try:
        rows = read_manifest(root)
        return {r["id"]: root / r["mesh"] for r in rows if r.get("mesh")}
    except FileNotFoundError:
        files = sorted(p for p in root.iterdir() if p.suffix.lower() in (".stl", ".obj", ".ply")) if root.is_dir() else []
        if not files:
            raise
        return {p.stem: p for p in files}


def cmd_eval(args) -> int:
    cfg = _resolve(
        args,
        {"render.resolution": args.resolution, "metrics.iou_resolution": args.iou_resolution, "run.out_dir": args.out},
    )
    targets = _load_targets(Path(args.targets))
    programs = load_programs(Path(args.programs))
    if not targets or not programs:
        raise UsageError("nothing to evaluate")
    if set(targets) != set(programs):
        missing = sorted(set(targets) ^ set(programs))
        raise ManifestMismatch(f"ids differ between targets and programs: {missing[:5]}")
    renderer = DslRenderer(int(cfg["render.resolution"]))
    rows, reports = [], []
    for tid in sorted(targets):
        scorer = Scorer(
            load_mesh(targets[tid]),
            n=int(cfg["metrics.cd_samples"]),
            seed=int(cfg["metrics.cd_seed"]),
            iou_resolution=int(cfg["metrics.iou_resolution"]),
        )
        rep = evaluate_candidate(scorer, programs[tid], renderer)
        reports.append(rep)
        rows.append({"id": tid, "valid": rep.valid, "reason": rep.reason, "cd_times_1e3": rep.cd_times_1e3, "iou_percent": rep.iou_percent})
    agg = aggregate(reports)
    table = agg.to_table("eval")
    print(table, end="")
    if cfg["run.out_dir"] and args.out:
        out = Path(cfg["run.out_dir"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(agg.to_json() + "\n", encoding="utf-8")
        (out / "report.txt").write_text(table, encoding="utf-8")
        (out / "per_item.jsonl").write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
        _write_run_files(out, cfg, [out / "report.json", out / "report.txt", out / "per_item.jsonl"])
    return EXIT_OK


def _loop_target(args) -> tuple[str, TriangleMesh, str | None]:
    if args.corpus:
        items = load_corpus(args.corpus)
        if args.id not in items:
            raise UsageError(f"id {args.id!r} not in corpus")
        item = items[args.id]
        return item.target_id, item.mesh, item.program
    if not args.target:
        raise UsageError("give --target MESH or --corpus DIR --id ID")
    gt = Path(args.gt).read_text(encoding="utf-8") if args.gt else None
    return Path(args.target).stem, load_mesh(args.target), gt


def cmd_loop(args) -> int:
    from .loop import BeamConfig, TargetContext, Timeout, run_loop, run_scan_track
    from .views import compose_overlay, encode_views

    cfg = _resolve(
        args,
        {
            "editor.kind": args.editor,
            "loop.mode": args.mode,
            "loop.N": args.N,
            "loop.s": args.s,
            "loop.modality": args.modality,
            "loop.scan": True if args.scan else None,
            "editor.endpoint": args.endpoint,
            "run.out_dir": args.out,
        },
    )
    tid, target, gt = _loop_target(args)
    if gt is not None:
        parse(gt)
    editor = _make_editor(cfg, gt)
    bcfg = BeamConfig(
        N=int(cfg["loop.N"]),
        s=int(cfg["loop.s"]),
        stop_threshold=float(cfg["loop.stop_threshold"]),
        modality=str(cfg["loop.modality"]),
        feed_best=bool(cfg["loop.feed_best"]),
        workers=int(cfg["run.workers"]),
        seed=int(cfg["loop.seed"]),
    )
    renderer = DslRenderer(int(cfg["render.resolution"]))
    scorer_kw = dict(
        cd_samples=int(cfg["metrics.cd_samples"]), cd_seed=int(cfg["metrics.cd_seed"]), iou_resolution=int(cfg["metrics.iou_resolution"])
    )
    out = Path(cfg["run.out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    mode = str(cfg["loop.mode"])
    if cfg["loop.scan"]:
        from .scan import ScanConfig, simulate_scan

        scan = simulate_scan(target, ScanConfig.from_mapping(config_mod.section(cfg, "scan"))).scan_mesh
        outputs.append(save_mesh(scan, out / "scan.stl"))
        ctx = TargetContext(scan, tid, **scorer_kw)
        result = run_scan_track(target, ctx, editor, renderer, bcfg, mode)
        trace, report = result.trace, result.report
    else:
        ctx = TargetContext(target, tid, **scorer_kw)
        trace = run_loop(ctx, editor, renderer, bcfg, mode)
        best = trace.best_so_far
        report = aggregate([best.report if best else MetricReport.invalid("no valid candidate")])
    trace_path = out / "trace.json"
    trace_path.write_text(trace.to_json() + "\n", encoding="utf-8")
    report_path = out / "report.json"
    report_path.write_text(report.to_json() + "\n", encoding="utf-8")
    outputs += [trace_path, report_path]
    shown = ctx.grid
    (out / "overlays").mkdir(exist_ok=True)
    for t, best in enumerate(trace.best_per_step, 1):
        pred = None if best is None or best.mesh is None else encode_views(best.mesh)
        path = out / "overlays" / f"step_{t:02d}.png"
        compose_overlay(shown, pred).save_png(path)
        outputs.append(path)
    _write_run_files(out, cfg, outputs)
    print(report.to_table(f"{mode} t={len(trace.best_per_step)}"), end="")
    print(f"render_count={trace.render_count}")
    errors = [c.report.reason for step in trace.steps for c in step if c.report.reason.startswith("editor_error")]
    if errors and not trace.has_best and any("Timeout" in e for e in errors):
        raise Timeout(errors[0])
    return EXIT_OK


def cmd_rollouts(args) -> int:
    from .rollout import (
        EvidenceStore,
        SplitConfig,
        emission_order,
        rollout,
        split_corpus,
        stage_a_records,
        stage_mix_records,
        write_jsonl,
    )

    cfg = _resolve(args, {"editor.kind": args.editor, "run.out_dir": args.out})
    corpus = load_corpus(args.corpus)
    fractions = config_mod.float_list(cfg["rollout.fractions"])
    d1, d2, d3 = split_corpus(sorted(corpus), SplitConfig(tuple(fractions), int(cfg["rollout.split_seed"])))  # type: ignore[arg-type]
    out = Path(cfg["run.out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    store = EvidenceStore(out / "evidence", relative_to=out)
    modality = str(cfg["rollout.modality"])
    seed = int(cfg["rollout.seed"])
    renderer = DslRenderer(int(cfg["render.resolution"]))
    if args.stage == "A":
        records = stage_a_records(d1, corpus, store, modality, seed)
    else:
        split = d2 if args.stage == "B" else d3
        depth = args.rollout_depth or (1 if args.stage == "B" else 2)

        class _PerTarget:
            # the oracle-style editors are built per target from its ground truth
            def __call__(self, ev, mode="greedy", seed=0, index=0):
                return _make_editor(cfg, corpus[ev.target_id].program)(ev, mode=mode, seed=seed, index=index)

        editor = _PerTarget() if cfg["editor.kind"] in ("oracle", "noisy") else _make_editor(cfg, None)
        rolls = rollout(editor, split, depth, seed, corpus, renderer, modality)
        records = stage_mix_records(args.stage, split, rolls, corpus, store, modality, seed)
    rec_path = out / "records.jsonl"
    n = write_jsonl(records, rec_path)
    weights = config_mod.float_list(cfg["rollout.weights"])
    order = emission_order(records, seed, {t: w for t, w in enumerate(weights, 1)})
    order_path = out / "emission_order.json"
    order_path.write_text(json.dumps(order) + "\n", encoding="utf-8")
    evidence = sorted(p for p in (out / "evidence").rglob("*") if p.is_file())
    _write_run_files(out, cfg, [rec_path, order_path, *evidence])
    print(f"wrote {n} stage {args.stage} records to {rec_path}")
    return EXIT_OK


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cadloop", description="Closed-loop CAD program refinement harness.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key=value config file (defaults < file < flags)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key; repeatable")
        sp.add_argument("--out", help="output directory")

    g = sub.add_parser("gen-corpus", help="generate random programs and their meshes")
    common(g)
    g.add_argument("--count", type=int)
    g.add_argument("--complexity", type=_complexity)
    g.add_argument("--seed", type=int)
    g.add_argument("--resolution", type=int)
    g.set_defaults(func=cmd_gen_corpus)

    s = sub.add_parser("scan", help="simulate a scan of a mesh")
    common(s)
    s.add_argument("mesh")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_scan)

    e = sub.add_parser("eval", help="score programs against target meshes")
    common(e)
    e.add_argument("--targets", required=True, help="corpus directory or directory of meshes")
    e.add_argument("--programs", required=True, help="corpus directory or directory of .cadl files")
    e.add_argument("--resolution", type=int)
    e.add_argument("--iou-resolution", type=int)
    e.set_defaults(func=cmd_eval)

    lp = sub.add_parser("loop", help="run greedy or beam refinement on one target")
    common(lp)
    lp.add_argument("--corpus")
    lp.add_argument("--id")
    lp.add_argument("--target", help="target mesh file")
    lp.add_argument("--gt", help="ground-truth program file for oracle editors")
    lp.add_argument("--editor", choices=["oracle", "noisy", "scripted", "remote"])
    lp.add_argument("--mode", choices=["greedy", "beam"])
    lp.add_argument("--modality", choices=["image", "pointcloud", "cross_modal"])
    lp.add_argument("-N", type=int)
    lp.add_argument("-s", type=int)
    lp.add_argument("--scan", action="store_true", help="select on a simulated scan, report on the clean mesh")
    lp.add_argument("--endpoint")
    lp.set_defaults(func=cmd_loop)

    r = sub.add_parser("rollouts", help="emit curriculum records")
    common(r)
    r.add_argument("--stage", choices=["A", "B", "C"], required=True)
    r.add_argument("--corpus", required=True)
    r.add_argument("--editor", choices=["oracle", "noisy", "scripted", "remote"])
    r.add_argument("--rollout-depth", type=int, choices=[1, 2])
    r.set_defaults(func=cmd_rollouts)
    return p


def main(argv: list[str] | None = None) -> int:
    from .loop import EditorError
    from .rollout import EmptySplit, IoError, MissingGroundTruth, MissingRollout, SchemaError
    from .scan import ScanError
    from .views import ViewError

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, config_mod.ConfigError, ManifestMismatch, FileNotFoundError, MeshError, DslError, EmptySplit, MissingGroundTruth) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ScanError, GenerationExhausted, MissingRollout, EditorError, ViewError, SchemaError, IoError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
