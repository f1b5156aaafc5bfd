"""Command-line interface.

Subcommands: render (one frame to PPM), augment (batch dataset generation),
curate (constant-velocity ADE report), align-demo (alignment training
report), validate (load + invariant check).  Errors print one JSON object to
stderr and exit nonzero, so callers can parse failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import batch as batch_mod
from .align import LossWeights, run_demo_with_data
from .augment import ADE_THRESHOLD, curate, extract_clips
from .batch import RunConfig, default_workers, run_batch
from .images import save_depth, save_png, save_ppm
from .raster import RenderConfig, render_frame
from .scene import interpolate, carrier_rig
from .sceneio import LogError, load_log, scene_frame_at


def _fail(kind: str, message: str, code: int = 1) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def _render_config(args) -> RenderConfig:
    return RenderConfig(
        face_mode=args.face_mode,
        depth_decay=not args.no_depth_decay,
        background=args.background,
        d_max=args.d_max,
        line_width=args.line_width,
        draw_wireframe=args.wireframe,
    )


def _add_render_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--face-mode", choices=["colored", "transparent"],
                   default="colored")
    p.add_argument("--no-depth-decay", action="store_true")
    p.add_argument("--background", choices=["black", "sky_ground"],
                   default="black")
    p.add_argument("--d-max", type=float, default=80.0)
    p.add_argument("--line-width", type=float, default=2.0)
    p.add_argument("--wireframe", action="store_true")


def _cmd_render(args) -> int:
    log = load_log(args.log)
    cfg = _render_config(args)
    track = log.track(args.agent)
    t = args.time if args.time is not None else log.frame_timestamps[args.frame_index]
    carrier = interpolate(track.trajectory, t)
    rigs = tuple(carrier_rig(m, carrier) for m in log.mounts)
    frame = scene_frame_at(log, t, rigs, exclude_agent=args.agent)
    rig_index = next(
        (i for i, m in enumerate(log.mounts) if m.name == args.rig), None
    )
    if rig_index is None:
        return _fail("bad-argument", f"no camera named {args.rig!r} in log")
    fb = render_frame(frame, rig_index, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix == ".png":
        save_png(fb, out)
    else:
        save_ppm(fb, out)
    if args.depth_out:
        save_depth(fb, args.depth_out)
    return 0


def _cmd_augment(args) -> int:
    logs = [load_log(p) for p in args.logs]
    if args.config:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        doc.setdefault("out_dir", args.out)
        if args.out:
            doc["out_dir"] = args.out
        if args.seed is not None:
            doc["seed"] = args.seed
        if args.workers is not None:
            doc["workers"] = args.workers
        config = RunConfig.from_json(doc)
    else:
        if not args.out:
            return _fail("bad-argument", "--out is required without --config")
        config = RunConfig(
            out_dir=args.out,
            seed=args.seed if args.seed is not None else 0,
            workers=args.workers if args.workers is not None else default_workers(),
            fraction_perturbed=args.fraction_perturbed,
            render=_render_config(args),
        )
    manifest = run_batch(config, logs)
    print(manifest)
    return 0


def _cmd_curate(args) -> int:
    log = load_log(args.log)
    report = []
    for track in log.tracks:
        if args.agent and track.agent_id != args.agent:
            continue
        for clip in extract_clips(track, log.log_id):
            kept = bool(curate([clip], args.threshold))
            report.append({
                "log_id": clip.log_id,
                "agent_id": clip.agent_id,
                "split_t": clip.split_t,
                "cv_ade": clip.cv_ade,
                "valid": clip.valid,
                "invalid_reason": clip.invalid_reason,
                "kept": kept,
            })
    text = json.dumps({"threshold": args.threshold, "clips": report},
                      sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0


def _cmd_align_demo(args) -> int:
    report = run_demo_with_data(
        steps=args.steps,
        seed=args.seed if args.seed is not None else 0,
        n_scenes=args.scenes,
        use_grl=not args.no_grl,
        weights=LossWeights(args.lambda_s, args.lambda_g),
    )
    text = json.dumps(report, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    if args.trace_csv:
        trace = report["trace"]
        rows = ["step,task,spatial,global,lambda,total"]
        for i in range(len(trace["task"])):
            rows.append(
                f"{i},{trace['task'][i]},{trace['spatial'][i]},"
                f"{trace['global'][i]},{trace['lambda'][i]},{trace['total'][i]}"
            )
        Path(args.trace_csv).write_text("\n".join(rows) + "\n", encoding="utf-8")
    return 0


def _cmd_validate(args) -> int:
    for path in args.logs:
        log = load_log(path)
        print(f"{path}: ok ({log.log_id}: {len(log.tracks)} tracks, "
              f"{len(log.map_elements)} map elements, {len(log.mounts)} cameras)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sceneraster",
        description="Semantic rasterization and augmentation of driving-scene logs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render one frame to a PPM/PNG image")
    p.add_argument("log")
    p.add_argument("--out", required=True)
    p.add_argument("--time", type=float, default=None)
    p.add_argument("--frame-index", type=int, default=0)
    p.add_argument("--rig", default="front")
    p.add_argument("--agent", default="ego")
    p.add_argument("--depth-out", default=None)
    _add_render_flags(p)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("augment", help="build the augmented dataset")
    p.add_argument("logs", nargs="+")
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--config", default=None, help="JSON run config file")
    p.add_argument("--fraction-perturbed", type=float, default=0.1)
    _add_render_flags(p)
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("curate", help="constant-velocity ADE filter report")
    p.add_argument("log")
    p.add_argument("--threshold", type=float, default=ADE_THRESHOLD)
    p.add_argument("--agent", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_curate)

    p = sub.add_parser("align-demo", help="run the feature-alignment training demo")
    p.add_argument("--steps", type=int, default=400)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--scenes", type=int, default=160)
    p.add_argument("--no-grl", action="store_true")
    p.add_argument("--lambda-s", type=float, default=0.002)
    p.add_argument("--lambda-g", type=float, default=0.1)
    p.add_argument("--out", default=None)
    p.add_argument("--trace-csv", default=None)
    p.set_defaults(func=_cmd_align_demo)

    p = sub.add_parser("validate", help="load logs and check every invariant")
    p.add_argument("logs", nargs="+")
    p.set_defaults(func=_cmd_validate)

    return parser


def cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except LogError as e:
        return _fail(type(e).__name__, str(e))
    except (FileNotFoundError, FileExistsError) as e:
        return _fail(type(e).__name__, str(e))
    except (KeyError, ValueError, IndexError) as e:
        return _fail(type(e).__name__, str(e))


def main() -> None:
    sys.exit(cli())
