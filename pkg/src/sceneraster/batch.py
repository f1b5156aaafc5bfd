"""Deterministic batch execution: jobs -> images + JSON-lines manifest.

Rendering is pure, so the artifact tree is a function of (config, logs,
seed) only; the worker count changes wall time, never bytes.  Each job
writes its own files (no shared output), results are sorted by job id, and
the manifest is written by the parent process after every job lands.  A
failed run removes the partially-written output directory.
"""

from __future__ import annotations

import dataclasses
import json
import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .augment import (
    ADE_THRESHOLD,
    PerturbationSpec,
    RenderJob,
    build_dataset,
    derive_seed,
)
from .images import save_depth, save_ppm
from .raster import RenderConfig, render_frame
from .scene import SemanticClass, interpolate, carrier_rig
from .sceneio import SceneLog, scene_frame_at

WORKERS_ENV = "SCENERASTER_WORKERS"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class RunConfig:
    """Everything a batch run depends on; serialized verbatim into the manifest."""

    out_dir: str
    seed: int = 0
    workers: int = 1
    fraction_perturbed: float = 0.1
    ade_threshold: float = ADE_THRESHOLD
    render: RenderConfig = field(default_factory=RenderConfig)
    perturbation: PerturbationSpec = field(default_factory=lambda: PerturbationSpec(
        lat_range=(-1.5, 1.5), long_range=(-2.0, 2.0), noise_sigma=0.1,
    ))
    write_depth: bool = False

    def __post_init__(self):
        if not self.out_dir:
            raise ValueError("out_dir is required")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not (0.0 <= self.fraction_perturbed <= 1.0):
            raise ValueError("fraction_perturbed must be within [0, 1]")

    def to_json(self) -> dict:
        """Content-relevant fields only: out_dir and workers are execution
        details and stay out of the manifest, so identical (config, logs)
        produce bit-identical artifact trees at any worker count."""
        render = dataclasses.asdict(self.render)
        render["no_decay_classes"] = sorted(
            c.value for c in self.render.no_decay_classes
        )
        if self.render.palette is not None:
            render["palette"] = {
                k.value: list(v) for k, v in self.render.palette.items()
            }
        pert = dataclasses.asdict(self.perturbation)
        pert["lat_range"] = list(self.perturbation.lat_range)
        pert["long_range"] = list(self.perturbation.long_range)
        return {
            "seed": self.seed,
            "fraction_perturbed": self.fraction_perturbed,
            "ade_threshold": self.ade_threshold,
            "render": render,
            "perturbation": pert,
            "write_depth": self.write_depth,
        }

    @staticmethod
    def from_json(doc: dict) -> "RunConfig":
        render_doc = dict(doc.get("render", {}))
        if "no_decay_classes" in render_doc:
            render_doc["no_decay_classes"] = frozenset(
                SemanticClass(v) for v in render_doc["no_decay_classes"]
            )
        if render_doc.get("palette") is not None:
            render_doc["palette"] = {
                SemanticClass(k): tuple(v)
                for k, v in render_doc["palette"].items()
            }
        pert_doc = dict(doc.get("perturbation", {}))
        for key in ("lat_range", "long_range"):
            if key in pert_doc:
                pert_doc[key] = tuple(pert_doc[key])
        return RunConfig(
            out_dir=doc.get("out_dir", ""),
            seed=int(doc.get("seed", 0)),
            workers=int(doc.get("workers", default_workers())),
            fraction_perturbed=float(doc.get("fraction_perturbed", 0.1)),
            ade_threshold=float(doc.get("ade_threshold", ADE_THRESHOLD)),
            render=RenderConfig(**render_doc),
            perturbation=PerturbationSpec(**pert_doc),
            write_depth=bool(doc.get("write_depth", False)),
        )


_FILTER_BY_PROVENANCE = {
    "ego": "validity",
    "perturbed": "validity",
    "cross_agent": "validity+cv_ade",
}


def execute_job(log: SceneLog, job: RenderJob, out_root: Path,
                write_depth: bool = False) -> dict:
    """Render every (frame, rig) of one job and write its images.

    Returns the manifest entry.  File layout:
    {log_id}/{provenance}[agent]/{split_ms}/{frame_ms}_{rig}.ppm
    """
    files = []
    for ts in job.frame_timestamps:
        carrier = interpolate(job.trajectory, ts)
        rigs = tuple(carrier_rig(m, carrier) for m in job.mounts)
        frame = scene_frame_at(log, ts, rigs, exclude_agent=job.exclude_agent)
        for i, rig in enumerate(rigs):
            ms = int(round(ts * 1000))
            rel = f"{job.job_id}/{ms:09d}_{rig.name}.ppm"
            path = out_root / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            fb = render_frame(frame, i, job.cfg)
            save_ppm(fb, path)
            files.append(rel)
            if write_depth:
                save_depth(fb, path.with_suffix(".depth"))
    return {
        "job_id": job.job_id,
        "source_log": job.source_log,
        "provenance": job.provenance,
        "agent_id": job.agent_id,
        "filter": _FILTER_BY_PROVENANCE[job.provenance],
        "seed": job.seed,
        "overlap": job.overlap,
        "frame_timestamps": list(job.frame_timestamps),
        "files": files,
    }


def _run_one(args) -> dict:
    log, job, out_root, write_depth = args
    return execute_job(log, job, Path(out_root), write_depth)


def run_batch(config: RunConfig, logs: Sequence[SceneLog]) -> Path:
    """Build all jobs, render them across the worker pool, emit the manifest.

    Returns the manifest path.  Output bytes are identical for identical
    (config, logs) regardless of the worker count.  Any failure removes the
    output directory this run created.
    """
    out_root = Path(config.out_dir)
    created_root = not out_root.exists()
    out_root.mkdir(parents=True, exist_ok=True)
    if any(out_root.iterdir()):
        raise FileExistsError(f"output directory {out_root} is not empty")
    try:
        spec = dataclasses.replace(config.perturbation, seed=config.seed)
        pairs = build_dataset(logs, spec, config.fraction_perturbed,
                              cfg=config.render,
                              ade_threshold=config.ade_threshold)
        by_log = {log.log_id: log for log in logs}
        tasks = [(by_log[job.source_log], job, str(out_root), config.write_depth)
                 for _, job in pairs]
        if config.workers == 1:
            entries = [_run_one(t) for t in tasks]
        else:
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                entries = list(pool.map(_run_one, tasks))
        entries.sort(key=lambda e: e["job_id"])

        manifest = out_root / "manifest.jsonl"
        with manifest.open("w", encoding="utf-8") as fh:
            header = {"config": config.to_json(),
                      "logs": sorted(by_log), "jobs": len(entries)}
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for e in entries:
                fh.write(json.dumps(e, sort_keys=True) + "\n")
        audit_outputs(out_root)
        return manifest
    except BaseException:
        if created_root:
            shutil.rmtree(out_root, ignore_errors=True)
        else:
            for child in out_root.iterdir():
                if child.is_dir():
                    shutil.rmtree(child, ignore_errors=True)
                else:
                    child.unlink(missing_ok=True)
        raise


def audit_outputs(out_root: Path) -> None:
    """Check the manifest and the image tree agree exactly."""
    manifest = Path(out_root) / "manifest.jsonl"
    lines = manifest.read_text(encoding="utf-8").splitlines()
    listed: set[str] = set()
    for line in lines[1:]:
        entry = json.loads(line)
        for rel in entry["files"]:
            listed.add(rel)
            if not (Path(out_root) / rel).is_file():
                raise FileNotFoundError(f"manifest names missing file {rel}")
    on_disk = {
        str(p.relative_to(out_root))
        for p in Path(out_root).rglob("*.ppm")
    }
    extra = on_disk - listed
    if extra:
        raise RuntimeError(f"images not in manifest: {sorted(extra)[:5]}")
