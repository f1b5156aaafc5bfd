"""Trajectory augmentation: recovery perturbations, cross-agent view
synthesis, and constant-velocity curation.

Perturbation offsets live in each sample's local path frame (longitudinal
along the heading, lateral to its left); headings are derived from positions
by finite differences, and re-derived after perturbing so the camera looks
along the perturbed motion.  Everything is deterministic given the seeds:
per-clip seeds come from ``derive_seed``, a splittable hash of the root seed
and stable job identifiers.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .geometry import SE3Pose, CameraRig
from .raster import RenderConfig
from .scene import Trajectory, interpolate
from .sceneio import AgentTrack, SceneLog

HISTORY_WINDOW = 2.0  # seconds of input frames per clip
FUTURE_WINDOW = 5.0  # seconds of target trajectory per clip
ADE_THRESHOLD = 0.5  # constant-velocity curation threshold, meters


def derive_seed(root: int, *parts) -> int:
    """Stable 64-bit seed from a root seed and string-able identifiers."""
    h = hashlib.sha256(str(int(root)).encode("ascii"))
    for p in parts:
        h.update(b"/")
        h.update(str(p).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little")


@dataclass(frozen=True)
class PerturbationSpec:
    """How to displace a logged trajectory.

    lat_range / long_range bound the single per-clip offset draw (uniform);
    noise_sigma is the std of the per-sample Gaussian jitter.  The profile
    chooses how the offset unfolds over the clip: a constant displacement, or
    a linear ramp from zero at the first sample to the full offset at the
    last.
    """

    lat_range: tuple[float, float] = (0.0, 0.0)
    long_range: tuple[float, float] = (0.0, 0.0)
    noise_sigma: float = 0.0
    seed: int = 0
    profile: str = "constant_offset"  # or "ramp"

    def __post_init__(self):
        if not (self.lat_range[0] <= self.lat_range[1]):
            raise ValueError("lat_range must be ordered")
        if not (self.long_range[0] <= self.long_range[1]):
            raise ValueError("long_range must be ordered")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.profile not in ("constant_offset", "ramp"):
            raise ValueError(f"unknown profile {self.profile!r}")


@dataclass(frozen=True)
class RenderJob:
    """One camera-carrying pass over a scene window."""

    job_id: str
    source_log: str
    provenance: str  # "ego" | "perturbed" | "cross_agent"
    agent_id: str  # the observer whose path carries the cameras
    trajectory: Trajectory
    mounts: tuple[CameraRig, ...]
    frame_timestamps: tuple[float, ...]
    cfg: RenderConfig
    exclude_agent: Optional[str]  # this cuboid is the observer, never drawn
    seed: int = 0
    overlap: bool = False  # perturbed path intersects another actor's box

    def __post_init__(self):
        if self.provenance not in ("ego", "perturbed", "cross_agent"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        t0, t1 = self.trajectory.span()
        for ts in self.frame_timestamps:
            if not (t0 <= ts <= t1):
                raise ValueError(
                    f"job {self.job_id!r}: frame t={ts} outside carrier span"
                )


@dataclass(frozen=True)
class ClipSample:
    """A 7-second slice of one agent's track: 2 s input, 5 s target."""

    log_id: str
    agent_id: str
    split_t: float
    history: Trajectory
    future: Trajectory
    future_local: np.ndarray  # future positions in the carrier frame at split
    cv_ade: Optional[float]  # None when the baseline is not computable
    valid: bool = True
    invalid_reason: Optional[str] = None


def headings_from_positions(positions: np.ndarray) -> np.ndarray:
    """Per-sample yaw from finite differences of the xy path.

    Central differences inside, one-sided at the ends; samples with no local
    displacement reuse the nearest moving neighbor's heading.  All samples
    coincident is an error (heading undefined).
    """
    n = positions.shape[0]
    if n < 2:
        raise ValueError("need at least 2 samples to define a heading")
    diffs = np.empty((n, 2))
    diffs[0] = positions[1, :2] - positions[0, :2]
    diffs[-1] = positions[-1, :2] - positions[-2, :2]
    if n > 2:
        diffs[1:-1] = positions[2:, :2] - positions[:-2, :2]
    norms = np.linalg.norm(diffs, axis=1)
    moving = norms > 1e-12
    if not moving.any():
        raise ValueError("degenerate trajectory: all samples coincide")
    yaw = np.arctan2(diffs[:, 1], diffs[:, 0])
    if not moving.all():
        idx = np.arange(n)
        nearest = idx[moving][np.argmin(np.abs(idx[:, None] - idx[moving]), axis=1)]
        yaw = yaw[nearest]
    return yaw


def perturb_trajectory(traj: Trajectory, spec: PerturbationSpec) -> Trajectory:
    """Displace a trajectory laterally/longitudinally plus Gaussian jitter.

    One (lat, long) offset pair is drawn per call from the spec ranges and
    applied along the per-sample path frame, weighted by the profile; noise
    is i.i.d. per sample.  Headings are re-derived from the perturbed
    positions.  A spec drawing exactly zero offsets and zero noise returns
    the input unchanged.
    """
    if len(traj.samples) < 2:
        raise ValueError("perturbation needs >= 2 samples to define headings")
    rng = np.random.default_rng(spec.seed)
    d_lat = rng.uniform(*spec.lat_range)
    d_long = rng.uniform(*spec.long_range)
    noise = (
        rng.normal(0.0, spec.noise_sigma, size=(len(traj.samples), 2))
        if spec.noise_sigma > 0
        else np.zeros((len(traj.samples), 2))
    )
    if d_lat == 0.0 and d_long == 0.0 and not noise.any():
        return traj

    times = traj.times
    positions = traj.positions
    yaw = headings_from_positions(positions)
    forward = np.stack([np.cos(yaw), np.sin(yaw)], axis=1)
    left = np.stack([-np.sin(yaw), np.cos(yaw)], axis=1)

    if spec.profile == "ramp":
        weight = (times - times[0]) / (times[-1] - times[0])
    else:
        weight = np.ones_like(times)

    shift = (
        weight[:, None] * (d_long * forward + d_lat * left)
        + noise[:, 0:1] * left
        + noise[:, 1:2] * forward
    )
    new_pos = positions.copy()
    new_pos[:, :2] += shift

    new_yaw = headings_from_positions(new_pos)
    samples = tuple(
        (t, SE3Pose.from_yaw(y, p))
        for t, y, p in zip(times, new_yaw, new_pos)
    )
    return Trajectory(samples, traj.agent_id)


def constant_velocity_ade(traj: Trajectory, split_t: float, horizon: float) -> float:
    """Mean displacement of a constant-velocity extrapolation over a horizon.

    Velocity comes from the last history step before split_t; the
    extrapolation is sampled at the trajectory's own timestamps in
    (split_t, split_t + horizon].
    """
    times = traj.times
    before = times[times < split_t]
    if before.size == 0:
        raise ValueError("insufficient history to estimate velocity")
    t0, t1 = traj.span()
    if not (t0 <= split_t <= t1):
        raise ValueError(f"split_t={split_t} outside trajectory span")
    p_split = interpolate(traj, split_t).translation
    t_prev = float(before[-1])
    p_prev = interpolate(traj, t_prev).translation
    v = (p_split - p_prev) / (split_t - t_prev)

    future_mask = (times > split_t) & (times <= split_t + horizon)
    if not future_mask.any():
        raise ValueError("zero-length future window")
    future_t = times[future_mask]
    actual = traj.positions[future_mask]
    predicted = p_split[None, :] + v[None, :] * (future_t - split_t)[:, None]
    return float(np.mean(np.linalg.norm(predicted - actual, axis=1)))


def extract_clips(track: AgentTrack, log_id: str,
                  history_window: float = HISTORY_WINDOW,
                  future_window: float = FUTURE_WINDOW,
                  stride: Optional[float] = None) -> list[ClipSample]:
    """Cut a track into fixed windows split at sample timestamps.

    Consecutive clips are non-overlapping by default (stride = history +
    future).  A trailing window with history but a short future is emitted
    as invalid, so curation can count and drop it.
    """
    traj = track.trajectory
    times = traj.times
    if stride is None:
        stride = history_window + future_window
    clips: list[ClipSample] = []
    next_allowed = times[0] + history_window
    dt = np.median(np.diff(times)) if len(times) > 1 else None
    for split_t in times:
        if split_t < next_allowed - 1e-9:
            continue
        if split_t - history_window < times[0] - 1e-9:
            continue
        hist_mask = (times >= split_t - history_window - 1e-9) & (times <= split_t)
        fut_mask = (times > split_t) & (times <= split_t + future_window + 1e-9)
        if hist_mask.sum() < 2:
            continue
        if fut_mask.sum() == 0:
            break
        history = Trajectory(
            tuple(traj.samples[i] for i in np.flatnonzero(hist_mask)), track.agent_id
        )
        future = Trajectory(
            tuple(traj.samples[i] for i in np.flatnonzero(fut_mask)), track.agent_id
        )
        carrier = interpolate(traj, split_t)
        rel = future.positions - carrier.translation
        future_local = rel @ carrier.rotation

        expected_future = int(round(future_window / dt)) if dt else 0
        valid = True
        reason = None
        if fut_mask.sum() < expected_future:
            valid = False
            reason = (
                f"future window has {int(fut_mask.sum())} samples, "
                f"expected {expected_future}"
            )
        try:
            ade = constant_velocity_ade(traj, float(split_t), future_window)
        except ValueError:
            ade = None
            valid = False
            reason = reason or "constant-velocity baseline not computable"
        clips.append(ClipSample(
            log_id=log_id,
            agent_id=track.agent_id,
            split_t=float(split_t),
            history=history,
            future=future,
            future_local=future_local,
            cv_ade=ade,
            valid=valid,
            invalid_reason=reason,
        ))
        next_allowed = split_t + stride
    return clips


def curate(clips: Sequence[ClipSample], threshold: float = ADE_THRESHOLD) -> list[ClipSample]:
    """Keep exactly the valid clips whose constant-velocity ADE exceeds the threshold."""
    return [
        c for c in clips
        if c.valid and c.cv_ade is not None and c.cv_ade > threshold
    ]


def _job_id(log_id: str, provenance: str, agent_id: str, split_t: float) -> str:
    ms = int(round(split_t * 1000))
    agent = f"[{agent_id}]" if provenance == "cross_agent" else ""
    return f"{log_id}/{provenance}{agent}/{ms:09d}"


def _frame_times(log: SceneLog, clip: ClipSample,
                 history_window: float) -> tuple[float, ...]:
    lo = clip.split_t - history_window - 1e-9
    hi = clip.split_t + 1e-9
    return tuple(t for t in log.frame_timestamps if lo <= t <= hi)


def cross_agent_job(log: SceneLog, agent_id: str, mounts: Sequence[CameraRig],
                    clip: ClipSample, cfg: RenderConfig,
                    seed: int = 0) -> RenderJob:
    """Carry the (unchanged) camera mounts along another agent's track.

    The observer's own cuboid is removed from the rendered set.  Passing the
    ego id is the identity swap and yields the plain ego job.
    """
    log.track(agent_id)  # raises KeyError for unknown agents
    provenance = "ego" if agent_id == "ego" else "cross_agent"
    frames = _frame_times(log, clip, HISTORY_WINDOW)
    t0, t1 = clip.history.span()
    frames = tuple(t for t in frames if t0 <= t <= t1)
    if not frames:
        raise ValueError(
            f"agent {agent_id!r} track too short: no frame timestamps in clip window"
        )
    return RenderJob(
        job_id=_job_id(log.log_id, provenance, agent_id, clip.split_t),
        source_log=log.log_id,
        provenance=provenance,
        agent_id=agent_id,
        trajectory=clip.history,
        mounts=tuple(mounts),
        frame_timestamps=frames,
        cfg=cfg,
        exclude_agent=agent_id,
        seed=seed,
    )


def _boxes_overlap_2d(c1, yaw1, l1, w1, c2, yaw2, l2, w2) -> bool:
    """Separating-axis test for two oriented rectangles in the plane."""
    half1 = np.array([l1 / 2.0, w1 / 2.0])
    half2 = np.array([l2 / 2.0, w2 / 2.0])
    axes = []
    for yaw in (yaw1, yaw2):
        c, s = math.cos(yaw), math.sin(yaw)
        axes.append(np.array([c, s]))
        axes.append(np.array([-s, c]))
    ax1 = np.stack(axes[:2])
    ax2 = np.stack(axes[2:])
    delta = np.asarray(c2[:2]) - np.asarray(c1[:2])
    for axis in axes:
        r1 = half1 @ np.abs(ax1 @ axis)
        r2 = half2 @ np.abs(ax2 @ axis)
        if abs(delta @ axis) > r1 + r2:
            return False
    return True


def _perturbed_overlaps(log: SceneLog, job: RenderJob) -> bool:
    """Does the perturbed carrier's footprint hit any other actor's box?"""
    try:
        ego = log.track(job.agent_id)
    except KeyError:
        return False
    t0, t1 = job.trajectory.span()
    for ts in job.frame_timestamps:
        carrier = interpolate(job.trajectory, ts)
        yaw_c = math.atan2(carrier.rotation[1, 0], carrier.rotation[0, 0])
        lc, wc, _ = ego.dims_at(ts)
        for track in log.tracks:
            if track.agent_id == job.agent_id:
                continue
            a0, a1 = track.trajectory.span()
            if not (a0 <= ts <= a1):
                continue
            pose = interpolate(track.trajectory, ts)
            yaw_o = math.atan2(pose.rotation[1, 0], pose.rotation[0, 0])
            lo, wo, _ = track.dims_at(ts)
            if _boxes_overlap_2d(carrier.translation, yaw_c, lc, wc,
                                 pose.translation, yaw_o, lo, wo):
                return True
    return False


def build_dataset(logs: Sequence[SceneLog], spec: PerturbationSpec,
                  fraction_perturbed: float = 0.1,
                  cfg: Optional[RenderConfig] = None,
                  ade_threshold: float = ADE_THRESHOLD,
                  ) -> list[tuple[ClipSample, RenderJob]]:
    """Assemble the augmented job list for a batch of logs.

    Ego clips pass validity checks only (the benchmark-score filter that
    would apply to them needs an external scorer; the manifest records which
    filter ran).  Cross-agent clips additionally pass the constant-velocity
    ADE filter.  A seeded fraction of ego clips gains a perturbed twin.
    Deterministic for fixed (logs, spec, fraction).
    """
    if cfg is None:
        cfg = RenderConfig()
    out: list[tuple[ClipSample, RenderJob]] = []
    for log in logs:
        ego_clips = [c for c in extract_clips(log.track("ego"), log.log_id)
                     if c.valid]
        for clip in ego_clips:
            job = cross_agent_job(log, "ego", log.mounts, clip, cfg,
                                  seed=derive_seed(spec.seed, log.log_id,
                                                   "ego", clip.split_t))
            out.append((clip, job))

        for track in log.tracks:
            if track.agent_id == "ego":
                continue
            clips = curate(extract_clips(track, log.log_id), ade_threshold)
            for clip in clips:
                try:
                    job = cross_agent_job(
                        log, track.agent_id, log.mounts, clip, cfg,
                        seed=derive_seed(spec.seed, log.log_id,
                                         track.agent_id, clip.split_t))
                except ValueError:
                    continue  # track too short for the frame grid
                out.append((clip, job))

        n_perturbed = int(round(fraction_perturbed * len(ego_clips)))
        if n_perturbed > 0:
            rng = np.random.default_rng(derive_seed(spec.seed, log.log_id,
                                                    "perturb-select"))
            chosen = sorted(rng.choice(len(ego_clips), size=n_perturbed,
                                       replace=False).tolist())
            for ci in chosen:
                clip = ego_clips[ci]
                clip_seed = derive_seed(spec.seed, log.log_id, "perturb",
                                        clip.split_t)
                perturbed = perturb_trajectory(clip.history,
                                               replace(spec, seed=clip_seed))
                base = cross_agent_job(log, "ego", log.mounts, clip, cfg,
                                       seed=clip_seed)
                job = replace(
                    base,
                    job_id=_job_id(log.log_id, "perturbed", "ego", clip.split_t),
                    provenance="perturbed",
                    trajectory=perturbed,
                )
                job = replace(job, overlap=_perturbed_overlaps(log, job))
                out.append((clip, job))
    return out
