"""Scene-log ingestion and serialization.

A scene log is a JSON document (schema in docs/scene-format.md) holding the
static map, per-agent tracks with cuboid dimensions, traffic lights with
timestamped states, camera mounts (carrier-to-camera extrinsics plus
intrinsics), and the frame timestamp grid.  Loading validates the schema and
every geometric invariant before anything reaches the renderer; the three
failure kinds (unparseable JSON, schema violation, invariant violation) raise
distinguished exceptions with the offending path in the message.

Serialization is canonical: sorted keys, compact separators, repr-roundtrip
floats.  save(load(x)) is byte-identical for canonical files.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import CameraIntrinsics, CameraRig, SE3Pose
from .scene import (
    Cuboid,
    Polyline,
    SceneFrame,
    SemanticClass,
    TrafficLight,
    Trajectory,
    carrier_rig,
    interpolate,
)


class LogError(Exception):
    """Base class for scene-log loading failures."""


class LogParseError(LogError):
    """The file is not valid JSON."""


class LogSchemaError(LogError):
    """The JSON does not match the scene-log schema."""


class LogInvariantError(LogError):
    """The document parses but violates a geometric or ordering invariant."""


_LIGHT_STATES = ("red", "yellow", "green")


@dataclass(frozen=True)
class AgentTrack:
    """One agent's trajectory with per-sample cuboid dimensions."""

    agent_id: str
    cls: SemanticClass
    trajectory: Trajectory
    dims: tuple[tuple[float, float, float], ...]  # aligned with samples

    def __post_init__(self):
        if len(self.dims) != len(self.trajectory.samples):
            raise ValueError(
                f"track {self.agent_id!r}: {len(self.dims)} dims for "
                f"{len(self.trajectory.samples)} samples"
            )
        for d in self.dims:
            if len(d) != 3 or any(not (x > 0) for x in d):
                raise ValueError(f"track {self.agent_id!r}: dims must be positive")

    def dims_at(self, t: float) -> tuple[float, float, float]:
        """Dimensions of the nearest-in-time sample."""
        times = self.trajectory.times
        i = int(np.argmin(np.abs(times - t)))
        return self.dims[i]

    def cuboid_at(self, t: float) -> Cuboid:
        l, w, h = self.dims_at(t)
        return Cuboid(l, w, h, interpolate(self.trajectory, t), self.cls)


@dataclass(frozen=True)
class LightTrack:
    """A traffic light at a fixed pose with a stepwise state timeline."""

    light_id: str
    pose: SE3Pose
    states: tuple[tuple[float, str], ...]

    def __post_init__(self):
        if not self.states:
            raise ValueError(f"light {self.light_id!r}: needs at least one state")
        times = [t for t, _ in self.states]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"light {self.light_id!r}: state times must increase")
        for _, s in self.states:
            if s not in _LIGHT_STATES:
                raise ValueError(f"light {self.light_id!r}: unknown state {s!r}")

    def state_at(self, t: float) -> str:
        """Latest state at or before t; the first state before the timeline."""
        times = [ts for ts, _ in self.states]
        i = max(bisect.bisect_right(times, t) - 1, 0)
        return self.states[i][1]


@dataclass(frozen=True)
class SceneLog:
    log_id: str
    map_elements: tuple[Polyline, ...]
    tracks: tuple[AgentTrack, ...]
    lights: tuple[LightTrack, ...]
    mounts: tuple[CameraRig, ...]  # world_to_camera holds carrier-to-camera
    frame_timestamps: tuple[float, ...]

    def __post_init__(self):
        ids = [t.agent_id for t in self.tracks]
        if len(set(ids)) != len(ids):
            raise ValueError(f"log {self.log_id!r}: duplicate agent ids")
        ts = self.frame_timestamps
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"log {self.log_id!r}: frame timestamps must increase")

    def track(self, agent_id: str) -> AgentTrack:
        for t in self.tracks:
            if t.agent_id == agent_id:
                return t
        raise KeyError(f"log {self.log_id!r}: no track {agent_id!r}")


def scene_frame_at(log: SceneLog, t: float, rigs: tuple[CameraRig, ...],
                   exclude_agent: Optional[str] = None) -> SceneFrame:
    """The annotated scene at time t, seen by the given world-frame rigs.

    Tracks that do not cover t are absent from the frame; the excluded agent
    (the camera carrier) is never drawn.
    """
    actors = []
    for track in log.tracks:
        if track.agent_id == exclude_agent:
            continue
        t0, t1 = track.trajectory.span()
        if t0 <= t <= t1:
            actors.append(track.cuboid_at(t))
    lights = tuple(
        TrafficLight(lt.pose, lt.state_at(t)) for lt in log.lights
    )
    return SceneFrame(t, log.map_elements, tuple(actors), lights, tuple(rigs))


def rigs_for_carrier(log: SceneLog, carrier_pose: SE3Pose) -> tuple[CameraRig, ...]:
    return tuple(carrier_rig(m, carrier_pose) for m in log.mounts)


# ---------------------------------------------------------------------------
# JSON encoding / decoding


def _pose_to_json(p: SE3Pose) -> dict:
    return {
        "rotation": [[float(x) for x in row] for row in p.rotation],
        "translation": [float(x) for x in p.translation],
    }


def _expect(obj, key, kind, where):
    if not isinstance(obj, dict) or key not in obj:
        raise LogSchemaError(f"{where}: missing field {key!r}")
    val = obj[key]
    if kind is float:
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            raise LogSchemaError(f"{where}.{key}: expected a number")
        return float(val)
    if not isinstance(val, kind):
        raise LogSchemaError(f"{where}.{key}: expected {kind.__name__}")
    return val


def _pose_from_json(obj, where) -> SE3Pose:
    rot = _expect(obj, "rotation", list, where)
    tr = _expect(obj, "translation", list, where)
    try:
        return SE3Pose(np.array(rot, dtype=float), np.array(tr, dtype=float))
    except (ValueError, TypeError) as e:
        raise LogInvariantError(f"{where}: {e}") from e


def log_to_json(log: SceneLog) -> dict:
    return {
        "log_id": log.log_id,
        "map": [
            {
                "class": p.cls.value,
                "closed": p.closed,
                "vertices": [[float(x) for x in v] for v in p.vertices],
            }
            for p in log.map_elements
        ],
        "tracks": [
            {
                "agent_id": t.agent_id,
                "class": t.cls.value,
                "samples": [
                    {
                        "t": float(ts),
                        "pose": _pose_to_json(pose),
                        "dims": [float(x) for x in dims],
                    }
                    for (ts, pose), dims in zip(t.trajectory.samples, t.dims)
                ],
            }
            for t in log.tracks
        ],
        "lights": [
            {
                "light_id": l.light_id,
                "pose": _pose_to_json(l.pose),
                "states": [{"t": float(ts), "state": s} for ts, s in l.states],
            }
            for l in log.lights
        ],
        "cameras": [
            {
                "name": m.name,
                "fx": m.intrinsics.fx,
                "fy": m.intrinsics.fy,
                "cx": m.intrinsics.cx,
                "cy": m.intrinsics.cy,
                "width": m.width,
                "height": m.height,
                "z_near": m.z_near,
                "mount": _pose_to_json(m.world_to_camera),
            }
            for m in log.mounts
        ],
        "frame_timestamps": [float(t) for t in log.frame_timestamps],
    }


def log_from_json(doc, source="<memory>") -> SceneLog:
    log_id = _expect(doc, "log_id", str, source)

    map_elements = []
    for i, p in enumerate(_expect(doc, "map", list, source)):
        where = f"{source}.map[{i}]"
        cls_name = _expect(p, "class", str, where)
        try:
            cls = SemanticClass(cls_name)
        except ValueError:
            raise LogSchemaError(f"{where}: unknown class {cls_name!r}") from None
        verts = _expect(p, "vertices", list, where)
        closed = _expect(p, "closed", bool, where)
        try:
            map_elements.append(Polyline(np.array(verts, dtype=float), cls, closed))
        except (ValueError, TypeError) as e:
            raise LogInvariantError(f"{where}: {e}") from e

    tracks = []
    for i, t in enumerate(_expect(doc, "tracks", list, source)):
        where = f"{source}.tracks[{i}]"
        agent_id = _expect(t, "agent_id", str, where)
        cls_name = _expect(t, "class", str, where)
        try:
            cls = SemanticClass(cls_name)
        except ValueError:
            raise LogSchemaError(f"{where}: unknown class {cls_name!r}") from None
        samples = []
        dims = []
        for j, s in enumerate(_expect(t, "samples", list, where)):
            sw = f"{where}.samples[{j}]"
            ts = _expect(s, "t", float, sw)
            pose = _pose_from_json(_expect(s, "pose", dict, sw), sw)
            d = _expect(s, "dims", list, sw)
            samples.append((ts, pose))
            dims.append(tuple(float(x) for x in d))
        try:
            tracks.append(AgentTrack(agent_id, cls, Trajectory(tuple(samples), agent_id),
                                     tuple(dims)))
        except ValueError as e:
            raise LogInvariantError(f"{where}: {e}") from e

    lights = []
    for i, l in enumerate(doc.get("lights", [])):
        where = f"{source}.lights[{i}]"
        light_id = _expect(l, "light_id", str, where)
        pose = _pose_from_json(_expect(l, "pose", dict, where), where)
        states = tuple(
            (_expect(s, "t", float, f"{where}.states[{j}]"),
             _expect(s, "state", str, f"{where}.states[{j}]"))
            for j, s in enumerate(_expect(l, "states", list, where))
        )
        try:
            lights.append(LightTrack(light_id, pose, states))
        except ValueError as e:
            raise LogInvariantError(f"{where}: {e}") from e

    mounts = []
    for i, c in enumerate(_expect(doc, "cameras", list, source)):
        where = f"{source}.cameras[{i}]"
        try:
            mounts.append(CameraRig(
                intrinsics=CameraIntrinsics(
                    _expect(c, "fx", float, where), _expect(c, "fy", float, where),
                    _expect(c, "cx", float, where), _expect(c, "cy", float, where),
                ),
                world_to_camera=_pose_from_json(_expect(c, "mount", dict, where), where),
                width=int(_expect(c, "width", float, where)),
                height=int(_expect(c, "height", float, where)),
                z_near=_expect(c, "z_near", float, where),
                name=_expect(c, "name", str, where),
            ))
        except ValueError as e:
            raise LogInvariantError(f"{where}: {e}") from e

    stamps = _expect(doc, "frame_timestamps", list, source)
    try:
        return SceneLog(
            log_id=log_id,
            map_elements=tuple(map_elements),
            tracks=tuple(tracks),
            lights=tuple(lights),
            mounts=tuple(mounts),
            frame_timestamps=tuple(float(t) for t in stamps),
        )
    except ValueError as e:
        raise LogInvariantError(f"{source}: {e}") from e


def save_log(log: SceneLog, path) -> None:
    Path(path).write_text(
        json.dumps(log_to_json(log), sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8",
    )


def load_log(path) -> SceneLog:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise LogError(f"{p}: {e}") from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise LogParseError(f"{p}:{e.lineno}:{e.colno}: {e.msg}") from e
    return log_from_json(doc, source=str(p))
