"""Build the bundled sample scene log (data/sample_log.json).

A small but complete log: 23 seconds of ego driving at 2 Hz (three
non-overlapping 7-second clips), two other vehicles (one braking hard enough
to pass the constant-velocity filter, one cruising at constant speed so the
filter drops it), a crossing pedestrian, lane geometry, and a traffic light
that switches from red to green mid-log.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from sceneraster.geometry import CameraIntrinsics, CameraRig, SE3Pose
from sceneraster.scene import Polyline, SemanticClass, Trajectory
from sceneraster.sceneio import AgentTrack, LightTrack, SceneLog, save_log

OUT = Path(__file__).resolve().parents[1] / "data" / "sample_log.json"

TIMES = np.round(np.arange(0.0, 23.01, 0.5), 3)


def track_from_xy(agent_id, cls, dims, xs, ys):
    yaw = np.arctan2(np.gradient(ys), np.gradient(xs))
    samples = tuple(
        (float(t), SE3Pose.from_yaw(float(a), (float(x), float(y), 0.0)))
        for t, x, y, a in zip(TIMES, xs, ys, yaw)
    )
    return AgentTrack(agent_id, cls, Trajectory(samples, agent_id),
                      tuple([dims] * len(TIMES)))


def main():
    t = TIMES

    # ego: steady 8 m/s with a smooth lane change around t = 8 s
    ego_x = 8.0 * t
    ego_y = 1.75 * (1.0 / (1.0 + np.exp(-(t - 8.0))))
    ego = track_from_xy("ego", SemanticClass.VEHICLE, (4.5, 2.0, 1.6),
                        ego_x, ego_y)

    # braking lead vehicle: starts fast, decelerates to a stop
    v0, decel = 10.0, 0.6
    lead_x = 30.0 + np.where(
        t < v0 / decel,
        v0 * t - 0.5 * decel * t * t,
        v0 * (v0 / decel) - 0.5 * decel * (v0 / decel) ** 2,
    )
    lead = track_from_xy("lead", SemanticClass.VEHICLE, (4.2, 1.9, 1.5),
                         lead_x, np.full_like(t, 0.0))

    # oncoming cruiser at constant velocity: the curation filter drops it
    cruiser_x = 220.0 - 7.0 * t
    cruiser = track_from_xy("cruiser", SemanticClass.VEHICLE, (4.8, 2.1, 1.7),
                            cruiser_x, np.full_like(t, -5.25))

    # pedestrian crossing the road near x = 60
    ped_y = np.clip(-8.0 + 1.0 * t, -8.0, 8.0)
    ped = track_from_xy("walker", SemanticClass.PEDESTRIAN, (0.6, 0.6, 1.7),
                        np.full_like(t, 60.0), ped_y)

    road = Polyline(np.array([
        [-20.0, -8.0, 0.0], [260.0, -8.0, 0.0],
        [260.0, 8.0, 0.0], [-20.0, 8.0, 0.0],
    ]), SemanticClass.ROAD_SURFACE, closed=True)
    crosswalk = Polyline(np.array([
        [58.0, -8.0, 0.001], [62.0, -8.0, 0.001],
        [62.0, 8.0, 0.001], [58.0, 8.0, 0.001],
    ]), SemanticClass.CROSSWALK, closed=True)
    center_line = Polyline(
        np.stack([np.linspace(-20, 260, 57), np.zeros(57), np.full(57, 0.01)],
                 axis=1),
        SemanticClass.LANE_LINE,
    )
    edge_lines = [
        Polyline(np.array([[-20.0, y, 0.01], [260.0, y, 0.01]]),
                 SemanticClass.LANE_LINE)
        for y in (-7.0, 3.5, 7.0)
    ]
    barrier = Polyline(
        np.stack([np.linspace(10, 50, 9), np.full(9, 7.5), np.full(9, 0.02)],
                 axis=1),
        SemanticClass.BARRIER,
    )

    light = LightTrack(
        "tl-0",
        SE3Pose.from_yaw(np.pi, (70.0, 3.0, 4.0)),
        ((0.0, "red"), (10.0, "green")),
    )

    # front camera, mounted 1.0 m ahead of the carrier origin, 1.6 m up:
    # carrier (x fwd, y left, z up) -> camera (x right, y down, z fwd)
    rot = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
    mount = SE3Pose(rot, rot @ -np.array([1.0, 0.0, 1.6]))
    front = CameraRig(CameraIntrinsics(110.0, 110.0, 96.0, 54.0), mount,
                      192, 108, z_near=0.1, name="front")

    log = SceneLog(
        log_id="sample-3clip",
        map_elements=(road, crosswalk, center_line, *edge_lines, barrier),
        tracks=(ego, lead, cruiser, ped),
        lights=(light,),
        mounts=(front,),
        frame_timestamps=tuple(float(x) for x in t),
    )
    OUT.parent.mkdir(parents=True, exist_ok=True)
    save_log(log, OUT)
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
