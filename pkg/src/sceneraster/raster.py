"""Depth-aware rasterization of annotated scenes into an RGB canvas.

Compositing uses a classic z-buffer: each fragment's color is modulated by
the fading weight alpha = max(0, 1 - d/d_max) before a depth-tested write, so
output is independent of draw order for opaque content.  The depth test is a
strict less-than; at exact ties the first writer wins, which makes output
deterministic for the fixed submission order (map fills, map strokes, actor
faces, traffic-light faces, then wireframe edges).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from . import _kernels
from .clip import triangulate_polygon
from .geometry import CameraRig
from .scene import (
    EDGE_INDICES,
    FACE_INDICES,
    FILLED_CLASSES,
    PALETTE,
    SceneFrame,
    SemanticClass,
    batch_corners,
    light_as_cuboid,
)

# Color multiplier for cuboid face interiors in "transparent" face mode;
# wireframe edges stay opaque.
TRANSPARENT_FACE_COVERAGE = 0.35

SKY_COLOR = (135, 206, 235)
GROUND_COLOR = (90, 77, 65)

# Corner-index triples for the 12 triangles of a cuboid: each face quad
# (a, b, c, d) splits along its (0, 2) diagonal into (a, b, c) and (a, c, d).
_CUBOID_TRI_IDX = np.array(
    [tri for a, b, c, d in FACE_INDICES for tri in ((a, b, c), (a, c, d))]
)
_CUBOID_EDGE_IDX = np.array(EDGE_INDICES)


@dataclass(frozen=True)
class RenderConfig:
    """Rendering options: face mode, depth decay, background, stroke width."""

    face_mode: str = "colored"  # "colored" | "transparent"
    depth_decay: bool = True
    background: str = "black"  # "black" | "sky_ground"
    d_max: float = 80.0
    line_width: float = 2.0
    draw_wireframe: bool = False
    palette: Optional[Mapping[SemanticClass, tuple[int, int, int]]] = None
    no_decay_classes: frozenset = frozenset()

    def __post_init__(self):
        if self.face_mode not in ("colored", "transparent"):
            raise ValueError(f"unknown face_mode {self.face_mode!r}")
        if self.background not in ("black", "sky_ground"):
            raise ValueError(f"unknown background {self.background!r}")
        if self.d_max <= 0:
            raise ValueError("d_max must be positive")
        if self.line_width < 1:
            raise ValueError("line_width must be at least 1 pixel")

    def color_of(self, cls: SemanticClass) -> tuple[int, int, int]:
        table = self.palette if self.palette is not None else PALETTE
        return table[cls]

    def decays(self, cls: SemanticClass) -> bool:
        return self.depth_decay and cls not in self.no_decay_classes


@dataclass
class Framebuffer:
    """An RGB canvas plus per-pixel depth (meters, +inf where unwritten)."""

    width: int
    height: int
    color: np.ndarray  # (H, W, 3) uint8
    depth: np.ndarray  # (H, W) float64

    def __post_init__(self):
        if self.color.shape != (self.height, self.width, 3):
            raise ValueError("color buffer shape mismatch")
        if self.depth.shape != (self.height, self.width):
            raise ValueError("depth buffer shape mismatch")

    @staticmethod
    def create(width: int, height: int) -> "Framebuffer":
        return Framebuffer(
            width=width,
            height=height,
            color=np.zeros((height, width, 3), dtype=np.uint8),
            depth=np.full((height, width), np.inf, dtype=np.float64),
        )


@dataclass(frozen=True)
class Fragment:
    """One candidate pixel write."""

    u: int
    v: int
    depth: float
    base_color: tuple[int, int, int]
    coverage: float = 1.0  # < 1 for transparent face interiors


def shade(fragment: Fragment, cfg: RenderConfig) -> tuple[int, int, int]:
    """Fragment color after depth decay and coverage, rounded half-up."""
    alpha = max(0.0, 1.0 - fragment.depth / cfg.d_max) if cfg.depth_decay else 1.0
    scale = alpha * fragment.coverage
    r, g, b = fragment.base_color
    return (int(r * scale + 0.5), int(g * scale + 0.5), int(b * scale + 0.5))


def fill_triangle(fb: Framebuffer, tri, color, cfg: RenderConfig,
                  coverage: float = 1.0, decay: Optional[bool] = None) -> None:
    """Depth-tested fill of one screen-space triangle.

    ``tri`` is (3, 3) rows of (u, v, depth); vertices must already be clipped
    to the framebuffer.  Pixel-center coverage with the top-left rule for
    edge ties; writes happen only where the interpolated depth is strictly
    below the stored depth.
    """
    t = np.asarray(tri, dtype=np.float64)
    if t.shape != (3, 3):
        raise ValueError(f"triangle must be (3, 3), got {t.shape}")
    r, g, b = color
    _kernels.fill_triangle(
        fb.color, fb.depth,
        t[0, 0], t[0, 1], t[0, 2],
        t[1, 0], t[1, 1], t[1, 2],
        t[2, 0], t[2, 1], t[2, 2],
        float(r), float(g), float(b),
        cfg.depth_decay if decay is None else decay,
        cfg.d_max, coverage,
    )


def draw_polyline(fb: Framebuffer, vertices, color, cfg: RenderConfig,
                  decay: Optional[bool] = None) -> None:
    """Stroke projected vertices as width-``line_width`` quads.

    ``vertices`` is (n, 3) rows of (u, v, depth), already clipped; each
    consecutive pair becomes one quad with the same depth test and shading as
    triangle fills.
    """
    v = np.asarray(vertices, dtype=np.float64)
    if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] < 2:
        raise ValueError("polyline needs an (n>=2, 3) vertex array")
    r, g, b = color
    half = cfg.line_width / 2.0
    use_decay = cfg.depth_decay if decay is None else decay
    quad = np.empty((4, 3), dtype=np.float64)
    for i in range(v.shape[0] - 1):
        _kernels.stroke_screen_segment(
            fb.color, fb.depth,
            v[i, 0], v[i, 1], v[i, 2], v[i + 1, 0], v[i + 1, 1], v[i + 1, 2],
            float(r), float(g), float(b), use_decay, cfg.d_max, half, quad,
        )


def composite_background(fb: Framebuffer, cfg: RenderConfig,
                         rig: Optional[CameraRig] = None) -> None:
    """Fill a fresh framebuffer's color plane; depth stays +inf.

    Black mode writes zeros.  Sky/ground mode splits at the horizon row,
    found by projecting the camera-forward direction flattened onto the
    world horizontal plane (a point at infinity on the horizon).
    """
    if cfg.background == "black":
        fb.color[:] = 0
        return
    if rig is None:
        raise ValueError("sky_ground background needs the camera rig")
    r_wc = rig.world_to_camera.rotation
    forward_w = r_wc.T @ np.array([0.0, 0.0, 1.0])  # optical axis in world
    horiz = forward_w.copy()
    horiz[2] = 0.0
    norm = np.linalg.norm(horiz)
    if norm < 1e-12:
        # Looking straight up or down: one region fills everything.
        v_h = np.inf if forward_w[2] < 0 else -np.inf
    else:
        d_cam = r_wc @ (horiz / norm)
        if d_cam[2] <= 1e-12:
            v_h = np.inf if forward_w[2] < 0 else -np.inf
        else:
            v_h = rig.intrinsics.cy + rig.intrinsics.fy * d_cam[1] / d_cam[2]
    rows = np.arange(fb.height) + 0.5
    sky = rows < v_h
    fb.color[sky] = SKY_COLOR
    fb.color[~sky] = GROUND_COLOR


@dataclass
class FrameBatches:
    """Camera-space primitive batches for one (frame, rig, cfg) triple.

    Submission order within each batch is fixed: map polygons in list order
    (fan of their triangulation), stroked chain segments in list order
    followed by the closing segments of closed rings, then cuboid triangles
    (12 per box: actors first, traffic lights after) and wireframe edges.
    """

    fill_tris: np.ndarray  # (K, 3, 3)
    fill_colors: np.ndarray  # (K, 3)
    fill_decay: np.ndarray  # (K,)
    stroke_segs: np.ndarray  # (S, 2, 3)
    stroke_colors: np.ndarray
    stroke_decay: np.ndarray
    box_tris: np.ndarray  # (B, 3, 3)
    box_colors: np.ndarray
    box_decay: np.ndarray
    face_coverage: float
    edge_segs: np.ndarray  # (E, 2, 3)
    edge_colors: np.ndarray
    edge_decay: np.ndarray


def assemble_batches(frame: SceneFrame, rig: CameraRig, cfg: RenderConfig) -> FrameBatches:
    """Triangulate, gather, and transform all frame primitives to camera space."""
    pose = rig.world_to_camera

    def to_camera(world_pts: np.ndarray) -> np.ndarray:
        return world_pts.reshape(-1, 3) @ pose.rotation.T + pose.translation

    fill_tris: list[np.ndarray] = []
    fill_colors: list[tuple[int, int, int]] = []
    fill_decay: list[bool] = []
    stroked: list = []
    for poly in frame.map_elements:
        if poly.closed and poly.cls in FILLED_CLASSES:
            idx = triangulate_polygon(poly.vertices)
            if not idx:
                continue
            fill_tris.append(poly.vertices[np.array(idx)])
            fill_colors.extend([cfg.color_of(poly.cls)] * len(idx))
            fill_decay.extend([cfg.decays(poly.cls)] * len(idx))
        else:
            stroked.append(poly)

    if fill_tris:
        fills = to_camera(np.concatenate(fill_tris)).reshape(-1, 3, 3)
        fill_colors = np.array(fill_colors, dtype=np.float64)
        fill_decay = np.array(fill_decay, dtype=np.bool_)
    else:
        fills = np.empty((0, 3, 3))
        fill_colors = np.empty((0, 3))
        fill_decay = np.empty(0, dtype=np.bool_)

    if stroked:
        verts = np.concatenate([p.vertices for p in stroked])
        counts = np.array([p.vertices.shape[0] for p in stroked])
        offsets = np.concatenate([[0], np.cumsum(counts)])
        keep = np.ones(verts.shape[0], dtype=bool)
        keep[offsets[1:] - 1] = False  # no segment starts at a chain's end
        starts = np.flatnonzero(keep)
        seg_a = [verts[starts]]
        seg_b = [verts[starts + 1]]
        colors = np.array([cfg.color_of(p.cls) for p in stroked], dtype=np.float64)
        decay = np.array([cfg.decays(p.cls) for p in stroked], dtype=np.bool_)
        stroke_colors = [np.repeat(colors, counts - 1, axis=0)]
        stroke_decay = [np.repeat(decay, counts - 1)]
        closed_idx = [i for i, p in enumerate(stroked) if p.closed]
        if closed_idx:
            last = np.array([offsets[i] + counts[i] - 1 for i in closed_idx])
            first = np.array([offsets[i] for i in closed_idx])
            seg_a.append(verts[last])
            seg_b.append(verts[first])
            stroke_colors.append(colors[closed_idx])
            stroke_decay.append(decay[closed_idx])
        world_segs = np.stack([np.concatenate(seg_a), np.concatenate(seg_b)], axis=1)
        strokes = to_camera(world_segs).reshape(-1, 2, 3)
        stroke_colors = np.concatenate(stroke_colors)
        stroke_decay = np.concatenate(stroke_decay)
    else:
        strokes = np.empty((0, 2, 3))
        stroke_colors = np.empty((0, 3))
        stroke_decay = np.empty(0, dtype=np.bool_)

    boxes = list(frame.actors) + [light_as_cuboid(l) for l in frame.lights]
    want_edges = cfg.draw_wireframe or cfg.face_mode == "transparent"
    if boxes:
        corners_cam = to_camera(batch_corners(boxes)).reshape(len(boxes), 8, 3)
        colors = np.array([cfg.color_of(b.cls) for b in boxes], dtype=np.float64)
        decay = np.array([cfg.decays(b.cls) for b in boxes], dtype=np.bool_)
        box_tris = np.ascontiguousarray(
            corners_cam[:, _CUBOID_TRI_IDX].reshape(-1, 3, 3))
        box_colors = np.repeat(colors, 12, axis=0)
        box_decay = np.repeat(decay, 12)
        if want_edges:
            edge_segs = np.ascontiguousarray(
                corners_cam[:, _CUBOID_EDGE_IDX].reshape(-1, 2, 3))
            edge_colors = np.repeat(colors, 12, axis=0)
            edge_decay = np.repeat(decay, 12)
        else:
            edge_segs = np.empty((0, 2, 3))
            edge_colors = np.empty((0, 3))
            edge_decay = np.empty(0, dtype=np.bool_)
    else:
        box_tris = np.empty((0, 3, 3))
        box_colors = np.empty((0, 3))
        box_decay = np.empty(0, dtype=np.bool_)
        edge_segs = np.empty((0, 2, 3))
        edge_colors = np.empty((0, 3))
        edge_decay = np.empty(0, dtype=np.bool_)

    face_cov = TRANSPARENT_FACE_COVERAGE if cfg.face_mode == "transparent" else 1.0
    return FrameBatches(
        fills, fill_colors, fill_decay,
        strokes, stroke_colors, stroke_decay,
        box_tris, box_colors, box_decay, face_cov,
        edge_segs, edge_colors, edge_decay,
    )


def render_frame(frame: SceneFrame, rig_index: int, cfg: RenderConfig) -> Framebuffer:
    """Rasterize one scene frame through one of its camera rigs.

    Draw order: background, filled map polygons, stroked map lines, actor
    cuboids, traffic-light cuboids, then wireframe edges when enabled.  The
    depth buffer makes the result order-independent for opaque content.
    """
    if not 0 <= rig_index < len(frame.rigs):
        raise IndexError(f"rig index {rig_index} out of range ({len(frame.rigs)} rigs)")
    rig = frame.rigs[rig_index]
    fb = Framebuffer.create(rig.width, rig.height)
    composite_background(fb, cfg, rig)

    k = rig.intrinsics
    b = assemble_batches(frame, rig, cfg)

    def _run_tris(cam_tris, colors, decay, coverage, cull):
        _kernels.render_triangles(
            fb.color, fb.depth, np.ascontiguousarray(cam_tris),
            np.ascontiguousarray(colors, dtype=np.float64),
            np.ascontiguousarray(decay, dtype=np.bool_),
            cfg.d_max,
            np.full(cam_tris.shape[0], coverage, dtype=np.float64),
            rig.z_near, k.fx, k.fy, k.cx, k.cy, cull,
        )

    def _run_segs(cam_segs, colors, decay):
        _kernels.render_segments(
            fb.color, fb.depth, np.ascontiguousarray(cam_segs),
            np.ascontiguousarray(colors, dtype=np.float64),
            np.ascontiguousarray(decay, dtype=np.bool_),
            cfg.d_max, cfg.line_width / 2.0,
            rig.z_near, k.fx, k.fy, k.cx, k.cy,
        )

    if b.fill_tris.size:
        _run_tris(b.fill_tris, b.fill_colors, b.fill_decay, 1.0, False)
    if b.stroke_segs.size:
        _run_segs(b.stroke_segs, b.stroke_colors, b.stroke_decay)
    if b.box_tris.size:
        # Cuboids are closed surfaces: faces pointing away never contribute
        # visible fragments, so they are culled before filling.
        _run_tris(b.box_tris, b.box_colors, b.box_decay, b.face_coverage, True)
    if b.edge_segs.size:
        _run_segs(b.edge_segs, b.edge_colors, b.edge_decay)
    return fb
