"""Compiled inner loops for clipping and rasterization.

Everything here is deterministic scalar IEEE arithmetic (no fastmath, no
parallel reductions) so that identical inputs produce bit-identical
framebuffers on every run and under any worker count.

Pixel coverage rule: a pixel belongs to a triangle when its center
(i + 0.5, j + 0.5) has a positive edge function for all three edges; centers
exactly on an edge count only for top edges (horizontal, interior below) and
left edges (interior to the right).  This keeps shared edges of adjacent
triangles from being written twice.  Interpolated depth at a covered pixel
is (w0*z0 + w1*z1 + w2*z2) * (1/area) with the edge functions evaluated in
two-product form; the reference rasterizer used in tests mirrors these
expressions exactly.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def clip_halfplane(verts, axis, bound, keep_greater):
    """Clip an (n, 3) polygon ring against axis >= bound (or <= bound).

    All three columns are linearly interpolated at edge crossings; the
    clipped coordinate of a crossing is set to the bound exactly.  Vertices
    already satisfying the constraint pass through unchanged, so clipping is
    idempotent vertex-for-vertex.
    """
    n = verts.shape[0]
    out = np.empty((2 * n + 4, 3), dtype=np.float64)
    m = 0
    for i in range(n):
        a = verts[i]
        b = verts[(i + 1) % n]
        va = a[axis] - bound
        vb = b[axis] - bound
        if not keep_greater:
            va = -va
            vb = -vb
        if va >= 0.0:
            out[m, 0] = a[0]
            out[m, 1] = a[1]
            out[m, 2] = a[2]
            m += 1
            if vb < 0.0 and va != 0.0:
                t = va / (va - vb)
                out[m, 0] = a[0] + t * (b[0] - a[0])
                out[m, 1] = a[1] + t * (b[1] - a[1])
                out[m, 2] = a[2] + t * (b[2] - a[2])
                out[m, axis] = bound
                m += 1
        elif vb > 0.0:
            t = va / (va - vb)
            out[m, 0] = a[0] + t * (b[0] - a[0])
            out[m, 1] = a[1] + t * (b[1] - a[1])
            out[m, 2] = a[2] + t * (b[2] - a[2])
            out[m, axis] = bound
            m += 1
    return out[:m]


@njit(cache=True)
def clip_polygon_rect(verts, u_min, u_max, v_min, v_max):
    """Sutherland-Hodgman clip against a rectangle: left, right, bottom, top."""
    p = clip_halfplane(verts, 0, u_min, True)
    if p.shape[0] >= 3:
        p = clip_halfplane(p, 0, u_max, False)
    if p.shape[0] >= 3:
        p = clip_halfplane(p, 1, v_min, True)
    if p.shape[0] >= 3:
        p = clip_halfplane(p, 1, v_max, False)
    if p.shape[0] < 3:
        return p[:0]
    return p


@njit(cache=True)
def clip_polygon_near(cam_verts, z_near):
    """Clip a camera-space (n, 3) polygon to z >= z_near."""
    p = clip_halfplane(cam_verts, 2, z_near, True)
    if p.shape[0] < 3:
        return p[:0]
    return p


@njit(cache=True)
def clip_segment_near(p0, p1, z_near, out0, out1):
    """Clip a camera-space segment to z >= z_near.

    Writes the surviving sub-segment into out0/out1 and returns True, or
    returns False when both endpoints are behind the plane.
    """
    z0 = p0[2]
    z1 = p1[2]
    if z0 < z_near and z1 < z_near:
        return False
    for k in range(3):
        out0[k] = p0[k]
        out1[k] = p1[k]
    if z0 < z_near:
        t = (z_near - z0) / (z1 - z0)
        out0[0] = p0[0] + t * (p1[0] - p0[0])
        out0[1] = p0[1] + t * (p1[1] - p0[1])
        out0[2] = z_near
    elif z1 < z_near:
        t = (z_near - z1) / (z0 - z1)
        out1[0] = p1[0] + t * (p0[0] - p1[0])
        out1[1] = p1[1] + t * (p0[1] - p1[1])
        out1[2] = z_near
    return True


@njit(cache=True, inline="always")
def _edge_accepts_tie(ax, ay, bx, by):
    # Top edge: horizontal with interior below; left edge: going up on screen.
    return (ay == by and bx > ax) or (by < ay)


@njit(cache=True)
def fill_triangle(color, depth, x0, y0, z0, x1, y1, z1, x2, y2, z2,
                  r, g, b, depth_decay, d_max, coverage):
    """Depth-tested scan fill of one screen-space triangle.

    Vertices must already lie within the framebuffer rectangle.  Writes a
    pixel when its interpolated depth is strictly less than the stored depth
    (first writer wins at exact ties).  The written color is
    round(base * alpha * coverage) with alpha = max(0, 1 - d/d_max) when depth
    decay is on.
    """
    area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
    if area == 0.0:
        return
    if area < 0.0:
        x1, y1, z1, x2, y2, z2 = x2, y2, z2, x1, y1, z1
        area = -area
    inv_area = 1.0 / area

    h = depth.shape[0]
    w = depth.shape[1]
    lo_x = min(x0, min(x1, x2))
    hi_x = max(x0, max(x1, x2))
    lo_y = min(y0, min(y1, y2))
    hi_y = max(y0, max(y1, y2))
    i_min = max(int(np.floor(lo_x - 0.5)), 0)
    i_max = min(int(np.ceil(hi_x - 0.5)), w - 1)
    j_min = max(int(np.floor(lo_y - 0.5)), 0)
    j_max = min(int(np.ceil(hi_y - 0.5)), h - 1)

    tie0 = _edge_accepts_tie(x1, y1, x2, y2)
    tie1 = _edge_accepts_tie(x2, y2, x0, y0)
    tie2 = _edge_accepts_tie(x0, y0, x1, y1)

    # Each non-horizontal edge's half-plane bounds the pixel span of every
    # row; solve E == 0 for x with a one-pixel safety margin and run the
    # exact per-pixel tests only inside the span.  Near-horizontal edges
    # (|dy| < 1) contribute no bound and fall back to the bounding box.
    dy0 = y2 - y1
    dy1 = y0 - y2
    dy2 = y1 - y0
    sl0 = (x2 - x1) / dy0 if (dy0 >= 1.0 or dy0 <= -1.0) else 0.0
    sl1 = (x0 - x2) / dy1 if (dy1 >= 1.0 or dy1 <= -1.0) else 0.0
    sl2 = (x1 - x0) / dy2 if (dy2 >= 1.0 or dy2 <= -1.0) else 0.0

    for j in range(j_min, j_max + 1):
        py = j + 0.5
        lo = i_min
        hi = i_max
        if dy0 >= 1.0 or dy0 <= -1.0:
            root = x1 + sl0 * (py - y1)
            if dy0 < 0.0:
                bnd = int(np.floor(root - 0.5)) - 1
                if bnd > lo:
                    lo = bnd
            else:
                bnd = int(np.ceil(root - 0.5)) + 1
                if bnd < hi:
                    hi = bnd
        if dy1 >= 1.0 or dy1 <= -1.0:
            root = x2 + sl1 * (py - y2)
            if dy1 < 0.0:
                bnd = int(np.floor(root - 0.5)) - 1
                if bnd > lo:
                    lo = bnd
            else:
                bnd = int(np.ceil(root - 0.5)) + 1
                if bnd < hi:
                    hi = bnd
        if dy2 >= 1.0 or dy2 <= -1.0:
            root = x0 + sl2 * (py - y0)
            if dy2 < 0.0:
                bnd = int(np.floor(root - 0.5)) - 1
                if bnd > lo:
                    lo = bnd
            else:
                bnd = int(np.ceil(root - 0.5)) + 1
                if bnd < hi:
                    hi = bnd
        was_inside = False
        for i in range(lo, hi + 1):
            px = i + 0.5
            w0 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
            if w0 < 0.0 or (w0 == 0.0 and not tie0):
                if was_inside:
                    break  # one contiguous covered span per row
                continue
            w1 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
            if w1 < 0.0 or (w1 == 0.0 and not tie1):
                if was_inside:
                    break
                continue
            w2 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
            if w2 < 0.0 or (w2 == 0.0 and not tie2):
                if was_inside:
                    break
                continue
            was_inside = True
            d = (w0 * z0 + w1 * z1 + w2 * z2) * inv_area
            if d < depth[j, i]:
                depth[j, i] = d
                if depth_decay:
                    alpha = 1.0 - d / d_max
                    if alpha < 0.0:
                        alpha = 0.0
                else:
                    alpha = 1.0
                scale = alpha * coverage
                color[j, i, 0] = np.uint8(int(r * scale + 0.5))
                color[j, i, 1] = np.uint8(int(g * scale + 0.5))
                color[j, i, 2] = np.uint8(int(b * scale + 0.5))


@njit(cache=True)
def _fill_clipped_polygon(color, depth, poly, r, g, b,
                          depth_decay, d_max, coverage):
    """Fan-triangulate a convex screen polygon and fill each triangle."""
    for k in range(1, poly.shape[0] - 1):
        fill_triangle(
            color, depth,
            poly[0, 0], poly[0, 1], poly[0, 2],
            poly[k, 0], poly[k, 1], poly[k, 2],
            poly[k + 1, 0], poly[k + 1, 1], poly[k + 1, 2],
            r, g, b, depth_decay, d_max, coverage,
        )


@njit(cache=True)
def _shoelace2(poly):
    """Twice the signed screen area of an (n, >=2) polygon."""
    s = 0.0
    n = poly.shape[0]
    for i in range(n):
        j = (i + 1) % n
        s += poly[i, 0] * poly[j, 1] - poly[j, 0] * poly[i, 1]
    return s


@njit(cache=True)
def render_triangles(color, depth, tris, rgbs, decay_flags, d_max, coverage,
                     z_near, fx, fy, cx, cy, cull_backfaces):
    """Near-clip, project, rect-clip, and fill camera-space triangles.

    tris: (T, 3, 3) camera-space vertices; rgbs: (T, 3) base colors;
    decay_flags: (T,) per-triangle depth-decay switches; coverage: (T,).
    Triangles are processed in submission order.  With cull_backfaces,
    triangles facing away from the camera are skipped: outward-wound faces
    project to a negative screen shoelace sum (v grows downward) exactly
    when their normal points toward the camera.  Only meaningful for closed
    surfaces with consistent outward winding.
    """
    h = float(depth.shape[0])
    w = float(depth.shape[1])
    screen = np.empty((4, 3), dtype=np.float64)
    for t in range(tris.shape[0]):
        z0 = tris[t, 0, 2]
        z1 = tris[t, 1, 2]
        z2 = tris[t, 2, 2]
        if z0 >= z_near and z1 >= z_near and z2 >= z_near:
            poly = tris[t]
        else:
            poly = clip_polygon_near(tris[t], z_near)
            if poly.shape[0] < 3:
                continue
        n = poly.shape[0]
        for i in range(n):
            z = poly[i, 2]
            screen[i, 0] = fx * poly[i, 0] / z + cx
            screen[i, 1] = fy * poly[i, 1] / z + cy
            screen[i, 2] = z
        if cull_backfaces and _shoelace2(screen[:n]) >= 0.0:
            continue
        inside = True
        for i in range(n):
            if not (0.0 <= screen[i, 0] <= w and 0.0 <= screen[i, 1] <= h):
                inside = False
                break
        if inside:
            clipped = screen[:n]
        else:
            clipped = clip_polygon_rect(screen[:n], 0.0, w, 0.0, h)
            if clipped.shape[0] < 3:
                continue
        _fill_clipped_polygon(
            color, depth, clipped,
            rgbs[t, 0], rgbs[t, 1], rgbs[t, 2],
            decay_flags[t], d_max, coverage[t],
        )


@njit(cache=True)
def stroke_screen_segment(color, depth, u0, v0, z0, u1, v1, z1,
                          r, g, b, decay, d_max, half_width, quad):
    """Rasterize one projected segment as a quad of width 2 * half_width.

    Depth is carried per endpoint and constant across the width; the quad is
    clipped to the framebuffer before filling.  ``quad`` is (4, 3) scratch.
    """
    h = float(depth.shape[0])
    w = float(depth.shape[1])
    du = u1 - u0
    dv = v1 - v0
    length = np.sqrt(du * du + dv * dv)
    if length == 0.0:
        return
    nx = -dv / length * half_width
    ny = du / length * half_width
    quad[0, 0] = u0 + nx
    quad[0, 1] = v0 + ny
    quad[0, 2] = z0
    quad[1, 0] = u1 + nx
    quad[1, 1] = v1 + ny
    quad[1, 2] = z1
    quad[2, 0] = u1 - nx
    quad[2, 1] = v1 - ny
    quad[2, 2] = z1
    quad[3, 0] = u0 - nx
    quad[3, 1] = v0 - ny
    quad[3, 2] = z0
    inside = True
    for i in range(4):
        if not (0.0 <= quad[i, 0] <= w and 0.0 <= quad[i, 1] <= h):
            inside = False
            break
    if not inside:
        quad2 = clip_polygon_rect(quad, 0.0, w, 0.0, h)
        if quad2.shape[0] < 3:
            return
        _fill_clipped_polygon(color, depth, quad2, r, g, b, decay, d_max, 1.0)
        return
    _fill_clipped_polygon(color, depth, quad, r, g, b, decay, d_max, 1.0)


@njit(cache=True)
def render_segments(color, depth, segs, rgbs, decay_flags, d_max,
                    half_width, z_near, fx, fy, cx, cy):
    """Near-clip, project, and stroke camera-space segments.

    segs: (S, 2, 3) camera-space endpoints, processed in submission order.
    """
    q0 = np.empty(3, dtype=np.float64)
    q1 = np.empty(3, dtype=np.float64)
    quad = np.empty((4, 3), dtype=np.float64)
    for s in range(segs.shape[0]):
        if not clip_segment_near(segs[s, 0], segs[s, 1], z_near, q0, q1):
            continue
        u0 = fx * q0[0] / q0[2] + cx
        v0 = fy * q0[1] / q0[2] + cy
        u1 = fx * q1[0] / q1[2] + cx
        v1 = fy * q1[1] / q1[2] + cy
        stroke_screen_segment(
            color, depth, u0, v0, q0[2], u1, v1, q1[2],
            rgbs[s, 0], rgbs[s, 1], rgbs[s, 2],
            decay_flags[s], d_max, half_width, quad,
        )
