"""sceneraster: semantic rasterization of annotated driving scenes.

Reconstructs traffic scenes from map polylines, actor cuboids, and traffic
lights; projects them through pinhole cameras into depth-composited RGB
views; generates recovery-perturbed and cross-agent augmented datasets; and
demonstrates raster-to-real feature alignment with hand-checked gradients.
"""

from .geometry import (
    CameraIntrinsics,
    CameraRig,
    ProjectedPoint,
    SE3Pose,
    compose,
    invert,
    project,
    vec3,
)
from .scene import (
    Cuboid,
    PALETTE,
    Polyline,
    SceneFrame,
    SemanticClass,
    TrafficLight,
    Trajectory,
    corners,
    cuboid_faces,
    interpolate,
    light_as_cuboid,
)
from .clip import ClipRect, Polygon2D, clip_polygon, clip_segment_near
from .raster import (
    Fragment,
    Framebuffer,
    RenderConfig,
    composite_background,
    draw_polyline,
    fill_triangle,
    render_frame,
    shade,
)

__version__ = "0.1.0"
