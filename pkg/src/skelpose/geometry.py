"""Pinhole projection, crop windows, and image<->canvas coordinate maps.

Poses are plain float64 arrays: (16, 3) camera-frame millimeters for 3D
(Z is depth, positive toward the scene), (16, 2) source-image pixels for 2D.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# MPII convention: person scale 1.0 corresponds to a 200 px tall person.
SCALE_TO_PX = 200.0


@dataclass(frozen=True)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")


@dataclass(frozen=True)
class CropWindow:
    """Square image-space window mapped onto a square canvas of out_size px."""

    center: tuple
    side: float
    out_size: int

    def __post_init__(self):
        if self.side <= 0:
            raise ValueError(f"window side must be positive, got {self.side}")
        if self.out_size < 8:
            raise ValueError(f"out_size must be >= 8, got {self.out_size}")


def project(camera: Camera, p) -> np.ndarray:
    """Project one 3D point (mm) to image pixels. Requires Z > 0."""
    p = np.asarray(p, dtype=np.float64)
    z = p[2]
    if z <= 0:
        raise ValueError(f"cannot project point with non-positive depth Z={z}")
    return np.array([camera.fx * p[0] / z + camera.cx, camera.fy * p[1] / z + camera.cy])


def project_pose(camera: Camera, pose) -> np.ndarray:
    """Per-joint pinhole projection of a (K, 3) pose to (K, 2) pixels."""
    pose = np.asarray(pose, dtype=np.float64)
    z = pose[:, 2]
    bad = np.nonzero(z <= 0)[0]
    if bad.size:
        raise ValueError(f"joint {bad[0]} has non-positive depth Z={z[bad[0]]}")
    out = np.empty((pose.shape[0], 2))
    out[:, 0] = camera.fx * pose[:, 0] / z + camera.cx
    out[:, 1] = camera.fy * pose[:, 1] / z + camera.cy
    return out


def back_project(camera: Camera, uv, depth: float) -> np.ndarray:
    """Invert `project`: the 3D point at `depth` on the ray through pixel uv."""
    if depth <= 0:
        raise ValueError(f"depth must be positive, got {depth}")
    u, v = float(uv[0]), float(uv[1])
    return np.array([(u - camera.cx) * depth / camera.fx,
                     (v - camera.cy) * depth / camera.fy,
                     depth])


def crop_window(center, person_scale: float, crop_scale: float, out_size: int) -> CropWindow:
    """Square crop centered at `center` with side 200 * person_scale * crop_scale px."""
    if person_scale <= 0:
        raise ValueError(f"person_scale must be positive, got {person_scale}")
    if crop_scale <= 0:
        raise ValueError(f"crop_scale must be positive, got {crop_scale}")
    side = SCALE_TO_PX * person_scale * crop_scale
    return CropWindow(center=(float(center[0]), float(center[1])), side=side, out_size=int(out_size))


def to_canvas(w: CropWindow, p) -> np.ndarray:
    """Affine image->canvas map: window top-left -> (0,0), window side -> out_size.

    Points outside the window map outside [0, out_size); no clipping here.
    """
    p = np.asarray(p, dtype=np.float64)
    half = w.side / 2.0
    scale = w.out_size / w.side
    return (p - (np.asarray(w.center) - half)) * scale


def from_canvas(w: CropWindow, p) -> np.ndarray:
    """Inverse of `to_canvas`."""
    p = np.asarray(p, dtype=np.float64)
    half = w.side / 2.0
    return p * (w.side / w.out_size) + (np.asarray(w.center) - half)
