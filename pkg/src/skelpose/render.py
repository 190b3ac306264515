"""Occlusion-aware stick-figure map rasterization.

Each bone is a capsule on the canvas: a pixel is covered when the distance
from its center to the projected bone segment is at most stick_width / 2.
Depth at a covered pixel is the linear interpolation of the endpoint camera
depths along the clamped segment parameter. The fore map keeps the nearest
covering bone's color, the back map the farthest; single-coverage pixels are
identical in both, uncovered pixels are black. Depth ties keep the smaller
bone index. Pixel centers sit at integer + 0.5; edges are hard (no AA).

Two renderers are provided: `render_pair` culls per-bone bounding boxes,
`render_pair_reference` evaluates every (pixel, bone) pair. Both run the
same per-pixel arithmetic and must agree bit for bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .geometry import Camera, CropWindow, crop_window, project_pose, to_canvas
from .skeleton import SkeletonModel

MAGIC = b"SKMP"


@dataclass(frozen=True)
class MapConfig:
    """One rendering configuration: crop rescale factor and stick width."""

    crop_scale: float
    stick_width: float
    canvas_size: int = 56

    def __post_init__(self):
        if self.crop_scale <= 0:
            raise ValueError(f"crop_scale must be positive, got {self.crop_scale}")
        if not 5.0 <= self.stick_width <= 15.0:
            raise ValueError(f"stick_width must be in [5, 15], got {self.stick_width}")
        if self.canvas_size < 16:
            raise ValueError(f"canvas_size must be >= 16, got {self.canvas_size}")

    def tag(self) -> str:
        return f"c{self.crop_scale:g}_l{self.stick_width:g}"


@dataclass(frozen=True)
class SkeletonMapPair:
    """Foreground and background maps, (S, S, 3) float64 in [0, 1]."""

    fore: np.ndarray
    back: np.ndarray
    config: MapConfig


def _canvas_endpoints(model, pose, camera, window):
    pose = np.asarray(pose, dtype=np.float64)
    z = pose[:, 2]
    bad = np.nonzero(z <= 0)[0]
    if bad.size:
        raise ValueError(f"joint {bad[0]} has non-positive depth Z={z[bad[0]]}")
    pts = to_canvas(window, project_pose(camera, pose))
    bones = np.asarray(model.bones, dtype=np.intp)
    a = pts[bones[:, 0]]          # parent endpoint, canvas px
    b = pts[bones[:, 1]]          # child endpoint
    za = z[bones[:, 0]]
    zb = z[bones[:, 1]]
    return a, b, za, zb


def _bone_coverage(a, b, za, zb, r2, xs, ys):
    """Coverage mask and interpolated depth for one bone over a pixel grid.

    xs, ys are 1D arrays of pixel-center coordinates (absolute, col + 0.5 /
    row + 0.5). Every arithmetic step is elementwise, so evaluating on a
    sub-grid yields bitwise the same values as on the full grid.
    """
    qx = xs[None, :]
    qy = ys[:, None]
    ex = b[0] - a[0]
    ey = b[1] - a[1]
    ee = ex * ex + ey * ey
    dx = qx - a[0]
    dy = qy - a[1]
    if ee > 0.0:
        t = (dx * ex + dy * ey) / ee
        t = np.clip(t, 0.0, 1.0)
    else:
        # coincident projected endpoints: the stick degenerates to a disc
        t = np.zeros((ys.size, xs.size))
    px = a[0] + t * ex
    py = a[1] + t * ey
    ddx = qx - px
    ddy = qy - py
    d2 = ddx * ddx + ddy * ddy
    covered = d2 <= r2
    depth = (1.0 - t) * za + t * zb
    return covered, depth


def _paint(fore_idx, back_idx, colors):
    size = fore_idx.shape[0]
    fore = np.zeros((size, size, 3))
    back = np.zeros((size, size, 3))
    for k in range(len(colors)):
        fore[fore_idx == k] = colors[k]
        back[back_idx == k] = colors[k]
    return fore, back


def render_pair_reference(model: SkeletonModel, pose, camera: Camera,
                          window: CropWindow, config: MapConfig) -> SkeletonMapPair:
    """Naive O(pixels x bones) renderer: full-grid evaluation of every bone."""
    size = config.canvas_size
    a, b, za, zb = _canvas_endpoints(model, pose, camera, window)
    r2 = (config.stick_width * 0.5) ** 2
    xs = np.arange(size, dtype=np.float64) + 0.5
    ys = np.arange(size, dtype=np.float64) + 0.5

    near = np.full((size, size), np.inf)
    far = np.full((size, size), -np.inf)
    fore_idx = np.full((size, size), -1, dtype=np.intp)
    back_idx = np.full((size, size), -1, dtype=np.intp)
    for k in range(model.num_bones):
        covered, depth = _bone_coverage(a[k], b[k], za[k], zb[k], r2, xs, ys)
        upd = covered & (depth < near)
        near[upd] = depth[upd]
        fore_idx[upd] = k
        upd = covered & (depth > far)
        far[upd] = depth[upd]
        back_idx[upd] = k
    fore, back = _paint(fore_idx, back_idx, model.bone_colors)
    return SkeletonMapPair(fore=fore, back=back, config=config)


def render_pair(model: SkeletonModel, pose, camera: Camera,
                window: CropWindow, config: MapConfig) -> SkeletonMapPair:
    """Production renderer: per-bone bounding-box culling, same output bits."""
    size = config.canvas_size
    a, b, za, zb = _canvas_endpoints(model, pose, camera, window)
    r = config.stick_width * 0.5
    r2 = r * r

    near = np.full((size, size), np.inf)
    far = np.full((size, size), -np.inf)
    fore_idx = np.full((size, size), -1, dtype=np.intp)
    back_idx = np.full((size, size), -1, dtype=np.intp)
    for k in range(model.num_bones):
        # pixels whose centers could be within r of the segment, plus 1px slack
        x0 = max(0, int(np.floor(min(a[k, 0], b[k, 0]) - r - 0.5)))
        x1 = min(size, int(np.ceil(max(a[k, 0], b[k, 0]) + r + 0.5)) + 1)
        y0 = max(0, int(np.floor(min(a[k, 1], b[k, 1]) - r - 0.5)))
        y1 = min(size, int(np.ceil(max(a[k, 1], b[k, 1]) + r + 0.5)) + 1)
        if x0 >= x1 or y0 >= y1:
            continue
        xs = np.arange(x0, x1, dtype=np.float64) + 0.5
        ys = np.arange(y0, y1, dtype=np.float64) + 0.5
        covered, depth = _bone_coverage(a[k], b[k], za[k], zb[k], r2, xs, ys)
        sub = (slice(y0, y1), slice(x0, x1))
        upd = covered & (depth < near[sub])
        near[sub][upd] = depth[upd]
        fore_idx[sub][upd] = k
        upd = covered & (depth > far[sub])
        far[sub][upd] = depth[upd]
        back_idx[sub][upd] = k
    fore, back = _paint(fore_idx, back_idx, model.bone_colors)
    return SkeletonMapPair(fore=fore, back=back, config=config)


def render_all(model: SkeletonModel, pose, camera: Camera, base_center,
               person_scale: float, configs) -> list:
    """One map pair per config, each with its own crop window. Order preserved."""
    if not configs:
        raise ValueError("configs must be non-empty")
    out = []
    for i, cfg in enumerate(configs):
        try:
            w = crop_window(base_center, person_scale, cfg.crop_scale, cfg.canvas_size)
            out.append(render_pair(model, pose, camera, w, cfg))
        except ValueError as e:
            raise ValueError(f"config {i} ({cfg.tag()}): {e}") from e
    return out


# ---------------------------------------------------------------------------
# raw tensor files: 16-byte header (magic, canvas size, channels, reserved),
# then row-major little-endian float32 planes in HWC order
# ---------------------------------------------------------------------------

def save_raw_tensor(path, arr):
    arr = np.asarray(arr, dtype=np.float64)
    size, _, channels = arr.shape
    header = MAGIC + struct.pack("<III", size, channels, 0)
    with open(path, "wb") as f:
        f.write(header)
        f.write(arr.astype("<f4").tobytes())


def load_raw_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) != 16 or header[:4] != MAGIC:
            raise ValueError(f"{path}: not a raw map tensor file (bad magic)")
        size, channels, _ = struct.unpack("<III", header[4:])
        data = np.frombuffer(f.read(), dtype="<f4")
    expected = size * size * channels
    if data.size != expected:
        raise ValueError(f"{path}: expected {expected} values, found {data.size}")
    return data.reshape(size, size, channels).astype(np.float64)


def save_map_pair(path, pair: SkeletonMapPair):
    save_raw_tensor(path, np.concatenate([pair.fore, pair.back], axis=2))


def load_map_pair(path, config: MapConfig) -> SkeletonMapPair:
    arr = load_raw_tensor(path)
    if arr.shape[2] != 6:
        raise ValueError(f"{path}: map pair needs 6 channels, found {arr.shape[2]}")
    if arr.shape[0] != config.canvas_size:
        raise ValueError(f"{path}: canvas {arr.shape[0]} does not match config {config.canvas_size}")
    return SkeletonMapPair(fore=arr[:, :, :3], back=arr[:, :, 3:], config=config)


def map_to_png_bytes(arr) -> bytes:
    import io

    u8 = np.rint(np.clip(np.asarray(arr), 0.0, 1.0) * 255.0).astype(np.uint8)
    img = Image.fromarray(u8, mode="RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def save_map_png(path, arr):
    with open(path, "wb") as f:
        f.write(map_to_png_bytes(arr))


# ---------------------------------------------------------------------------
# raw-image stand-in: monochrome person silhouette over procedural clutter
# ---------------------------------------------------------------------------

def render_photo_standin(model: SkeletonModel, pose, camera: Camera,
                         window: CropWindow, size: int, texture_seed: int,
                         stick_width: float = 7.0) -> np.ndarray:
    """A crude (S, S, 3) photo surrogate: no part colors, no depth ordering.

    The person is a single gray-green silhouette; the background is a
    deterministic mix of sinusoidal gradients and soft blobs seeded per
    sample, standing in for the texture and lighting clutter of real images.
    """
    rng = np.random.default_rng(texture_seed)
    ys, xs = np.mgrid[0:size, 0:size]
    u = xs / size
    v = ys / size
    img = np.zeros((size, size, 3))
    for c in range(3):
        fu, fv = rng.uniform(0.5, 3.0, size=2)
        pu, pv = rng.uniform(0.0, 2 * np.pi, size=2)
        img[:, :, c] = 0.5 + 0.25 * np.sin(2 * np.pi * fu * u + pu) * np.cos(2 * np.pi * fv * v + pv)
    for _ in range(4):
        bx, by = rng.uniform(0, size, size=2)
        rad = rng.uniform(size / 8, size / 3)
        blob = np.exp(-((xs - bx) ** 2 + (ys - by) ** 2) / (2 * rad * rad))
        img += rng.uniform(-0.3, 0.3) * blob[:, :, None] * rng.uniform(0.3, 1.0, size=3)

    a, b, za, zb = _canvas_endpoints(model, pose, camera, window)
    r2 = (stick_width * 0.5) ** 2
    pxs = np.arange(size, dtype=np.float64) + 0.5
    pys = np.arange(size, dtype=np.float64) + 0.5
    person = np.zeros((size, size), dtype=bool)
    for k in range(model.num_bones):
        covered, _ = _bone_coverage(a[k], b[k], za[k], zb[k], r2, pxs, pys)
        person |= covered
    tint = rng.uniform(0.35, 0.65)
    img[person] = np.array([tint, tint, tint * 0.9])
    return np.clip(img, 0.0, 1.0)
