"""Shared fixtures: controlled scenes where only chosen bones reach the canvas."""

import numpy as np
import pytest

from skelpose.geometry import Camera, CropWindow
from skelpose.skeleton import standard_model

# Canvas-visible bone indices in the crossing scene.
H_BONE = 14   # l-elbow -> l-wrist, horizontal
V_BONE = 12   # r-elbow -> r-wrist, vertical

CROSS_CAMERA = Camera(fx=100.0, fy=100.0, cx=0.0, cy=0.0)
CROSS_WINDOW = CropWindow(center=(0.0, 0.0), side=32.0, out_size=32)


def _at(u, v, z):
    """3D point projecting to image pixel (u, v) at depth z under CROSS_CAMERA."""
    return [u * z / 100.0, v * z / 100.0, z]


def crossing_pose(depth_h=900.0, depth_v=1100.0, with_vertical=True):
    """16-joint pose where only the two forearms can touch the 32x32 canvas.

    The left forearm runs horizontally through the canvas at constant depth
    depth_h, the right forearm vertically at depth_v. Everything else is
    parked far off-window around image (-200, -200).
    """
    far = {}
    # cluster the torso, head, and legs well outside the window
    spots = [(-200, -200), (-205, -195), (-195, -205), (-210, -200), (-215, -195),
             (-190, -210), (-185, -205), (-200, -215), (-195, -215), (-205, -215)]
    pose = np.zeros((16, 3))
    names = standard_model().joint_names
    cluster = ["r-ankle", "r-knee", "r-hip", "l-hip", "l-knee", "l-ankle",
               "pelvis", "thorax", "upper-neck", "head-top"]
    for (u, v), name in zip(spots, cluster):
        pose[names.index(name)] = _at(u, v, 1000.0)
    # left arm: shoulder just beyond the elbow on the same horizontal line
    pose[names.index("l-shoulder")] = _at(-60, 0, depth_h)
    pose[names.index("l-elbow")] = _at(-40, 0, depth_h)
    pose[names.index("l-wrist")] = _at(40, 0, depth_h)
    if with_vertical:
        pose[names.index("r-shoulder")] = _at(0, -60, depth_v)
        pose[names.index("r-elbow")] = _at(0, -40, depth_v)
        pose[names.index("r-wrist")] = _at(0, 40, depth_v)
    else:
        pose[names.index("r-shoulder")] = _at(-220, -195, 1000.0)
        pose[names.index("r-elbow")] = _at(-225, -200, 1000.0)
        pose[names.index("r-wrist")] = _at(-230, -205, 1000.0)
    return pose


def brute_force_maps(model, pose, camera, window, config):
    """Independent per-pixel oracle: plain Python loops, own projection math."""
    size = config.canvas_size
    r = config.stick_width / 2.0
    pose = np.asarray(pose, dtype=np.float64)
    pts = []
    for j in range(16):
        x, y, z = pose[j]
        u = camera.fx * x / z + camera.cx
        v = camera.fy * y / z + camera.cy
        cu = (u - (window.center[0] - window.side / 2.0)) * window.out_size / window.side
        cv = (v - (window.center[1] - window.side / 2.0)) * window.out_size / window.side
        pts.append((cu, cv))
    fore = np.zeros((size, size, 3))
    back = np.zeros((size, size, 3))
    for row in range(size):
        for col in range(size):
            qx, qy = col + 0.5, row + 0.5
            best_near, best_far = None, None
            near_d, far_d = np.inf, -np.inf
            for k, (p, c) in enumerate(model.bones):
                ax, ay = pts[p]
                bx, by = pts[c]
                ex, ey = bx - ax, by - ay
                ee = ex * ex + ey * ey
                if ee > 0:
                    t = ((qx - ax) * ex + (qy - ay) * ey) / ee
                    t = min(1.0, max(0.0, t))
                else:
                    t = 0.0
                px, py = ax + t * ex, ay + t * ey
                d2 = (qx - px) ** 2 + (qy - py) ** 2
                if d2 > r * r:
                    continue
                depth = (1.0 - t) * pose[p, 2] + t * pose[c, 2]
                if depth < near_d:
                    near_d, best_near = depth, k
                if depth > far_d:
                    far_d, best_far = depth, k
            if best_near is not None:
                fore[row, col] = model.bone_colors[best_near]
                back[row, col] = model.bone_colors[best_far]
    return fore, back


def finite_difference_check(make_loss, tensors, eps=1e-5, skip_nonsmooth=False):
    """Worst relative error between analytic grads and central differences.

    make_loss rebuilds the scalar loss from the current tensor data; grads of
    `tensors` are compared entry by entry. The relative-error denominator is
    floored at 1e-5: below that, central differences only resolve the loss's
    own f64 round-off, so the comparison is effectively absolute (1e-9 at the
    stated 1e-4 threshold). With skip_nonsmooth, entries whose two-scale
    difference estimates disagree (a relu kink inside the eps window; central
    differences are meaningless there) are left out, and at most 5% of
    entries may be skipped.
    """
    for t in tensors:
        t.zero_grad()
    make_loss().backward()
    grads = [t.grad.copy() for t in tensors]
    worst = 0.0
    total = skipped = 0

    def loss_at(flat, i, value):
        orig = flat[i]
        flat[i] = value
        out = float(make_loss().data)
        flat[i] = orig
        return out

    for t, g in zip(tensors, grads):
        flat = t.data.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            total += 1
            orig = flat[i]
            est1 = (loss_at(flat, i, orig + eps) - loss_at(flat, i, orig - eps)) / (2.0 * eps)
            if skip_nonsmooth:
                est2 = (loss_at(flat, i, orig + eps / 2) - loss_at(flat, i, orig - eps / 2)) / eps
                if abs(est1 - est2) > 1e-6 * max(1.0, abs(est1)):
                    skipped += 1
                    continue
            denom = max(abs(est1), abs(gf[i]), 1e-5)
            worst = max(worst, abs(est1 - gf[i]) / denom)
    assert skipped <= max(1, total // 20), f"too many non-smooth entries: {skipped}/{total}"
    return worst


@pytest.fixture
def model():
    return standard_model()
