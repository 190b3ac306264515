"""Multi-configuration hypothesis sets and final pose selection.

Selection against a 2D detection minimizes summed squared pixel error after
placing each root-relative hypothesis on the ray through the detected root
joint at a caller-supplied depth. The oracle selector instead minimizes
root-aligned 3D error against ground truth, an upper bound on what any
selection rule can achieve.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .geometry import Camera, back_project, project_pose
from .metrics import mpjpe
from .render import MapConfig
from .skeleton import ROOT_INDEX

H36M_WIDTHS = tuple(range(5, 16))        # 11 stick widths at crop 1.0
MPII_WIDTHS = tuple(range(5, 11))        # 6 stick widths
MPII_CROPS = (1.0, 1.25, 1.5)
ENSEMBLE_SIZE = 11
BASE_CONFIG = (1.0, 10.0)                # single-hypothesis default


@dataclass(frozen=True)
class Hypothesis:
    config: MapConfig
    pose: np.ndarray          # (16, 3) root-relative mm
    source: str = ""


@dataclass(frozen=True)
class HypothesisSet:
    entries: tuple

    def __post_init__(self):
        if not self.entries:
            raise ValueError("hypothesis set must be non-empty")

    def __len__(self):
        return len(self.entries)


def config_grid(mode: str, canvas_size: int = 56) -> list:
    """Deterministic config lists: 'h36m' (11), 'mpii' (18), 'ensemble' (11),
    or 'single' (the one base config)."""
    if mode == "h36m":
        return [MapConfig(1.0, float(l), canvas_size) for l in H36M_WIDTHS]
    if mode == "mpii":
        return [MapConfig(c, float(l), canvas_size) for c in MPII_CROPS for l in MPII_WIDTHS]
    if mode == "ensemble":
        # identical configs; diversity comes from per-run training seeds
        return [MapConfig(*BASE_CONFIG, canvas_size) for _ in range(ENSEMBLE_SIZE)]
    if mode == "single":
        return [MapConfig(*BASE_CONFIG, canvas_size)]
    raise ValueError(f"unknown grid mode {mode!r}")


def place_at_root_depth(pose_rel, detection_root_uv, camera: Camera,
                        root_depth: float) -> np.ndarray:
    """Translate a root-relative pose so its root sits on the detection ray."""
    root_pos = back_project(camera, detection_root_uv, root_depth)
    return np.asarray(pose_rel, dtype=np.float64) + root_pos


def reprojection_error(pose_abs, detection, camera: Camera) -> float:
    """Sum over joints of squared pixel distance; inf if any joint is behind
    the camera (such a hypothesis cannot be matched)."""
    pose_abs = np.asarray(pose_abs, dtype=np.float64)
    if np.any(pose_abs[:, 2] <= 0):
        return float("inf")
    d = project_pose(camera, pose_abs) - np.asarray(detection, dtype=np.float64)
    return float((d * d).sum())


def match_to_2d(hyps: HypothesisSet, detection, camera: Camera, root_depth: float,
                root_index: int = ROOT_INDEX):
    """Entry with minimum reprojection error; ties keep the smaller index.

    Returns (index, camera-frame pose placed at root_depth).
    """
    if root_depth <= 0:
        raise ValueError(f"root_depth must be positive, got {root_depth}")
    detection = np.asarray(detection, dtype=np.float64)
    best_i, best_err, best_pose = -1, np.inf, None
    for i, h in enumerate(hyps.entries):
        pose_abs = place_at_root_depth(h.pose, detection[root_index], camera, root_depth)
        err = reprojection_error(pose_abs, detection, camera)
        if err < best_err:
            best_i, best_err, best_pose = i, err, pose_abs
    if best_pose is None:
        # every entry projected behind the camera; keep the first by convention
        best_i = 0
        best_pose = place_at_root_depth(hyps.entries[0].pose, detection[root_index],
                                        camera, root_depth)
    return best_i, best_pose


def oracle_select(hyps: HypothesisSet, gt_rel, root_index: int = ROOT_INDEX):
    """Entry with minimum root-aligned MPJPE against ground truth: (index, mm)."""
    gt_rel = np.asarray(gt_rel, dtype=np.float64)
    best_i, best_err = -1, np.inf
    for i, h in enumerate(hyps.entries):
        err = mpjpe(h.pose, gt_rel, root_index)
        if err < best_err:
            best_i, best_err = i, err
    return best_i, best_err


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def save_hypotheses(sets: dict, path, root_index: int = ROOT_INDEX):
    """sets: sample_id -> HypothesisSet."""
    doc = {
        "root_index": root_index,
        "samples": {
            sid: [{
                "config": {"crop_scale": h.config.crop_scale,
                           "stick_width": h.config.stick_width,
                           "canvas_size": h.config.canvas_size},
                "pose": np.asarray(h.pose, dtype=np.float64).tolist(),
                "source": h.source,
            } for h in hs.entries]
            for sid, hs in sets.items()
        },
    }
    from .dataio import atomic_write_text
    atomic_write_text(path, json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_hypotheses(path):
    with open(path) as f:
        doc = json.load(f)
    sets = {}
    for sid, entries in doc["samples"].items():
        hs = []
        for e in entries:
            c = e["config"]
            hs.append(Hypothesis(
                config=MapConfig(c["crop_scale"], c["stick_width"], c["canvas_size"]),
                pose=np.asarray(e["pose"], dtype=np.float64),
                source=e.get("source", ""),
            ))
        sets[sid] = HypothesisSet(entries=tuple(hs))
    return sets, int(doc.get("root_index", ROOT_INDEX))


def save_selection_csv(rows, path):
    """rows: (sample_id, selected_index, reproj_error_px2, mpjpe_mm or None)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["sample_id", "selected_index", "reproj_error_px2", "mpjpe_mm"])
        for sid, idx, err, mm in rows:
            w.writerow([sid, idx, repr(float(err)), "" if mm is None else repr(float(mm))])
