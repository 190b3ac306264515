"""Annotation schema, synthetic dataset generation, and persistence.

The annotation container is one JSON document per dataset (human-diffable
and shared with the web UI); bulk map tensors live next to it in the raw
format from the render module. Floats round-trip exactly through JSON via
repr, so save -> load -> save is byte-stable.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .geometry import Camera, project_pose
from .skeleton import SkeletonModel, standard_model, model_from_json_dict

DEFAULT_CAMERA = Camera(fx=1100.0, fy=1100.0, cx=500.0, cy=500.0)

# Anthropometric defaults for a ~1700 mm figure, in bone order (mm).
DEFAULT_BONE_LENGTHS = (
    450.0,          # thorax - pelvis
    120.0, 120.0,   # pelvis - hips
    420.0, 430.0,   # right hip-knee, knee-ankle
    420.0, 430.0,   # left leg
    80.0,           # thorax - upper-neck
    180.0,          # upper-neck - head-top
    180.0, 180.0,   # thorax - shoulders
    300.0, 260.0,   # right arm
    300.0, 260.0,   # left arm
)

# Rest directions per bone (camera frame: x right, y down, z toward scene),
# perturbed per sample by bounded random rotations.
_REST_DIRECTIONS = (
    (0.0, 1.0, 0.0),      # thorax -> pelvis
    (-0.9, 0.4, 0.0),     # pelvis -> r-hip
    (0.9, 0.4, 0.0),      # pelvis -> l-hip
    (0.0, 1.0, 0.0),      # r-hip -> r-knee
    (0.0, 1.0, 0.0),      # r-knee -> r-ankle
    (0.0, 1.0, 0.0),      # l-hip -> l-knee
    (0.0, 1.0, 0.0),      # l-knee -> l-ankle
    (0.0, -1.0, 0.0),     # thorax -> upper-neck
    (0.0, -1.0, 0.0),     # upper-neck -> head-top
    (-1.0, 0.1, 0.0),     # thorax -> r-shoulder
    (1.0, 0.1, 0.0),      # thorax -> l-shoulder
    (-0.25, 1.0, 0.0),    # r-shoulder -> r-elbow
    (0.0, 1.0, 0.0),      # r-elbow -> r-wrist
    (0.25, 1.0, 0.0),     # l-shoulder -> l-elbow
    (0.0, 1.0, 0.0),      # l-elbow -> l-wrist
)

_MAX_ANGLE = (
    0.3,
    0.3, 0.3,
    0.8, 0.8,
    0.8, 0.8,
    0.4,
    0.4,
    0.3, 0.3,
    1.0, 1.0,
    1.0, 1.0,
)


class DatasetError(ValueError):
    pass


@dataclass
class Sample:
    id: str
    center: tuple               # (u, v) px
    person_scale: float
    camera: Camera
    joints2d: np.ndarray        # (16, 2) px
    joints3d: np.ndarray = None  # (16, 3) mm, camera frame; optional
    head_size: float = 0.0      # px, PCKh normalization length
    pseudo_gt: bool = False
    image_ref: str = None
    reproj_tolerance: float = 1e-6  # px; bound on |project(joints3d) - joints2d|


@dataclass
class Dataset:
    samples: list
    split: str = "train"
    skeleton: SkeletonModel = field(default_factory=standard_model)

    def by_id(self, sample_id: str) -> Sample:
        for s in self.samples:
            if s.id == sample_id:
                return s
        raise KeyError(f"no sample with id {sample_id!r}")


def validate_sample(s: Sample):
    j2 = np.asarray(s.joints2d, dtype=np.float64)
    if j2.shape != (16, 2) or not np.all(np.isfinite(j2)):
        raise DatasetError(f"sample {s.id}: joints2d must be finite 16x2")
    if s.head_size <= 0:
        raise DatasetError(f"sample {s.id}: head_size must be positive")
    if s.person_scale <= 0:
        raise DatasetError(f"sample {s.id}: person_scale must be positive")
    if s.joints3d is not None:
        j3 = np.asarray(s.joints3d, dtype=np.float64)
        if j3.shape != (16, 3) or not np.all(np.isfinite(j3)):
            raise DatasetError(f"sample {s.id}: joints3d must be finite 16x3")
        resid = np.abs(project_pose(s.camera, j3) - j2).max()
        if resid > s.reproj_tolerance:
            raise DatasetError(
                f"sample {s.id}: joints3d reprojection residual {resid:.3g} px exceeds "
                f"stored tolerance {s.reproj_tolerance:.3g} px")


def _sample_to_dict(s: Sample) -> dict:
    return {
        "id": s.id,
        "image_ref": s.image_ref,
        "center": [float(s.center[0]), float(s.center[1])],
        "person_scale": float(s.person_scale),
        "camera": {"fx": s.camera.fx, "fy": s.camera.fy, "cx": s.camera.cx, "cy": s.camera.cy},
        "joints2d": np.asarray(s.joints2d, dtype=np.float64).tolist(),
        "joints3d": None if s.joints3d is None else np.asarray(s.joints3d, dtype=np.float64).tolist(),
        "head_size": float(s.head_size),
        "pseudo_gt": bool(s.pseudo_gt),
        "reproj_tolerance": float(s.reproj_tolerance),
    }


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise DatasetError(f"{where}: missing field {key!r}")
    return doc[key]


def _sample_from_dict(doc: dict, index: int) -> Sample:
    where = f"sample #{index}"
    sid = _require(doc, "id", where)
    where = f"sample {sid!r}"
    cam = _require(doc, "camera", where)
    for k in ("fx", "fy", "cx", "cy"):
        _require(cam, k, f"{where}.camera")
    j3 = doc.get("joints3d")
    return Sample(
        id=str(sid),
        center=tuple(_require(doc, "center", where)),
        person_scale=float(_require(doc, "person_scale", where)),
        camera=Camera(fx=float(cam["fx"]), fy=float(cam["fy"]),
                      cx=float(cam["cx"]), cy=float(cam["cy"])),
        joints2d=np.asarray(_require(doc, "joints2d", where), dtype=np.float64),
        joints3d=None if j3 is None else np.asarray(j3, dtype=np.float64),
        head_size=float(_require(doc, "head_size", where)),
        pseudo_gt=bool(doc.get("pseudo_gt", False)),
        image_ref=doc.get("image_ref"),
        reproj_tolerance=float(doc.get("reproj_tolerance", 1e-6)),
    )


def atomic_write_text(path, text: str):
    """Whole-file replace via temp file + rename; last write wins."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_dataset(ds: Dataset, path):
    for s in ds.samples:
        validate_sample(s)
    doc = {
        "split": ds.split,
        "skeleton": ds.skeleton.to_json_dict(),
        "samples": [_sample_to_dict(s) for s in ds.samples],
    }
    atomic_write_text(path, json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_dataset(path) -> Dataset:
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise DatasetError(f"{path}: line {e.lineno}: {e.msg}") from e
    skeleton = model_from_json_dict(_require(doc, "skeleton", str(path)))
    samples = [_sample_from_dict(d, i) for i, d in enumerate(_require(doc, "samples", str(path)))]
    ids = [s.id for s in samples]
    if len(set(ids)) != len(ids):
        dup = next(x for x in ids if ids.count(x) > 1)
        raise DatasetError(f"{path}: duplicate sample id {dup!r}")
    for s in samples:
        validate_sample(s)
    return Dataset(samples=samples, split=doc.get("split", "train"), skeleton=skeleton)


# ---------------------------------------------------------------------------
# synthetic scenes: forward kinematics with bounded random joint rotations
# ---------------------------------------------------------------------------

def _rotation_matrix(axis, angle):
    axis = axis / np.linalg.norm(axis)
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    m = 1.0 - c
    return np.array([
        [c + x * x * m, x * y * m - z * s, x * z * m + y * s],
        [y * x * m + z * s, c + y * y * m, y * z * m - x * s],
        [z * x * m - y * s, z * y * m + x * s, c + z * z * m],
    ])


def synth_pose(rng, skeleton: SkeletonModel, bone_lengths) -> np.ndarray:
    """(16, 3) camera-frame pose built by FK down the bone tree."""
    yaw = _rotation_matrix(np.array([0.0, 1.0, 0.0]), rng.uniform(-1.0, 1.0))
    root = np.array([rng.uniform(-200, 200), rng.uniform(-150, 150), rng.uniform(2000, 4000)])
    joints = np.zeros((16, 3))
    joints[skeleton.root_index] = root
    placed = {skeleton.root_index}
    # bones are listed parent-first, so one pass suffices
    for k, (p, c) in enumerate(skeleton.bones):
        assert p in placed, "bone list must be topologically ordered"
        axis = rng.normal(size=3)
        angle = rng.uniform(0.0, _MAX_ANGLE[k])
        d = _rotation_matrix(axis, angle) @ (yaw @ np.asarray(_REST_DIRECTIONS[k]))
        d = d / np.linalg.norm(d)
        joints[c] = joints[p] + bone_lengths[k] * d
        placed.add(c)
    return joints


def synth_dataset(n: int, seed: int, camera: Camera = DEFAULT_CAMERA,
                  bone_lengths=DEFAULT_BONE_LENGTHS, split: str = "train") -> Dataset:
    """n samples with exact 2D projections and head sizes from the head bone."""
    if n < 1:
        raise ValueError("need at least one sample")
    skeleton = standard_model()
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n):
        pose = synth_pose(rng, skeleton, bone_lengths)
        j2 = project_pose(camera, pose)
        lo = j2.min(axis=0)
        hi = j2.max(axis=0)
        center = ((lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0)
        person_scale = 1.2 * (hi[1] - lo[1]) / 200.0
        head_size = float(np.linalg.norm(j2[9] - j2[8]))
        samples.append(Sample(
            id=f"s{i:04d}",
            center=center,
            person_scale=float(person_scale),
            camera=camera,
            joints2d=j2,
            joints3d=pose,
            head_size=head_size,
        ))
    return Dataset(samples=samples, split=split, skeleton=skeleton)


# ---------------------------------------------------------------------------
# detections: 2D pose estimates ingested from files
# ---------------------------------------------------------------------------

def save_detections(dets: dict, path):
    """dets: sample_id -> (16, 2) array."""
    doc = [{"sample_id": sid, "joints2d": np.asarray(j, dtype=np.float64).tolist()}
           for sid, j in dets.items()]
    atomic_write_text(path, json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_detections(path) -> dict:
    with open(path) as f:
        doc = json.load(f)
    out = {}
    for i, d in enumerate(doc):
        sid = _require(d, "sample_id", f"detection #{i}")
        j = np.asarray(_require(d, "joints2d", f"detection {sid!r}"), dtype=np.float64)
        if j.shape != (16, 2):
            raise DatasetError(f"detection {sid!r}: joints2d must be 16x2")
        out[str(sid)] = j
    return out


def map_filename(sample_id: str, config) -> str:
    return f"{sample_id}_{config.tag()}.skmp"


def photo_filename(sample_id: str) -> str:
    return f"{sample_id}_photo.skmp"
