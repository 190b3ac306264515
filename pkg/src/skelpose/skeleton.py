"""Canonical 16-joint human skeleton: joints, bone tree, root, color palette."""

from __future__ import annotations

import colorsys
from dataclasses import dataclass
from functools import lru_cache

JOINT_NAMES = (
    "r-ankle", "r-knee", "r-hip", "l-hip", "l-knee", "l-ankle",
    "pelvis", "thorax", "upper-neck", "head-top",
    "r-wrist", "r-elbow", "r-shoulder", "l-shoulder", "l-elbow", "l-wrist",
)

ROOT_INDEX = JOINT_NAMES.index("thorax")

# (parent, child) pairs; the 15 edges form a tree rooted at the thorax.
BONES = (
    (7, 6),    # thorax - pelvis
    (6, 2),    # pelvis - r-hip
    (6, 3),    # pelvis - l-hip
    (2, 1),    # r-hip - r-knee
    (1, 0),    # r-knee - r-ankle
    (3, 4),    # l-hip - l-knee
    (4, 5),    # l-knee - l-ankle
    (7, 8),    # thorax - upper-neck
    (8, 9),    # upper-neck - head-top
    (7, 12),   # thorax - r-shoulder
    (7, 13),   # thorax - l-shoulder
    (12, 11),  # r-shoulder - r-elbow
    (11, 10),  # r-elbow - r-wrist
    (13, 14),  # l-shoulder - l-elbow
    (14, 15),  # l-elbow - l-wrist
)


@dataclass(frozen=True)
class SkeletonModel:
    """Fixed articulation: 16 joints, 15 parent->child bones, per-bone color.

    Immutable; instances can be shared freely across threads.
    """

    joint_names: tuple
    root_index: int
    bones: tuple
    bone_colors: tuple

    @property
    def num_joints(self):
        return len(self.joint_names)

    @property
    def num_bones(self):
        return len(self.bones)

    def joint_index(self, name: str) -> int:
        return self.joint_names.index(name)

    def children_of(self, joint: int):
        return [c for (p, c) in self.bones if p == joint]

    def to_json_dict(self) -> dict:
        return {
            "joints": list(self.joint_names),
            "root": self.root_index,
            "bones": [list(b) for b in self.bones],
            "colors": [list(c) for c in self.bone_colors],
        }


def _palette(n: int):
    # n hues equally spaced around the HSV circle at full saturation/value.
    # Analytic, so renders are bit-reproducible across runs and platforms.
    return tuple(colorsys.hsv_to_rgb(i / n, 1.0, 1.0) for i in range(n))


@lru_cache(maxsize=1)
def standard_model() -> SkeletonModel:
    """The fixed 16-joint model in standard MPII index order."""
    return SkeletonModel(
        joint_names=JOINT_NAMES,
        root_index=ROOT_INDEX,
        bones=BONES,
        bone_colors=_palette(len(BONES)),
    )


def bone_of_child(model: SkeletonModel, joint: int):
    """Index of the unique bone whose child is `joint`; None for the root."""
    if not 0 <= joint < model.num_joints:
        raise IndexError(f"joint index {joint} out of range [0, {model.num_joints})")
    for i, (_, child) in enumerate(model.bones):
        if child == joint:
            return i
    return None


def model_from_json_dict(doc: dict) -> SkeletonModel:
    return SkeletonModel(
        joint_names=tuple(doc["joints"]),
        root_index=int(doc["root"]),
        bones=tuple((int(p), int(c)) for p, c in doc["bones"]),
        bone_colors=tuple(tuple(float(v) for v in c) for c in doc["colors"]),
    )
