"""Pose evaluation: root-aligned MPJPE and PCKh, with grouped aggregation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .skeleton import ROOT_INDEX

# Left/right joints pooled per report group. Pelvis and thorax belong to no
# named group but still count toward the overall mean, which averages all 16
# evaluated joints.
JOINT_GROUPS = (
    ("Head", (8, 9)),
    ("Sho.", (12, 13)),
    ("Elb.", (11, 14)),
    ("Wri.", (10, 15)),
    ("Hip", (2, 3)),
    ("Knee", (1, 4)),
    ("Ank.", (0, 5)),
)


def per_joint_error(pred, gt, root: int = ROOT_INDEX) -> np.ndarray:
    """Per-joint Euclidean distance in mm after aligning both roots to the origin."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"joint count mismatch: {pred.shape} vs {gt.shape}")
    p = pred - pred[root]
    g = gt - gt[root]
    return np.linalg.norm(p - g, axis=1)


def mpjpe(pred, gt, root: int = ROOT_INDEX) -> float:
    """Mean per-joint position error (mm) after root alignment."""
    return float(per_joint_error(pred, gt, root).mean())


def pckh(pred2d, gt2d, norm_length: float, tau: float = 0.5) -> np.ndarray:
    """Per-joint hit flags: ||pred - gt|| <= tau * norm_length (closed threshold)."""
    if norm_length <= 0:
        raise ValueError(f"norm_length must be positive, got {norm_length}")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    pred2d = np.asarray(pred2d, dtype=np.float64)
    gt2d = np.asarray(gt2d, dtype=np.float64)
    if pred2d.shape != gt2d.shape:
        raise ValueError(f"joint count mismatch: {pred2d.shape} vs {gt2d.shape}")
    dist = np.linalg.norm(pred2d - gt2d, axis=1)
    return dist <= tau * norm_length


@dataclass
class EvalReport:
    kind: str                # "mpjpe" | "pckh"
    per_sample: list         # (id, per-joint values: mm or 0/1 hits)
    groups: dict             # group name -> mean mm or hit percentage
    mean: float


def aggregate(per_sample, kind: str) -> EvalReport:
    """Pool per-sample per-joint values into group and overall means.

    For "pckh" the values are hit flags and the output is percentages; for
    "mpjpe" they are millimeter errors and the output stays in mm.
    """
    if not per_sample:
        raise ValueError("no samples to aggregate")
    if kind not in ("mpjpe", "pckh"):
        raise ValueError(f"unknown report kind {kind!r}")
    values = np.asarray([np.asarray(v, dtype=np.float64) for _, v in per_sample])
    scale = 100.0 if kind == "pckh" else 1.0
    groups = {name: float(values[:, list(idx)].mean() * scale) for name, idx in JOINT_GROUPS}
    mean = float(values.mean() * scale)
    return EvalReport(kind=kind,
                      per_sample=[(sid, np.asarray(v, dtype=np.float64)) for sid, v in per_sample],
                      groups=groups, mean=mean)


def report_to_json_dict(report: EvalReport) -> dict:
    return {
        "kind": report.kind,
        "groups": report.groups,
        "mean": report.mean,
        "per_sample": [{"id": sid, "values": list(map(float, v))}
                       for sid, v in report.per_sample],
    }


def save_report_json(report: EvalReport, path):
    with open(path, "w") as f:
        json.dump(report_to_json_dict(report), f, indent=1, sort_keys=True)
        f.write("\n")


def save_report_csv(report: EvalReport, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["sample_id", "mean"] + [f"j{i:02d}" for i in range(16)])
        for sid, v in report.per_sample:
            scale = 100.0 if report.kind == "pckh" else 1.0
            w.writerow([sid, repr(float(np.mean(v) * scale))] + [repr(float(x * scale)) for x in v])
        w.writerow(["__groups__"] + [f"{k}={v!r}" for k, v in report.groups.items()]
                   + [f"Mean={report.mean!r}"])
