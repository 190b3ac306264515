/** Client-side pinhole math, mirroring the server's formulas exactly. */

import type { Camera, Pose2D, Pose3D } from "./types";

export type Vec3 = [number, number, number];

export function project(cam: Camera, p: Vec3): [number, number] {
  if (p[2] <= 0) {
    throw new Error(`cannot project point with non-positive depth Z=${p[2]}`);
  }
  return [(cam.fx * p[0]) / p[2] + cam.cx, (cam.fy * p[1]) / p[2] + cam.cy];
}

export function projectPose(cam: Camera, pose: Pose3D): Pose2D {
  return pose.map((p) => project(cam, p as Vec3));
}

export function backProject(cam: Camera, uv: [number, number], depth: number): Vec3 {
  if (depth <= 0) {
    throw new Error(`depth must be positive, got ${depth}`);
  }
  return [((uv[0] - cam.cx) * depth) / cam.fx, ((uv[1] - cam.cy) * depth) / cam.fy, depth];
}

export function clonePose(pose: Pose3D): Pose3D {
  return pose.map((p) => p.slice());
}

export function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

export function add(a: Vec3, b: Vec3): Vec3 {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

export function norm(a: Vec3): number {
  return Math.hypot(a[0], a[1], a[2]);
}

/** Rotation of `v` about unit axis `k` by `angle` (Rodrigues). */
export function rotate(v: Vec3, k: Vec3, angle: number): Vec3 {
  const c = Math.cos(angle);
  const s = Math.sin(angle);
  const dot = k[0] * v[0] + k[1] * v[1] + k[2] * v[2];
  const cross: Vec3 = [
    k[1] * v[2] - k[2] * v[1],
    k[2] * v[0] - k[0] * v[2],
    k[0] * v[1] - k[1] * v[0],
  ];
  return [
    v[0] * c + cross[0] * s + k[0] * dot * (1 - c),
    v[1] * c + cross[1] * s + k[1] * dot * (1 - c),
    v[2] * c + cross[2] * s + k[2] * dot * (1 - c),
  ];
}

/** Largest per-joint pixel distance between a pose's projection and joints2d. */
export function maxResidualPx(cam: Camera, pose: Pose3D, joints2d: Pose2D): number {
  let worst = 0;
  for (let j = 0; j < pose.length; j++) {
    const uv = project(cam, pose[j] as Vec3);
    worst = Math.max(worst, Math.hypot(uv[0] - joints2d[j][0], uv[1] - joints2d[j][1]));
  }
  return worst;
}
