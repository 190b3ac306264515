/** Pose edit actions: depth drag, bone rotation, limb depth flip.
 *
 * Every action returns a new pose and carries an inverse, so an undo stack
 * can restore the exact editing history. Depth edits keep the edited joint
 * on its camera ray (its 2D projection is untouched); descendants follow
 * rigidly. Bone rotations are rigid about the parent joint, so every bone
 * length in the subtree is preserved. The depth flip snaps the target joint
 * to the other intersection of its camera ray with the sphere of radius
 * bone-length around its parent: the mirror solution of the depth ambiguity,
 * exactly length-preserving and an involution.
 */

import { add, backProject, clonePose, norm, project, rotate, sub } from "./geometry";
import type { Vec3 } from "./geometry";
import type { Camera, Pose3D, SkeletonDoc } from "./types";

export type EditAction =
  | { kind: "depth-drag"; joint: number; deltaDepth: number }
  | { kind: "bone-rotate"; bone: number; axis: Vec3; angle: number }
  | { kind: "limb-depth-flip"; joint: number };

export function invert(action: EditAction): EditAction {
  switch (action.kind) {
    case "depth-drag":
      return { ...action, deltaDepth: -action.deltaDepth };
    case "bone-rotate":
      return { ...action, angle: -action.angle };
    case "limb-depth-flip":
      return action;
  }
}

/** Joint indices in the subtree rooted at `joint` (inclusive). */
export function subtreeOf(skeleton: SkeletonDoc, joint: number): number[] {
  const out = [joint];
  const queue = [joint];
  while (queue.length) {
    const j = queue.shift()!;
    for (const [p, c] of skeleton.bones) {
      if (p === j) {
        out.push(c);
        queue.push(c);
      }
    }
  }
  return out;
}

export function boneOfChild(skeleton: SkeletonDoc, joint: number): number | null {
  for (let i = 0; i < skeleton.bones.length; i++) {
    if (skeleton.bones[i][1] === joint) {
      return i;
    }
  }
  return null;
}

/** Move a joint along its camera ray by deltaDepth mm; descendants follow. */
export function depthDrag(
  skeleton: SkeletonDoc,
  cam: Camera,
  pose: Pose3D,
  joint: number,
  deltaDepth: number,
): Pose3D {
  const old = pose[joint] as Vec3;
  const newZ = old[2] + deltaDepth;
  if (newZ <= 0) {
    throw new Error(`depth drag would move joint ${joint} behind the camera`);
  }
  const uv = project(cam, old);
  const moved = backProject(cam, uv, newZ);
  const offset = sub(moved, old);
  const out = clonePose(pose);
  for (const j of subtreeOf(skeleton, joint)) {
    out[j] = add(out[j] as Vec3, offset);
  }
  return out;
}

/** Rigidly rotate the bone's child subtree about the parent joint. */
export function boneRotate(
  skeleton: SkeletonDoc,
  pose: Pose3D,
  bone: number,
  axis: Vec3,
  angle: number,
): Pose3D {
  const [parent, child] = skeleton.bones[bone];
  const pivot = pose[parent] as Vec3;
  const n = norm(axis);
  if (n === 0) {
    throw new Error("rotation axis must be non-zero");
  }
  const k: Vec3 = [axis[0] / n, axis[1] / n, axis[2] / n];
  const out = clonePose(pose);
  for (const j of subtreeOf(skeleton, child)) {
    out[j] = add(pivot, rotate(sub(out[j] as Vec3, pivot), k, angle));
  }
  return out;
}

/**
 * Mirror a joint's depth about its parent: the joint jumps to the other
 * root of |t * ray - parent|^2 = boneLength^2 (Vieta: t1 * t2 = c / a), so
 * its projection and its bone length are both preserved; descendants
 * translate rigidly. Applying the flip twice restores the pose.
 */
export function limbDepthFlip(
  skeleton: SkeletonDoc,
  cam: Camera,
  pose: Pose3D,
  joint: number,
): Pose3D {
  const bone = boneOfChild(skeleton, joint);
  if (bone === null) {
    throw new Error("the root joint has no parent bone to flip about");
  }
  const parent = skeleton.bones[bone][0];
  const p = pose[parent] as Vec3;
  const x = pose[joint] as Vec3;
  const ray: Vec3 = [(x[0] / x[2]), (x[1] / x[2]), 1];
  const a = ray[0] * ray[0] + ray[1] * ray[1] + 1;
  const length = norm(sub(x, p));
  const c = p[0] * p[0] + p[1] * p[1] + p[2] * p[2] - length * length;
  const tCur = x[2];
  const tOther = c / (a * tCur);
  if (tOther <= 0) {
    throw new Error(`flip of joint ${joint} would cross the camera plane`);
  }
  const moved: Vec3 = [ray[0] * tOther, ray[1] * tOther, tOther];
  const offset = sub(moved, x);
  const out = clonePose(pose);
  for (const j of subtreeOf(skeleton, joint)) {
    out[j] = add(out[j] as Vec3, offset);
  }
  return out;
}

export function applyAction(
  skeleton: SkeletonDoc,
  cam: Camera,
  pose: Pose3D,
  action: EditAction,
): Pose3D {
  switch (action.kind) {
    case "depth-drag":
      return depthDrag(skeleton, cam, pose, action.joint, action.deltaDepth);
    case "bone-rotate":
      return boneRotate(skeleton, pose, action.bone, action.axis, action.angle);
    case "limb-depth-flip":
      return limbDepthFlip(skeleton, cam, pose, action.joint);
  }
}

/** Linear edit history; undo applies inverses in reverse order. */
export class UndoStack {
  private actions: EditAction[] = [];

  get depth(): number {
    return this.actions.length;
  }

  push(action: EditAction): void {
    this.actions.push(action);
  }

  undo(skeleton: SkeletonDoc, cam: Camera, pose: Pose3D): Pose3D {
    const action = this.actions.pop();
    if (!action) {
      return pose;
    }
    return applyAction(skeleton, cam, pose, invert(action));
  }

  undoAll(skeleton: SkeletonDoc, cam: Camera, pose: Pose3D): Pose3D {
    let out = pose;
    while (this.actions.length) {
      out = this.undo(skeleton, cam, out);
    }
    return out;
  }

  clear(): void {
    this.actions = [];
  }
}
