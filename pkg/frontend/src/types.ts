/** Shared wire types matching the annotation service's JSON API. */

export interface Camera {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
}

/** 16 joints x [X, Y, Z] in camera-frame millimeters. */
export type Pose3D = number[][];

/** 16 joints x [u, v] in source-image pixels. */
export type Pose2D = number[][];

export interface SkeletonDoc {
  joints: string[];
  root: number;
  bones: [number, number][];
  colors: [number, number, number][];
}

export interface SampleSummary {
  id: string;
  pseudo_gt: boolean;
  revision: number;
}

export interface SampleDoc {
  id: string;
  image_ref: string | null;
  center: [number, number];
  person_scale: number;
  camera: Camera;
  joints2d: Pose2D;
  joints3d: Pose3D | null;
  head_size: number;
  pseudo_gt: boolean;
  reproj_tolerance: number;
  revision: number;
}

export interface PoseUpdateResult {
  revision: number;
}

export interface RevisionConflict {
  error: "revision_conflict";
  revision: number;
}
