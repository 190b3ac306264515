/** Thin fetch client for the annotation service. */

import type {
  Pose3D,
  PoseUpdateResult,
  RevisionConflict,
  SampleDoc,
  SampleSummary,
  SkeletonDoc,
} from "./types";

export class ConflictError extends Error {
  constructor(public serverRevision: number) {
    super(`revision conflict: server is at revision ${serverRevision}`);
  }
}

export class ApiClient {
  constructor(private base: string = "") {}

  private async getJson<T>(path: string): Promise<T> {
    const r = await fetch(this.base + path);
    if (!r.ok) {
      throw new Error(`GET ${path} failed: ${r.status} ${await r.text()}`);
    }
    return (await r.json()) as T;
  }

  skeleton(): Promise<SkeletonDoc> {
    return this.getJson("/api/skeleton");
  }

  samples(): Promise<SampleSummary[]> {
    return this.getJson("/api/samples");
  }

  sample(id: string): Promise<SampleDoc> {
    return this.getJson(`/api/samples/${id}`);
  }

  renderUrl(id: string, c: number, l: number, part: "fore" | "back", canvas = 56): string {
    return `${this.base}/api/samples/${id}/render?c=${c}&l=${l}&canvas=${canvas}&part=${part}`;
  }

  /** Save an adjusted pose. Throws ConflictError on a stale revision. */
  async savePose(
    id: string,
    joints3d: Pose3D,
    revision: number,
    reprojTolerance?: number,
  ): Promise<number> {
    const body: Record<string, unknown> = { joints3d, revision };
    if (reprojTolerance !== undefined) {
      body.reproj_tolerance = reprojTolerance;
    }
    const r = await fetch(`${this.base}/api/samples/${id}/pose3d`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (r.status === 409) {
      const doc = (await r.json()) as RevisionConflict;
      throw new ConflictError(doc.revision);
    }
    if (!r.ok) {
      throw new Error(`save failed: ${r.status} ${await r.text()}`);
    }
    return ((await r.json()) as PoseUpdateResult).revision;
  }
}
