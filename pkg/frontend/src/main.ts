/** Annotation app: image-plane overlay, orbitable 3D view, pose edits.
 *
 * Left canvas shows the 2D observation (ground-truth joints) with the
 * current pose's projection recomputed after every edit. Right canvas is an
 * orbit view of the root-relative pose. The save button is disabled while
 * the local revision disagrees with the server's, so a conflicting write can
 * never silently clobber another annotator's work.
 */

import { ApiClient, ConflictError } from "./api";
import { applyAction, invert, subtreeOf, UndoStack } from "./edits";
import type { EditAction } from "./edits";
import { clonePose, maxResidualPx, projectPose, rotate } from "./geometry";
import type { Vec3 } from "./geometry";
import type { Pose3D, SampleDoc, SkeletonDoc } from "./types";

type Mode = "depth-drag" | "bone-rotate" | "limb-depth-flip";

const api = new ApiClient("");

interface AppState {
  skeleton: SkeletonDoc | null;
  sample: SampleDoc | null;
  pose: Pose3D | null;
  revision: number;
  serverRevision: number;
  undo: UndoStack;
  mode: Mode;
  selectedJoint: number;
  orbitYaw: number;
  orbitPitch: number;
}

const state: AppState = {
  skeleton: null,
  sample: null,
  pose: null,
  revision: 0,
  serverRevision: 0,
  undo: new UndoStack(),
  mode: "depth-drag",
  selectedJoint: 0,
  orbitYaw: 0.6,
  orbitPitch: -0.3,
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function colorCss(c: [number, number, number]): string {
  const f = (v: number) => Math.round(v * 255);
  return `rgb(${f(c[0])}, ${f(c[1])}, ${f(c[2])})`;
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

function imageToCanvas(sample: SampleDoc, size: number): (uv: number[]) => [number, number] {
  const half = (sample.person_scale * 200 * 1.4) / 2;
  return (uv) => [
    ((uv[0] - (sample.center[0] - half)) / (2 * half)) * size,
    ((uv[1] - (sample.center[1] - half)) / (2 * half)) * size,
  ];
}

function drawOverlay(): void {
  const canvas = el<HTMLCanvasElement>("overlay");
  const ctx = canvas.getContext("2d")!;
  ctx.fillStyle = "#181818";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const { skeleton, sample, pose } = state;
  if (!skeleton || !sample || !pose) {
    return;
  }
  const toC = imageToCanvas(sample, canvas.width);
  // observed 2D joints
  ctx.fillStyle = "#cccccc";
  for (const uv of sample.joints2d) {
    const [x, y] = toC(uv);
    ctx.beginPath();
    ctx.arc(x, y, 3, 0, 2 * Math.PI);
    ctx.fill();
  }
  // current pose projection, bone-colored
  const proj = projectPose(sample.camera, pose);
  skeleton.bones.forEach(([p, c], k) => {
    const [x1, y1] = toC(proj[p]);
    const [x2, y2] = toC(proj[c]);
    ctx.strokeStyle = colorCss(skeleton.colors[k]);
    ctx.lineWidth = 2.5;
    ctx.beginPath();
    ctx.moveTo(x1, y1);
    ctx.lineTo(x2, y2);
    ctx.stroke();
  });
  const sel = toC(proj[state.selectedJoint]);
  ctx.strokeStyle = "#ffffff";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  ctx.arc(sel[0], sel[1], 6, 0, 2 * Math.PI);
  ctx.stroke();
}

function drawOrbit(): void {
  const canvas = el<HTMLCanvasElement>("orbit");
  const ctx = canvas.getContext("2d")!;
  ctx.fillStyle = "#101018";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const { skeleton, pose } = state;
  if (!skeleton || !pose) {
    return;
  }
  const root = pose[skeleton.root];
  const yAxis: Vec3 = [0, 1, 0];
  const xAxis: Vec3 = [1, 0, 0];
  const pts = pose.map((p) => {
    let v: Vec3 = [p[0] - root[0], p[1] - root[1], p[2] - root[2]];
    v = rotate(v, yAxis, state.orbitYaw);
    v = rotate(v, xAxis, state.orbitPitch);
    return v;
  });
  const scale = canvas.width / 2200;
  const toC = (v: Vec3): [number, number] => [
    canvas.width / 2 + v[0] * scale,
    canvas.height / 2 + v[1] * scale,
  ];
  const order = skeleton.bones
    .map((b, k) => ({ k, z: (pts[b[0]][2] + pts[b[1]][2]) / 2 }))
    .sort((a, b) => b.z - a.z);
  for (const { k } of order) {
    const [p, c] = skeleton.bones[k];
    const [x1, y1] = toC(pts[p]);
    const [x2, y2] = toC(pts[c]);
    ctx.strokeStyle = colorCss(skeleton.colors[k]);
    ctx.lineWidth = 3;
    ctx.beginPath();
    ctx.moveTo(x1, y1);
    ctx.lineTo(x2, y2);
    ctx.stroke();
  }
}

function refreshStatus(): void {
  const { sample, pose } = state;
  el<HTMLSpanElement>("revision").textContent =
    `rev ${state.revision}` +
    (state.revision !== state.serverRevision ? ` (server ${state.serverRevision})` : "");
  const save = el<HTMLButtonElement>("save");
  save.disabled = !sample || state.revision !== state.serverRevision;
  if (sample && pose) {
    const r = maxResidualPx(sample.camera, pose, sample.joints2d);
    el<HTMLSpanElement>("residual").textContent = `reproj residual ${r.toFixed(2)} px`;
    const preview = el<HTMLImageElement>("preview-fore");
    preview.src = api.renderUrl(sample.id, 1.0, 10, "fore");
    el<HTMLImageElement>("preview-back").src = api.renderUrl(sample.id, 1.0, 10, "back");
  }
  el<HTMLSpanElement>("undo-depth").textContent = `${state.undo.depth} edits`;
}

function redraw(): void {
  drawOverlay();
  drawOrbit();
  refreshStatus();
}

// ---------------------------------------------------------------------------
// edits
// ---------------------------------------------------------------------------

function runAction(action: EditAction): void {
  const { skeleton, sample, pose } = state;
  if (!skeleton || !sample || !pose) {
    return;
  }
  try {
    state.pose = applyAction(skeleton, sample.camera, pose, action);
    state.undo.push(action);
  } catch (err) {
    reportError(err);
  }
  redraw();
}

function reportError(err: unknown): void {
  el<HTMLSpanElement>("message").textContent = err instanceof Error ? err.message : String(err);
}

function clearError(): void {
  el<HTMLSpanElement>("message").textContent = "";
}

// ---------------------------------------------------------------------------
// wiring
// ---------------------------------------------------------------------------

async function loadSample(id: string): Promise<void> {
  const sample = await api.sample(id);
  if (!sample.joints3d) {
    reportError(new Error(`sample ${id} has no initial 3D pose`));
    return;
  }
  state.sample = sample;
  state.pose = clonePose(sample.joints3d);
  state.revision = sample.revision;
  state.serverRevision = sample.revision;
  state.undo.clear();
  clearError();
  const picker = el<HTMLSelectElement>("joint");
  picker.innerHTML = "";
  state.skeleton!.joints.forEach((name, i) => {
    const opt = document.createElement("option");
    opt.value = String(i);
    opt.textContent = name;
    picker.appendChild(opt);
  });
  picker.value = String(state.selectedJoint);
  redraw();
}

async function save(): Promise<void> {
  const { sample, pose } = state;
  if (!sample || !pose) {
    return;
  }
  const residual = maxResidualPx(sample.camera, pose, sample.joints2d);
  const tolerance = Math.max(residual * 1.001 + 1e-6, sample.reproj_tolerance);
  try {
    const rev = await api.savePose(sample.id, pose, state.revision, tolerance);
    state.revision = rev;
    state.serverRevision = rev;
    state.undo.clear();
    clearError();
  } catch (err) {
    if (err instanceof ConflictError) {
      state.serverRevision = err.serverRevision;
      reportError(new Error(
        `another annotator saved revision ${err.serverRevision}; reload the sample`));
    } else {
      reportError(err);
    }
  }
  redraw();
}

function bindControls(): void {
  el<HTMLSelectElement>("mode").addEventListener("change", (e) => {
    state.mode = (e.target as HTMLSelectElement).value as Mode;
  });
  el<HTMLSelectElement>("joint").addEventListener("change", (e) => {
    state.selectedJoint = Number((e.target as HTMLSelectElement).value);
    redraw();
  });
  el<HTMLButtonElement>("apply").addEventListener("click", () => {
    const { skeleton } = state;
    if (!skeleton) {
      return;
    }
    const amount = Number(el<HTMLInputElement>("amount").value);
    if (state.mode === "depth-drag") {
      runAction({ kind: "depth-drag", joint: state.selectedJoint, deltaDepth: amount });
    } else if (state.mode === "limb-depth-flip") {
      runAction({ kind: "limb-depth-flip", joint: state.selectedJoint });
    } else {
      const bone = skeleton.bones.findIndex(([, c]) => c === state.selectedJoint);
      if (bone < 0) {
        reportError(new Error("the root joint has no bone to rotate"));
        return;
      }
      const axisName = el<HTMLSelectElement>("axis").value;
      const axis: Vec3 = axisName === "x" ? [1, 0, 0] : axisName === "y" ? [0, 1, 0] : [0, 0, 1];
      runAction({ kind: "bone-rotate", bone, axis, angle: (amount * Math.PI) / 180 });
    }
  });
  el<HTMLButtonElement>("undo").addEventListener("click", () => {
    const { skeleton, sample, pose } = state;
    if (skeleton && sample && pose) {
      state.pose = state.undo.undo(skeleton, sample.camera, pose);
      redraw();
    }
  });
  el<HTMLButtonElement>("save").addEventListener("click", () => void save());
  el<HTMLButtonElement>("reload").addEventListener("click", () => {
    const picker = el<HTMLSelectElement>("sample");
    void loadSample(picker.value);
  });
  el<HTMLSelectElement>("sample").addEventListener("change", (e) => {
    void loadSample((e.target as HTMLSelectElement).value);
  });
  const overlay = el<HTMLCanvasElement>("overlay");
  overlay.addEventListener("click", (e) => {
    const { skeleton, sample, pose } = state;
    if (!skeleton || !sample || !pose) {
      return;
    }
    const rect = overlay.getBoundingClientRect();
    const x = ((e.clientX - rect.left) / rect.width) * overlay.width;
    const y = ((e.clientY - rect.top) / rect.height) * overlay.height;
    const toC = imageToCanvas(sample, overlay.width);
    const proj = projectPose(sample.camera, pose);
    let best = 0;
    let bestD = Infinity;
    proj.forEach((uv, j) => {
      const [cx, cy] = toC(uv);
      const d = Math.hypot(cx - x, cy - y);
      if (d < bestD) {
        bestD = d;
        best = j;
      }
    });
    state.selectedJoint = best;
    el<HTMLSelectElement>("joint").value = String(best);
    redraw();
  });
  const orbit = el<HTMLCanvasElement>("orbit");
  let dragging = false;
  let last: [number, number] = [0, 0];
  orbit.addEventListener("mousedown", (e) => {
    dragging = true;
    last = [e.clientX, e.clientY];
  });
  window.addEventListener("mouseup", () => {
    dragging = false;
  });
  window.addEventListener("mousemove", (e) => {
    if (!dragging) {
      return;
    }
    state.orbitYaw += (e.clientX - last[0]) * 0.01;
    state.orbitPitch += (e.clientY - last[1]) * 0.01;
    last = [e.clientX, e.clientY];
    drawOrbit();
  });
}

async function init(): Promise<void> {
  state.skeleton = await api.skeleton();
  const samples = await api.samples();
  const picker = el<HTMLSelectElement>("sample");
  for (const s of samples) {
    const opt = document.createElement("option");
    opt.value = s.id;
    opt.textContent = s.id + (s.pseudo_gt ? " *" : "");
    picker.appendChild(opt);
  }
  bindControls();
  if (samples.length) {
    await loadSample(samples[0].id);
  }
}

void init();

// undo stack inverse used by tests via module import
export { invert, subtreeOf };
