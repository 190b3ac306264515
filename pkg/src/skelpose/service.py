"""HTTP service for human-in-the-loop 3D pose adjustment.

Serves samples, initial 3D poses, and live map renders; accepts adjusted
poses with revision-based optimistic concurrency. Writes go through a single
lock and are persisted atomically before the success response, so a restart
never loses an accepted edit. Revision counters are session-scoped.
"""

from __future__ import annotations

import json
import os
import threading

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .dataio import Dataset, DatasetError, load_dataset, save_dataset, validate_sample
from .geometry import crop_window
from .render import MapConfig, map_to_png_bytes, render_pair


class PoseUpdate(BaseModel):
    joints3d: list
    revision: int
    reproj_tolerance: float | None = None


class AnnotationSession:
    """Dataset handle plus per-sample revision counters and the writer lock."""

    def __init__(self, dataset_path: str):
        self.path = str(dataset_path)
        self.dataset: Dataset = load_dataset(self.path)
        self.revisions = {s.id: 0 for s in self.dataset.samples}
        self.dirty = set()
        self.lock = threading.Lock()

    def sample(self, sample_id: str):
        try:
            return self.dataset.by_id(sample_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown sample {sample_id!r}")


def create_app(dataset_path, ui_dir=None) -> FastAPI:
    app = FastAPI(title="skelpose annotation service")
    session = AnnotationSession(dataset_path)
    app.state.session = session

    @app.get("/api/skeleton")
    def get_skeleton():
        return session.dataset.skeleton.to_json_dict()

    @app.get("/api/samples")
    def list_samples():
        return [{"id": s.id, "pseudo_gt": s.pseudo_gt, "revision": session.revisions[s.id]}
                for s in session.dataset.samples]

    @app.get("/api/samples/{sample_id}")
    def get_sample(sample_id: str):
        s = session.sample(sample_id)
        return {
            "id": s.id,
            "image_ref": s.image_ref,
            "center": list(s.center),
            "person_scale": s.person_scale,
            "camera": {"fx": s.camera.fx, "fy": s.camera.fy, "cx": s.camera.cx, "cy": s.camera.cy},
            "joints2d": np.asarray(s.joints2d).tolist(),
            "joints3d": None if s.joints3d is None else np.asarray(s.joints3d).tolist(),
            "head_size": s.head_size,
            "pseudo_gt": s.pseudo_gt,
            "reproj_tolerance": s.reproj_tolerance,
            "revision": session.revisions[s.id],
        }

    @app.get("/api/samples/{sample_id}/render")
    def render_sample(sample_id: str, c: float = Query(1.0), l: float = Query(10.0),
                      canvas: int = Query(56), part: str = Query("fore")):
        s = session.sample(sample_id)
        if s.joints3d is None:
            raise HTTPException(status_code=409, detail=f"sample {sample_id!r} has no 3D pose")
        if part not in ("fore", "back"):
            raise HTTPException(status_code=422, detail="part must be 'fore' or 'back'")
        try:
            config = MapConfig(crop_scale=c, stick_width=l, canvas_size=canvas)
            window = crop_window(s.center, s.person_scale, c, canvas)
            pair = render_pair(session.dataset.skeleton, s.joints3d, s.camera, window, config)
        except ValueError as e:
            raise HTTPException(status_code=422, detail=str(e))
        png = map_to_png_bytes(pair.fore if part == "fore" else pair.back)
        return Response(content=png, media_type="image/png")

    @app.put("/api/samples/{sample_id}/pose3d")
    def put_pose(sample_id: str, body: PoseUpdate):
        with session.lock:
            s = session.sample(sample_id)
            current = session.revisions[s.id]
            if body.revision != current:
                return JSONResponse(status_code=409, content={
                    "error": "revision_conflict", "revision": current})
            pose = np.asarray(body.joints3d, dtype=np.float64)
            if pose.shape != (16, 3):
                raise HTTPException(status_code=422,
                                    detail=f"joints3d must be 16x3, got {list(pose.shape)}")
            if not np.all(np.isfinite(pose)):
                raise HTTPException(status_code=422, detail="joints3d contains non-finite values")
            old_pose, old_tol, old_flag = s.joints3d, s.reproj_tolerance, s.pseudo_gt
            s.joints3d = pose
            if body.reproj_tolerance is not None:
                if body.reproj_tolerance < 0:
                    raise HTTPException(status_code=422, detail="reproj_tolerance must be >= 0")
                s.reproj_tolerance = float(body.reproj_tolerance)
            s.pseudo_gt = True
            try:
                validate_sample(s)
                save_dataset(session.dataset, session.path)
            except DatasetError as e:
                s.joints3d, s.reproj_tolerance, s.pseudo_gt = old_pose, old_tol, old_flag
                raise HTTPException(status_code=422, detail=str(e))
            session.revisions[s.id] = current + 1
            session.dirty.add(s.id)
            return {"revision": session.revisions[s.id]}

    if ui_dir and os.path.isdir(ui_dir):
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def serve(dataset_path, host="127.0.0.1", port=8008, ui_dir=None):
    import uvicorn

    app = create_app(dataset_path, ui_dir=ui_dir)
    print(f"annotation service on http://{host}:{port}  dataset={dataset_path}")
    print(json.dumps({"samples": len(app.state.session.dataset.samples)}))
    uvicorn.run(app, host=host, port=port, log_level="warning")
