"""HTTP session service: create edits, run them asynchronously, fetch traces.

Sessions are plain directories under the storage root; a restarted service
rediscovers every persisted session from disk. Runs execute on background
threads under a per-session lock; preview-warp is read-only and lock-free
so the UI can poll it while dragging the gizmo.
"""

from __future__ import annotations

import shutil
import threading
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Response
from fastapi.responses import JSONResponse

from .errors import DepthEditError, InvalidInputError
from .geometry import CameraIntrinsics, DepthMap, RigidTransform
from .imgio import b64_mask, b64_png, encode_png, load_f32, load_mask, load_png
from .oracle import create_oracle
from .pipeline import EditConfig, create_session, load_session, preview_warp

_ARTIFACT_TYPES = {
    ".png": "image/png",
    ".f32": "application/octet-stream",
    ".json": "application/json",
    ".csv": "text/csv",
}

_ALLOWED_ARTIFACTS = {
    "warped.png", "synth.png", "undistorted.png", "depth_pre.f32",
    "depth_post.f32", "correspondences.csv", "metrics.json",
}


class _SessionRuntime:
    """In-memory bookkeeping for one session: run lock and preview cache."""

    def __init__(self):
        self.lock = threading.Lock()
        self.thread: threading.Thread | None = None
        self.preview_cache: dict | None = None

    @property
    def running(self) -> bool:
        return self.thread is not None and self.thread.is_alive()


class SessionService:
    def __init__(self, storage: Path, default_oracle: str = "mock:identity",
                 default_config: EditConfig | None = None):
        self.storage = Path(storage)
        self.storage.mkdir(parents=True, exist_ok=True)
        self.default_oracle = default_oracle
        self.default_config = default_config or EditConfig()
        self._runtimes: dict[str, _SessionRuntime] = {}
        self._registry_lock = threading.Lock()

    def runtime(self, session_id: str) -> _SessionRuntime:
        with self._registry_lock:
            if session_id not in self._runtimes:
                self._runtimes[session_id] = _SessionRuntime()
            return self._runtimes[session_id]

    def session_root(self, session_id: str) -> Path:
        return self.storage / session_id

    def exists(self, session_id: str) -> bool:
        return (self.session_root(session_id) / "session.json").exists()

    def manifest(self, session_id: str) -> dict:
        import json

        return json.loads((self.session_root(session_id) / "session.json").read_text())

    def list_sessions(self) -> list[dict]:
        out = []
        for manifest_path in sorted(self.storage.glob("*/session.json")):
            import json

            m = json.loads(manifest_path.read_text())
            out.append({"id": m["id"], "status": m["status"],
                        "iterations_done": m.get("iterations_done", 0)})
        return out

    def create(self, body: dict) -> dict:
        session_id = body.get("session_id") or uuid.uuid4().hex[:12]
        if self.exists(session_id):
            raise InvalidInputError(f"session {session_id} already exists")
        image = b64_png(body["image"])
        mask = b64_mask(body["mask"])
        transform = RigidTransform.from_json(body["transform"])
        intrinsics = (CameraIntrinsics.from_json(body["intrinsics"])
                      if body.get("intrinsics") else None)
        config = (EditConfig.from_json(body["config"]) if body.get("config")
                  else self.default_config)
        oracle_spec = body.get("oracle") or self.default_oracle
        session = create_session(self.session_root(session_id), image, mask, transform,
                                 intrinsics=intrinsics, config=config,
                                 oracle_spec=oracle_spec, session_id=session_id)
        return {"id": session.id, "status": session.status}

    def run(self, session_id: str) -> None:
        runtime = self.runtime(session_id)
        if not runtime.lock.acquire(blocking=False):
            raise _Conflict("session is already running")
        try:
            if runtime.running:
                raise _Conflict("session is already running")
            session = load_session(self.session_root(session_id))

            def work():
                try:
                    session.run_edit()
                except DepthEditError:
                    pass  # status/error recorded in the manifest
                finally:
                    runtime.preview_cache = None
                    runtime.lock.release()

            runtime.thread = threading.Thread(target=work, daemon=True)
            runtime.thread.start()
        except Exception:
            runtime.lock.release()
            raise

    def delete(self, session_id: str) -> None:
        runtime = self.runtime(session_id)
        if runtime.running:
            raise _Conflict("session is running")
        shutil.rmtree(self.session_root(session_id), ignore_errors=True)
        runtime.preview_cache = None

    def _preview_inputs(self, session_id: str) -> dict:
        runtime = self.runtime(session_id)
        cache = runtime.preview_cache
        if cache is not None:
            return cache
        root = self.session_root(session_id)
        import json

        image = load_png(root / "inputs" / "image.png")
        mask = load_mask(root / "inputs" / "mask.png")
        intrinsics = CameraIntrinsics.from_json(
            json.loads((root / "inputs" / "intrinsics.json").read_text()))
        depth = None
        iters = sorted(root.glob("iter_*/depth_post.f32"),
                       key=lambda p: int(p.parent.name.split("_")[1]))
        if iters:
            depth = DepthMap(values=load_f32(iters[-1]).astype(np.float64),
                             intrinsics=intrinsics)
        elif (root / "background" / "source_depth.f32").exists():
            depth = DepthMap(
                values=load_f32(root / "background" / "source_depth.f32").astype(np.float64),
                intrinsics=intrinsics)
        background = None
        if (root / "background" / "color.png").exists():
            background = load_png(root / "background" / "color.png")
        from .pipeline import build_preview_mesh

        mesh = build_preview_mesh(image, mask, depth, intrinsics)
        cache = {"image": image, "mask": mask, "intrinsics": intrinsics,
                 "depth": depth, "background": background, "mesh": mesh,
                 "centroid": mesh.centroid()}
        runtime.preview_cache = cache
        return cache

    def preview(self, session_id: str, transform: RigidTransform) -> bytes:
        inputs = self._preview_inputs(session_id)
        if transform.has_symbolic_pivot:
            transform = transform.resolve_pivot(inputs["centroid"])
        composite = preview_warp(inputs["image"], inputs["mask"], transform,
                                 intrinsics=inputs["intrinsics"],
                                 background=inputs["background"], mesh=inputs["mesh"])
        return encode_png(composite, fast=True)


class _Conflict(Exception):
    pass


def build_service_app(storage: Path, default_oracle: str = "mock:identity",
                      default_config: EditConfig | None = None) -> FastAPI:
    service = SessionService(storage, default_oracle=default_oracle,
                             default_config=default_config)
    app = FastAPI(title="depthedit sessions", docs_url=None, redoc_url=None)
    app.state.service = service

    def _not_found(session_id):
        return JSONResponse(status_code=404, content={"error": f"unknown session {session_id}"})

    @app.get("/sessions")
    def list_sessions():
        return {"sessions": service.list_sessions()}

    @app.post("/sessions", status_code=201)
    def create_session_endpoint(body: dict):
        try:
            return service.create(body)
        except (KeyError, DepthEditError, ValueError) as exc:
            return JSONResponse(status_code=422, content={"error": str(exc)})

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        if not service.exists(session_id):
            return _not_found(session_id)
        return service.manifest(session_id)

    @app.post("/sessions/{session_id}/run", status_code=202)
    def run_session(session_id: str):
        if not service.exists(session_id):
            return _not_found(session_id)
        try:
            service.run(session_id)
        except _Conflict as exc:
            return JSONResponse(status_code=409, content={"error": str(exc)})
        except DepthEditError as exc:
            return JSONResponse(status_code=422, content={"error": str(exc)})
        return {"id": session_id, "status": "running"}

    @app.get("/sessions/{session_id}/iter/{k}/{artifact}")
    def get_artifact(session_id: str, k: int, artifact: str):
        if not service.exists(session_id):
            return _not_found(session_id)
        if artifact not in _ALLOWED_ARTIFACTS:
            return JSONResponse(status_code=404, content={"error": f"unknown artifact {artifact}"})
        path = service.session_root(session_id) / f"iter_{k}" / artifact
        if not path.exists():
            return JSONResponse(status_code=404, content={"error": f"iteration {k} has no {artifact}"})
        return Response(content=path.read_bytes(),
                        media_type=_ARTIFACT_TYPES[path.suffix])

    @app.post("/sessions/{session_id}/preview-warp")
    def preview(session_id: str, body: dict):
        if not service.exists(session_id):
            return _not_found(session_id)
        try:
            transform = RigidTransform.from_json(body["transform"])
            png = service.preview(session_id, transform)
        except (KeyError, DepthEditError, ValueError) as exc:
            return JSONResponse(status_code=422, content={"error": str(exc)})
        return Response(content=png, media_type="image/png")

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str):
        if not service.exists(session_id):
            return _not_found(session_id)
        try:
            service.delete(session_id)
        except _Conflict as exc:
            return JSONResponse(status_code=409, content={"error": str(exc)})
        return {"id": session_id, "status": "deleted"}

    return app
