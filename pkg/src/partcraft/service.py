"""HTTP job service: localization and generation as asynchronous jobs.

Jobs persist on the filesystem, one directory per job (request.json,
job.json, artifacts); worker threads execute them; clients poll. No shared
mutable state crosses jobs — every execution builds its own backend.
"""

from __future__ import annotations

import json
import logging
import os
import queue
import threading
import uuid
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse

from .backends import BACKEND_NAMES, derive_scene_from_document, make_backend
from .config import ConfigError, PipelineConfig, config_from_dict
from .document import DocumentError, document_from_dict
from .generation import generate, save_image
from .localization import empty_mask_set, localize
from .masks import save_mask_set

log = logging.getLogger(__name__)

KINDS = ("localize", "generate", "localize+generate")
TERMINAL_STATES = ("done", "failed")


class JobStore:
    """Directory-per-job persistence with atomic state writes."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def job_dir(self, job_id: str) -> Path:
        return self.root / job_id

    def create(self, document: dict, config: dict, kind: str) -> str:
        job_id = uuid.uuid4().hex[:12]
        d = self.job_dir(job_id)
        d.mkdir(parents=True)
        (d / "request.json").write_text(
            json.dumps({"document": document, "config": config, "kind": kind})
        )
        self._write_state(
            job_id, {"id": job_id, "kind": kind, "state": "queued", "artifacts": [], "error": None}
        )
        return job_id

    def read(self, job_id: str) -> dict | None:
        path = self.job_dir(job_id) / "job.json"
        if not path.exists():
            return None
        return json.loads(path.read_text())

    def read_request(self, job_id: str) -> dict:
        return json.loads((self.job_dir(job_id) / "request.json").read_text())

    def _write_state(self, job_id: str, state: dict) -> None:
        path = self.job_dir(job_id) / "job.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(state))
        os.replace(tmp, path)

    def transition(self, job_id: str, state: str, *, error: str | None = None,
                   artifacts: list[str] | None = None) -> None:
        with self._lock:
            snap = self.read(job_id)
            if snap is None:
                raise KeyError(job_id)
            snap["state"] = state
            if error is not None:
                snap["error"] = error
            if artifacts is not None:
                snap["artifacts"] = artifacts
            self._write_state(job_id, snap)

    def artifact_path(self, job_id: str, name: str) -> Path | None:
        snap = self.read(job_id)
        if snap is None or name not in snap.get("artifacts", []):
            return None
        return self.job_dir(job_id) / name


def _validate_submission(body: dict) -> tuple[dict, dict, str]:
    errors = []
    document = body.get("document")
    config = body.get("config", {})
    kind = body.get("kind", "localize")
    if kind not in KINDS:
        errors.append({"field": "kind", "error": f"must be one of {list(KINDS)}"})
    doc = None
    if not isinstance(document, dict):
        errors.append({"field": "document", "error": "required object"})
    else:
        try:
            doc = document_from_dict(document)
        except DocumentError as exc:
            errors.append({"field": "document", "error": str(exc)})
    cfg = None
    if not isinstance(config, dict):
        errors.append({"field": "config", "error": "must be an object"})
    else:
        try:
            cfg = config_from_dict(dict(config))
        except ConfigError as exc:
            errors.append({"field": "config", "error": str(exc)})
    if cfg is not None and cfg.backend not in BACKEND_NAMES:
        errors.append(
            {"field": "config.backend", "error": f"unknown backend {cfg.backend!r}"}
        )
    if doc is not None and kind in ("localize", "localize+generate") and not doc.parts:
        errors.append(
            {"field": "document.parts", "error": "localization requires at least one part"}
        )
    if errors:
        raise HTTPException(status_code=422, detail=errors)
    return document, config, kind


def execute_job(store: JobStore, job_id: str) -> None:
    """Run one job to completion, recording the failing stage on error."""
    request = store.read_request(job_id)
    kind = request["kind"]
    store.transition(job_id, "running")
    stage = "setup"
    try:
        doc = document_from_dict(request["document"])
        config = config_from_dict(dict(request.get("config", {})))
        scene = derive_scene_from_document(doc, config.seed)
        backend = make_backend(config, scene)
        out_dir = store.job_dir(job_id)
        artifacts: list[str] = []
        masks = None
        if doc.parts:
            stage = "localize"
            masks = localize(doc, config, backend)
        else:
            masks = empty_mask_set()
        if kind in ("localize", "localize+generate"):
            save_mask_set(masks, out_dir)
            artifacts.append("masks.json")
            index = json.loads((out_dir / "masks.json").read_text())
            artifacts.append(index["object"])
            artifacts.append(index["background"])
            artifacts.extend(entry["file"] for entry in index["parts"].values())
        if kind in ("generate", "localize+generate"):
            stage = "generate"
            result = generate(doc, masks, config, backend)
            save_image(result.image, out_dir / "image.png")
            artifacts.append("image.png")
        store.transition(job_id, "done", artifacts=artifacts)
    except Exception as exc:  # noqa: BLE001 - failures become job state
        log.exception("job %s failed during %s", job_id, stage)
        store.transition(job_id, "failed", error=f"{stage}: {exc}")


class WorkerPool:
    def __init__(self, store: JobStore, count: int = 1):
        self.store = store
        self.queue: queue.Queue = queue.Queue()
        self.threads = [
            threading.Thread(target=self._run, name=f"job-worker-{i}", daemon=True)
            for i in range(max(1, count))
        ]

    def start(self) -> None:
        for t in self.threads:
            t.start()

    def stop(self) -> None:
        for _ in self.threads:
            self.queue.put(None)
        for t in self.threads:
            t.join(timeout=30)

    def submit(self, job_id: str) -> None:
        self.queue.put(job_id)

    def _run(self) -> None:
        while True:
            job_id = self.queue.get()
            if job_id is None:
                return
            try:
                execute_job(self.store, job_id)
            except Exception:  # noqa: BLE001 - worker must survive
                log.exception("worker crashed on job %s", job_id)


def create_app(store_dir: str | Path, workers: int = 1) -> FastAPI:
    store = JobStore(store_dir)
    pool = WorkerPool(store, workers)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        pool.start()
        yield
        pool.stop()

    app = FastAPI(title="partcraft", lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[os.environ.get("PARTCRAFT_CORS_ORIGIN", "*")],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.store = store
    app.state.pool = pool

    @app.get("/v1/health")
    def health():
        return {"status": "ok"}

    @app.post("/v1/jobs", status_code=202)
    def submit(body: dict):
        document, config, kind = _validate_submission(body)
        job_id = store.create(document, config, kind)
        pool.submit(job_id)
        return {"id": job_id}

    @app.get("/v1/jobs/{job_id}")
    def poll(job_id: str):
        snap = store.read(job_id)
        if snap is None:
            raise HTTPException(status_code=404, detail="unknown job")
        snap = dict(snap)
        snap["artifacts"] = {
            name: f"/v1/jobs/{job_id}/artifacts/{name}" for name in snap["artifacts"]
        }
        return snap

    @app.get("/v1/jobs/{job_id}/artifacts/{name}")
    def fetch_artifact(job_id: str, name: str):
        snap = store.read(job_id)
        if snap is None:
            raise HTTPException(status_code=404, detail="unknown job")
        if snap["state"] != "done":
            raise HTTPException(status_code=409, detail=f"job is {snap['state']}")
        path = store.artifact_path(job_id, name)
        if path is None or not path.exists():
            raise HTTPException(status_code=404, detail="unknown artifact")
        media = "image/png" if path.suffix == ".png" else "application/json"
        return FileResponse(path, media_type=media)

    return app
