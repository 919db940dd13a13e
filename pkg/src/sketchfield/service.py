"""HTTP job service: submit generation, editing, and turntable-render runs,
poll their progress, stream their artifacts, and synthesize sketches of
saved fields for the interactive edit loop.

Endpoints (JSON unless noted):

- ``POST /api/jobs`` with ``{"kind": "generate"|"edit"|"render",
  "config": {...}}`` — validates the config, enqueues the job, and returns
  its snapshot. Every path in a config is resolved inside the service's
  data directory; absolute paths and ``..`` are rejected. Sketch and mask
  entries may instead be inline ``data:image/png;base64,`` URIs, which the
  service writes into the job's directory before validation.
- ``GET /api/jobs`` — all job snapshots, newest first.
- ``GET /api/jobs/{id}`` — one snapshot: state, progress, latest loss,
  error message, and (once the job is over) its artifact list.
- ``GET /api/jobs/{id}/artifacts/{name}`` — the artifact's bytes exactly
  as they are on disk (render PNG, field file, CSV, manifest).
- ``POST /api/jobs/{id}/cancel`` — queued jobs cancel immediately; running
  jobs stop cooperatively at the next optimization step.
- ``GET /api/sketch?field=...&azimuth=...&elevation=...`` — PNG bytes of
  the sketch extracted from a render of the given saved field.

Jobs execute on a single worker thread, one at a time; the job table is
guarded by one lock and every state change is persisted to the job's
directory, so finished jobs survive a service restart (a job interrupted
mid-run is recovered as failed).
"""
from __future__ import annotations

import base64
import binascii
import json
import mimetypes
import os
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from queue import SimpleQueue
from typing import Optional

from fastapi import Body, FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, Response

from .cameras import make_camera
from .errors import ConfigError
from .imgio import encode_sketch_png, save_render_png
from .pipeline import (_check_keys, _typed, edit, generate,
                       load_edit_config, load_generation_config, turntable)
from .sketchops import extract_sketch
from .volume import RenderConfig, load_field, render

KINDS = ("generate", "edit", "render")
TERMINAL = ("done", "failed", "cancelled")

# config entries that name files, per job kind; each is resolved inside the
# data directory (and sketch/mask may arrive as inline data URIs instead)
_PATH_KEYS = {
    "generate": (("sketch",), ("model", "field"), ("model_2d", "image"),
                 ("depth", "path")),
    "edit": (("field",), ("sketch",), ("mask",), ("fine", "overrides")),
    "render": (("field",),),
}
_INLINE_KEYS = {"sketch", "mask"}
_DATA_URI_PREFIX = "data:image/png;base64,"

_RENDER_DEFAULTS = {"frames": 36, "elevation_deg": 15.0, "resolution": 256,
                    "render_steps": 128, "radius": 2.0, "fov_y_deg": 50.0,
                    "background": 1.0}
_RENDER_TYPES = {"frames": int, "resolution": int, "render_steps": int,
                 "elevation_deg": float, "radius": float,
                 "fov_y_deg": float, "background": float}


def _validate_render_config(data: dict) -> dict:
    _check_keys(data, {"field"} | set(_RENDER_DEFAULTS))
    if "field" not in data:
        raise ConfigError("field", "this key is required")
    resolved = {**_RENDER_DEFAULTS, **data}
    for key, kind in _RENDER_TYPES.items():
        resolved[key] = _typed(resolved, key, kind, key)
    if resolved["frames"] < 1:
        raise ConfigError("frames", "must be at least 1")
    return resolved


@dataclass
class Job:
    id: str
    kind: str
    dir: Path
    total: int
    state: str = "queued"
    step: int = -1
    loss: Optional[float] = None
    error: Optional[str] = None
    cancel_requested: bool = False
    run_config: object = None          # validated config, in memory only
    order: int = 0

    def snapshot(self) -> dict:
        snap = {
            "id": self.id, "kind": self.kind, "state": self.state,
            "progress": {"step": self.step, "total": self.total},
            "loss": self.loss, "error": self.error,
        }
        if self.state in TERMINAL:
            snap["artifacts"] = sorted(
                p.relative_to(self.dir).as_posix()
                for p in self.dir.rglob("*")
                if p.is_file() and p.name != "job.json")
        return snap

    def persist(self) -> None:
        payload = {"id": self.id, "kind": self.kind, "state": self.state,
                   "step": self.step, "total": self.total,
                   "loss": self.loss, "error": self.error,
                   "order": self.order}
        tmp = self.dir / "job.json.tmp"
        tmp.write_text(json.dumps(payload, indent=2))
        os.replace(tmp, self.dir / "job.json")


class JobManager:
    """Owns the job table, the data directory, and the single worker."""

    def __init__(self, data_dir: Path):
        self.data_dir = Path(data_dir)
        self.jobs_dir = self.data_dir / "jobs"
        self.jobs_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._jobs: dict[str, Job] = {}
        self._queue: SimpleQueue = SimpleQueue()
        self._order = 0
        self._recover()
        self._worker = threading.Thread(target=self._run_worker,
                                        daemon=True, name="sketchfield-jobs")
        self._worker.start()

    # ------------------------------------------------------------ intake

    def submit(self, kind: str, config: dict) -> dict:
        if kind not in KINDS:
            raise ConfigError("kind", f"must be one of {', '.join(KINDS)}")
        job_id = uuid.uuid4().hex[:12]
        job_dir = self.jobs_dir / job_id
        job_dir.mkdir(parents=True)
        config = self._materialize(dict(config), job_dir)
        self._resolve_paths(kind, config)
        if kind == "generate":
            cfg = load_generation_config(config)
            run_config = cfg
            total = cfg.total_steps
        elif kind == "edit":
            cfg = load_edit_config(config)
            run_config = cfg
            total = cfg.stage("coarse")["steps"] + cfg.stage("fine")["steps"]
        else:
            run_config = _validate_render_config(config)
            total = run_config["frames"]
        (job_dir / "config.json").write_text(json.dumps(config, indent=2))
        with self._lock:
            self._order += 1
            job = Job(id=job_id, kind=kind, dir=job_dir, total=total,
                      run_config=run_config, order=self._order)
            self._jobs[job_id] = job
            job.persist()
            snap = job.snapshot()
        self._queue.put(job_id)
        return snap

    def _materialize(self, config: dict, job_dir: Path) -> dict:
        """Write inline data-URI images into the job directory."""
        for key in _INLINE_KEYS:
            value = config.get(key)
            if not (isinstance(value, str)
                    and value.startswith(_DATA_URI_PREFIX)):
                continue
            try:
                blob = base64.b64decode(value[len(_DATA_URI_PREFIX):],
                                        validate=True)
            except (binascii.Error, ValueError):
                raise ConfigError(key, "inline image is not valid base64")
            path = job_dir / f"{key}.png"
            path.write_bytes(blob)
            config[key] = str(path)
        return config

    def _resolve_paths(self, kind: str, config: dict) -> None:
        for key_path in _PATH_KEYS[kind]:
            block: object = config
            for part in key_path[:-1]:
                block = block.get(part) if isinstance(block, dict) else None
            if not isinstance(block, dict):
                continue
            leaf = key_path[-1]
            value = block.get(leaf)
            if value is None or not isinstance(value, str):
                continue
            dotted = ".".join(key_path)
            if Path(value).is_absolute():
                if Path(value).resolve().is_relative_to(
                        self.jobs_dir.resolve()):
                    continue        # an image this service just materialized
                raise ConfigError(
                    dotted, "must be relative to the data directory")
            if ".." in Path(value).parts:
                raise ConfigError(dotted, "may not contain '..'")
            resolved = self.data_dir / value
            if not resolved.exists():
                raise ConfigError(dotted, f"file not found: {value}")
            block[leaf] = str(resolved)

    # ------------------------------------------------------------ lookup

    def snapshot(self, job_id: str) -> dict:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise KeyError(job_id)
            return job.snapshot()

    def snapshots(self) -> list:
        with self._lock:
            jobs = sorted(self._jobs.values(), key=lambda j: -j.order)
            return [job.snapshot() for job in jobs]

    def artifact_path(self, job_id: str, name: str) -> Path:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise KeyError(job_id)
            state = job.state
            job_dir = job.dir
        if state not in TERMINAL:
            raise JobNotDone(job_id)
        parts = Path(name).parts
        if Path(name).is_absolute() or ".." in parts or not parts:
            raise TraversalRejected(name)
        target = (job_dir / name).resolve()
        if not target.is_relative_to(job_dir.resolve()):
            raise TraversalRejected(name)
        if not target.is_file() or target.name == "job.json":
            raise FileNotFoundError(name)
        return target

    # ------------------------------------------------------------ cancel

    def cancel(self, job_id: str) -> dict:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise KeyError(job_id)
            if job.state in TERMINAL:
                raise JobFinished(job_id)
            job.cancel_requested = True
            if job.state == "queued":
                job.state = "cancelled"
                job.persist()
            return job.snapshot()

    # ------------------------------------------------------------ worker

    def _run_worker(self) -> None:
        while True:
            job_id = self._queue.get()
            with self._lock:
                job = self._jobs.get(job_id)
                if job is None or job.state != "queued":
                    continue                      # cancelled while queued
                job.state = "running"
                job.step = 0
                job.persist()
            try:
                self._execute(job)
            except Exception as exc:              # noqa: BLE001 — job sandbox
                with self._lock:
                    job.state = "failed"
                    job.error = str(exc) or type(exc).__name__
                    job.persist()
            else:
                with self._lock:
                    job.state = ("cancelled" if job.cancel_requested
                                 else "done")
                    job.persist()

    def _progress(self, job: Job):
        def cb(step: int, report) -> bool:
            with self._lock:
                job.step = step
                if report is not None:
                    job.loss = float(report.total)
                if step % 25 == 0:
                    job.persist()
                return not job.cancel_requested
        return cb

    def _execute(self, job: Job) -> None:
        if job.kind == "generate":
            generate(job.run_config, job.dir, progress=self._progress(job))
        elif job.kind == "edit":
            edit(job.run_config, job.dir, progress=self._progress(job))
        else:
            self._run_render(job)

    def _run_render(self, job: Job) -> None:
        cfg = job.run_config
        fld = load_field(cfg["field"])
        out_dir = job.dir / "turntable"
        out_dir.mkdir(exist_ok=True)
        cb = self._progress(job)
        names = []
        for k in range(cfg["frames"]):
            azimuth = 360.0 * k / cfg["frames"]
            frame = turntable(
                fld, elevation_deg=cfg["elevation_deg"], frames=1,
                resolution=cfg["resolution"], radius=cfg["radius"],
                fov_y_deg=cfg["fov_y_deg"], background=cfg["background"],
                render_steps=cfg["render_steps"],
                start_azimuth_deg=azimuth)[0]
            name = f"{k:03d}.png"
            save_render_png(out_dir / name, frame)
            names.append(f"turntable/{name}")
            if not cb(k, None):
                break
        manifest = {"kind": "render",
                    "config": {k: cfg[k] for k in sorted(cfg)},
                    "artifacts": {"turntable": names}}
        (job.dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True))

    # ---------------------------------------------------------- recovery

    def _recover(self) -> None:
        for meta_path in sorted(self.jobs_dir.glob("*/job.json")):
            try:
                meta = json.loads(meta_path.read_text())
            except (OSError, json.JSONDecodeError):
                continue
            job = Job(id=meta.get("id", meta_path.parent.name),
                      kind=meta.get("kind", "generate"),
                      dir=meta_path.parent,
                      total=int(meta.get("total", 0)),
                      state=meta.get("state", "failed"),
                      step=int(meta.get("step", -1)),
                      loss=meta.get("loss"), error=meta.get("error"),
                      order=int(meta.get("order", 0)))
            if job.state not in TERMINAL:
                job.state = "failed"
                job.error = "interrupted by a service restart"
                job.persist()
            self._order = max(self._order, job.order)
            self._jobs[job.id] = job


class JobNotDone(Exception):
    pass


class JobFinished(Exception):
    pass


class TraversalRejected(Exception):
    pass


def _config_error(exc: ConfigError) -> HTTPException:
    return HTTPException(status_code=400,
                         detail={"key": exc.key, "message": str(exc)})


def create_app(data_dir) -> FastAPI:
    """Build the service around one data directory.

    Cross-origin requests are allowed so the browser studio can be served
    from any static host; the service itself carries no credentials.
    """
    app = FastAPI(title="sketchfield service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    manager = JobManager(Path(data_dir))
    app.state.manager = manager

    @app.post("/api/jobs")
    def submit(payload: dict = Body(...)) -> dict:
        kind = payload.get("kind")
        config = payload.get("config")
        if not isinstance(kind, str):
            raise _config_error(ConfigError("kind", "this key is required"))
        if not isinstance(config, dict):
            raise _config_error(
                ConfigError("config", "must be a JSON object"))
        try:
            return manager.submit(kind, config)
        except ConfigError as exc:
            raise _config_error(exc) from None

    @app.get("/api/jobs")
    def index() -> list:
        return manager.snapshots()

    @app.get("/api/jobs/{job_id}")
    def status(job_id: str) -> dict:
        try:
            return manager.snapshot(job_id)
        except KeyError:
            raise HTTPException(404, detail="unknown job id") from None

    @app.post("/api/jobs/{job_id}/cancel")
    def cancel(job_id: str) -> dict:
        try:
            return manager.cancel(job_id)
        except KeyError:
            raise HTTPException(404, detail="unknown job id") from None
        except JobFinished:
            raise HTTPException(
                409, detail="job already finished") from None

    @app.get("/api/jobs/{job_id}/artifacts/{name:path}")
    def artifact(job_id: str, name: str):
        try:
            path = manager.artifact_path(job_id, name)
        except KeyError:
            raise HTTPException(404, detail="unknown job id") from None
        except JobNotDone:
            raise HTTPException(409, detail="job not finished") from None
        except TraversalRejected:
            raise HTTPException(
                400, detail="artifact name escapes the job directory",
            ) from None
        except FileNotFoundError:
            raise HTTPException(404, detail="unknown artifact") from None
        media, _ = mimetypes.guess_type(path.name)
        return FileResponse(path, media_type=media
                            or "application/octet-stream")

    @app.get("/api/sketch")
    def sketch(field: str, azimuth: float = 0.0, elevation: float = 15.0,
               radius: float = 2.0, fov: float = 50.0,
               resolution: int = 256, steps: int = 128) -> Response:
        if Path(field).is_absolute() or ".." in Path(field).parts:
            raise HTTPException(
                400, detail="field must be a relative path inside "
                            "the data directory")
        path = manager.data_dir / field
        if not path.is_file():
            raise HTTPException(404, detail="unknown field file")
        if not 8 <= resolution <= 1024:
            raise HTTPException(400, detail="resolution out of range")
        fld = load_field(path)
        cam = make_camera(azimuth, elevation, radius, fov_y_deg=fov,
                          width=resolution, height=resolution)
        out = render(fld, cam, RenderConfig(n_steps=steps), background=1.0)
        return Response(content=encode_sketch_png(extract_sketch(out)),
                        media_type="image/png")

    return app
