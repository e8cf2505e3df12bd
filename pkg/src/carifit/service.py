"""Local HTTP facade over the fitting pipeline for the landmark editor.

Sessions are plain directories (image, landmark versions, result versions)
so the CLI and browser UI share artifacts without a database.  Fits run on
a background thread, one per session at most; the client polls status.
The JSON schemas here are the single source of truth for the UI.

Endpoints:
    POST /sessions                     create (JSON: image_base64, landmarks)
    GET  /sessions/{id}                status document
    PUT  /sessions/{id}/landmarks      replace landmarks (409 while fitting)
    POST /sessions/{id}/fit            start a fit (409 while fitting)
    GET  /sessions/{id}/result         latest result document
    GET  /sessions/{id}/mesh.obj       fitted mesh, polygon text
    GET  /sessions/{id}/overlay.png    target-vs-reprojected overlay
    GET  /sessions/{id}/image          the session image
"""

from __future__ import annotations

import base64
import io
import json
import os
import threading
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
from PIL import Image

from .camera import project
from .mesh import (
    DEFAULT_LANDMARK_COUNT,
    MeshFormatError,
    landmark_spec_from_document,
    write_mesh,
)
from .pipeline import FitConfig, fit_caricature
from .report import render_overlay

RESULT_SCHEMA_VERSION = 1
ALLOWED_IMAGE_FORMATS = {"PNG": "image/png", "JPEG": "image/jpeg"}


class ServiceError(Exception):
    """Carries the HTTP status for a failed request."""

    def __init__(self, status, message):
        super().__init__(message)
        self.status = status
        self.message = message


class Session:
    """One editing session; status transitions are lock-serialized.

    Valid transitions: idle -> fitting, fitting -> done | failed,
    done | failed -> fitting.  Landmark edits are rejected while fitting,
    results are immutable once written (a re-fit creates a new version).
    """

    def __init__(self, session_id, directory):
        self.id = session_id
        self.dir = directory
        self.lock = threading.Lock()
        self.status = "idle"
        self.landmark_version = 0
        self.result_version = 0
        self.error = ""
        self.landmarks = None
        self.image_type = None
        self._worker = None

    # -- persistence ----------------------------------------------------

    def meta_path(self):
        return os.path.join(self.dir, "meta.json")

    def save_meta(self):
        doc = {
            "id": self.id,
            "status": self.status if self.status != "fitting" else "idle",
            "landmark_version": self.landmark_version,
            "result_version": self.result_version,
            "image_type": self.image_type,
            "error": self.error,
        }
        with open(self.meta_path(), "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)

    @classmethod
    def load(cls, directory):
        with open(os.path.join(directory, "meta.json"), "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        session = cls(doc["id"], directory)
        session.status = doc["status"]
        session.landmark_version = doc["landmark_version"]
        session.result_version = doc["result_version"]
        session.image_type = doc.get("image_type")
        session.error = doc.get("error", "")
        if session.landmark_version:
            path = os.path.join(directory,
                                f"landmarks_v{session.landmark_version}.json")
            with open(path, "r", encoding="utf-8") as fh:
                session.landmarks = landmark_spec_from_document(json.load(fh))
        return session

    def status_document(self):
        return {
            "id": self.id,
            "status": self.status,
            "landmark_version": self.landmark_version,
            "result_version": self.result_version,
            "error": self.error,
        }

    def result_dir(self, version=None):
        return os.path.join(self.dir, "results", f"v{version or self.result_version}")


class FitService:
    """Transport-independent session operations; the HTTP layer is a shim."""

    def __init__(self, basis, root, image_limit=32 * 1024 * 1024, run_async=True):
        self.basis = basis
        self.root = root
        self.image_limit = image_limit
        self.run_async = run_async
        self.sessions = {}
        self._sessions_lock = threading.Lock()
        os.makedirs(root, exist_ok=True)
        for name in sorted(os.listdir(root)):
            meta = os.path.join(root, name, "meta.json")
            if os.path.isfile(meta):
                try:
                    session = Session.load(os.path.join(root, name))
                    self.sessions[session.id] = session
                except (OSError, KeyError, ValueError, MeshFormatError):
                    continue

    # -- operations ------------------------------------------------------

    def create_session(self, body):
        if not isinstance(body, dict):
            raise ServiceError(400, "request body must be a JSON object")
        if "image_base64" not in body or "landmarks" not in body:
            raise ServiceError(400, "fields image_base64 and landmarks are required")
        try:
            raw = base64.b64decode(body["image_base64"], validate=True)
        except Exception:
            raise ServiceError(400, "image_base64 is not valid base64") from None
        if len(raw) > self.image_limit:
            raise ServiceError(400, "image too large")
        try:
            with Image.open(io.BytesIO(raw)) as img:
                fmt = img.format
                img.verify()
        except Exception:
            raise ServiceError(415, "unsupported or undecodable image") from None
        if fmt not in ALLOWED_IMAGE_FORMATS:
            raise ServiceError(415, f"unsupported image type {fmt}; use PNG or JPEG")
        try:
            lms = landmark_spec_from_document(body["landmarks"],
                                              DEFAULT_LANDMARK_COUNT)
            lms.validate_for(self.basis.reference)
        except (MeshFormatError, ValueError) as exc:
            raise ServiceError(400, str(exc)) from None

        session_id = uuid.uuid4().hex[:12]
        directory = os.path.join(self.root, session_id)
        os.makedirs(directory)
        session = Session(session_id, directory)
        session.image_type = fmt
        with open(os.path.join(directory, "image.bin"), "wb") as fh:
            fh.write(raw)
        session.landmarks = lms
        session.landmark_version = 1
        self._write_landmarks(session)
        session.save_meta()
        with self._sessions_lock:
            self.sessions[session_id] = session
        return session

    def _write_landmarks(self, session):
        path = os.path.join(session.dir,
                            f"landmarks_v{session.landmark_version}.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(session.landmarks.to_document(), fh, indent=1)

    def get_session(self, session_id) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise ServiceError(404, f"unknown session {session_id}")
        return session

    def update_landmarks(self, session_id, doc):
        session = self.get_session(session_id)
        try:
            lms = landmark_spec_from_document(doc, DEFAULT_LANDMARK_COUNT)
            lms.validate_for(self.basis.reference)
        except (MeshFormatError, ValueError) as exc:
            raise ServiceError(400, str(exc)) from None
        with session.lock:
            if session.status == "fitting":
                raise ServiceError(409, "landmarks are locked while fitting")
            session.landmarks = lms
            session.landmark_version += 1
            self._write_landmarks(session)
            session.save_meta()
            return {"version": session.landmark_version}

    def run_fit(self, session_id, overrides=None):
        session = self.get_session(session_id)
        overrides = overrides or {}
        try:
            cfg = FitConfig(
                lam=float(overrides.get("lambda", 0.01)),
                max_iterations=int(overrides.get("iterations", 4)),
                epsilon=float(overrides.get("epsilon", 1e-2)),
                tie_weights=bool(overrides.get("tie_weights", False)),
            )
        except (TypeError, ValueError) as exc:
            raise ServiceError(400, f"bad fit configuration: {exc}") from None
        with session.lock:
            if session.status == "fitting":
                raise ServiceError(409, "a fit is already running")
            session.status = "fitting"
            session.error = ""
        if self.run_async:
            worker = threading.Thread(target=self._fit_worker,
                                      args=(session, cfg), daemon=True)
            session._worker = worker
            worker.start()
        else:
            self._fit_worker(session, cfg)
        return {"status": "fitting"}

    def _fit_worker(self, session, cfg):
        try:
            lms = session.landmarks
            result = fit_caricature(self.basis, lms, cfg)
            version = session.result_version + 1
            out_dir = session.result_dir(version)
            os.makedirs(out_dir, exist_ok=True)
            write_mesh(os.path.join(out_dir, "mesh.obj"), result.mesh)
            render_overlay(result, lms, os.path.join(session.dir, "image.bin"),
                           os.path.join(out_dir, "overlay.png"))
            doc = self._result_document(result, lms, version)
            with open(os.path.join(out_dir, "result.json"), "w", encoding="utf-8") as fh:
                json.dump(doc, fh, indent=1, sort_keys=True)
            with session.lock:
                session.result_version = version
                session.status = "done"
                session.save_meta()
        except Exception as exc:  # diagnostic lands in the session, not the log
            with session.lock:
                session.status = "failed"
                session.error = f"{type(exc).__name__}: {exc}"
                session.save_meta()

    def _result_document(self, result, lms, version):
        reproj = project(result.proj, result.mesh.vertices[lms.indices])
        per_point = np.linalg.norm(reproj - lms.points2d, axis=1)
        return {
            "schema": RESULT_SCHEMA_VERSION,
            "version": version,
            "e_error": result.e_error,
            "exit_reason": result.exit_reason,
            "camera": result.proj.to_document(),
            "weights": {
                "rotation": [float(x) for x in result.weights.wR],
                "scale": [float(x) for x in result.weights.wS],
            },
            "trace": [
                {
                    "iteration": t.iteration,
                    "e_def": t.e_def,
                    "e_lan": t.e_lan,
                    "e_error": t.e_error,
                    "e_def_post_w": t.e_def_post_w,
                }
                for t in result.trace
            ],
            "targets": [[float(x), float(y)] for x, y in lms.points2d],
            "reprojected": [[float(x), float(y)] for x, y in reproj],
            "per_point_error": [float(x) for x in per_point],
            "mesh": {
                "version": 1,
                "vertices": [float(x) for x in result.mesh.vertices.ravel()],
                "faces": [int(x) for x in result.mesh.faces.ravel()],
            },
        }

    def get_result(self, session_id):
        session = self.get_session(session_id)
        with session.lock:
            if session.result_version == 0:
                raise ServiceError(404, json.dumps(
                    {"status": session.status, "error": "no result"}))
            path = os.path.join(session.result_dir(), "result.json")
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)

    def result_file(self, session_id, name):
        session = self.get_session(session_id)
        if session.result_version == 0:
            raise ServiceError(404, "no result")
        path = os.path.join(session.result_dir(), name)
        if not os.path.isfile(path):
            raise ServiceError(404, f"missing {name}")
        with open(path, "rb") as fh:
            return fh.read()

    def image_bytes(self, session_id):
        session = self.get_session(session_id)
        with open(os.path.join(session.dir, "image.bin"), "rb") as fh:
            return fh.read(), ALLOWED_IMAGE_FORMATS[session.image_type]

    def wait_idle(self, session_id, timeout=120.0):
        """Block until no fit is running (test and shutdown helper)."""
        session = self.get_session(session_id)
        worker = session._worker
        if worker is not None:
            worker.join(timeout)


class _Handler(BaseHTTPRequestHandler):
    service: FitService = None
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, status, payload, content_type="application/json"):
        body = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()
        self.wfile.write(body)

    def _error(self, exc: ServiceError):
        try:
            payload = json.loads(exc.message)
        except (json.JSONDecodeError, TypeError):
            payload = {"error": exc.message}
        self._send(exc.status, payload)

    def _read_json(self):
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        try:
            return json.loads(raw or b"{}")
        except json.JSONDecodeError:
            raise ServiceError(400, "request body is not valid JSON") from None

    def do_OPTIONS(self):
        self._send(204, b"", "text/plain")

    def do_POST(self):
        try:
            parts = [p for p in self.path.split("/") if p]
            if parts == ["sessions"]:
                session = self.service.create_session(self._read_json())
                self._send(201, session.status_document())
            elif len(parts) == 3 and parts[0] == "sessions" and parts[2] == "fit":
                self._send(202, self.service.run_fit(parts[1], self._read_json()))
            else:
                self._send(404, {"error": "no such endpoint"})
        except ServiceError as exc:
            self._error(exc)

    def do_PUT(self):
        try:
            parts = [p for p in self.path.split("/") if p]
            if len(parts) == 3 and parts[0] == "sessions" and parts[2] == "landmarks":
                self._send(200, self.service.update_landmarks(parts[1], self._read_json()))
            else:
                self._send(404, {"error": "no such endpoint"})
        except ServiceError as exc:
            self._error(exc)

    def do_GET(self):
        try:
            parts = [p for p in self.path.split("/") if p]
            if len(parts) == 2 and parts[0] == "sessions":
                self._send(200, self.service.get_session(parts[1]).status_document())
            elif len(parts) == 3 and parts[0] == "sessions":
                sid, tail = parts[1], parts[2]
                if tail == "result":
                    self._send(200, self.service.get_result(sid))
                elif tail == "mesh.obj":
                    self._send(200, self.service.result_file(sid, "mesh.obj"),
                               "text/plain")
                elif tail == "overlay.png":
                    self._send(200, self.service.result_file(sid, "overlay.png"),
                               "image/png")
                elif tail == "image":
                    data, ctype = self.service.image_bytes(sid)
                    self._send(200, data, ctype)
                else:
                    self._send(404, {"error": "no such endpoint"})
            else:
                self._send(404, {"error": "no such endpoint"})
        except ServiceError as exc:
            self._error(exc)


def make_server(basis, root, host="127.0.0.1", port=0, run_async=True):
    """A ready ThreadingHTTPServer bound to (host, port); port 0 picks one."""
    service = FitService(basis, root, run_async=run_async)
    handler = type("Handler", (_Handler,), {"service": service})
    server = ThreadingHTTPServer((host, port), handler)
    server.service = service
    return server


def run_server(basis, root, host="127.0.0.1", port=8077):
    server = make_server(basis, root, host=host, port=port)
    print(f"serving on http://{host}:{server.server_address[1]} (root {root})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
