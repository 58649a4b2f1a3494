"""HTTP render service: encode a scene once, render novel views many times.

Endpoints (wire formats in docs/formats.md):
    POST /scenes                     multipart (view_k.png xN + cameras.json)
                                     or JSON {"images": [b64 PNG...],
                                              "cameras": [{...}] | null}
                                     -> {"id", "created", "encode_seconds"}
    GET  /scenes/{id}/render?pose=<16 floats>&fx&fy&cx&cy&w&h -> image/png
    GET  /scenes/{id}/meta           -> config fingerprint, view count, ...
    GET  /healthz                    -> liveness + session count
    GET  /ui/...                     -> static viewer bundle (when configured)

Sessions are immutable after creation and held in an LRU table; identical
payloads hash to the same session id and are never re-encoded. Renders run
concurrently against frozen latents; the session table has one writer lock.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from email import policy
from email.parser import BytesParser
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Dict, List, Optional, Tuple
from urllib.parse import urlparse, parse_qs

import numpy as np
from PIL import Image

from .geometry import RigidPose, Intrinsics
from .model import SceneModel
from .tensor import Tensor

__all__ = ["SceneSession", "RenderService", "ServiceError", "make_server", "serve"]


class ServiceError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


@dataclass
class SceneSession:
    """Frozen latent plus bookkeeping; render requests never mutate it."""

    session_id: str
    latent: object
    fingerprint: str
    views: int
    created: float
    encode_seconds: float
    encode_count: int = 1
    appearance: Optional[Tensor] = None


def _orthonormalize(m: np.ndarray, tol: float) -> RigidPose:
    r = m[:3, :3]
    err = float(np.abs(r.T @ r - np.eye(3)).max())
    if err > tol or np.linalg.det(r) <= 0:
        raise ServiceError(422, f"pose rotation is not rigid (orthonormality error {err:.2e})")
    u, _, vt = np.linalg.svd(r)
    return RigidPose(u @ vt, m[:3, 3])


class RenderService:
    def __init__(self, model: SceneModel, max_sessions: int = 16,
                 max_views: int = 16, max_render_pixels: int = 256 * 256,
                 max_input_pixels: int = 256 * 256, pose_tol: float = 1e-3):
        self.model = model
        self.max_sessions = max_sessions
        self.max_views = max_views
        self.max_render_pixels = max_render_pixels
        self.max_input_pixels = max_input_pixels
        self.pose_tol = pose_tol
        self.sessions: "OrderedDict[str, SceneSession]" = OrderedDict()
        self._table_lock = threading.Lock()
        self._encode_lock = threading.Lock()

    # -- session lifecycle ---------------------------------------------------

    def _payload_hash(self, images: List[bytes], cameras_blob: Optional[bytes]) -> str:
        h = hashlib.sha256()
        for img in images:
            h.update(hashlib.sha256(img).digest())
        h.update(cameras_blob or b"<no-cameras>")
        h.update(self.model.cfg.fingerprint().encode())
        return h.hexdigest()[:24]

    def encode_payload(self, images: List[bytes],
                       cameras_blob: Optional[bytes]) -> Tuple[SceneSession, bool]:
        if not images:
            raise ServiceError(400, "no images in payload")
        if len(images) > self.max_views:
            raise ServiceError(413, f"too many views: {len(images)} > {self.max_views}")
        sid = self._payload_hash(images, cameras_blob)
        with self._table_lock:
            if sid in self.sessions:
                self.sessions.move_to_end(sid)
                return self.sessions[sid], False
        with self._encode_lock:
            with self._table_lock:                      # lost the race? reuse
                if sid in self.sessions:
                    return self.sessions[sid], False
            session = self._build_session(sid, images, cameras_blob)
            with self._table_lock:
                self.sessions[sid] = session
                while len(self.sessions) > self.max_sessions:
                    self.sessions.popitem(last=False)
            return session, True

    def _build_session(self, sid: str, images: List[bytes],
                       cameras_blob: Optional[bytes]) -> SceneSession:
        decoded = []
        for k, blob in enumerate(images):
            try:
                img = Image.open(io.BytesIO(blob)).convert("RGB")
            except Exception:
                raise ServiceError(400, f"image {k} is not a decodable image") from None
            if img.width * img.height > self.max_input_pixels:
                raise ServiceError(413, f"image {k} too large: {img.width}x{img.height}")
            decoded.append(np.asarray(img, dtype=np.float32) / 255.0)
        shapes = {a.shape for a in decoded}
        if len(shapes) != 1:
            raise ServiceError(400, f"inconsistent image sizes: {sorted(shapes)}")
        cfg = self.model.cfg
        if decoded[0].shape[:2] != (cfg.image_height, cfg.image_width):
            raise ServiceError(400, f"model expects {cfg.image_height}x{cfg.image_width} "
                                    f"inputs, got {decoded[0].shape[1]}x{decoded[0].shape[0]}")
        poses = intrs = None
        if cameras_blob is not None:
            try:
                cams = json.loads(cameras_blob.decode())
                poses = [_orthonormalize(np.asarray(c["camera_to_world"], dtype=np.float64),
                                         self.pose_tol) for c in cams]
                intrs = [Intrinsics.from_matrix(c["intrinsics"]) for c in cams]
            except ServiceError:
                raise
            except Exception as e:
                raise ServiceError(400, f"malformed cameras.json: {e}") from None
            if len(poses) != len(decoded):
                raise ServiceError(400, f"{len(decoded)} images but {len(poses)} cameras")
        elif cfg.posed:
            raise ServiceError(409, "this checkpoint needs camera poses; cameras.json missing")
        t0 = time.monotonic()
        latent = self.model.encode_scene(np.stack(decoded), poses, intrs)
        appearance = None
        if cfg.appearance:
            appearance = self.model.appearance_from_image(decoded[0])
        return SceneSession(session_id=sid, latent=latent,
                            fingerprint=cfg.fingerprint(), views=len(decoded),
                            created=time.time(),
                            encode_seconds=time.monotonic() - t0,
                            appearance=appearance)

    def get_session(self, sid: str) -> SceneSession:
        with self._table_lock:
            if sid not in self.sessions:
                raise ServiceError(404, f"unknown session {sid!r}")
            self.sessions.move_to_end(sid)
            return self.sessions[sid]

    # -- rendering ------------------------------------------------------------

    def render(self, sid: str, pose_vals: List[float], fx: float, fy: float,
               cx: float, cy: float, width: int, height: int) -> Tuple[bytes, float]:
        session = self.get_session(sid)
        if width < 1 or height < 1 or width * height > self.max_render_pixels:
            raise ServiceError(413, f"render size {width}x{height} exceeds cap "
                                    f"{self.max_render_pixels} pixels")
        if len(pose_vals) != 16:
            raise ServiceError(400, f"pose needs 16 values, got {len(pose_vals)}")
        m = np.asarray(pose_vals, dtype=np.float64).reshape(4, 4)
        pose = _orthonormalize(m, self.pose_tol)
        try:
            intr = Intrinsics(fx, fy, cx, cy)
        except Exception as e:
            raise ServiceError(400, f"bad intrinsics: {e}") from None
        t0 = time.monotonic()
        img, _ = self.model.render_image(session.latent, pose, intr, width, height,
                                         appearance=session.appearance)
        seconds = time.monotonic() - t0
        buf = io.BytesIO()
        Image.fromarray(np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)).save(
            buf, format="PNG")
        return buf.getvalue(), seconds

    def meta(self, sid: str) -> dict:
        s = self.get_session(sid)
        return {"id": s.session_id, "fingerprint": s.fingerprint, "views": s.views,
                "created": s.created, "encode_seconds": s.encode_seconds,
                "encode_count": s.encode_count, "posed": self.model.cfg.posed,
                "input_size": [self.model.cfg.image_width, self.model.cfg.image_height]}

    def health(self) -> dict:
        with self._table_lock:
            n = len(self.sessions)
        return {"status": "ok", "fingerprint": self.model.cfg.fingerprint(),
                "sessions": n, "posed": self.model.cfg.posed}


def _parse_multipart(content_type: str, body: bytes) -> Dict[str, bytes]:
    """name/filename -> bytes for each part of a multipart/form-data body."""
    doc = b"Content-Type: " + content_type.encode() + b"\r\n\r\n" + body
    msg = BytesParser(policy=policy.HTTP).parsebytes(doc)
    if not msg.is_multipart():
        raise ServiceError(400, "expected multipart/form-data")
    parts: Dict[str, bytes] = {}
    for part in msg.iter_parts():
        name = part.get_filename() or part.get_param("name", header="content-disposition")
        if name:
            parts[name] = part.get_payload(decode=True) or b""
    return parts


class _Handler(BaseHTTPRequestHandler):
    service: RenderService = None
    ui_dir: Optional[Path] = None
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):   # quiet by default; tests assert bodies
        pass

    def _send(self, status: int, body: bytes, content_type: str = "application/json",
              extra: Optional[dict] = None):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        for k, v in (extra or {}).items():
            self.send_header(k, v)
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, status: int, obj: dict, extra=None):
        self._send(status, json.dumps(obj).encode(), extra=extra)

    def _fail(self, err: ServiceError):
        self._send_json(err.status, {"error": err.message})

    def do_GET(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        try:
            if url.path == "/healthz":
                self._send_json(200, self.service.health())
            elif len(parts) == 3 and parts[0] == "scenes" and parts[2] == "meta":
                self._send_json(200, self.service.meta(parts[1]))
            elif len(parts) == 3 and parts[0] == "scenes" and parts[2] == "render":
                q = parse_qs(url.query)
                try:
                    pose = [float(x) for x in q["pose"][0].split(",")]
                    fx, fy = float(q["fx"][0]), float(q["fy"][0])
                    cx, cy = float(q["cx"][0]), float(q["cy"][0])
                    w, h = int(q["w"][0]), int(q["h"][0])
                except (KeyError, ValueError) as e:
                    raise ServiceError(400, f"bad render query: {e}") from None
                png, seconds = self.service.render(parts[1], pose, fx, fy, cx, cy, w, h)
                self._send(200, png, content_type="image/png",
                           extra={"X-Render-Seconds": f"{seconds:.6f}"})
            elif parts and parts[0] == "ui" and self.ui_dir is not None:
                self._serve_static(parts[1:])
            else:
                self._send_json(404, {"error": f"no route {url.path}"})
        except ServiceError as e:
            self._fail(e)
        except Exception as e:                                    # pragma: no cover
            self._send_json(500, {"error": f"internal: {e}"})

    def _serve_static(self, rel_parts):
        rel = Path(*rel_parts) if rel_parts else Path("index.html")
        target = (self.ui_dir / rel).resolve()
        if not str(target).startswith(str(self.ui_dir.resolve())) or not target.is_file():
            self._send_json(404, {"error": f"no ui file {rel}"})
            return
        ctype = {"html": "text/html", "js": "text/javascript", "css": "text/css",
                 "map": "application/json", "png": "image/png",
                 "ico": "image/x-icon"}.get(target.suffix.lstrip("."), "application/octet-stream")
        self._send(200, target.read_bytes(), content_type=ctype)

    def do_POST(self):
        url = urlparse(self.path)
        try:
            if url.path != "/scenes":
                raise ServiceError(404, f"no route {url.path}")
            length = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(length)
            ctype = self.headers.get("Content-Type", "")
            images: List[bytes] = []
            cameras = None
            if ctype.startswith("multipart/"):
                parts = _parse_multipart(ctype, body)
                cameras = parts.pop("cameras.json", None)
                for name in sorted(parts):
                    if name.endswith(".png"):
                        images.append(parts[name])
            elif ctype.startswith("application/json"):
                try:
                    payload = json.loads(body.decode())
                    images = [base64.b64decode(s) for s in payload.get("images", [])]
                    if payload.get("cameras") is not None:
                        cameras = json.dumps(payload["cameras"]).encode()
                except ServiceError:
                    raise
                except Exception as e:
                    raise ServiceError(400, f"malformed JSON payload: {e}") from None
            else:
                raise ServiceError(400, f"unsupported content type {ctype!r}")
            session, created = self.service.encode_payload(images, cameras)
            self._send_json(200, {"id": session.session_id, "created": created,
                                  "encode_seconds": session.encode_seconds})
        except ServiceError as e:
            self._fail(e)
        except Exception as e:                                    # pragma: no cover
            self._send_json(500, {"error": f"internal: {e}"})


def make_server(model: SceneModel, host: str = "127.0.0.1", port: int = 0,
                ui_dir=None, **service_kw) -> ThreadingHTTPServer:
    """Build (but do not start) the threaded HTTP server; port 0 auto-picks."""
    service = RenderService(model, **service_kw)
    handler = type("BoundHandler", (_Handler,), {
        "service": service,
        "ui_dir": Path(ui_dir) if ui_dir else None,
    })
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    server.render_service = service
    return server


def serve(model: SceneModel, host: str = "127.0.0.1", port: int = 8008,
          ui_dir=None, **service_kw) -> None:
    server = make_server(model, host, port, ui_dir=ui_dir, **service_kw)
    print(f"render service on http://{host}:{server.server_address[1]}"
          f"{' with /ui/' if ui_dir else ''}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
