"""Live HTTP service around the simulation loop.

One loop thread owns every piece of mutable state; request handlers submit
closures into a command queue and block on the reply, so mutations are
serialized exactly like scenario events.  ``GET /stream`` is a server-sent
event feed of per-tick state snapshots, and an optional static directory
(the built console) is served at the root.
"""

from __future__ import annotations

import json
import mimetypes
import queue
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Callable, Optional

from devi import motion, orchestrator as orch
from devi.sim.config import SimConfig
from devi.sim.runner import SimLoop


class ApiError(Exception):
    def __init__(self, status: int, message: str):
        self.status = status
        self.message = message
        super().__init__(message)


class SimService:
    """Wall-paced simulation loop with a JSON/SSE API."""

    def __init__(
        self,
        config: SimConfig,
        static_dir: Optional[str] = None,
        pace: Optional[Callable[[float], None]] = time.sleep,
    ):
        self.loop = SimLoop(config)
        self.config = config
        self.static_dir = Path(static_dir).resolve() if static_dir else None
        self._pace = pace
        self._commands: "queue.Queue[tuple[Callable[[], Any], queue.Queue]]" = queue.Queue()
        self._subscribers: list[queue.Queue] = []
        self._subscribers_lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    # Loop thread ---------------------------------------------------------------

    def _run(self) -> None:
        period = 1.0 / self.config.tick_hz
        while not self._stop.is_set():
            while True:
                try:
                    fn, reply = self._commands.get_nowait()
                except queue.Empty:
                    break
                try:
                    reply.put((True, fn()))
                except ApiError as exc:
                    reply.put((False, exc))
                except Exception as exc:  # surface, don't kill the loop
                    reply.put((False, ApiError(500, f"{type(exc).__name__}: {exc}")))
            self.loop.tick()
            self._publish(self.loop.snapshot())
            if self._pace is not None:
                self._pace(period)

    def _publish(self, snapshot: dict) -> None:
        with self._subscribers_lock:
            for sub in self._subscribers:
                try:
                    sub.put_nowait(snapshot)
                except queue.Full:
                    pass  # slow consumer skips ticks

    def subscribe(self) -> queue.Queue:
        sub: queue.Queue = queue.Queue(maxsize=100)
        with self._subscribers_lock:
            self._subscribers.append(sub)
        return sub

    def unsubscribe(self, sub: queue.Queue) -> None:
        with self._subscribers_lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)

    def submit(self, fn: Callable[[], Any]) -> Any:
        """Run ``fn`` inside the loop thread and return its result."""
        reply: queue.Queue = queue.Queue(maxsize=1)
        self._commands.put((fn, reply))
        ok, value = reply.get()
        if not ok:
            raise value
        return value

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run, name="sim-loop", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    # Command implementations ------------------------------------------------------

    def cmd_add_visitor(self, body: dict) -> dict:
        loop = self.loop
        try:
            visitor = loop.add_visitor(
                visitor_id=body.get("visitor_id"),
                bearing_deg=float(body["bearing_deg"]),
                distance_mm=float(body["distance_mm"]),
                identity=body.get("identity"),
                face_visible=body.get("face_visible", True),
                face_size_px=body.get("face_size_px", 64),
            )
        except KeyError as exc:
            raise ApiError(400, f"missing field {exc.args[0]!r}") from None
        except ValueError as exc:
            raise ApiError(400, str(exc)) from None
        from devi.sim.world import region_for_bearing

        return {
            "visitor_id": visitor.visitor_id,
            "region": region_for_bearing(visitor.bearing_deg, loop.geometry),
        }

    def cmd_patch_visitor(self, visitor_id: str, body: dict) -> dict:
        loop = self.loop
        if visitor_id not in loop.world.visitors:
            raise ApiError(404, f"no visitor {visitor_id!r}")
        try:
            if "bearing_deg" in body or "distance_mm" in body:
                loop.move_visitor(
                    visitor_id, body.get("bearing_deg"), body.get("distance_mm")
                )
            if "face_visible" in body or "face_size_px" in body:
                loop.set_face(
                    visitor_id, body.get("face_visible"), body.get("face_size_px")
                )
        except ValueError as exc:
            raise ApiError(400, str(exc)) from None
        return {"ok": True}

    def cmd_delete_visitor(self, visitor_id: str) -> dict:
        if visitor_id not in self.loop.world.visitors:
            raise ApiError(404, f"no visitor {visitor_id!r}")
        self.loop.remove_visitor(visitor_id)
        return {"ok": True}

    def cmd_chat(self, body: dict) -> dict:
        visitor_id, text = self._visitor_text(body, "text")
        reply = self.loop.visitor_utterance(visitor_id, text)
        if reply is None:
            raise ApiError(409, "visitor is not being serviced")
        return {"speech_text": reply}

    def cmd_name(self, body: dict) -> dict:
        visitor_id, text = self._visitor_text(body, "name")
        if not self.loop.visitor_name(visitor_id, text):
            raise ApiError(409, "visitor is not being serviced")
        return {"ok": True}

    def cmd_consent(self, body: dict) -> dict:
        visitor_id = body.get("visitor_id")
        answer = body.get("answer")
        if not isinstance(visitor_id, str) or not isinstance(answer, bool):
            raise ApiError(400, "need 'visitor_id' (string) and 'answer' (boolean)")
        if visitor_id not in self.loop.world.visitors:
            raise ApiError(404, f"no visitor {visitor_id!r}")
        if not self.loop.visitor_consent(visitor_id, answer):
            raise ApiError(409, "visitor is not being serviced")
        return {"ok": True}

    def _visitor_text(self, body: dict, key: str) -> tuple[str, str]:
        visitor_id = body.get("visitor_id")
        text = body.get(key)
        if not isinstance(visitor_id, str) or not isinstance(text, str) or not text.strip():
            raise ApiError(400, f"need 'visitor_id' and a non-empty {key!r}")
        if visitor_id not in self.loop.world.visitors:
            raise ApiError(404, f"no visitor {visitor_id!r}")
        return visitor_id, text

    def cmd_people(self) -> list[dict]:
        return [
            {
                "person_id": r.person_id,
                "name": r.name,
                "created_at": r.created_at,
                "last_seen": r.last_seen,
                "recognition_count": r.recognition_count,
                "embeddings": len(r.embeddings),
            }
            for r in self.loop.store.snapshot()
        ]

    def cmd_gesture_demo(self) -> dict:
        plan = motion.plan_gesture(motion.Wave())
        self.loop.play_gesture(plan)
        return {"ok": True, "duration_s": round(plan.total_duration_s, 3)}

    def cmd_introduce(self) -> dict:
        return {"speech_text": self.loop.say_line("who-are-you")}


def make_handler(service: SimService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = "devi-sim"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        # Helpers ----------------------------------------------------------------

        def _json(self, status: int, payload: Any) -> None:
            body = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _error(self, status: int, message: str) -> None:
            self._json(status, {"error": message})

        def _body(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b""
            if not raw:
                raise ApiError(400, "request body required")
            try:
                parsed = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ApiError(400, f"malformed JSON: {exc.msg}") from None
            if not isinstance(parsed, dict):
                raise ApiError(400, "JSON object required")
            return parsed

        # Routing ----------------------------------------------------------------

        def do_GET(self) -> None:
            path = self.path.split("?", 1)[0]
            try:
                if path == "/state":
                    self._json(200, service.submit(service.loop.snapshot))
                elif path == "/people":
                    self._json(200, service.submit(service.cmd_people))
                elif path == "/stream":
                    self._stream()
                else:
                    self._static(path)
            except ApiError as exc:
                self._error(exc.status, exc.message)

        def do_POST(self) -> None:
            path = self.path.split("?", 1)[0]
            try:
                if path == "/demo/gesture":
                    self._json(200, service.submit(service.cmd_gesture_demo))
                    return
                if path == "/demo/introduce":
                    self._json(200, service.submit(service.cmd_introduce))
                    return
                body = self._body()
                if path == "/visitors":
                    self._json(201, service.submit(lambda: service.cmd_add_visitor(body)))
                elif path == "/chat":
                    self._json(200, service.submit(lambda: service.cmd_chat(body)))
                elif path == "/name":
                    self._json(200, service.submit(lambda: service.cmd_name(body)))
                elif path == "/consent":
                    self._json(200, service.submit(lambda: service.cmd_consent(body)))
                else:
                    self._error(404, f"no such endpoint {path!r}")
            except ApiError as exc:
                self._error(exc.status, exc.message)

        def do_PATCH(self) -> None:
            match = re.fullmatch(r"/visitors/([^/]+)", self.path.split("?", 1)[0])
            if not match:
                self._error(404, "no such endpoint")
                return
            try:
                body = self._body()
                self._json(
                    200,
                    service.submit(lambda: service.cmd_patch_visitor(match.group(1), body)),
                )
            except ApiError as exc:
                self._error(exc.status, exc.message)

        def do_DELETE(self) -> None:
            match = re.fullmatch(r"/visitors/([^/]+)", self.path.split("?", 1)[0])
            if not match:
                self._error(404, "no such endpoint")
                return
            try:
                self._json(
                    200, service.submit(lambda: service.cmd_delete_visitor(match.group(1)))
                )
            except ApiError as exc:
                self._error(exc.status, exc.message)

        # Streaming and static files ----------------------------------------------

        def _stream(self) -> None:
            sub = service.subscribe()
            try:
                self.send_response(200)
                self.send_header("Content-Type", "text/event-stream")
                self.send_header("Cache-Control", "no-cache")
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                snapshot = service.submit(service.loop.snapshot)
                self.wfile.write(f"data: {json.dumps(snapshot)}\n\n".encode())
                self.wfile.flush()
                while True:
                    try:
                        snapshot = sub.get(timeout=5.0)
                    except queue.Empty:
                        self.wfile.write(b": keepalive\n\n")
                        self.wfile.flush()
                        continue
                    self.wfile.write(f"data: {json.dumps(snapshot)}\n\n".encode())
                    self.wfile.flush()
            except (BrokenPipeError, ConnectionResetError):
                pass
            finally:
                service.unsubscribe(sub)

        def _static(self, path: str) -> None:
            if service.static_dir is None:
                self._error(404, "no such endpoint (no console built)")
                return
            relative = "index.html" if path == "/" else path.lstrip("/")
            target = (service.static_dir / relative).resolve()
            if not str(target).startswith(str(service.static_dir)) or not target.is_file():
                self._error(404, f"not found: {path}")
                return
            content = target.read_bytes()
            ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(content)))
            self.end_headers()
            self.wfile.write(content)

    return Handler


def serve(
    config: SimConfig,
    port: int = 8765,
    static_dir: Optional[str] = None,
    pace: Optional[Callable[[float], None]] = time.sleep,
) -> tuple[ThreadingHTTPServer, SimService]:
    """Start the loop and HTTP server; caller owns shutdown."""
    service = SimService(config, static_dir=static_dir, pace=pace)
    server = ThreadingHTTPServer(("127.0.0.1", port), make_handler(service))
    service.start()
    return server, service
