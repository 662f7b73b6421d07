"""HTTP API and live event stream for the web UI.

Resource-oriented endpoints over a single served project; the engine
starts paused at virtual 0 and is steered with run/pause/step/until.
The stream pushes JSON lines ({"type": "event" | "status", ...}) to every
subscriber as events apply.

    GET  /api/project                          current project document
    PUT  /api/project                          replace project (validated)
    GET  /api/devices/<id>/status              device status snapshot
    POST /api/devices/<id>/sensors/<sid>       {"value": {...}} manual set
    POST /api/scenarios/<id>/enabled           {"enabled": bool}
    POST /api/run                              {"action": run|pause|step|until,
                                                "t": ms, "speed": factor}
    GET  /api/state                            clock/run-state summary
    GET  /api/stream                           JSON-lines push
"""

from __future__ import annotations

import json
import queue
import threading
import time
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Optional

from . import persistence
from .engine import Engine, LoggedEvent
from .errors import (
    HouseSimError,
    SchemaViolation,
    UnknownDevice,
    UnknownScenario,
    UnknownSensor,
    UnsupportedVersion,
)

STREAM_QUEUE_SIZE = 1000


class StreamHub:
    """Fan-out of immutable JSON records to stream subscribers."""

    def __init__(self):
        self._lock = threading.Lock()
        self._subscribers: list[queue.Queue] = []

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue(maxsize=STREAM_QUEUE_SIZE)
        with self._lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def publish(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True) + "\n"
        with self._lock:
            targets = list(self._subscribers)
        for q in targets:
            try:
                q.put_nowait(line)
            except queue.Full:
                pass  # a stalled reader loses records; it re-syncs via queries


def event_record(logged: LoggedEvent) -> dict:
    event = logged.event
    return {
        "type": "event",
        "fire_time_ms": event.fire_time,
        "seq": event.seq,
        "object_id": event.object_id,
        "sensor_id": event.sensor_id,
        "value": event.value_text,
        "outcome": logged.outcome,
        "provenance": event.provenance.text(),
    }


def status_record(logged: LoggedEvent) -> dict:
    event = logged.event
    return {
        "type": "status",
        "object_id": event.object_id,
        "sensor_id": event.sensor_id,
        "value": event.value_text,
        "last_update_ms": event.fire_time,
    }


class SimulatorService:
    """Owns one engine + document and the run-control loop for serving."""

    RUN_SLICE_S = 0.05

    def __init__(self, doc: persistence.ProjectDocument, speed: float = 1.0):
        self.hub = StreamHub()
        self.speed = speed
        self._state = "paused"
        self._stop = False
        self._doc = doc
        self._engine = doc.build_engine()
        self._engine.add_listener(self._on_event)
        self._thread: Optional[threading.Thread] = None

    # -- engine plumbing ---------------------------------------------------

    def _on_event(self, logged: LoggedEvent) -> None:
        self.hub.publish(event_record(logged))
        if logged.applied:
            self.hub.publish(status_record(logged))

    @property
    def engine(self) -> Engine:
        return self._engine

    @property
    def document(self) -> persistence.ProjectDocument:
        return self._doc

    def replace_document(self, doc: persistence.ProjectDocument) -> None:
        """Swap in an edited project; the run restarts paused at virtual 0."""
        self._state = "paused"
        self._doc = doc
        self._engine = doc.build_engine()
        self._engine.add_listener(self._on_event)

    # -- run control ----------------------------------------------------------

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run_loop, daemon=True)
        self._thread.start()

    def shutdown(self) -> None:
        self._stop = True

    def control(self, action: str, t: Optional[int] = None,
                speed: Optional[float] = None) -> dict:
        if action == "run":
            if speed is not None:
                if speed <= 0:
                    raise ValueError("speed must be positive")
                self.speed = speed
            self._state = "running"
        elif action == "pause":
            self._state = "paused"
        elif action == "step":
            logged = self._engine.step()
            return {
                "state": self._state,
                "clock_ms": self._engine.now,
                "event": event_record(logged) if logged else None,
            }
        elif action == "until":
            if t is None or t < self._engine.now:
                raise ValueError("'until' needs t >= current clock")
            applied = self._engine.run_until(int(t))
            return {
                "state": self._state,
                "clock_ms": self._engine.now,
                "events": len(applied),
            }
        else:
            raise ValueError(f"unknown action {action!r}")
        return {"state": self._state, "clock_ms": self._engine.now}

    def state(self) -> dict:
        counts = self._engine.outcome_counts()
        return {
            "state": self._state,
            "clock_ms": self._engine.now,
            "speed": self.speed,
            "events": counts,
        }

    def _run_loop(self) -> None:
        """Advance the virtual clock in small real-time slices while running."""
        while not self._stop:
            if self._state == "running":
                target = self._engine.now + int(self.RUN_SLICE_S * 1000 * self.speed)
                self._engine.run_until(target)
            time.sleep(self.RUN_SLICE_S)


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "housesim"

    # -- helpers ------------------------------------------------------------

    @property
    def service(self) -> SimulatorService:
        return self.server.service  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send_json(self, payload: Any, status: int = 200) -> None:
        body = (json.dumps(payload, sort_keys=True) + "\n").encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_error_json(self, exc: Exception, status: int) -> None:
        self._send_json(
            {"error": type(exc).__name__, "message": str(exc)}, status
        )

    def _read_body(self) -> Any:
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length) if length else b"{}"
        try:
            return json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"request body is not valid JSON: {exc}") from None

    # -- routing --------------------------------------------------------------

    def do_GET(self):
        try:
            self._route_get()
        except HouseSimError as exc:
            self._send_error_json(exc, self._status_for(exc))
        except Exception as exc:  # pragma: no cover - defensive
            self._send_error_json(exc, 500)

    def do_POST(self):
        try:
            self._route_post()
        except (HouseSimError, ValueError) as exc:
            self._send_error_json(exc, self._status_for(exc))
        except Exception as exc:  # pragma: no cover - defensive
            self._send_error_json(exc, 500)

    def do_PUT(self):
        try:
            self._route_put()
        except (HouseSimError, ValueError) as exc:
            self._send_error_json(exc, self._status_for(exc))
        except Exception as exc:  # pragma: no cover - defensive
            self._send_error_json(exc, 500)

    @staticmethod
    def _status_for(exc: Exception) -> int:
        if isinstance(exc, (UnknownDevice, UnknownSensor, UnknownScenario)):
            return 404
        if isinstance(exc, (SchemaViolation, UnsupportedVersion, ValueError)):
            return 400
        if isinstance(exc, HouseSimError):
            return 409
        return 500

    def _route_get(self):
        parts = [p for p in self.path.split("?")[0].split("/") if p]
        if parts == ["api", "project"]:
            self._send_json(persistence.to_jsonable(self.service.document))
        elif parts == ["api", "state"]:
            self._send_json(self.service.state())
        elif len(parts) == 4 and parts[:2] == ["api", "devices"] and parts[3] == "status":
            status = self.service.engine.house.get_status(parts[2])
            self._send_json(_status_json(status))
        elif parts == ["api", "stream"]:
            self._stream()
        elif self._maybe_static(parts):
            pass
        else:
            self._send_json({"error": "NotFound", "message": self.path}, 404)

    def _route_post(self):
        parts = [p for p in self.path.split("?")[0].split("/") if p]
        if parts == ["api", "run"]:
            body = self._read_body()
            result = self.service.control(
                str(body.get("action", "")),
                body.get("t"),
                body.get("speed"),
            )
            self._send_json(result)
        elif (
            len(parts) == 5
            and parts[:2] == ["api", "devices"]
            and parts[3] == "sensors"
        ):
            body = self._read_body()
            if "value" not in body:
                raise ValueError("body needs a 'value' field")
            value = persistence.value_from_json(body["value"])
            logged = self.service.engine.set_sensor_now(parts[2], parts[4], value)
            self._send_json(event_record(logged))
        elif (
            len(parts) == 4
            and parts[:2] == ["api", "scenarios"]
            and parts[3] == "enabled"
        ):
            body = self._read_body()
            enabled = body.get("enabled")
            if not isinstance(enabled, bool):
                raise ValueError("body needs a boolean 'enabled' field")
            engine = self.service.engine
            engine.set_enabled(parts[2], enabled)
            engine.scenarios[parts[2]].enabled = enabled
            for scn in self.service.document.scenarios:
                if scn.id == parts[2]:
                    scn.enabled = enabled
            self._send_json({"scenario": parts[2], "enabled": enabled})
        else:
            self._send_json({"error": "NotFound", "message": self.path}, 404)

    def _route_put(self):
        parts = [p for p in self.path.split("?")[0].split("/") if p]
        if parts == ["api", "project"]:
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length).decode("utf-8")
            doc = persistence.parse_project(raw)
            self.service.replace_document(doc)
            self._send_json({"ok": True, "clock_ms": 0})
        else:
            self._send_json({"error": "NotFound", "message": self.path}, 404)

    # -- stream -----------------------------------------------------------------

    def _stream(self):
        q = self.service.hub.subscribe()
        try:
            self.send_response(HTTPStatus.OK)
            self.send_header("Content-Type", "application/x-ndjson")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(
                (json.dumps({"type": "hello", "clock_ms": self.service.engine.now})
                 + "\n").encode("utf-8")
            )
            self.wfile.flush()
            while True:
                try:
                    line = q.get(timeout=15.0)
                except queue.Empty:
                    line = json.dumps({"type": "ping"}) + "\n"
                self.wfile.write(line.encode("utf-8"))
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            self.service.hub.unsubscribe(q)

    # -- static UI files -----------------------------------------------------------

    def _maybe_static(self, parts: list[str]) -> bool:
        ui_dir: Optional[Path] = getattr(self.server, "ui_dir", None)
        if ui_dir is None or (parts and parts[0] == "api"):
            return False
        rel = "/".join(parts) or "index.html"
        target = (ui_dir / rel).resolve()
        if not str(target).startswith(str(ui_dir.resolve())) or not target.is_file():
            return False
        body = target.read_bytes()
        ctype = {
            ".html": "text/html; charset=utf-8",
            ".js": "text/javascript",
            ".css": "text/css",
            ".png": "image/png",
            ".svg": "image/svg+xml",
        }.get(target.suffix, "application/octet-stream")
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)
        return True


def _status_json(status) -> dict:
    return {
        "device_id": status.device_id,
        "entries": [
            {
                "sensor_id": entry.sensor_id,
                "value": (
                    None
                    if entry.value is None
                    else persistence.value_to_json(entry.value)
                ),
                "last_update_ms": entry.last_update,
            }
            for entry in status.entries
        ],
    }


class ApiServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(
        self,
        bind_address: tuple[str, int],
        service: SimulatorService,
        ui_dir: Optional[Path] = None,
    ):
        self.service = service
        self.ui_dir = ui_dir
        super().__init__(bind_address, _Handler)

    @property
    def port(self) -> int:
        return self.server_address[1]

    def start_background(self) -> threading.Thread:
        self.service.start()
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread
