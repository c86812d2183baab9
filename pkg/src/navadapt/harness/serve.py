"""HTTP service around one interactive run.

One adaptation loop runs in a worker thread and blocks inside the feedback
channel whenever it wants a human label; HTTP handlers answer from the browser
or a script. The channel is the only object shared between the two sides, so
handlers never touch policy state. Static files (the console bundle) are
served from an optional directory; the JSON API lives under /api/.
"""

from __future__ import annotations

import json
import mimetypes
import os
import threading
import traceback
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .. import SCHEMA_VERSION
from ..envgraph import world_to_dict
from ..metrics import aggregate
from ..oracles import (
    DuplicateResponseError,
    FeedbackChannel,
    InteractiveOracle,
    UnknownEpisodeError,
)
from .config import ConfigError, ExperimentConfig
from .run import run, shifted_suite


class RunController:
    """Owns the run thread, its feedback channel, and the episode log tail."""

    def __init__(self, config: ExperimentConfig, seed: int, run_dir: str | None = None):
        config.validate()
        if config.oracle != "interactive":
            raise ConfigError("serve requires oracle=interactive")
        self.config = config
        self.seed = seed
        self.run_dir = run_dir
        self.channel = FeedbackChannel()
        self.oracle = InteractiveOracle(
            self.channel, timeout_s=config.feedback_timeout_s, threshold=config.delta
        )
        self._lock = threading.Lock()
        self._records: list[dict] = []
        self._suite = shifted_suite(config, seed)
        self.result = None
        self.error: str | None = None
        self._started = False
        self._done = False
        self._thread = threading.Thread(target=self._work, name="navadapt-run", daemon=True)

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        self._thread.start()

    def join(self, timeout_s: float | None = None) -> None:
        self._thread.join(timeout_s)

    def _work(self) -> None:
        try:
            self.result = run(
                self.config,
                self.seed,
                run_dir=self.run_dir,
                oracle=self.oracle,
                on_episode=self._on_episode,
            )
        except Exception:  # surfaced via /api/run/status, not a crashed thread
            self.error = traceback.format_exc()
        finally:
            self._done = True

    def _on_episode(self, record: dict) -> None:
        with self._lock:
            self._records.append(record)

    def _records_snapshot(self) -> list[dict]:
        with self._lock:
            return list(self._records)

    def current_world_index(self) -> int:
        done = len(self._records_snapshot())
        current = min(done, self.config.n_episodes - 1)
        return current // self.config.episodes_per_world

    def status(self) -> dict:
        records = self._records_snapshot()
        metrics = aggregate(records).to_dict() if records else None
        return {
            "schema_version": SCHEMA_VERSION,
            "running": self._started and not self._done,
            "done": self._done,
            "error": self.error,
            "seed": self.seed,
            "method": self.config.method,
            "total_episodes": self.config.n_episodes,
            "completed_episodes": len(records),
            "current_world": self.current_world_index(),
            "config": self.config.to_dict(),
            "metrics": metrics,
        }

    def history(self, n: int) -> dict:
        records = self._records_snapshot()
        return {
            "schema_version": SCHEMA_VERSION,
            "total_episodes": self.config.n_episodes,
            "episodes": records[-n:] if n > 0 else [],
        }

    def world_payload(self, index: int | None = None) -> dict:
        if index is None:
            index = self.current_world_index()
        if not 0 <= index < len(self._suite):
            raise IndexError(f"world index {index} out of range")
        world, _ = self._suite[index]
        return {
            "schema_version": SCHEMA_VERSION,
            "world_index": index,
            "world": world_to_dict(world),
        }


class AppServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, controller: RunController, static_dir: str | None = None):
        self.controller = controller
        self.static_dir = static_dir
        super().__init__(address, _Handler)


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: AppServer

    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        pass

    def _send_json(self, code: int, payload: dict) -> None:
        body = json.dumps(payload, sort_keys=True).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Cache-Control", "no-store")
        self.end_headers()
        self.wfile.write(body)

    def _send_no_content(self) -> None:
        self.send_response(204)
        self.send_header("Content-Length", "0")
        self.end_headers()

    def _query_int(self, query: dict, name: str) -> int | None:
        if name not in query:
            return None
        return int(query[name][0])

    def do_GET(self) -> None:
        url = urlparse(self.path)
        query = parse_qs(url.query)
        controller = self.server.controller
        if url.path == "/api/run/status":
            self._send_json(200, controller.status())
        elif url.path == "/api/feedback/pending":
            pending = controller.channel.pending()
            if pending is None:
                self._send_no_content()
            else:
                self._send_json(200, pending.to_dict())
        elif url.path == "/api/history":
            try:
                n = self._query_int(query, "n")
            except ValueError:
                self._send_json(400, {"error": "n must be an integer"})
                return
            self._send_json(200, controller.history(50 if n is None else n))
        elif url.path == "/api/world":
            try:
                index = self._query_int(query, "index")
            except ValueError:
                self._send_json(400, {"error": "index must be an integer"})
                return
            try:
                self._send_json(200, controller.world_payload(index))
            except IndexError as exc:
                self._send_json(404, {"error": str(exc)})
        elif url.path.startswith("/api/"):
            self._send_json(404, {"error": f"unknown endpoint {url.path}"})
        else:
            self._serve_static(url.path)

    def do_POST(self) -> None:
        url = urlparse(self.path)
        if url.path != "/api/feedback":
            self._send_json(404, {"error": f"unknown endpoint {url.path}"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            length = -1
        if length <= 0 or length > 1_000_000:
            self._send_json(400, {"error": "missing or oversized request body"})
            return
        raw = self.rfile.read(length)
        try:
            data = json.loads(raw)
        except ValueError:
            self._send_json(400, {"error": "body is not valid JSON"})
            return
        if not isinstance(data, dict):
            self._send_json(400, {"error": "body must be a JSON object"})
            return
        episode_id = data.get("episode_id")
        success = data.get("success")
        responder = data.get("responder", "human")
        if isinstance(episode_id, bool) or not isinstance(episode_id, int):
            self._send_json(400, {"error": "episode_id must be an integer"})
            return
        if not isinstance(success, bool):
            self._send_json(400, {"error": "success must be a boolean"})
            return
        if not isinstance(responder, str):
            self._send_json(400, {"error": "responder must be a string"})
            return
        try:
            self.server.controller.channel.respond(episode_id, success, responder)
        except UnknownEpisodeError as exc:
            self._send_json(404, {"error": str(exc)})
            return
        except DuplicateResponseError as exc:
            self._send_json(409, {"error": str(exc)})
            return
        self._send_json(200, {"ok": True, "episode_id": episode_id})

    def _serve_static(self, path: str) -> None:
        root = self.server.static_dir
        if root is None:
            self._send_json(404, {"error": "no static assets configured"})
            return
        rel = path.lstrip("/") or "index.html"
        base = os.path.realpath(root)
        full = os.path.realpath(os.path.join(base, rel))
        if not full.startswith(base + os.sep) or not os.path.isfile(full):
            self._send_json(404, {"error": "not found"})
            return
        ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
        with open(full, "rb") as fh:
            body = fh.read()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


def make_server(
    config: ExperimentConfig,
    seed: int,
    host: str = "127.0.0.1",
    port: int = 0,
    run_dir: str | None = None,
    static_dir: str | None = None,
) -> AppServer:
    """Bind the service without starting the run; port 0 picks a free port."""
    controller = RunController(config, seed, run_dir=run_dir)
    return AppServer((host, port), controller, static_dir=static_dir)


def serve(
    config: ExperimentConfig,
    seed: int,
    host: str = "127.0.0.1",
    port: int = 8000,
    run_dir: str | None = None,
    static_dir: str | None = None,
) -> None:
    """Start the run loop and block serving HTTP until interrupted."""
    server = make_server(config, seed, host=host, port=port, run_dir=run_dir, static_dir=static_dir)
    server.controller.start()
    try:
        server.serve_forever()
    finally:
        server.server_close()
