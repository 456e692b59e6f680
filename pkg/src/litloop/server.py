"""HTTP JSON API for the review loop.

Read endpoints expose session state and report artifacts; the two write
endpoints are review decisions and refinement requests. Refinements run on
a background thread (one at a time per session); the console polls
GET /sessions/{id} until the new iteration completes. Static console assets
are served under /ui when a build directory is configured.

    GET  /sessions
    GET  /sessions/{id}
    GET  /sessions/{id}/flagged
    POST /sessions/{id}/decisions
    POST /sessions/{id}/refine
    GET  /sessions/{id}/report/{iter}
    GET  /sessions/{id}/report/{iter}/figures/{name}
    GET  /sessions/{id}/documents/{doc_id}/excerpt?point=...
"""

from __future__ import annotations

import json
import logging
import mimetypes
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .consensus import ConsensusPolicy
from .session import ConflictError, Session, SessionError

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class SessionRegistry:
    """One Session object per id, so decisions serialize through its lock."""

    def __init__(self, data_dir=None):
        self.data_dir = data_dir
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()
        self._refining: set[str] = set()

    def get(self, session_id: str) -> Session:
        with self._lock:
            if session_id not in self._sessions:
                self._sessions[session_id] = Session.load(session_id, self.data_dir)
            return self._sessions[session_id]

    def listing(self) -> list[dict]:
        return Session.list_sessions(self.data_dir)

    def start_refinement(self, session_id: str, body: dict) -> dict:
        session = self.get(session_id)
        with self._lock:
            if session_id in self._refining:
                raise ConflictError("a refinement is already running")
            self._refining.add(session_id)
        try:
            policy = None
            if body.get("policy"):
                policy = ConsensusPolicy.from_dict(body["policy"])
            result = session.refine(
                new_query=body.get("query") or None,
                new_policy=policy,
                run=False,
            )
        except BaseException:
            with self._lock:
                self._refining.discard(session_id)
            raise

        def execute():
            try:
                session.run_iteration()
            except Exception as exc:
                log.warning("refinement run failed: %s", exc)
            finally:
                with self._lock:
                    self._refining.discard(session_id)

        threading.Thread(target=execute, daemon=True).start()
        return {"index": result["index"], "status": "running"}


def _session_payload(session: Session) -> dict:
    iterations = []
    for index in session.iteration_indices():
        meta = session.iteration_meta(index)
        iterations.append({
            "index": index,
            "status": meta["status"],
            "started_at": meta.get("started_at"),
            "finished_at": meta.get("finished_at"),
            "query": meta["config"]["query"],
            "policy": meta["config"]["policy"],
            "has_report": (session.iteration_dir(index) / "report" / "report.json").exists(),
        })
    return {
        "session_id": session.session_id,
        "query": session.config.query.text,
        "mode": session.config.mode,
        "policy": session.config.policy.to_dict(),
        "variables": [
            {
                "name": v.name,
                "role": v.role,
                "required": v.required,
                "unit": v.canonical_unit,
                "precision": v.precision,
            }
            for v in session.config.definition.variables
        ],
        "iterations": iterations,
    }


def make_handler(registry: SessionRegistry, ui_dir: Path | None):

    class Handler(BaseHTTPRequestHandler):
        server_version = "litloop"

        # -- plumbing ------------------------------------------------------

        def log_message(self, format, *args):
            log.debug("http: " + format, *args)

        def _send(self, status: int, payload, content_type="application/json"):
            if isinstance(payload, (dict, list)):
                if isinstance(payload, dict):
                    payload = {"schema_version": SCHEMA_VERSION, **payload}
                body = json.dumps(payload, sort_keys=True).encode("utf-8")
            elif isinstance(payload, str):
                body = payload.encode("utf-8")
            else:
                body = payload
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _error(self, status: int, message: str):
            self._send(status, {"error": message})

        def _body(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            if not length:
                return {}
            return json.loads(self.rfile.read(length).decode("utf-8"))

        # -- routing -------------------------------------------------------

        def do_GET(self):
            try:
                self._route_get()
            except (SessionError, FileNotFoundError) as exc:
                self._error(404, str(exc))
            except Exception as exc:  # pragma: no cover - defensive
                log.exception("GET failed")
                self._error(500, str(exc))

        def do_POST(self):
            try:
                self._route_post()
            except ConflictError as exc:
                self._error(409, str(exc))
            except (SessionError, ValueError) as exc:
                self._error(400, str(exc))
            except Exception as exc:  # pragma: no cover - defensive
                log.exception("POST failed")
                self._error(500, str(exc))

        def _route_get(self):
            url = urlparse(self.path)
            parts = [p for p in url.path.split("/") if p]

            if not parts or parts[0] == "ui":
                return self._serve_ui(parts[1:] if parts else [])
            if parts[0] != "sessions":
                return self._error(404, "unknown route")
            if len(parts) == 1:
                return self._send(200, {"sessions": registry.listing()})

            session = registry.get(parts[1])
            if len(parts) == 2:
                return self._send(200, _session_payload(session))
            if parts[2] == "flagged" and len(parts) == 3:
                return self._send(200, {"flagged": session.list_flagged()})
            if parts[2] == "report":
                return self._serve_report(session, parts[3:])
            if parts[2] == "documents" and len(parts) == 5 and parts[4] == "excerpt":
                point_id = parse_qs(url.query).get("point", [""])[0]
                return self._send(200, session.excerpt_for(parts[3], point_id))
            return self._error(404, "unknown route")

        def _serve_report(self, session: Session, rest: list[str]):
            if not rest:
                return self._error(404, "missing iteration")
            index = int(rest[0])
            report_dir = session.iteration_dir(index) / "report"
            if len(rest) == 1:
                path = report_dir / "report.json"
                if not path.exists():
                    return self._error(404, f"no report for iteration {index}")
                report = json.loads(path.read_text(encoding="utf-8"))
                return self._send(200, report)
            if len(rest) == 3 and rest[1] == "figures":
                name = Path(rest[2]).name  # no traversal
                path = report_dir / "figures" / name
                if not path.exists():
                    return self._error(404, f"no figure {name}")
                return self._send(200, path.read_bytes(), "image/svg+xml")
            return self._error(404, "unknown report path")

        def _serve_ui(self, rest: list[str]):
            if ui_dir is None:
                return self._error(404, "console assets not configured")
            name = "/".join(rest) or "index.html"
            path = (ui_dir / name).resolve()
            if not str(path).startswith(str(ui_dir.resolve())) or not path.is_file():
                return self._error(404, "not found")
            content_type = mimetypes.guess_type(str(path))[0] or "application/octet-stream"
            return self._send(200, path.read_bytes(), content_type)

        def _route_post(self):
            parts = [p for p in urlparse(self.path).path.split("/") if p]
            if len(parts) == 3 and parts[0] == "sessions" and parts[2] == "decisions":
                session = registry.get(parts[1])
                body = self._body()
                decision = session.decide(
                    point_id=body["point_id"],
                    action=body["action"],
                    values=body.get("values"),
                    inspector=body.get("inspector", "console"),
                    note=body.get("note", ""),
                )
                return self._send(200, {"decision": decision})
            if len(parts) == 3 and parts[0] == "sessions" and parts[2] == "refine":
                result = registry.start_refinement(parts[1], self._body())
                return self._send(202, result)
            return self._error(404, "unknown route")

    return Handler


def serve(port: int, data_dir=None, ui_dir: str | None = None,
          ready: threading.Event | None = None):
    registry = SessionRegistry(data_dir)
    handler = make_handler(registry, Path(ui_dir) if ui_dir else None)
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    log.info("serving on http://127.0.0.1:%d", port)
    print(f"litloop API on http://127.0.0.1:{port}", flush=True)
    if ready is not None:
        ready.set()
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


def start_background(port: int, data_dir=None, ui_dir: str | None = None):
    """Start the server on a daemon thread; returns once it accepts requests
    (used by tests)."""
    registry = SessionRegistry(data_dir)
    handler = make_handler(registry, Path(ui_dir) if ui_dir else None)
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server
