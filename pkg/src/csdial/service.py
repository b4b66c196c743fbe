"""HTTP session service for live human evaluation.

Endpoints (JSON bodies throughout):
  POST /sessions                 {"tester_id": str} -> session + goal card
  GET  /sessions/{id}            full transcript + status (refresh support)
  POST /sessions/{id}/messages   {"text": str} -> system reply
  POST /sessions/{id}/end        close the dialogue, unlock rating
  POST /sessions/{id}/rating     {"fluency","coherency","success": 1..5, "comment"?}
  GET  /report                   mean scores over all ratings

State persists as append-only JSON lines; replaying the log after a restart
reproduces sessions and aggregates exactly (generators are deterministic).
"""
from __future__ import annotations

import json
import random
import threading
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .corpus import USER_ENTITY_ID
from .errors import GeneratorError, ServiceError
from .kb import LocalKB, UserGoal
from .runtime import DialogueSession
from .schema import Schema

RATING_FIELDS = ("fluency", "coherency", "success")
DIALOGUES_TARGET = 10


@dataclass(frozen=True)
class RatingRecord:
    fluency: int
    coherency: int
    success: int
    comment: str = ""

    def __post_init__(self):
        for name in RATING_FIELDS:
            v = getattr(self, name)
            if not isinstance(v, int) or not 1 <= v <= 5:
                raise ServiceError(400, f"{name} must be an integer in [1, 5], got {v!r}")


@dataclass(frozen=True)
class SessionAsset:
    """One dialogue's grounding data offered to testers."""

    asset_id: str
    kb: LocalKB
    goal: UserGoal


def goal_card(goal: UserGoal, kb: LocalKB) -> str:
    """Natural-language briefing shown to the tester; the KB stays hidden."""
    lines = ["请扮演用户与客服对话,完成下面的目标:"]
    for t in goal.requested:
        if t.entity == USER_ENTITY_ID:
            lines.append(f"- 询问您账户的{t.attribute}")
        else:
            lines.append(f"- 询问{t.entity}的{t.attribute}")
    if not goal.requested:
        lines.append("- 自由咨询任意业务")
    lines.append("结束后请对系统打分。")
    return "\n".join(lines)


@dataclass
class EvalSession:
    id: str
    tester_id: str
    asset: SessionAsset
    runtime: DialogueSession
    turns: list[dict] = field(default_factory=list)
    ended: bool = False
    rated: bool = False


class EvalService:
    """In-process core; the HTTP layer below is a thin shell around it."""

    def __init__(self, assets: list[SessionAsset], generator_factory, schema: Schema,
                 log_dir: str | Path, seed: int = 0, debug: bool = False):
        if not assets:
            raise ServiceError(503, "no local KBs loaded")
        self.assets = assets
        self.generator_factory = generator_factory
        self.schema = schema
        self.debug = debug
        self.rng = random.Random(seed)
        self.sessions: dict[str, EvalSession] = {}
        self.ratings: list[dict] = []
        self.lock = threading.RLock()
        self.log_path = Path(log_dir) / "events.jsonl"
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        if self.log_path.exists():
            self._replay()

    # -- persistence ------------------------------------------------------------

    def _append(self, event: dict) -> None:
        with self.log_path.open("a", encoding="utf-8") as f:
            f.write(json.dumps(event, ensure_ascii=False) + "\n")

    def _replay(self) -> None:
        for line in self.log_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            ev = json.loads(line)
            kind = ev["type"]
            if kind == "session_created":
                self._create(ev["tester_id"], ev["asset_id"], ev["session_id"], log=False)
            elif kind == "message":
                self._message(ev["session_id"], ev["text"], log=False)
            elif kind == "ended":
                self._end(ev["session_id"], log=False)
            elif kind == "rating":
                self._rate(ev["session_id"],
                           RatingRecord(ev["fluency"], ev["coherency"], ev["success"],
                                        ev.get("comment", "")),
                           log=False)

    # -- session operations -------------------------------------------------------

    def _asset(self, asset_id: str) -> SessionAsset:
        for a in self.assets:
            if a.asset_id == asset_id:
                return a
        raise ServiceError(500, f"asset {asset_id!r} missing from deployment")

    def _create(self, tester_id: str, asset_id: str | None = None,
                session_id: str | None = None, log: bool = True) -> EvalSession:
        asset = self._asset(asset_id) if asset_id else self.rng.choice(self.assets)
        sid = session_id or uuid.uuid4().hex[:12]
        session = EvalSession(
            id=sid,
            tester_id=tester_id,
            asset=asset,
            runtime=DialogueSession(asset.kb, self.generator_factory(), self.schema),
        )
        self.sessions[sid] = session
        if log:
            self._append({"type": "session_created", "session_id": sid,
                          "tester_id": tester_id, "asset_id": asset.asset_id})
        return session

    def _session(self, sid: str) -> EvalSession:
        s = self.sessions.get(sid)
        if s is None:
            raise ServiceError(404, f"unknown session {sid!r}")
        return s

    def _message(self, sid: str, text: str, log: bool = True) -> dict:
        s = self._session(sid)
        if s.ended:
            raise ServiceError(409, "dialogue already ended")
        if not isinstance(text, str) or not text.strip():
            raise ServiceError(400, "text must be a non-empty string")
        try:
            rec = s.runtime.step(text)
        except GeneratorError as e:
            raise ServiceError(500, f"generator failed at stage {e.stage}") from e
        turn = {"index": len(s.turns), "user": text, "system": rec.response}
        if self.debug:
            turn["debug"] = {
                "predicted_entity": rec.predicted_entity,
                "user_intent": rec.user_intent.name,
                "kb_status": rec.kb_result.status,
            }
        s.turns.append(turn)
        if log:
            self._append({"type": "message", "session_id": sid, "text": text})
        return turn

    def _end(self, sid: str, log: bool = True) -> dict:
        s = self._session(sid)
        s.ended = True
        if log:
            self._append({"type": "ended", "session_id": sid})
        return {"session_id": sid, "ended": True}

    def _rate(self, sid: str, rating: RatingRecord, log: bool = True) -> dict:
        s = self._session(sid)
        if not s.ended:
            raise ServiceError(409, "end the dialogue before rating")
        if s.rated:
            raise ServiceError(409, "session already rated")
        s.rated = True
        row = {"session_id": sid, "tester_id": s.tester_id,
               "fluency": rating.fluency, "coherency": rating.coherency,
               "success": rating.success, "comment": rating.comment}
        self.ratings.append(row)
        if log:
            self._append({"type": "rating", **row})
        return self._report()

    def _report(self) -> dict:
        n = len(self.ratings)
        means = {
            name: (sum(r[name] for r in self.ratings) / n if n else None)
            for name in RATING_FIELDS
        }
        return {"count": n, **means}

    def _progress(self, tester_id: str) -> dict:
        done = sum(1 for r in self.ratings if r["tester_id"] == tester_id)
        return {"rated": done, "target": DIALOGUES_TARGET}

    def _session_view(self, s: EvalSession) -> dict:
        return {
            "session_id": s.id,
            "tester_id": s.tester_id,
            "goal_card": goal_card(s.asset.goal, s.asset.kb),
            "turns": s.turns,
            "ended": s.ended,
            "rated": s.rated,
            "progress": self._progress(s.tester_id),
        }

    # -- public API (thread safe) ---------------------------------------------------

    def create_session(self, tester_id: str) -> dict:
        if not tester_id or not isinstance(tester_id, str):
            raise ServiceError(400, "tester_id required")
        with self.lock:
            return self._session_view(self._create(tester_id))

    def get_session(self, sid: str) -> dict:
        with self.lock:
            return self._session_view(self._session(sid))

    def post_message(self, sid: str, text: str) -> dict:
        with self.lock:
            return self._message(sid, text)

    def end_session(self, sid: str) -> dict:
        with self.lock:
            return self._end(sid)

    def submit_rating(self, sid: str, payload: dict) -> dict:
        try:
            rating = RatingRecord(
                payload.get("fluency"), payload.get("coherency"), payload.get("success"),
                payload.get("comment", ""),
            )
        except ServiceError:
            raise
        except Exception as e:  # noqa: BLE001
            raise ServiceError(400, f"bad rating payload: {e}") from e
        with self.lock:
            return self._rate(sid, rating)

    def report(self) -> dict:
        with self.lock:
            return self._report()


# ---------------------------------------------------------------------------
# HTTP shell

class _Handler(BaseHTTPRequestHandler):
    service: EvalService  # assigned by make_server
    ui_dir: Path | None = None

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        try:
            return json.loads(self.rfile.read(length).decode("utf-8"))
        except json.JSONDecodeError as e:
            raise ServiceError(400, f"malformed JSON body: {e.msg}") from e

    def _route(self, method: str) -> None:
        parts = [p for p in self.path.split("?")[0].split("/") if p]
        try:
            if method == "OPTIONS":
                self._send(204, {})
                return
            if self.ui_dir is not None and method == "GET" and (not parts or parts[0] == "ui"):
                self._static(parts[1:] if parts else [])
                return
            svc = self.service
            if method == "POST" and parts == ["sessions"]:
                self._send(201, svc.create_session(self._body().get("tester_id", "")))
            elif method == "GET" and len(parts) == 2 and parts[0] == "sessions":
                self._send(200, svc.get_session(parts[1]))
            elif method == "POST" and len(parts) == 3 and parts[0] == "sessions" and parts[2] == "messages":
                self._send(200, svc.post_message(parts[1], self._body().get("text", "")))
            elif method == "POST" and len(parts) == 3 and parts[0] == "sessions" and parts[2] == "end":
                self._send(200, svc.end_session(parts[1]))
            elif method == "POST" and len(parts) == 3 and parts[0] == "sessions" and parts[2] == "rating":
                self._send(200, svc.submit_rating(parts[1], self._body()))
            elif method == "GET" and parts == ["report"]:
                self._send(200, svc.report())
            else:
                self._send(404, {"error": f"no route for {method} {self.path}"})
        except ServiceError as e:
            self._send(e.status, {"error": str(e)})
        except Exception as e:  # noqa: BLE001 - last-resort 500
            self._send(500, {"error": str(e)})

    def _static(self, parts: list[str]) -> None:
        name = "/".join(parts) or "index.html"
        target = (self.ui_dir / name).resolve()
        if not str(target).startswith(str(self.ui_dir.resolve())) or not target.is_file():
            self._send(404, {"error": "not found"})
            return
        content = target.read_bytes()
        ctype = {
            ".html": "text/html; charset=utf-8",
            ".js": "text/javascript; charset=utf-8",
            ".css": "text/css; charset=utf-8",
        }.get(target.suffix, "application/octet-stream")
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(content)))
        self.end_headers()
        self.wfile.write(content)

    def do_GET(self):  # noqa: N802
        self._route("GET")

    def do_POST(self):  # noqa: N802
        self._route("POST")

    def do_OPTIONS(self):  # noqa: N802
        self._route("OPTIONS")


def make_server(service: EvalService, host: str = "127.0.0.1", port: int = 0,
                ui_dir: str | Path | None = None) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {
        "service": service,
        "ui_dir": Path(ui_dir) if ui_dir else None,
    })
    return ThreadingHTTPServer((host, port), handler)
