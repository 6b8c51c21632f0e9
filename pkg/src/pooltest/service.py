"""HTTP/JSON service exposing adaptive sessions, scoring and optimization.

State is kept in memory behind per-session locks; the durable truth is an
append-only JSON-lines log per session (creation record plus one record
per observation or undo), replayed on startup.  Numbers cross the wire at
full float precision; display rounding belongs to clients.

Error bodies are ``{"code": ..., "message": ..., "field": ...?}`` with
400 for validation, 404 for unknown sessions, 409 for budget/undo
conflicts and 422 for enumeration-cap violations.
"""

from __future__ import annotations

import json
import threading
import uuid
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel, Field

from . import adaptive
from .model import (
    CapExceeded,
    DEFAULT_CAPS,
    EnumerationCaps,
    Prior,
    TestSpec,
    ZeroProbabilityOutcome,
    diagnose,
    entropy,
    expected_confidence,
    mask_from_string,
    mask_to_string,
    mutual_information,
    prior_to_distribution,
)
from .optimizer import ESConfig, es_run

__all__ = ["create_app"]

OPTIMIZE_BUDGET_CEILING = 100_000


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, field: str | None = None):
        self.status = status
        self.code = code
        self.message = message
        self.field = field
        super().__init__(message)

    def body(self) -> dict:
        payload = {"code": self.code, "message": self.message}
        if self.field is not None:
            payload["field"] = self.field
        return payload


class CreateSessionBody(BaseModel):
    n: int = Field(ge=1)
    m: int = Field(ge=0)
    tpr: float
    tnr: float
    priors: list[float]
    by_pool_size: dict[int, tuple[float, float]] | None = None


class ObservationBody(BaseModel):
    design: str
    result: int


class ScoreBody(BaseModel):
    n: int = Field(ge=1)
    tpr: float
    tnr: float
    priors: list[float]
    designs: list[str]
    by_pool_size: dict[int, tuple[float, float]] | None = None


class OptimizeBody(BaseModel):
    n: int = Field(ge=1)
    m: int = Field(ge=0)
    tpr: float
    tnr: float
    priors: list[float]
    objective: str = "expected_confidence"
    budget: int = Field(ge=1)
    lambda_: int = Field(default=2, alias="lambda", ge=1)
    base: int = Field(default=100, ge=1)
    seed: int = 0

    model_config = {"populate_by_name": True}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class SessionEntry:
    def __init__(self, session: adaptive.Session, created: str, path: Path):
        self.session = session
        self.created = created
        self.updated = created
        self.path = path
        self.lock = threading.Lock()


class SessionStore:
    """In-memory registry backed by one JSON-lines log file per session."""

    def __init__(self, data_dir: Path, caps: EnumerationCaps):
        self.data_dir = data_dir
        self.caps = caps
        self.entries: dict[str, SessionEntry] = {}
        self.registry_lock = threading.Lock()
        data_dir.mkdir(parents=True, exist_ok=True)
        for log in sorted(data_dir.glob("*.jsonl")):
            self._replay(log)

    def _replay(self, log: Path) -> None:
        session: adaptive.Session | None = None
        session_id = log.stem
        created = updated = _now()
        for line in log.read_text().splitlines():
            record = json.loads(line)
            event = record["event"]
            if event == "created":
                spec = TestSpec(
                    record["tpr"],
                    record["tnr"],
                    {int(k): tuple(v) for k, v in record["by_pool_size"].items()}
                    if record.get("by_pool_size")
                    else None,
                )
                session = adaptive.new_session(
                    Prior(tuple(record["priors"])), spec, record["m"], self.caps
                )
                created = updated = record["ts"]
            elif event == "observed" and session is not None:
                session = adaptive.observe(
                    session, mask_from_string(record["design"]), record["result"]
                )
                updated = record["ts"]
            elif event == "undone" and session is not None:
                session = adaptive.undo(session)
                updated = record["ts"]
        if session is not None:
            entry = SessionEntry(session, created, log)
            entry.updated = updated
            self.entries[session_id] = entry

    def _append(self, entry: SessionEntry, record: dict) -> None:
        with entry.path.open("a") as fh:
            fh.write(json.dumps(record) + "\n")

    def create(self, body: CreateSessionBody) -> tuple[str, SessionEntry]:
        spec = TestSpec(body.tpr, body.tnr, body.by_pool_size)
        prior = Prior(tuple(body.priors))
        if prior.n != body.n:
            raise ApiError(400, "validation", f"expected {body.n} priors, got {prior.n}", "priors")
        # m is the lab-test budget, not an enumeration width: only n (and
        # per-batch sizes at recommendation time) bound the exact sums.
        self.caps.check(body.n)
        session = adaptive.new_session(prior, spec, body.m, self.caps)
        session_id = uuid.uuid4().hex[:12]
        created = _now()
        entry = SessionEntry(session, created, self.data_dir / f"{session_id}.jsonl")
        record = {
            "event": "created",
            "id": session_id,
            "n": body.n,
            "m": body.m,
            "tpr": body.tpr,
            "tnr": body.tnr,
            "priors": list(body.priors),
            "by_pool_size": body.by_pool_size,
            "ts": created,
        }
        with self.registry_lock:
            self.entries[session_id] = entry
        self._append(entry, record)
        return session_id, entry

    def get(self, session_id: str) -> SessionEntry:
        entry = self.entries.get(session_id)
        if entry is None:
            raise ApiError(404, "not_found", f"no session {session_id!r}")
        return entry


def _session_resource(session_id: str, entry: SessionEntry) -> dict:
    session = entry.session
    report = diagnose(session.current)
    return {
        "id": session_id,
        "n": session.n,
        "m": session.budget,
        "tpr": session.spec.tpr,
        "tnr": session.spec.tnr,
        "by_pool_size": session.spec.by_pool_size,
        "priors": list(session.prior.probs),
        "remaining_budget": session.remaining_budget,
        "history": [
            {"design": mask_to_string(d, session.n), "result": r}
            for d, r in session.history
        ],
        "report": {
            "most_probable": mask_to_string(report.ml_secret, session.n),
            "confidence": report.confidence,
            "marginals": list(report.marginals),
            "entropy_bits": report.entropy_bits,
        },
        "created_at": entry.created,
        "updated_at": entry.updated,
    }


def create_app(
    data_dir: Path | str | None = None,
    caps: EnumerationCaps = DEFAULT_CAPS,
) -> FastAPI:
    data_dir = Path(data_dir) if data_dir is not None else Path("pooltest-sessions")
    store = SessionStore(data_dir, caps)
    app = FastAPI(title="pooltest session service", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(ApiError)
    async def api_error_handler(_request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=exc.body())

    @app.exception_handler(RequestValidationError)
    async def validation_handler(_request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        field = ".".join(str(p) for p in first.get("loc", []) if p != "body") or None
        return JSONResponse(
            status_code=400,
            content={
                "code": "validation",
                "message": first.get("msg", "invalid request"),
                **({"field": field} if field else {}),
            },
        )

    def _translate(exc: Exception) -> ApiError:
        if isinstance(exc, CapExceeded):
            return ApiError(422, "cap_exceeded", str(exc))
        if isinstance(exc, adaptive.BudgetExhausted):
            return ApiError(409, "budget_exhausted", str(exc))
        if isinstance(exc, adaptive.EmptyHistory):
            return ApiError(409, "empty_history", str(exc))
        if isinstance(exc, ZeroProbabilityOutcome):
            return ApiError(409, "zero_probability", str(exc))
        if isinstance(exc, ValueError):
            return ApiError(400, "validation", str(exc))
        raise exc

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        try:
            session_id, entry = store.create(body)
        except Exception as exc:  # noqa: BLE001 - translated to API codes
            raise _translate(exc) from exc
        return _session_resource(session_id, entry)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return _session_resource(session_id, store.get(session_id))

    @app.get("/sessions/{session_id}/recommendation")
    def get_recommendation(session_id: str, batch: int = 1):
        entry = store.get(session_id)
        with entry.lock:
            session = entry.session
            if session.remaining_budget < max(batch, 1):
                raise ApiError(
                    409,
                    "budget_exhausted",
                    f"batch {batch} exceeds remaining budget {session.remaining_budget}",
                )
            try:
                if batch <= 1:
                    rec = adaptive.greedy_next_design(session.current, session.spec)
                else:
                    rec = adaptive.k_greedy_batch(session.current, session.spec, batch, caps)
            except Exception as exc:  # noqa: BLE001
                raise _translate(exc) from exc
        return {
            "designs": [mask_to_string(d, session.n) for d in rec.designs],
            "expected_gain_bits": rec.expected_gain_bits,
            "alternatives": [
                {"design": mask_to_string(d, session.n), "expected_gain_bits": g}
                for d, g in rec.alternatives
            ],
            "exhaustive": rec.exhaustive,
        }

    @app.post("/sessions/{session_id}/observations")
    def post_observation(session_id: str, body: ObservationBody):
        entry = store.get(session_id)
        with entry.lock:
            session = entry.session
            if body.result not in (0, 1):
                raise ApiError(400, "validation", "result must be 0 or 1", "result")
            if len(body.design) != session.n:
                raise ApiError(
                    400, "validation", f"design must have length {session.n}", "design"
                )
            try:
                design = mask_from_string(body.design)
                entry.session = adaptive.observe(session, design, body.result)
            except Exception as exc:  # noqa: BLE001
                raise _translate(exc) from exc
            entry.updated = _now()
            store._append(
                entry,
                {
                    "event": "observed",
                    "design": body.design,
                    "result": body.result,
                    "ts": entry.updated,
                },
            )
        return _session_resource(session_id, entry)

    @app.delete("/sessions/{session_id}/observations/last")
    def delete_last_observation(session_id: str):
        entry = store.get(session_id)
        with entry.lock:
            try:
                entry.session = adaptive.undo(entry.session)
            except Exception as exc:  # noqa: BLE001
                raise _translate(exc) from exc
            entry.updated = _now()
            store._append(entry, {"event": "undone", "ts": entry.updated})
        return _session_resource(session_id, entry)

    @app.get("/sessions/{session_id}/log")
    def get_session_log(session_id: str):
        entry = store.get(session_id)
        return PlainTextResponse(entry.path.read_text())

    @app.post("/score")
    def post_score(body: ScoreBody):
        try:
            spec = TestSpec(body.tpr, body.tnr, body.by_pool_size)
            prior = Prior(tuple(body.priors))
            if prior.n != body.n:
                raise ApiError(
                    400, "validation", f"expected {body.n} priors, got {prior.n}", "priors"
                )
            for d in body.designs:
                if len(d) != body.n:
                    raise ApiError(
                        400, "validation", f"design {d!r} must have length {body.n}", "designs"
                    )
            designs = tuple(mask_from_string(d) for d in body.designs)
            caps.check(body.n, len(designs))
            dist = prior_to_distribution(prior, caps)
            return {
                "entropy_bits": entropy(dist),
                "mutual_information_bits": mutual_information(dist, designs, spec, caps),
                "expected_confidence": expected_confidence(dist, designs, spec, caps),
            }
        except ApiError:
            raise
        except Exception as exc:  # noqa: BLE001
            raise _translate(exc) from exc

    @app.post("/optimize")
    def post_optimize(body: OptimizeBody):
        if body.budget > OPTIMIZE_BUDGET_CEILING:
            raise ApiError(
                422,
                "cap_exceeded",
                f"budget {body.budget} exceeds server ceiling {OPTIMIZE_BUDGET_CEILING}",
                "budget",
            )
        try:
            spec = TestSpec(body.tpr, body.tnr)
            prior = Prior(tuple(body.priors))
            if prior.n != body.n:
                raise ApiError(
                    400, "validation", f"expected {body.n} priors, got {prior.n}", "priors"
                )
            caps.check(body.n, body.m)
            cfg = ESConfig(
                budget=body.budget,
                lambda_=body.lambda_,
                base=body.base,
                seed=body.seed,
                objective=body.objective,
            )
            dist = prior_to_distribution(prior, caps)
            result = es_run(dist, body.m, spec, cfg, caps)
        except ApiError:
            raise
        except Exception as exc:  # noqa: BLE001
            raise _translate(exc) from exc
        return {
            "designs": [mask_to_string(d, body.n) for d in result.best],
            "score": result.score,
            "objective": body.objective,
            "evaluations_used": result.evaluations_used,
            "restarts_performed": result.restarts_performed,
        }

    return app
