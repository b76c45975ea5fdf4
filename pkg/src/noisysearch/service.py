"""HTTP facade exposing live search sessions to a human responder.

The server runs the searcher side of the protocol: it keeps the posterior,
proposes queries, and updates on each answer the human sends.  The human
never reveals the target; sending ``{"found": true}`` is their claim that a
shown point was it, which closes the session.

JSON conventions: indices and responses are 1-based on the wire, numbers are
plain doubles, errors are ``{"error": message}``.  Sessions live in memory
with TTL eviction; requests for the same session are serialized, different
sessions proceed in parallel.
"""

from __future__ import annotations

import math
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from .feedback import Dataset, Posterior, ProtocolError, entropy, posterior_update
from .harness import DatasetSpec, ModelSpec
from .strategies import Query, StrategyError, StrategyKind, select_query

DEFAULT_TTL_SECONDS = 3600.0
TOP_MASS_CAP = 256
BUCKET_CAP = 128


class ServiceError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


@dataclass
class Session:
    id: str
    dataset_spec: DatasetSpec
    dataset: Dataset
    model_spec: ModelSpec
    strategy: StrategyKind
    k: int
    posterior: Posterior
    query: Query | None
    round: int
    status: str  # active | found | exhausted
    max_rounds: int
    history: list[dict] = field(default_factory=list)
    last_access: float = field(default_factory=time.monotonic)
    lock: threading.Lock = field(default_factory=threading.Lock)
    rng: np.random.Generator = field(default_factory=np.random.default_rng)


class SessionStore:
    """Concurrent in-memory session map with lazy TTL eviction."""

    def __init__(self, ttl: float = DEFAULT_TTL_SECONDS):
        self.ttl = ttl
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def _evict(self) -> None:
        now = time.monotonic()
        dead = [sid for sid, s in self._sessions.items() if now - s.last_access > self.ttl]
        for sid in dead:
            del self._sessions[sid]

    def put(self, session: Session) -> None:
        with self._lock:
            self._evict()
            self._sessions[session.id] = session

    def get(self, sid: str) -> Session:
        with self._lock:
            self._evict()
            session = self._sessions.get(sid)
            if session is None:
                raise ServiceError(404, f"unknown session {sid}")
            session.last_access = time.monotonic()
            return session

    def delete(self, sid: str) -> None:
        with self._lock:
            if sid not in self._sessions:
                raise ServiceError(404, f"unknown session {sid}")
            del self._sessions[sid]

    def __len__(self) -> int:
        with self._lock:
            return len(self._sessions)


def _posterior_summary(posterior: Posterior) -> dict:
    a = posterior.mass
    n = a.shape[0]
    top_n = min(TOP_MASS_CAP, n)
    order = np.argsort(-a, kind="stable")[:top_n]
    order = order[a[order] > 0.0]
    buckets = min(BUCKET_CAP, n)
    edges = np.linspace(0, n, buckets + 1).astype(int)
    bucket_mass = [float(a[edges[b] : edges[b + 1]].sum()) for b in range(buckets)]
    return {
        "entropy": entropy(posterior),
        "top": [{"index": int(i) + 1, "mass": float(a[i])} for i in order],
        "bucket_mass": bucket_mass,
        "bucket_count": buckets,
    }


def _query_payload(data: Dataset, query: Query | None) -> dict | None:
    if query is None:
        return None
    positions: list[Any] = []
    for i in query.indices:
        p = data.points[i]
        positions.append([float(v) for v in p] if data.dimension > 1 else float(p))
    return {"indices": [i + 1 for i in query.indices], "positions": positions}


def _points_payload(data: Dataset) -> list:
    if data.dimension == 1:
        return [float(p) for p in data.points]
    return [[float(v) for v in p] for p in data.points]


def _session_payload(session: Session, *, with_history: bool = False) -> dict:
    payload = {
        "id": session.id,
        "status": session.status,
        "round": session.round,
        "n": session.dataset.n,
        "k": session.k,
        "strategy": session.strategy.value,
        "family": session.model_spec.family,
        "theta": session.model_spec.theta,
        "query": _query_payload(session.dataset, session.query),
        "posterior": _posterior_summary(session.posterior),
        "points": _points_payload(session.dataset),
    }
    if with_history:
        payload["history"] = list(session.history)
    return payload


def _parse_dataset_spec(raw: dict | None) -> DatasetSpec:
    raw = dict(raw or {"kind": "uniform-grid", "n": 64})
    raw.setdefault("kind", "uniform-grid")
    try:
        spec = DatasetSpec.from_dict(raw)
        dataset = spec.build()
    except (TypeError, ValueError) as exc:
        raise ServiceError(400, f"invalid dataset spec: {exc}") from exc
    if dataset.n > 100_000:
        raise ServiceError(400, "dataset too large for an interactive session")
    return spec


def _advance_query(session: Session) -> None:
    """Compute the next query, flipping to exhausted on strategy failure."""
    try:
        query, _ = select_query(
            session.strategy,
            session.dataset,
            session.posterior,
            k=session.k,
            model=session.model_spec.to_model(),
            rng=session.rng,
        )
        session.query = query
    except StrategyError as exc:
        session.query = None
        session.status = "exhausted"
        session.history.append({"round": session.round, "error": str(exc)})


def create_app(
    *,
    ttl: float = DEFAULT_TTL_SECONDS,
    frontend_dir: str | None = None,
) -> FastAPI:
    app = FastAPI(title="noisysearch session service")
    store = SessionStore(ttl=ttl)
    app.state.store = store

    @app.exception_handler(ServiceError)
    async def _service_error(_req: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status, content={"error": exc.message})

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_req: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors())})

    @app.post("/sessions", status_code=201)
    def create_session(body: dict) -> dict:
        if not isinstance(body, dict):
            raise ServiceError(400, "request body must be a JSON object")
        spec = _parse_dataset_spec(body.get("dataset"))
        try:
            strategy = StrategyKind.coerce(body.get("strategy", "binary-quantile"))
            k = int(body.get("k", 2))
            model_spec = ModelSpec(
                family=str(body.get("family", "polynomial")),
                theta=float(body.get("theta", 1.0)),
            )
            model_spec.to_model()
        except (ValueError, TypeError) as exc:
            raise ServiceError(400, f"invalid session config: {exc}") from exc
        if k < 2:
            raise ServiceError(400, "k must be at least 2")
        dataset = spec.build()
        session = Session(
            id=uuid.uuid4().hex,
            dataset_spec=spec,
            dataset=dataset,
            model_spec=model_spec,
            strategy=strategy,
            k=k,
            posterior=Posterior.uniform(dataset.n),
            query=None,
            round=1,
            status="active",
            max_rounds=50 * max(1, math.ceil(math.log2(max(dataset.n, 2)))),
            rng=np.random.default_rng(int(uuid.uuid4().int % 2**63)),
        )
        with session.lock:
            try:
                _advance_query(session)
            except Exception as exc:  # invalid config surfaced by the strategy
                raise ServiceError(400, f"cannot start session: {exc}") from exc
            if session.query is None:
                raise ServiceError(400, "strategy cannot produce a first query")
            store.put(session)
            return _session_payload(session)

    @app.get("/sessions/{sid}")
    def get_session(sid: str) -> dict:
        session = store.get(sid)
        with session.lock:
            return _session_payload(session, with_history=True)

    @app.post("/sessions/{sid}/answer")
    def answer(sid: str, body: dict) -> dict:
        session = store.get(sid)
        with session.lock:
            if session.status != "active":
                raise ServiceError(409, f"session is {session.status}")
            claimed_round = body.get("round")
            if claimed_round is not None and int(claimed_round) != session.round:
                raise ServiceError(
                    409,
                    f"round {claimed_round} already answered; current round is {session.round}",
                )
            if body.get("found"):
                session.status = "found"
                session.history.append(
                    {
                        "round": session.round,
                        "query": [i + 1 for i in session.query.indices],
                        "response": "found",
                    }
                )
                return _session_payload(session)
            if "response" not in body:
                raise ServiceError(400, "answer needs a response index or found=true")
            try:
                response = int(body["response"])
            except (TypeError, ValueError) as exc:
                raise ServiceError(400, f"response must be an integer: {exc}") from exc
            if not 1 <= response <= session.k:
                raise ServiceError(400, f"response must be in [1, {session.k}]")
            query = session.query
            try:
                session.posterior = posterior_update(
                    session.posterior,
                    session.dataset,
                    session.model_spec.to_model(),
                    query,
                    response - 1,
                )
            except ProtocolError as exc:
                session.status = "exhausted"
                session.history.append({"round": session.round, "error": str(exc)})
                return _session_payload(session)
            session.history.append(
                {
                    "round": session.round,
                    "query": [i + 1 for i in query.indices],
                    "response": response,
                }
            )
            session.round += 1
            if session.round > session.max_rounds:
                session.status = "exhausted"
                session.query = None
            else:
                _advance_query(session)
            return _session_payload(session)

    @app.delete("/sessions/{sid}", status_code=204)
    def delete_session(sid: str) -> Response:
        store.delete(sid)
        return Response(status_code=204)

    if frontend_dir:
        root = Path(frontend_dir)
        if root.is_dir():
            app.mount("/", StaticFiles(directory=str(root), html=True), name="ui")
    return app
