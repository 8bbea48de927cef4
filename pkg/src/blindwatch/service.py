"""HTTP face of the remote station.

Sessions are created by POSTing an EncodedConfig; each session then
accepts lifted step requests in strict k order and returns lifted alarms.
The service holds only composed matrices and lifted vectors, exactly like
the TCP station; there is nothing here worth stealing.

Endpoints:
    GET    /health
    POST   /v1/sessions                {"config": {...}} -> 201 {"session_id"}
    GET    /v1/sessions/{sid}          session info
    POST   /v1/sessions/{sid}/steps    {"k", "u_enc", "y_enc"} -> {"k", "a_enc"}
    DELETE /v1/sessions/{sid}          -> 204

Errors: 404 unknown session, 409 step-counter mismatch, 422 malformed
config or dimension mismatch.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import Response
from pydantic import BaseModel, Field

from .encoded import EncodedConfig, config_from_json
from .errors import DimensionMismatch
from .remote import TargetState, target_init, target_step


class SessionCreate(BaseModel):
    config: dict


class SessionInfo(BaseModel):
    session_id: str
    k_next: int
    dim_u: int
    dim_y: int
    dim_a: int


class StepRequest(BaseModel):
    k: int = Field(ge=1)
    u_enc: list[float]
    y_enc: list[float]


class StepResponse(BaseModel):
    k: int
    a_enc: list[float]


@dataclass
class _Session:
    config: EncodedConfig
    state: TargetState
    k_next: int
    lock: threading.Lock


def create_app() -> FastAPI:
    app = FastAPI(title="blindwatch station", version="0.1.0")
    sessions: dict[str, _Session] = {}
    registry_lock = threading.Lock()

    def get_session(sid: str) -> _Session:
        with registry_lock:
            session = sessions.get(sid)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {sid}")
        return session

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/v1/sessions", status_code=201)
    def create_session(req: SessionCreate) -> SessionInfo:
        try:
            config = config_from_json(req.config)
        except (DimensionMismatch, KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"bad config: {exc}")
        sid = uuid.uuid4().hex
        with registry_lock:
            sessions[sid] = _Session(
                config=config, state=target_init(config), k_next=1, lock=threading.Lock()
            )
        return SessionInfo(
            session_id=sid, k_next=1, dim_u=config.dim_u, dim_y=config.dim_y, dim_a=config.dim_a
        )

    @app.get("/v1/sessions/{sid}")
    def session_info(sid: str) -> SessionInfo:
        session = get_session(sid)
        with session.lock:
            return SessionInfo(
                session_id=sid,
                k_next=session.k_next,
                dim_u=session.config.dim_u,
                dim_y=session.config.dim_y,
                dim_a=session.config.dim_a,
            )

    @app.post("/v1/sessions/{sid}/steps")
    def step(sid: str, req: StepRequest) -> StepResponse:
        session = get_session(sid)
        with session.lock:
            if req.k != session.k_next:
                raise HTTPException(
                    status_code=409,
                    detail=f"expected k={session.k_next}, got {req.k}",
                )
            util = np.asarray(req.u_enc, dtype=float)
            ytil = np.asarray(req.y_enc, dtype=float)
            if util.shape != (session.config.dim_u,) or ytil.shape != (session.config.dim_y,):
                raise HTTPException(
                    status_code=422,
                    detail=(
                        f"expected dims ({session.config.dim_u}, {session.config.dim_y}), "
                        f"got ({util.size}, {ytil.size})"
                    ),
                )
            diag = target_step(session.config, session.state, util, ytil)
            session.k_next += 1
            return StepResponse(k=req.k, a_enc=[float(v) for v in diag.atil])

    @app.delete("/v1/sessions/{sid}", status_code=204)
    def close_session(sid: str):
        with registry_lock:
            if sessions.pop(sid, None) is None:
                raise HTTPException(status_code=404, detail=f"unknown session {sid}")
        return Response(status_code=204)

    return app


app = create_app()


def serve_http(host: str = "127.0.0.1", port: int = 7734):
    """Run the HTTP station until interrupted."""
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="warning")
