"""HTTP+JSON serving API for the dialogue agent.

Endpoints:
    POST /sessions                    -> {"session_id": str}
    POST /sessions/{id}/turns         {"utterance": str} -> AgentTurn JSON
    GET  /sessions/{id}               -> {"session_id", "turns": [AgentTurn...]}

When a static directory is configured, the chat UI is served at /ui.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .agent import DialogueAgent, SessionStore
from .lm import LMError


class TurnRequest(BaseModel):
    utterance: str


def create_app(agent: DialogueAgent, static_dir: Optional[str | Path] = None) -> FastAPI:
    app = FastAPI(title="todkit agent")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    store = SessionStore(agent)
    app.state.store = store

    @app.post("/sessions")
    def create_session():
        session = store.create()
        return {"session_id": session.session_id}

    @app.post("/sessions/{session_id}/turns")
    def respond(session_id: str, req: TurnRequest):
        if not req.utterance.strip():
            raise HTTPException(status_code=422, detail="utterance must be non-empty")
        try:
            turn = store.respond(session_id, req.utterance)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no session {session_id}")
        except LMError as exc:
            raise HTTPException(status_code=502, detail=f"model endpoint failure: {exc}")
        return turn.to_json()

    @app.get("/sessions/{session_id}")
    def transcript(session_id: str):
        session = store.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id}")
        return {
            "session_id": session.session_id,
            "turns": [t.to_json() for t in session.turn_log],
        }

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
