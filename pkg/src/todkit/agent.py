"""Online end-to-end agent: noisy-channel state tracking, greedy policy,
greedy response generation, database query, and lexicalization.

State tracking shares the decode path used during offline labeling (compact
prompts), so serving-time and labeling-time predictions agree given the same
inputs and model. Each responded turn either commits fully or leaves the
session unchanged.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .corpus import (
    ActSet,
    BeliefState,
    EMPTY_STATE,
    StateChange,
    act_set_to_json,
    apply_state_change,
    belief_to_json,
    state_change_to_json,
)
from .decoding import DecodeConfig, ScoringMode, decode_dst
from .delex import lexicalize, placeholder_name
from .fuzzy import values_match
from .lm import GREEDY, LMClient, SamplingConfig
from .parsing import parse_act_set
from .prompts import build_policy_prompt, build_response_prompt
from .schema import Schema, canon_name, lookup_slot

FUZZY_THRESHOLD = 0.95


class DbError(ValueError):
    pass


@dataclass
class DbBackend:
    """Entity tables per domain: each entity is an attribute map whose keys
    are schema slot names."""

    tables: dict[str, list[dict[str, str]]] = field(default_factory=dict)

    @staticmethod
    def from_file(path: str | Path) -> "DbBackend":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        tables = {
            canon_name(domain): [
                {canon_name(k): str(v) for k, v in entity.items()} for entity in rows
            ]
            for domain, rows in doc.items()
        }
        return DbBackend(tables=tables)

    def domains(self) -> list[str]:
        return sorted(self.tables)


def query_db(
    db: DbBackend, belief: BeliefState, domain: str, schema: Optional[Schema] = None
) -> list[dict[str, str]]:
    """Entities of a domain matching every belief constraint for that domain.

    Categorical slots match exactly (case-insensitive); free-text slots match
    fuzzily at the 0.95 threshold.
    """
    domain = canon_name(domain)
    if domain not in db.tables:
        raise DbError(f"unknown domain {domain!r}")
    constraints = {
        slot: value for (svc, slot), value in belief.entries if svc == domain
    }
    out = []
    for entity in db.tables[domain]:
        ok = True
        for slot, want in constraints.items():
            have = entity.get(slot)
            if have is None:
                ok = False
                break
            decl = lookup_slot(schema, domain, slot) if schema is not None else None
            if decl is not None and decl.is_categorical:
                if have.strip().lower() != want.strip().lower():
                    ok = False
                    break
            elif not values_match(have, want, FUZZY_THRESHOLD):
                ok = False
                break
        if ok:
            out.append(entity)
    return out


@dataclass
class AgentTurn:
    user_utterance: str
    delta: StateChange
    belief: BeliefState
    acts: ActSet
    delex_response: str
    final_response: str
    db_hits: dict[str, int] = field(default_factory=dict)
    unbound: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "user_utterance": self.user_utterance,
            "state_change": state_change_to_json(self.delta),
            "belief_state": belief_to_json(self.belief),
            "acts": act_set_to_json(self.acts),
            "delex_response": self.delex_response,
            "final_response": self.final_response,
            "db_hits": dict(sorted(self.db_hits.items())),
            "unbound_placeholders": list(self.unbound),
        }


@dataclass
class Session:
    session_id: str
    history: list[str] = field(default_factory=list)  # alternating u, r
    belief: BeliefState = EMPTY_STATE
    turn_log: list[AgentTurn] = field(default_factory=list)


@dataclass
class AgentConfig:
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    mode: ScoringMode = ScoringMode.JOINT
    greedy: bool = False
    concurrency: int = 1
    max_response_tokens: int = 128


class DialogueAgent:
    """Stateless pipeline over (schema, lm, db); sessions carry the state."""

    def __init__(self, schema: Schema, lm: LMClient, db: DbBackend, cfg: AgentConfig):
        self.schema = schema
        self.lm = lm
        self.db = db
        self.cfg = cfg

    def new_session(self) -> Session:
        return Session(session_id=uuid.uuid4().hex)

    def respond(self, session: Session, u_t: str) -> AgentTurn:
        """Run one turn; the session is updated only after full success."""
        r_prev = session.history[-1] if session.history else ""
        dst = decode_dst(
            self.schema,
            [],
            session.belief,
            r_prev,
            u_t,
            self.lm,
            DecodeConfig(
                sampling=self.cfg.sampling,
                mode=self.cfg.mode,
                greedy=self.cfg.greedy,
                compact=True,
                concurrency=self.cfg.concurrency,
            ),
        )
        delta: StateChange = dst.best.value
        belief = apply_state_change(session.belief, delta)

        history = session.history + [u_t]
        policy_prompt = build_policy_prompt(history)
        act_completion = self.lm.sample(
            policy_prompt.text(), replace(GREEDY, stop_sequences=policy_prompt.stop)
        )[0]
        acts = parse_act_set(act_completion.text, self.schema).value

        response_prompt = build_response_prompt(r_prev, u_t, acts)
        response_completion = self.lm.sample(
            response_prompt.text(),
            replace(
                GREEDY,
                stop_sequences=response_prompt.stop,
                max_tokens=self.cfg.max_response_tokens,
            ),
        )[0]
        delex_response = response_completion.text

        db_hits: dict[str, int] = {}
        bindings: dict[str, str] = {}
        active = sorted({svc for (svc, _), _ in belief.entries})
        for domain in active:
            if domain not in self.db.tables:
                continue
            matches = query_db(self.db, belief, domain, self.schema)
            db_hits[domain] = len(matches)
            if matches:
                entity = matches[0]  # first match supplies lexicalization values
                for slot, value in entity.items():
                    bindings.setdefault(placeholder_name(domain, slot), value)
        for (svc, slot), value in belief.entries:
            bindings.setdefault(placeholder_name(svc, slot), value)

        lex = lexicalize(delex_response, bindings)
        turn = AgentTurn(
            user_utterance=u_t,
            delta=delta,
            belief=belief,
            acts=acts,
            delex_response=delex_response,
            final_response=lex.text,
            db_hits=db_hits,
            unbound=lex.unbound,
        )
        # commit atomically
        session.belief = belief
        session.history.extend([u_t, lex.text])
        session.turn_log.append(turn)
        return turn


class SessionStore:
    """Concurrent sessions are independent; requests within one session are
    serialized by a per-session lock."""

    def __init__(self, agent: DialogueAgent):
        self.agent = agent
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def create(self) -> Session:
        session = self.agent.new_session()
        with self._registry_lock:
            self._sessions[session.session_id] = session
            self._locks[session.session_id] = threading.Lock()
        return session

    def get(self, session_id: str) -> Optional[Session]:
        with self._registry_lock:
            return self._sessions.get(session_id)

    def respond(self, session_id: str, utterance: str) -> AgentTurn:
        session = self.get(session_id)
        if session is None:
            raise KeyError(session_id)
        with self._locks[session_id]:
            return self.agent.respond(session, utterance)

    def snapshot(self, path: str | Path):
        with self._registry_lock:
            doc = {
                sid: [t.to_json() for t in s.turn_log] for sid, s in self._sessions.items()
            }
        Path(path).write_text(json.dumps(doc, indent=2, ensure_ascii=False), encoding="utf-8")
