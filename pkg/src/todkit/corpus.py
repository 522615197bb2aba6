"""Dialogues, belief states, state changes, and dialogue acts.

The corpus file is UTF-8 JSON Lines, one dialogue per line:

    {"dialogue_id": "d1", "turns": [{"index": 0, "user": "...", "system": "..."}]}

Utterances are stored verbatim (fully lexicalized). All types here are
immutable values and freely shareable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .schema import Schema, SlotValueError, canon_name, lookup_slot

# Value reserved by the update rule: deltas only insert or overwrite slots,
# so an explicit delete marker is rejected rather than silently stored.
DELETE_MARKER = "[DELETE]"

# Act types and their prompt descriptions. Acts in ARG_FREE_ACTS never carry
# arguments; Request carries slot names with the literal value "?".
ACT_DESCRIPTIONS: dict[str, str] = {
    "Inform": "Provide information.",
    "Offer": "System provides an offer or suggestion based on results.",
    "Confirm": "Seek confirmation of something.",
    "Affirm": "Express agreement or confirmation.",
    "Negate": "User or System denies or negates.",
    "NotifySuccess": "Notify of a successful action or result.",
    "NotifyFailure": "Notify of an error or failure.",
    "Acknowledge": "Acknowledge.",
    "Goodbye": "Goodbye.",
    "Greeting": "Greeting.",
    "ThankYou": "ThankYou.",
    "RequestAlternatives": "Ask for other options, alternatives, or any additional user goals.",
    "Request": "Ask for specific information or action.",
}
ACT_TYPES = tuple(ACT_DESCRIPTIONS)
ARG_FREE_ACTS = frozenset(
    {"Acknowledge", "Goodbye", "Greeting", "ThankYou", "RequestAlternatives"}
)
_ACT_BY_CANON = {name.lower(): name for name in ACT_TYPES}


def canon_act_type(name: str) -> Optional[str]:
    """Map a possibly-miscased act name to its canonical form, or None."""
    return _ACT_BY_CANON.get(name.strip().lower())


class CorpusError(ValueError):
    """Malformed corpus file; message names the dialogue and turn."""


@dataclass(frozen=True)
class Turn:
    index: int
    user_utterance: str
    system_response: str


@dataclass(frozen=True)
class Dialogue:
    dialogue_id: str
    turns: tuple[Turn, ...]


@dataclass(frozen=True)
class BeliefState:
    """Accumulated (service, slot) -> value map of inferred API-call arguments."""

    entries: tuple[tuple[tuple[str, str], str], ...] = ()

    @staticmethod
    def from_dict(entries: dict[tuple[str, str], str]) -> "BeliefState":
        return BeliefState(tuple(sorted(entries.items())))

    def as_dict(self) -> dict[tuple[str, str], str]:
        return dict(self.entries)

    def as_flat_dict(self) -> dict[str, str]:
        """Keys rendered as "service-slot", sorted; used in prompts and files."""
        return {f"{svc}-{slot}": value for (svc, slot), value in self.entries}

    def __bool__(self) -> bool:
        return bool(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


EMPTY_STATE = BeliefState()


@dataclass(frozen=True)
class StateChange:
    """Per-turn delta extracted from one inferred API call."""

    intent: str = ""
    updates: tuple[tuple[tuple[str, str], str], ...] = ()

    @staticmethod
    def make(intent: str, updates: dict[tuple[str, str], str]) -> "StateChange":
        return StateChange(intent=intent, updates=tuple(sorted(updates.items())))

    def updates_dict(self) -> dict[tuple[str, str], str]:
        return dict(self.updates)

    def slot_keys(self) -> frozenset[tuple[str, str]]:
        return frozenset(key for key, _ in self.updates)

    def is_empty(self) -> bool:
        return not self.intent and not self.updates


EMPTY_CHANGE = StateChange()


def apply_state_change(prev: BeliefState, delta: StateChange) -> BeliefState:
    """b_t = delta + b_{t-1}: insert or overwrite every updated slot."""
    merged = prev.as_dict()
    merged.update(delta.updates_dict())
    return BeliefState.from_dict(merged)


@dataclass(frozen=True, order=True)
class DialogueAct:
    """One communicative act, optionally parameterized by schema slots."""

    act_type: str
    args: tuple[tuple[tuple[str, str], str], ...] = ()

    @staticmethod
    def make(act_type: str, args: dict[tuple[str, str], str] | None = None) -> "DialogueAct":
        return DialogueAct(act_type, tuple(sorted((args or {}).items())))

    def args_dict(self) -> dict[tuple[str, str], str]:
        return dict(self.args)


@dataclass(frozen=True)
class ActSet:
    """Deduplicated, canonically ordered set of dialogue acts."""

    acts: tuple[DialogueAct, ...] = ()

    @staticmethod
    def of(acts: Iterable[DialogueAct]) -> "ActSet":
        return ActSet(tuple(sorted(set(acts))))

    def slot_pairs(self) -> frozenset[tuple[str, str, str]]:
        """(act_type, service, slot) triples; arg-free acts contribute one
        triple with empty service/slot. Used for label distinctness."""
        pairs = set()
        for act in self.acts:
            if not act.args:
                pairs.add((act.act_type, "", ""))
            for (svc, slot), _ in act.args:
                pairs.add((act.act_type, svc, slot))
        return frozenset(pairs)

    def __bool__(self) -> bool:
        return bool(self.acts)

    def __len__(self) -> int:
        return len(self.acts)


EMPTY_ACTS = ActSet()


def normalize_acts(raw: ActSet, schema: Schema) -> tuple[ActSet, list[str]]:
    """Normalize a predicted act set against the schema and act inventory.

    Drops unknown act types, drops args whose slot is not declared, strips all
    args from argument-free acts, and coerces Request values to "?". Returns
    the normalized set plus a report of everything dropped. Total: never
    raises, and normalize(normalize(x)) == normalize(x).
    """
    kept: list[DialogueAct] = []
    dropped: list[str] = []
    for act in raw.acts:
        act_type = canon_act_type(act.act_type)
        if act_type is None:
            dropped.append(f"unknown act type {act.act_type!r}")
            continue
        if act_type in ARG_FREE_ACTS:
            if act.args:
                dropped.append(f"{act_type}: stripped args {sorted(act.args_dict())}")
            kept.append(DialogueAct.make(act_type))
            continue
        args: dict[tuple[str, str], str] = {}
        for (svc, slot), value in act.args:
            svc_c, slot_c = canon_name(svc), canon_name(slot)
            if lookup_slot(schema, svc_c, slot_c) is None:
                dropped.append(f"{act_type}: unknown slot {svc}-{slot}")
                continue
            if act_type == "Request" and value != "?":
                dropped.append(f"Request: value {value!r} for {svc}-{slot} coerced to ?")
                value = "?"
            args[(svc_c, slot_c)] = value
        kept.append(DialogueAct.make(act_type, args))
    return ActSet.of(kept), dropped


def validate_belief_state(state: BeliefState, schema: Schema) -> BeliefState:
    """Re-validate every entry of a deserialized state; raises on violations."""
    checked: dict[tuple[str, str], str] = {}
    for (svc, slot), value in state.entries:
        decl = lookup_slot(schema, svc, slot)
        if decl is None:
            raise SlotValueError(f"{svc}-{slot}", value, "slot not in schema")
        checked[(canon_name(svc), canon_name(slot))] = decl.validate_value(value)
    return BeliefState.from_dict(checked)


def parse_flat_state(flat: dict[str, str], schema: Schema) -> BeliefState:
    """Parse a {"service-slot": value} map back to a BeliefState."""
    entries: dict[tuple[str, str], str] = {}
    for key, value in flat.items():
        resolved = resolve_slot_key(key, schema, separators="-_")
        if resolved is None:
            raise SlotValueError(key, value, "cannot resolve slot key")
        entries[resolved] = value
    return BeliefState.from_dict(entries)


def resolve_slot_key(
    key: str, schema: Schema, separators: str = "_-"
) -> Optional[tuple[str, str]]:
    """Resolve a flat "service<sep>slot" key to canonical (service, slot).

    Tries every split position for each separator so service names containing
    the separator still resolve; returns None when nothing matches.
    """
    key = canon_name(key)
    for sep in separators:
        pos = key.find(sep)
        while pos != -1:
            svc, slot = key[:pos], key[pos + 1 :]
            if lookup_slot(schema, svc, slot) is not None:
                return canon_name(svc), canon_name(slot)
            pos = key.find(sep, pos + 1)
    return None


def resolve_bare_slot(name: str, schema: Schema) -> Optional[tuple[str, str]]:
    """Resolve an unprefixed slot name when it is unique across services."""
    name = canon_name(name)
    hits = [
        (svc, slot)
        for svc, slot in schema.slot_keys()
        if slot == name
    ]
    if len(hits) == 1:
        return hits[0]
    return None


def load_corpus(path: str | Path, schema: Schema) -> list[Dialogue]:
    """Load and validate a JSON Lines corpus file."""
    dialogues = []
    seen_ids = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{line_no}: not valid JSON: {exc}") from exc
            dialogues.append(_dialogue_from_dict(doc, line_no))
            did = dialogues[-1].dialogue_id
            if did in seen_ids:
                raise CorpusError(f"{path}:{line_no}: duplicate dialogue_id {did!r}")
            seen_ids.add(did)
    return dialogues


def _dialogue_from_dict(doc: dict, line_no: int) -> Dialogue:
    did = doc.get("dialogue_id")
    if not did:
        raise CorpusError(f"line {line_no}: missing dialogue_id")
    turns = []
    turn_docs = doc.get("turns", [])
    for i, tdoc in enumerate(turn_docs):
        index = tdoc.get("index")
        if index != i:
            raise CorpusError(
                f"dialogue {did!r}: turn indices not contiguous from 0 "
                f"(expected {i}, got {index})"
            )
        user = tdoc.get("user", "")
        system = tdoc.get("system", "")
        if not user:
            raise CorpusError(f"dialogue {did!r} turn {i}: empty user utterance")
        if not system and i != len(turn_docs) - 1:
            raise CorpusError(
                f"dialogue {did!r} turn {i}: empty system response on non-final turn"
            )
        turns.append(Turn(index=i, user_utterance=user, system_response=system))
    return Dialogue(dialogue_id=str(did), turns=tuple(turns))


def belief_to_json(state: BeliefState) -> dict[str, str]:
    return state.as_flat_dict()


def belief_from_json(doc: dict[str, str], schema: Schema) -> BeliefState:
    return parse_flat_state(doc, schema)


def state_change_to_json(delta: StateChange) -> dict:
    return {
        "intent": delta.intent,
        "updates": {f"{svc}-{slot}": value for (svc, slot), value in delta.updates},
    }


def state_change_from_json(doc: dict, schema: Schema) -> StateChange:
    updates: dict[tuple[str, str], str] = {}
    for key, value in doc.get("updates", {}).items():
        resolved = resolve_slot_key(key, schema, separators="-_")
        if resolved is None:
            raise SlotValueError(key, value, "cannot resolve slot key")
        updates[resolved] = value
    return StateChange.make(doc.get("intent", ""), updates)


def act_set_to_json(acts: ActSet) -> list[dict]:
    return [
        {
            "act": act.act_type,
            "args": {f"{svc}_{slot}" if svc else slot: v for (svc, slot), v in act.args},
        }
        for act in acts.acts
    ]


def act_set_from_json(docs: list[dict], schema: Schema) -> ActSet:
    acts = []
    for doc in docs:
        args: dict[tuple[str, str], str] = {}
        for key, value in doc.get("args", {}).items():
            resolved = resolve_slot_key(key, schema, separators="_-")
            args[resolved if resolved else ("", canon_name(key))] = value
        acts.append(DialogueAct.make(doc.get("act", ""), args))
    return ActSet.of(acts)


def dialogue_to_dict(d: Dialogue) -> dict:
    return {
        "dialogue_id": d.dialogue_id,
        "turns": [
            {"index": t.index, "user": t.user_utterance, "system": t.system_response}
            for t in d.turns
        ],
    }


def save_corpus(path: str | Path, dialogues: Iterable[Dialogue]):
    with open(path, "w", encoding="utf-8") as fh:
        for d in dialogues:
            fh.write(json.dumps(dialogue_to_dict(d), ensure_ascii=False) + "\n")
