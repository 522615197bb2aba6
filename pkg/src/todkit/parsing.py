"""Tolerant parsing of function-call-shaped model completions, plus the
inverse canonical rendering.

Model output is frequently malformed, so parsing is best effort over a
restricted call grammar (identifiers, keyword arguments, string/number/"?"
literals) and never raises: total failure yields an empty value with the
failed flag set, and every dropped fragment is reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

from .corpus import (
    ActSet,
    ARG_FREE_ACTS,
    DELETE_MARKER,
    DialogueAct,
    EMPTY_ACTS,
    EMPTY_CHANGE,
    StateChange,
    canon_act_type,
    normalize_acts,
    resolve_bare_slot,
    resolve_slot_key,
)
from .schema import Schema, SlotValueError, canon_name, lookup_slot

# Function name reserved for the canonical rendering of an empty state change.
NO_CHANGE_CALL = "no_change"

_IDENT_START = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_IDENT_CHARS = _IDENT_START | set("0123456789-")


@dataclass
class ParseResult:
    """Outcome of a best-effort parse: a value, a failure flag, and reports."""

    value: Any
    failed: bool = False
    dropped: list[str] = field(default_factory=list)


@dataclass
class _Call:
    name: str
    inner: str
    start: int
    end: int


def _find_calls(text: str) -> list[_Call]:
    """All identifier(...) sites in order, with quote- and nesting-aware spans."""
    calls = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch not in _IDENT_START:
            i += 1
            continue
        j = i
        while j < n and text[j] in _IDENT_CHARS:
            j += 1
        k = j
        while k < n and text[k] in " \t":
            k += 1
        if k < n and text[k] == "(":
            inner, end = _scan_balanced(text, k + 1)
            calls.append(_Call(name=text[i:j], inner=inner, start=i, end=end))
            i = j  # allow nested calls inside this one to be found too
        else:
            i = j
    return calls


def _scan_balanced(text: str, start: int) -> tuple[str, int]:
    """Scan from just after an opening paren to its match (or end of text)."""
    depth = 1
    i, n = start, len(text)
    while i < n:
        ch = text[i]
        if ch in "'\"":
            i = _skip_string(text, i)
            continue
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                return text[start:i], i + 1
        i += 1
    return text[start:n], n


def _skip_string(text: str, start: int) -> int:
    quote = text[start]
    i = start + 1
    n = len(text)
    while i < n:
        if text[i] == "\\":
            i += 2
            continue
        if text[i] == quote:
            return i + 1
        i += 1
    return n


_UNESCAPE = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "'": "'", "\\": "\\"}


def unescape(raw: str) -> str:
    out = []
    i, n = 0, len(raw)
    while i < n:
        ch = raw[i]
        if ch == "\\" and i + 1 < n:
            out.append(_UNESCAPE.get(raw[i + 1], raw[i + 1]))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def escape(value: str) -> str:
    return (
        value.replace("\\", "\\\\")
        .replace('"', '\\"')
        .replace("\n", "\\n")
        .replace("\t", "\\t")
        .replace("\r", "\\r")
    )


def _parse_kwargs(inner: str) -> tuple[list[tuple[str, str]], list[str]]:
    """Parse "k=v, ..." pairs; returns (pairs, reports of skipped fragments)."""
    pairs: list[tuple[str, str]] = []
    dropped: list[str] = []
    i, n = 0, len(inner)
    while i < n:
        while i < n and inner[i] in " \t\n\r,":
            i += 1
        if i >= n:
            break
        if inner[i] not in _IDENT_START:
            i, frag = _skip_fragment(inner, i)
            dropped.append(f"unparseable fragment {frag!r}")
            continue
        j = i
        while j < n and inner[j] in _IDENT_CHARS:
            j += 1
        key = inner[i:j]
        k = j
        while k < n and inner[k] in " \t":
            k += 1
        if k >= n or inner[k] != "=":
            i, frag = _skip_fragment(inner, i)
            dropped.append(f"positional or bare fragment {frag!r}")
            continue
        k += 1
        while k < n and inner[k] in " \t":
            k += 1
        value, i, ok = _parse_value(inner, k)
        if not ok:
            dropped.append(f"kwarg {key!r}: unparseable value")
            continue
        pairs.append((key, value))
    return pairs, dropped


def _skip_fragment(inner: str, i: int) -> tuple[int, str]:
    start = i
    n = len(inner)
    while i < n and inner[i] != ",":
        if inner[i] in "'\"":
            i = _skip_string(inner, i)
        elif inner[i] == "(":
            _, i = _scan_balanced(inner, i + 1)
        else:
            i += 1
    return i, inner[start:i].strip()


def _parse_value(inner: str, i: int) -> tuple[str, int, bool]:
    """Parse one kwarg value starting at i; returns (text, next_index, ok)."""
    n = len(inner)
    if i >= n:
        return "", i, False
    ch = inner[i]
    if ch in "'\"":
        end = _skip_string(inner, i)
        body = inner[i + 1 : end - 1] if end > i and inner[end - 1 : end] == ch else inner[i + 1 : end]
        return unescape(body), end, True
    # bare token up to a top-level comma; nested calls are not values
    start = i
    while i < n and inner[i] != ",":
        if inner[i] in "'\"":
            i = _skip_string(inner, i)
        elif inner[i] == "(":
            _, i = _scan_balanced(inner, i + 1)
            return "", i, False
        else:
            i += 1
    token = inner[start:i].strip()
    if not token:
        return "", i, False
    return token, i, True


def parse_state_change(text: str, schema: Schema) -> ParseResult:
    """Extract a state change from one function call in arbitrary model output.

    The first call whose name matches a schema intent wins (the one-call-per-
    turn convention); with no recognizable intent the first syntactic call is
    tried with prefixed keys only. Slot values are validated against the
    schema and dropped on rejection.
    """
    try:
        return _parse_state_change(text, schema)
    except Exception as exc:  # totality guard: parsers never raise
        return ParseResult(EMPTY_CHANGE, failed=True, dropped=[f"parser error: {exc}"])


def _parse_state_change(text: str, schema: Schema) -> ParseResult:
    calls = _find_calls(text)
    if not calls:
        return ParseResult(EMPTY_CHANGE, failed=True, dropped=["no function call found"])

    picked: Optional[_Call] = None
    resolved = None
    for call in calls:
        if canon_name(call.name) == NO_CHANGE_CALL:
            picked = call
            break
        pair = schema.intent(call.name)
        if pair is not None:
            picked, resolved = call, pair
            break
    dropped: list[str] = []
    if picked is None:
        picked = calls[0]
        dropped.append(f"unknown function {picked.name!r}")

    intent_name = ""
    service_name = ""
    if resolved is not None:
        service, intent = resolved
        intent_name = canon_name(intent.name)
        service_name = canon_name(service.name)

    pairs, kw_dropped = _parse_kwargs(picked.inner)
    dropped.extend(kw_dropped)
    updates: dict[tuple[str, str], str] = {}
    for key, value in pairs:
        slot_key = None
        if service_name and lookup_slot(schema, service_name, key) is not None:
            slot_key = (service_name, canon_name(key))
        if slot_key is None:
            slot_key = resolve_slot_key(key, schema) or resolve_bare_slot(key, schema)
        if slot_key is None:
            dropped.append(f"kwarg {key!r}: cannot resolve slot")
            continue
        if value == DELETE_MARKER:
            dropped.append(f"kwarg {key!r}: reserved value {DELETE_MARKER} rejected")
            continue
        decl = lookup_slot(schema, *slot_key)
        try:
            updates[slot_key] = decl.validate_value(value)
        except SlotValueError as exc:
            dropped.append(str(exc))
    return ParseResult(StateChange.make(intent_name, updates), failed=False, dropped=dropped)


def parse_act_set(text: str, schema: Schema) -> ParseResult:
    """Parse a list of act constructors; the result is always normalized."""
    try:
        return _parse_act_set(text, schema)
    except Exception as exc:  # totality guard
        return ParseResult(EMPTY_ACTS, failed=True, dropped=[f"parser error: {exc}"])


def _parse_act_set(text: str, schema: Schema) -> ParseResult:
    stripped = text.strip()
    if stripped.strip("[] \n\t,") == "" and "[" in stripped:
        return ParseResult(EMPTY_ACTS, failed=False, dropped=[])

    acts: list[DialogueAct] = []
    dropped: list[str] = []
    calls = _find_calls(text)
    call_spans = [(c.start, c.end) for c in calls]
    for call in calls:
        act_type = canon_act_type(call.name)
        if act_type is None:
            dropped.append(f"unknown act {call.name!r}")
            continue
        pairs, kw_dropped = _parse_kwargs(call.inner)
        dropped.extend(f"{act_type}: {d}" for d in kw_dropped)
        args: dict[tuple[str, str], str] = {}
        for key, value in pairs:
            slot_key = resolve_slot_key(key, schema) or resolve_bare_slot(key, schema)
            if slot_key is None:
                # keep the raw key; normalize_acts drops it with a report
                slot_key = ("", canon_name(key))
            args[slot_key] = value
        acts.append(DialogueAct.make(act_type, args))

    # tolerate bare argument-free act names ("Goodbye" with no parens)
    for word in _bare_words(text, call_spans):
        act_type = canon_act_type(word)
        if act_type in ARG_FREE_ACTS:
            acts.append(DialogueAct.make(act_type))

    if not acts:
        return ParseResult(EMPTY_ACTS, failed=True, dropped=dropped or ["no act found"])
    normalized, norm_dropped = normalize_acts(ActSet.of(acts), schema)
    return ParseResult(normalized, failed=False, dropped=dropped + norm_dropped)


def _bare_words(text: str, call_spans: list[tuple[int, int]]) -> list[str]:
    """Identifiers lying outside every call span."""
    words = []
    i, n = 0, len(text)
    while i < n:
        if text[i] not in _IDENT_START:
            i += 1
            continue
        j = i
        while j < n and text[j] in _IDENT_CHARS:
            j += 1
        inside = any(start <= i < end for start, end in call_spans)
        if not inside:
            words.append(text[i:j])
        i = j
    return words


def _render_slot_key(slot_key: tuple[str, str], service_name: str) -> str:
    svc, slot = slot_key
    if svc and svc == service_name:
        return slot
    return f"{svc}_{slot}" if svc else slot


def render_state_change(delta: StateChange, schema: Schema) -> str:
    """Canonical text: one call, sorted keys, double-quoted values."""
    fn = delta.intent if delta.intent else NO_CHANGE_CALL
    resolved = schema.intent(fn)
    service_name = canon_name(resolved[0].name) if resolved else ""
    rendered = sorted(
        (_render_slot_key(key, service_name), escape(value))
        for key, value in delta.updates
    )
    body = ", ".join(f'{k}="{v}"' for k, v in rendered)
    return f"{fn}({body})"


def render_act(act: DialogueAct) -> str:
    rendered = sorted(
        (f"{svc}_{slot}" if svc else slot, escape(value))
        for (svc, slot), value in act.args
    )
    body = ", ".join(f'{k}="{v}"' for k, v in rendered)
    return f"{act.act_type}({body})"


def render_act_set(acts: ActSet) -> str:
    return "[" + ", ".join(render_act(a) for a in acts.acts) + "]"
