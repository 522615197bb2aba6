"""Rule-based delexicalization of system responses using inferred acts, and
re-lexicalization at serving time.

Every act argument value found in the response is replaced with a
"[service_slot]" placeholder. Longer values are matched first so "acorn guest
house" is not clobbered by a shorter value, matching is case-insensitive, and
values that fail exact matching get one fuzzy pass over same-length token
windows at the 0.95 similarity threshold used elsewhere.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .corpus import ActSet
from .fuzzy import similarity
from .schema import Schema

FUZZY_THRESHOLD = 0.95


@dataclass(frozen=True)
class Substitution:
    placeholder: str  # "service_slot"
    value: str  # surface text as found in the response
    span: tuple[int, int]


@dataclass
class DelexResult:
    text: str
    substitutions: list[Substitution] = field(default_factory=list)
    unmatched: list[tuple[str, str]] = field(default_factory=list)  # (placeholder, value)


def placeholder_name(service: str, slot: str) -> str:
    return f"{service}_{slot}" if service else slot


def _act_values(acts: ActSet) -> list[tuple[str, str]]:
    """(placeholder, value) pairs worth substituting, longest value first."""
    pairs = {}
    for act in acts.acts:
        for (svc, slot), value in act.args:
            if value == "?" or not value.strip():
                continue
            pairs.setdefault((placeholder_name(svc, slot), value.strip()), None)
    ordered = sorted(pairs, key=lambda pv: (-len(pv[1]), pv[0], pv[1]))
    return ordered


def _find_exact_all(lowered: str, value: str, taken: list[tuple[int, int]]):
    """All case-insensitive occurrences not overlapping a taken span."""
    needle = value.lower()
    spans = []
    start = 0
    while True:
        idx = lowered.find(needle, start)
        if idx == -1:
            return spans
        span = (idx, idx + len(needle))
        blocked = taken + spans
        if not any(a < span[1] and span[0] < b for a, b in blocked):
            spans.append(span)
        start = idx + 1


def _find_fuzzy(text: str, value: str, taken: list[tuple[int, int]], threshold: float):
    """Best token window within one word of the value's length, if it clears
    the similarity threshold. Ties go to the leftmost window."""
    words = [(m.start(), m.end()) for m in re.finditer(r"\S+", text)]
    target_len = len(value.split())
    if target_len == 0 or not words:
        return None
    best = None
    best_score = threshold
    widths = [target_len] + [w for w in (target_len - 1, target_len + 1) if w >= 1]
    for width in widths:
        for i in range(0, len(words) - width + 1):
            span = (words[i][0], words[i + width - 1][1])
            if any(a < span[1] and span[0] < b for a, b in taken):
                continue
            score = similarity(text[span[0] : span[1]].lower(), value.lower())
            if score > best_score or (score == best_score and best is None):
                best, best_score = span, score
    return best


def delexicalize(response: str, acts: ActSet, schema: Schema) -> DelexResult:
    """Replace act argument values in the response with slot placeholders.

    Substitution spans never overlap; the original text is recoverable from
    the output segments plus the recorded surface values. Values that match
    nowhere are reported, never guessed.
    """
    lowered = response.lower()
    taken: list[tuple[int, int]] = []
    subs: list[Substitution] = []
    unmatched: list[tuple[str, str]] = []
    for placeholder, value in _act_values(acts):
        spans = _find_exact_all(lowered, value, taken)
        if not spans:
            fuzzy = _find_fuzzy(response, value, taken, FUZZY_THRESHOLD)
            spans = [fuzzy] if fuzzy is not None else []
        if not spans:
            unmatched.append((placeholder, value))
            continue
        for span in spans:
            taken.append(span)
            subs.append(
                Substitution(
                    placeholder=placeholder,
                    value=response[span[0] : span[1]],
                    span=span,
                )
            )
    subs.sort(key=lambda s: s.span)
    out = []
    cursor = 0
    for sub in subs:
        out.append(response[cursor : sub.span[0]])
        out.append(f"[{sub.placeholder}]")
        cursor = sub.span[1]
    out.append(response[cursor:])
    return DelexResult(text="".join(out), substitutions=subs, unmatched=unmatched)


_PLACEHOLDER_RE = re.compile(r"\[([a-z0-9_]+)\]")


@dataclass
class LexResult:
    text: str
    unbound: list[str] = field(default_factory=list)


def lexicalize(delex_text: str, bindings: dict[str, str]) -> LexResult:
    """Fill placeholders from bindings; unbound placeholders stay verbatim."""
    unbound: list[str] = []

    def fill(match: re.Match) -> str:
        name = match.group(1)
        if name in bindings:
            return bindings[name]
        unbound.append(name)
        return match.group(0)

    return LexResult(text=_PLACEHOLDER_RE.sub(fill, delex_text), unbound=unbound)
