"""Corpus-level metrics: joint goal accuracy with fuzzy value matching,
Inform and Success rates, BLEU, and the combined score
0.5 * (Inform + Success) + BLEU.

BLEU is corpus-level 4-gram with brevity penalty against a single reference,
computed on whitespace tokens of lowercased text with raw (unsmoothed)
precisions; any empty clipped count zeroes the score. The choice is flagged in
the report header.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .corpus import BeliefState, act_set_from_json, belief_from_json, resolve_slot_key
from .fuzzy import similarity, values_match
from .schema import Schema, lookup_slot

FUZZY_THRESHOLD = 0.95
BLEU_NOTE = "BLEU: corpus 4-gram, single reference, raw precisions (no smoothing)"


def _value_matches(
    svc: str, slot: str, pred: str, gold: str, threshold: float, schema: Optional[Schema]
) -> bool:
    pred_l, gold_l = pred.strip().lower(), gold.strip().lower()
    if pred_l == gold_l:
        return True
    if schema is not None:
        decl = lookup_slot(schema, svc, slot)
        if decl is not None and decl.is_categorical:
            return False  # categorical values must match exactly
    return similarity(pred_l, gold_l) >= threshold


def jga(
    predictions: Sequence[BeliefState],
    golds: Sequence[BeliefState],
    fuzz_threshold: float = FUZZY_THRESHOLD,
    schema: Optional[Schema] = None,
) -> float:
    """Joint goal accuracy: a turn is correct only if the predicted state has
    exactly the gold slots and every value matches (categorical slots exactly
    when a schema is given, free text fuzzily at the threshold)."""
    if len(predictions) != len(golds):
        raise ValueError(
            f"prediction/gold length mismatch: {len(predictions)} vs {len(golds)}"
        )
    if not golds:
        return 0.0
    correct = 0
    for pred, gold in zip(predictions, golds):
        p, g = pred.as_dict(), gold.as_dict()
        if set(p) != set(g):
            continue
        if all(
            _value_matches(svc, slot, p[(svc, slot)], g[(svc, slot)], fuzz_threshold, schema)
            for (svc, slot) in g
        ):
            correct += 1
    return correct / len(golds)


# Inform / Success ----------------------------------------------------------


@dataclass(frozen=True)
class DomainGoal:
    constraints: dict[str, str] = field(default_factory=dict)  # slot -> value
    requested: tuple[str, ...] = ()  # slot names


@dataclass
class TurnObservation:
    """What the system surfaced in one turn: entities offered per domain and
    slots whose values were provided per domain."""

    offered: dict[str, dict[str, str]] = field(default_factory=dict)
    provided: dict[str, set[str]] = field(default_factory=dict)


@dataclass
class DialogueOutcome:
    dialogue_id: str
    goals: dict[str, DomainGoal]
    turns: list[TurnObservation] = field(default_factory=list)


def _entity_satisfies(
    entity: dict[str, str], constraints: dict[str, str], schema: Optional[Schema], domain: str
) -> bool:
    for slot, want in constraints.items():
        have = entity.get(slot)
        if have is None:
            return False
        if not _value_matches(domain, slot, str(have), str(want), FUZZY_THRESHOLD, schema):
            return False
    return True


def inform_success(
    outcomes: Sequence[DialogueOutcome], schema: Optional[Schema] = None
) -> tuple[float, float]:
    """Dialogue-level rates in [0, 100].

    A dialogue is informed iff, for every goal domain, the most recently
    offered entity for that domain satisfies all goal constraints. It is
    successful iff it is informed and the value of every requested slot was
    provided at some point.
    """
    if not outcomes:
        raise ValueError("no dialogues to evaluate")
    informed_count = 0
    success_count = 0
    for outcome in outcomes:
        last_offer: dict[str, dict[str, str]] = {}
        provided: dict[str, set[str]] = {}
        for turn in outcome.turns:
            for domain, entity in turn.offered.items():
                last_offer[domain] = entity
            for domain, slots in turn.provided.items():
                provided.setdefault(domain, set()).update(slots)
        informed = all(
            domain in last_offer
            and _entity_satisfies(last_offer[domain], goal.constraints, schema, domain)
            for domain, goal in outcome.goals.items()
        )
        successful = informed and all(
            set(goal.requested) <= provided.get(domain, set())
            for domain, goal in outcome.goals.items()
        )
        informed_count += int(informed)
        success_count += int(successful)
    n = len(outcomes)
    return 100.0 * informed_count / n, 100.0 * success_count / n


# acts whose arguments surface slot values to the user
_PROVIDE_ACTS = frozenset({"Inform", "Offer", "NotifySuccess", "NotifyFailure", "Confirm"})
_OFFER_ACTS = frozenset({"Offer", "Inform", "NotifySuccess", "Confirm"})
_PLACEHOLDER_RE = re.compile(r"\[([a-z0-9_]+)\]")


def outcome_from_transcript(
    doc: dict,
    goals: dict[str, DomainGoal],
    db,
    schema: Schema,
    identity_slot: str = "name",
) -> DialogueOutcome:
    """Distill a logged session transcript into per-turn observations.

    Provided slots come from placeholders in the delexicalized response and
    from act arguments; an entity offer is recorded when the domain's identity
    slot is surfaced, resolved against the database by offered name first and
    by belief constraints otherwise.
    """
    from .agent import query_db

    turns = []
    for turn_doc in doc.get("turns", []):
        acts = act_set_from_json(turn_doc.get("acts", []), schema)
        belief = belief_from_json(turn_doc.get("belief_state", {}), schema)
        delex = turn_doc.get("delex_response", "") or ""
        provided: dict[str, set[str]] = {}
        for match in _PLACEHOLDER_RE.finditer(delex):
            resolved = resolve_slot_key(match.group(1), schema, separators="_-")
            if resolved is not None:
                provided.setdefault(resolved[0], set()).add(resolved[1])
        for act in acts.acts:
            if act.act_type in _PROVIDE_ACTS:
                for (svc, slot), value in act.args:
                    if svc and value != "?":
                        provided.setdefault(svc, set()).add(slot)
        offered: dict[str, dict[str, str]] = {}
        for domain, slots in provided.items():
            if identity_slot not in slots or domain not in db.tables:
                continue
            entity = None
            for act in acts.acts:
                if act.act_type in _OFFER_ACTS:
                    named = act.args_dict().get((domain, identity_slot))
                    if named and named != "?":
                        entity = next(
                            (
                                e
                                for e in db.tables[domain]
                                if values_match(e.get(identity_slot, ""), named, FUZZY_THRESHOLD)
                            ),
                            None,
                        )
                        break
            if entity is None:
                matches = query_db(db, belief, domain, schema)
                entity = matches[0] if matches else None
            if entity is not None:
                offered[domain] = entity
        turns.append(TurnObservation(offered=offered, provided=provided))
    return DialogueOutcome(dialogue_id=doc.get("dialogue_id", ""), goals=goals, turns=turns)


def load_goals(path: str | Path) -> dict[str, dict[str, DomainGoal]]:
    """Goal file: {"dialogue_id": {"domain": {"constraints": {...},
    "requested": [...]}}}."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    goals = {}
    for did, domains in doc.items():
        goals[did] = {
            domain: DomainGoal(
                constraints=dict(g.get("constraints", {})),
                requested=tuple(g.get("requested", [])),
            )
            for domain, g in domains.items()
        }
    return goals


# BLEU ------------------------------------------------------------------------


def _bleu_tokens(text: str) -> list[str]:
    return text.lower().split()


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses: Sequence[str], references: Sequence[str]) -> float:
    """Corpus BLEU-4 in [0, 100] against a single reference per hypothesis."""
    if not hypotheses or len(hypotheses) != len(references):
        raise ValueError("hypotheses and references must be non-empty and aligned")
    clipped = [0, 0, 0, 0]
    totals = [0, 0, 0, 0]
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_tokens = _bleu_tokens(hyp)
        ref_tokens = _bleu_tokens(ref)
        hyp_len += len(hyp_tokens)
        ref_len += len(ref_tokens)
        for n in range(1, 5):
            hyp_counts = _ngrams(hyp_tokens, n)
            ref_counts = _ngrams(ref_tokens, n)
            totals[n - 1] += sum(hyp_counts.values())
            clipped[n - 1] += sum(
                min(count, ref_counts[ng]) for ng, count in hyp_counts.items()
            )
    if any(t == 0 for t in totals) or any(c == 0 for c in clipped):
        return 0.0
    log_precision = sum(math.log(c / t) for c, t in zip(clipped, totals)) / 4.0
    brevity = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(log_precision)


def combined(inform: float, success: float, bleu_score: float) -> float:
    """Combined score: 0.5 * (Inform + Success) + BLEU, all in [0, 100]."""
    return 0.5 * (inform + success) + bleu_score


# report ----------------------------------------------------------------------


def metrics_report(values: dict[str, float]) -> dict:
    return {"note": BLEU_NOTE, "metrics": {k: values[k] for k in sorted(values)}}


def render_report_table(report: dict) -> str:
    lines = [f"# {report['note']}"]
    width = max((len(k) for k in report["metrics"]), default=0)
    for key, value in report["metrics"].items():
        lines.append(f"{key.ljust(width)}  {value:.4f}")
    return "\n".join(lines)
