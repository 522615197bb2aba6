"""Pseudo-labeling orchestration: the initial labeling loop over a corpus,
training-pair export for fine-tuning, and relabeling with a fine-tuned model.

The labeling loop processes every dialogue's turn 0 before any turn 1 (outer
loop over turn index, inner loop over dialogues in lexicographic id order), so
early turns of all dialogues seed the example pool before later turns consume
it. Records are persisted incrementally as JSON Lines, one checkpoint file per
generation, and a killed run resumes to the same final records.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

from .corpus import (
    ActSet,
    BeliefState,
    Dialogue,
    EMPTY_ACTS,
    EMPTY_CHANGE,
    EMPTY_STATE,
    StateChange,
    act_set_from_json,
    act_set_to_json,
    apply_state_change,
    belief_from_json,
    belief_to_json,
    state_change_from_json,
    state_change_to_json,
)
from .decoding import (
    CandidateRecord,
    DAT_DEFAULT_MODE,
    DST_DEFAULT_MODE,
    DecodeConfig,
    ScoringMode,
    decode_dat,
    decode_dst,
)
from .delex import delexicalize
from .lm import LMClient, LMError, SamplingConfig
from .parsing import render_act_set, render_state_change
from .pool import (
    DAT,
    DAT_RETRIEVAL,
    DST,
    DST_RETRIEVAL,
    ExamplePool,
    RetrievalConfig,
    label_key,
    query_key_dat,
    query_key_dst,
)
from .prompts import (
    DatExample,
    DstExample,
    build_dat_channel,
    build_dat_direct,
    build_dst_channel,
    build_dst_direct,
    build_policy_prompt,
    build_response_prompt,
)
from .schema import Schema

# training-pair views
DST_DIRECT = "DST_DIRECT"
DST_CHANNEL = "DST_CHANNEL"
DAT_DIRECT = "DAT_DIRECT"
DAT_CHANNEL = "DAT_CHANNEL"
POLICY = "POLICY"
RESPONSE = "RESPONSE"

DIRECT_WEIGHT = 1
CHANNEL_WEIGHT = 2  # 2:1 channel-to-direct upsampling

STAGE_EM = "em"
STAGE_E2E = "e2e"


@dataclass
class PseudoLabelRecord:
    dialogue_id: str
    turn: int
    generation: int
    failed: bool
    state: BeliefState
    change: StateChange
    acts: ActSet
    delex_response: Optional[str]
    dst_candidates: list[CandidateRecord] = field(default_factory=list)
    dat_candidates: list[CandidateRecord] = field(default_factory=list)
    num_dst_examples: int = 0
    num_dat_examples: int = 0


@dataclass
class TrainingPair:
    view: str
    prompt: str
    completion: str
    weight: int


@dataclass
class LabelerConfig:
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    dst_retrieval: RetrievalConfig = DST_RETRIEVAL
    dat_retrieval: RetrievalConfig = DAT_RETRIEVAL
    dst_mode: ScoringMode = DST_DEFAULT_MODE
    dat_mode: ScoringMode = DAT_DEFAULT_MODE
    greedy: bool = False
    compact: bool = False
    use_pool: bool = True
    concurrency: int = 1
    fast_mode: bool = False  # relaxes cross-dialogue ordering within a turn index
    max_chars: Optional[int] = None
    turn_retries: int = 1


def _decode_cfg(cfg: LabelerConfig, mode: ScoringMode) -> DecodeConfig:
    return DecodeConfig(
        sampling=cfg.sampling,
        mode=mode,
        greedy=cfg.greedy,
        compact=cfg.compact,
        concurrency=cfg.concurrency,
        max_chars=cfg.max_chars,
    )


@dataclass
class _TurnOutput:
    record: PseudoLabelRecord
    dst_example: DstExample
    dat_example: DatExample
    trace: dict


def _label_turn(
    dialogue: Dialogue,
    t: int,
    b_prev: BeliefState,
    pool: ExamplePool,
    schema: Schema,
    lm: LMClient,
    cfg: LabelerConfig,
    generation: int,
    step: int,
) -> _TurnOutput:
    turn = dialogue.turns[t]
    r_prev = dialogue.turns[t - 1].system_response if t > 0 else ""
    u_t, r_t = turn.user_utterance, turn.system_response

    dst_entries = (
        pool.retrieve(DST, query_key_dst(b_prev, r_prev, u_t), cfg.dst_retrieval)
        if cfg.use_pool
        else []
    )
    dat_entries = (
        pool.retrieve(DAT, query_key_dat(u_t, r_t), cfg.dat_retrieval)
        if cfg.use_pool
        else []
    )
    trace = {
        "step": step,
        "dialogue_id": dialogue.dialogue_id,
        "turn": t,
        "dst_pool_size": pool.size(DST),
        "dat_pool_size": pool.size(DAT),
        "dst_examples": len(dst_entries),
        "dat_examples": len(dat_entries),
        "dst_distinct": len({label_key(DST, e.label) for e in dst_entries}),
        "dat_distinct": len({label_key(DAT, e.label) for e in dat_entries}),
        "dst_pool_distinct": len({label_key(DST, e.label) for e in pool.entries(DST)}),
        "dat_pool_distinct": len({label_key(DAT, e.label) for e in pool.entries(DAT)}),
    }

    failed = False
    dst_result = dat_result = None
    for attempt in range(cfg.turn_retries + 1):
        try:
            dst_result = decode_dst(
                schema, [e.example for e in dst_entries], b_prev, r_prev, u_t, lm,
                _decode_cfg(cfg, cfg.dst_mode),
            )
            dat_result = decode_dat(
                schema, [e.example for e in dat_entries], r_t, lm,
                _decode_cfg(cfg, cfg.dat_mode),
            )
            break
        except LMError:
            if attempt == cfg.turn_retries:
                failed = True

    if failed or dst_result is None or dat_result is None:
        delta, acts = EMPTY_CHANGE, EMPTY_ACTS
        dst_candidates: list[CandidateRecord] = []
        dat_candidates: list[CandidateRecord] = []
        delex_text: Optional[str] = None
        failed = True
    else:
        delta = dst_result.best.value
        acts = dat_result.best.value
        dst_candidates = dst_result.candidates
        dat_candidates = dat_result.candidates
        delex_text = delexicalize(r_t, acts, schema).text

    state = apply_state_change(b_prev, delta)
    record = PseudoLabelRecord(
        dialogue_id=dialogue.dialogue_id,
        turn=t,
        generation=generation,
        failed=failed,
        state=state,
        change=delta,
        acts=acts,
        delex_response=delex_text,
        dst_candidates=dst_candidates,
        dat_candidates=dat_candidates,
        num_dst_examples=len(dst_entries),
        num_dat_examples=len(dat_entries),
    )
    return _TurnOutput(
        record=record,
        dst_example=DstExample(b_prev, r_prev, u_t, delta),
        dat_example=DatExample(r_t, acts),
        trace=trace,
    )


def label_corpus(
    corpus: Sequence[Dialogue],
    schema: Schema,
    lm: LMClient,
    cfg: LabelerConfig,
    generation: int = 0,
    checkpoint_path: Optional[str | Path] = None,
    trace_sink: Optional[Callable[[dict], None]] = None,
) -> list[PseudoLabelRecord]:
    """Label every turn of the corpus, outer loop by turn index.

    With a checkpoint path, each record is appended as soon as it is produced;
    an existing checkpoint is loaded and its turns are skipped, with the pool
    replayed from it in processing order, so interrupted runs resume exactly.
    """
    dialogues = sorted(corpus, key=lambda d: d.dialogue_id)
    pool = ExamplePool(lm.embed)
    done: dict[tuple[str, int], PseudoLabelRecord] = {}
    if checkpoint_path is not None and Path(checkpoint_path).exists():
        for record in load_records(checkpoint_path, schema):
            done[(record.dialogue_id, record.turn)] = record
    by_id = {d.dialogue_id: d for d in dialogues}
    # replay prior progress into the pool in processing order
    for record in sorted(done.values(), key=lambda r: (r.turn, r.dialogue_id)):
        d = by_id.get(record.dialogue_id)
        if d is None or record.turn >= len(d.turns):
            continue
        turn = d.turns[record.turn]
        r_prev = d.turns[record.turn - 1].system_response if record.turn > 0 else ""
        b_prev = done_state_before(done, record.dialogue_id, record.turn)
        pool.add_dst(
            DstExample(b_prev, r_prev, turn.user_utterance, record.change),
            schema,
            (record.dialogue_id, record.turn),
        )
        pool.add_dat(
            DatExample(turn.system_response, record.acts),
            turn.user_utterance,
            (record.dialogue_id, record.turn),
        )

    sink = open(checkpoint_path, "a", encoding="utf-8") if checkpoint_path else None
    records: list[PseudoLabelRecord] = []
    # latest finished state per dialogue, for resumed runs
    states: dict[str, BeliefState] = {}
    for did in {d for d, _ in done}:
        latest = max(t for d, t in done if d == did)
        states[did] = done[(did, latest)].state

    max_turns = max((len(d.turns) for d in dialogues), default=0)
    step = 0
    try:
        for t in range(max_turns):
            active = [d for d in dialogues if t < len(d.turns)]
            pending = [d for d in active if (d.dialogue_id, t) not in done]
            for d in active:
                if (d.dialogue_id, t) in done:
                    records.append(done[(d.dialogue_id, t)])
            if cfg.fast_mode and len(pending) > 1:
                outputs = _label_turn_batch(pending, t, states, pool, schema, lm, cfg, generation, step)
            else:
                outputs = []
                for d in pending:
                    b_prev = states.get(d.dialogue_id, EMPTY_STATE)
                    out = _label_turn(d, t, b_prev, pool, schema, lm, cfg, generation, step)
                    _commit_turn(out, pool, schema, states)
                    outputs.append(out)
                    step += 1
            if cfg.fast_mode and len(pending) > 1:
                for out in outputs:
                    _commit_turn(out, pool, schema, states)
                    step += 1
            for out in outputs:
                records.append(out.record)
                if sink is not None:
                    sink.write(json.dumps(record_to_json(out.record), ensure_ascii=False) + "\n")
                    sink.flush()
                if trace_sink is not None:
                    trace_sink(out.trace)
    finally:
        if sink is not None:
            sink.close()
    records.sort(key=lambda r: (r.turn, r.dialogue_id))
    return records


def done_state_before(
    done: dict[tuple[str, int], PseudoLabelRecord], did: str, t: int
) -> BeliefState:
    if t == 0 or (did, t - 1) not in done:
        return EMPTY_STATE
    return done[(did, t - 1)].state


def _commit_turn(out: _TurnOutput, pool: ExamplePool, schema: Schema, states: dict):
    record = out.record
    pool.add_dst(out.dst_example, schema, (record.dialogue_id, record.turn))
    pool.add_dat(out.dat_example, out.dst_example.utterance, (record.dialogue_id, record.turn))
    states[record.dialogue_id] = record.state


def _label_turn_batch(pending, t, states, pool, schema, lm, cfg, generation, step):
    from concurrent.futures import ThreadPoolExecutor

    def work(args):
        offset, d = args
        b_prev = states.get(d.dialogue_id, EMPTY_STATE)
        return _label_turn(d, t, b_prev, pool, schema, lm, cfg, generation, step + offset)

    with ThreadPoolExecutor(max_workers=max(2, cfg.concurrency)) as ex:
        return list(ex.map(work, enumerate(pending)))


def relabel(
    corpus: Sequence[Dialogue],
    schema: Schema,
    lm: LMClient,
    cfg: LabelerConfig,
    generation: int,
    checkpoint_path: Optional[str | Path] = None,
    trace_sink: Optional[Callable[[dict], None]] = None,
) -> list[PseudoLabelRecord]:
    """Relabel with a fine-tuned model: the identical pipeline, but compact
    prompts and no pool retrieval."""
    cfg = replace(cfg, compact=True, use_pool=False)
    return label_corpus(
        corpus, schema, lm, cfg,
        generation=generation,
        checkpoint_path=checkpoint_path,
        trace_sink=trace_sink,
    )


# training-pair export --------------------------------------------------------


def export_training_pairs(
    records: Sequence[PseudoLabelRecord],
    corpus: Sequence[Dialogue],
    schema: Schema,
    stage: str,
    seed: int = 0,
) -> tuple[list[TrainingPair], list[str]]:
    """Derive (prompt, completion) pairs from labeled records.

    The EM stage emits direct and channel pairs for both state tracking and
    act tagging; the end-to-end stage emits state-tracking pairs plus policy
    and response pairs. All prompts are compact. Channel pairs carry weight 2
    and are physically duplicated on write; the final order is a seeded
    shuffle of the duplicated list. Returns (pairs, skip report).
    """
    if stage not in (STAGE_EM, STAGE_E2E):
        raise ValueError(f"unknown stage {stage!r}")
    by_id = {d.dialogue_id: d for d in corpus}
    by_key = {(r.dialogue_id, r.turn): r for r in records}
    skipped: list[str] = []
    pairs: list[TrainingPair] = []
    for record in sorted(records, key=lambda r: (r.dialogue_id, r.turn)):
        d = by_id.get(record.dialogue_id)
        if d is None or record.turn >= len(d.turns):
            skipped.append(f"{record.dialogue_id}/{record.turn}: not in corpus")
            continue
        turn = d.turns[record.turn]
        r_prev = d.turns[record.turn - 1].system_response if record.turn > 0 else ""
        u_t, r_t = turn.user_utterance, turn.system_response
        prev = by_key.get((record.dialogue_id, record.turn - 1))
        b_prev = prev.state if prev is not None else EMPTY_STATE

        direct = build_dst_direct(schema, [], b_prev, r_prev, u_t, compact=True)
        pairs.append(
            TrainingPair(
                DST_DIRECT,
                direct.text(),
                render_state_change(record.change, schema),
                DIRECT_WEIGHT,
            )
        )
        channel = build_dst_channel(schema, [], b_prev, r_prev, record.change, u_t, compact=True)
        pairs.append(
            TrainingPair(DST_CHANNEL, channel.prefix, channel.continuation, CHANNEL_WEIGHT)
        )

        if stage == STAGE_EM:
            dat_direct = build_dat_direct(schema, [], r_t, compact=True)
            pairs.append(
                TrainingPair(
                    DAT_DIRECT, dat_direct.text(), render_act_set(record.acts), DIRECT_WEIGHT
                )
            )
            dat_channel = build_dat_channel(schema, [], record.acts, r_t, compact=True)
            pairs.append(
                TrainingPair(DAT_CHANNEL, dat_channel.prefix, dat_channel.continuation, CHANNEL_WEIGHT)
            )
        else:
            history = []
            for prior in d.turns[: record.turn]:
                history.append(prior.user_utterance)
                history.append(prior.system_response)
            history.append(u_t)
            policy = build_policy_prompt(history)
            pairs.append(
                TrainingPair(POLICY, policy.text(), render_act_set(record.acts), DIRECT_WEIGHT)
            )
            if record.delex_response:
                response = build_response_prompt(r_prev, u_t, record.acts)
                pairs.append(
                    TrainingPair(RESPONSE, response.text(), record.delex_response, DIRECT_WEIGHT)
                )
            else:
                skipped.append(
                    f"{record.dialogue_id}/{record.turn}: no delexicalized response"
                )
    expanded = [p for p in pairs for _ in range(p.weight)]
    random.Random(seed).shuffle(expanded)
    return expanded, skipped


def write_training_pairs(path: str | Path, pairs: Sequence[TrainingPair]):
    """Training file: JSON Lines of {"view", "prompt", "completion"}; weighted
    pairs arrive already duplicated."""
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(
                json.dumps(
                    {"view": pair.view, "prompt": pair.prompt, "completion": pair.completion},
                    ensure_ascii=False,
                )
                + "\n"
            )


# record (de)serialization ----------------------------------------------------


def _candidate_to_json(c: CandidateRecord) -> dict:
    return {
        "rendered": c.rendered,
        "prior_logprob": c.prior_logprob,
        "channel_logprob": c.channel_logprob,
        "final_score": c.final_score,
    }


def record_to_json(r: PseudoLabelRecord) -> dict:
    return {
        "dialogue_id": r.dialogue_id,
        "turn": r.turn,
        "generation": r.generation,
        "failed": r.failed,
        "state": belief_to_json(r.state),
        "state_change": state_change_to_json(r.change),
        "acts": act_set_to_json(r.acts),
        "delex_response": r.delex_response,
        "dst_candidates": [_candidate_to_json(c) for c in r.dst_candidates],
        "dat_candidates": [_candidate_to_json(c) for c in r.dat_candidates],
        "num_dst_examples": r.num_dst_examples,
        "num_dat_examples": r.num_dat_examples,
    }


def record_from_json(doc: dict, schema: Schema) -> PseudoLabelRecord:
    def candidates(docs):
        return [
            CandidateRecord(
                value=None,
                rendered=c["rendered"],
                prior_logprob=float(c["prior_logprob"]),
                channel_logprob=float(c["channel_logprob"]),
                final_score=float(c["final_score"]),
            )
            for c in docs
        ]

    return PseudoLabelRecord(
        dialogue_id=doc["dialogue_id"],
        turn=int(doc["turn"]),
        generation=int(doc.get("generation", 0)),
        failed=bool(doc.get("failed", False)),
        state=belief_from_json(doc.get("state", {}), schema),
        change=state_change_from_json(doc.get("state_change", {}), schema),
        acts=act_set_from_json(doc.get("acts", []), schema),
        delex_response=doc.get("delex_response"),
        dst_candidates=candidates(doc.get("dst_candidates", [])),
        dat_candidates=candidates(doc.get("dat_candidates", [])),
        num_dst_examples=int(doc.get("num_dst_examples", 0)),
        num_dat_examples=int(doc.get("num_dat_examples", 0)),
    )


def load_records(path: str | Path, schema: Schema) -> list[PseudoLabelRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(record_from_json(json.loads(line), schema))
    return records


def save_records(path: str | Path, records: Sequence[PseudoLabelRecord]):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_json(record), ensure_ascii=False) + "\n")
