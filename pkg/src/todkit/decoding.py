"""Noisy-channel decoding: sample candidate labels from a direct prompt,
deduplicate, score each candidate's channel prompt by the likelihood of the
observed utterance, and select the best under joint or conditional scoring.

Channel scores are raw sums of token logprobs with no length normalization;
the scored continuation is fixed across the candidates of a turn, so
normalization could not change the winner anyway (`normalize_channel_lengths`
exists only as an experiment flag).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Optional, Sequence

from .corpus import ActSet, BeliefState, EMPTY_ACTS, EMPTY_CHANGE, StateChange
from .lm import LMClient, SamplingConfig
from .parsing import parse_act_set, parse_state_change, render_act_set, render_state_change
from .prompts import (
    ChannelPrompt,
    DatExample,
    DstExample,
    build_dat_channel,
    build_dat_direct,
    build_dst_channel,
    build_dst_direct,
)
from .schema import Schema


class ScoringMode(Enum):
    JOINT = "joint"
    CONDITIONAL = "conditional"


DST_DEFAULT_MODE = ScoringMode.JOINT
DAT_DEFAULT_MODE = ScoringMode.CONDITIONAL


@dataclass(frozen=True)
class CandidateRecord:
    value: Any
    rendered: str
    prior_logprob: float
    channel_logprob: float
    final_score: float


@dataclass
class DecodeConfig:
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    mode: Optional[ScoringMode] = None  # None: task default
    greedy: bool = False  # skip channel scoring, keep the max-prior candidate
    compact: bool = False
    concurrency: int = 1
    max_chars: Optional[int] = None
    normalize_channel_lengths: bool = False


@dataclass
class DecodeResult:
    best: CandidateRecord
    candidates: list[CandidateRecord]
    direct_prompt: str
    num_examples: int
    parse_failures: int


def logsumexp(values: Sequence[float]) -> float:
    m = max(values)
    if m == -math.inf:
        return m
    return m + math.log(sum(math.exp(v - m) for v in values))


def dedupe(candidates: Sequence[tuple[Any, float]]) -> list[tuple[Any, float]]:
    """Merge structural duplicates; the merged prior is the log-sum-exp of the
    members' logprobs so repeated sampling mass counts as evidence. Output is
    ordered by descending prior (ties keep first-seen order)."""
    order: list[Any] = []
    members: dict[Any, list[float]] = {}
    for value, logprob in candidates:
        if value not in members:
            members[value] = []
            order.append(value)
        members[value].append(logprob)
    merged = [(value, logsumexp(members[value])) for value in order]
    first_seen = {value: i for i, value in enumerate(order)}
    merged.sort(key=lambda vp: (-vp[1], first_seen[vp[0]]))
    return merged


def nc_select(
    candidates: Sequence[tuple[Any, float]],
    channel_scores: Sequence[float],
    mode: ScoringMode,
    render: Callable[[Any], str],
) -> tuple[CandidateRecord, list[CandidateRecord]]:
    """Pick the argmax of the mode's scoring formula. Ties break by higher
    prior, then by lexicographically smaller rendered text."""
    if not candidates:
        raise ValueError("nc_select requires at least one candidate")
    if len(candidates) != len(channel_scores):
        raise ValueError("one channel score per candidate required")
    records = []
    for (value, prior), channel in zip(candidates, channel_scores):
        final = prior + channel if mode is ScoringMode.JOINT else channel
        records.append(
            CandidateRecord(
                value=value,
                rendered=render(value),
                prior_logprob=prior,
                channel_logprob=channel,
                final_score=final,
            )
        )
    records.sort(key=lambda r: (-r.final_score, -r.prior_logprob, r.rendered))
    return records[0], records


def _greedy_select(
    candidates: Sequence[tuple[Any, float]], render: Callable[[Any], str]
) -> tuple[CandidateRecord, list[CandidateRecord]]:
    records = [
        CandidateRecord(
            value=value,
            rendered=render(value),
            prior_logprob=prior,
            channel_logprob=0.0,
            final_score=prior,
        )
        for value, prior in candidates
    ]
    records.sort(key=lambda r: (-r.final_score, -r.prior_logprob, r.rendered))
    return records[0], records


def _score_channels(
    lm: LMClient, prompts: Sequence[ChannelPrompt], concurrency: int
) -> list[float]:
    if concurrency > 1 and len(prompts) > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            return list(pool.map(lambda p: lm.score(p.prefix, p.continuation), prompts))
    return [lm.score(p.prefix, p.continuation) for p in prompts]


def decode_dst(
    schema: Schema,
    examples: Sequence[DstExample],
    b_prev: BeliefState,
    r_prev: str,
    u_t: str,
    lm: LMClient,
    cfg: DecodeConfig,
) -> DecodeResult:
    """Infer a state change for one turn via the sample-and-rescore pipeline."""
    bundle = build_dst_direct(
        schema, examples, b_prev, r_prev, u_t, compact=cfg.compact, max_chars=cfg.max_chars
    )
    sampling = replace(cfg.sampling, stop_sequences=bundle.stop)
    samples = lm.sample(bundle.text(), sampling)
    parsed: list[tuple[StateChange, float]] = []
    failures = 0
    for s in samples:
        result = parse_state_change(s.text, schema)
        failures += int(result.failed)
        parsed.append((result.value if not result.failed else EMPTY_CHANGE, s.total_logprob))
    merged = dedupe(parsed)
    render = lambda delta: render_state_change(delta, schema)
    if cfg.greedy:
        best, records = _greedy_select(merged, render)
    else:
        prompts = [
            build_dst_channel(
                schema, examples, b_prev, r_prev, delta, u_t,
                compact=cfg.compact, max_chars=cfg.max_chars,
            )
            for delta, _ in merged
        ]
        scores = _score_channels(lm, prompts, cfg.concurrency)
        mode = cfg.mode or DST_DEFAULT_MODE
        best, records = nc_select(merged, scores, mode, render)
    return DecodeResult(
        best=best,
        candidates=records,
        direct_prompt=bundle.text(),
        num_examples=len(bundle.examples),
        parse_failures=failures,
    )


def decode_dat(
    schema: Schema,
    examples: Sequence[DatExample],
    r_t: str,
    lm: LMClient,
    cfg: DecodeConfig,
) -> DecodeResult:
    """Infer the act set communicated in one system response."""
    bundle = build_dat_direct(
        schema, examples, r_t, compact=cfg.compact, max_chars=cfg.max_chars
    )
    sampling = replace(cfg.sampling, stop_sequences=bundle.stop)
    samples = lm.sample(bundle.text(), sampling)
    parsed: list[tuple[ActSet, float]] = []
    failures = 0
    for s in samples:
        result = parse_act_set(s.text, schema)
        failures += int(result.failed)
        parsed.append((result.value if not result.failed else EMPTY_ACTS, s.total_logprob))
    merged = dedupe(parsed)
    if cfg.greedy:
        best, records = _greedy_select(merged, render_act_set)
    else:
        prompts = [
            build_dat_channel(
                schema, examples, acts, r_t, compact=cfg.compact, max_chars=cfg.max_chars
            )
            for acts, _ in merged
        ]
        scores = _score_channels(lm, prompts, cfg.concurrency)
        mode = cfg.mode or DAT_DEFAULT_MODE
        best, records = nc_select(merged, scores, mode, render_act_set)
    return DecodeResult(
        best=best,
        candidates=records,
        direct_prompt=bundle.text(),
        num_examples=len(bundle.examples),
        parse_failures=failures,
    )
