"""Incrementally growing pool of the system's own predictions, reused as
in-context examples with retrieval bias controls.

Retrieval returns nothing until the pool holds a minimum number of examples,
then the nearest neighbors by embedding cosine distance, adjusted so that the
returned set carries a minimum number of distinct labels. Two state-change
labels are distinct when they update different slots; two act-set labels are
distinct when they embody different acts or different slots.

The pool persists as an append-only JSON Lines log (embeddings recomputed on
load, or restored from an optional sidecar), so labeling runs are resumable
and auditable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .corpus import (
    ActSet,
    BeliefState,
    StateChange,
    act_set_from_json,
    act_set_to_json,
    belief_from_json,
    belief_to_json,
    state_change_from_json,
    state_change_to_json,
)
from .lm import cosine_distance
from .prompts import DatExample, DstExample, render_belief_state, render_dat_example, render_dst_example
from .schema import Schema

DST = "dst"
DAT = "dat"

QUERY_SEPARATOR = "\n"


@dataclass(frozen=True)
class RetrievalConfig:
    k: int
    min_pool_size: int = 32
    min_distinct_labels: int = 4

    def __post_init__(self):
        if self.min_distinct_labels > self.k:
            raise ValueError("min_distinct_labels must be <= k")


DST_RETRIEVAL = RetrievalConfig(k=8)
DAT_RETRIEVAL = RetrievalConfig(k=6)


def query_key_dst(b_prev: BeliefState, r_prev: str, u_t: str) -> str:
    """Retriever input for state tracking: prior state, prior response, and
    the current user utterance. An empty prior state is omitted."""
    segments = []
    if b_prev:
        segments.append(render_belief_state(b_prev))
    segments.append(r_prev)
    segments.append(u_t)
    return QUERY_SEPARATOR.join(segments)


def query_key_dat(u_t: str, r_t: str) -> str:
    """Retriever input for act tagging: the turn's user and system utterances."""
    return u_t + QUERY_SEPARATOR + r_t


def label_key(kind: str, label) -> frozenset:
    """Equivalence key for label distinctness."""
    if kind == DST:
        return label.slot_keys()
    return label.slot_pairs()


def label_distinct(kind: str, a, b) -> bool:
    return label_key(kind, a) != label_key(kind, b)


@dataclass
class PoolEntry:
    kind: str
    query_key: str
    rendered_example: str
    label: StateChange | ActSet
    example: DstExample | DatExample
    embedding: np.ndarray
    source: tuple[str, int]


class ExamplePool:
    """Single-writer, multi-reader store of prior predictions."""

    def __init__(self, embedder: Callable[[str], np.ndarray]):
        self._embed = embedder
        self._entries: dict[str, list[PoolEntry]] = {DST: [], DAT: []}
        self._dims: dict[str, int] = {}

    def size(self, kind: str) -> int:
        return len(self._entries[kind])

    def entries(self, kind: str) -> list[PoolEntry]:
        return list(self._entries[kind])

    def add(self, entry: PoolEntry) -> None:
        dim = int(entry.embedding.shape[0])
        known = self._dims.setdefault(entry.kind, dim)
        if dim != known:
            raise ValueError(
                f"{entry.kind} pool expects embedding dim {known}, got {dim}"
            )
        self._entries[entry.kind].append(entry)

    def add_dst(self, example: DstExample, schema: Schema, source: tuple[str, int]) -> PoolEntry:
        key = query_key_dst(example.prev_state, example.prev_response, example.utterance)
        entry = PoolEntry(
            kind=DST,
            query_key=key,
            rendered_example=render_dst_example(example, schema),
            label=example.change,
            example=example,
            embedding=self._embed(key),
            source=source,
        )
        self.add(entry)
        return entry

    def add_dat(self, example: DatExample, utterance: str, source: tuple[str, int]) -> PoolEntry:
        key = query_key_dat(utterance, example.response)
        entry = PoolEntry(
            kind=DAT,
            query_key=key,
            rendered_example=render_dat_example(example),
            label=example.acts,
            example=example,
            embedding=self._embed(key),
            source=source,
        )
        self.add(entry)
        return entry

    def retrieve(self, kind: str, query: str, cfg: RetrievalConfig) -> list[PoolEntry]:
        """Nearest neighbors for a query, nearest first.

        Returns [] while the pool holds fewer than cfg.min_pool_size entries
        of this kind. Otherwise picks the k nearest by cosine distance, then
        repairs label bias: while the picked set carries fewer than
        cfg.min_distinct_labels distinct labels, the farthest pick whose label
        is duplicated is replaced by the nearest unpicked entry carrying an
        unseen label.
        """
        entries = self._entries[kind]
        if len(entries) < cfg.min_pool_size:
            return []
        q = self._embed(query)
        ranked = sorted(
            range(len(entries)),
            key=lambda i: (cosine_distance(q, entries[i].embedding), i),
        )
        rank_of = {i: pos for pos, i in enumerate(ranked)}
        picked = ranked[: cfg.k]
        picked_keys = [label_key(kind, entries[i].label) for i in picked]
        rest_iter = iter(ranked[cfg.k :])
        while len(set(picked_keys)) < cfg.min_distinct_labels:
            candidate = next(
                (i for i in rest_iter if label_key(kind, entries[i].label) not in set(picked_keys)),
                None,
            )
            if candidate is None:
                break
            # replace the farthest pick whose label appears more than once
            dup_positions = [
                pos
                for pos in range(len(picked))
                if picked_keys.count(picked_keys[pos]) > 1
            ]
            if not dup_positions:
                break
            drop = max(dup_positions, key=lambda pos: rank_of[picked[pos]])
            picked[drop] = candidate
            picked_keys[drop] = label_key(kind, entries[candidate].label)

        picked.sort(key=lambda i: rank_of[i])
        return [entries[i] for i in picked]

    # persistence -----------------------------------------------------------

    def save(self, path: str | Path, embeddings_sidecar: Optional[str | Path] = None):
        with open(path, "w", encoding="utf-8") as fh:
            for kind in (DST, DAT):
                for entry in self._entries[kind]:
                    fh.write(json.dumps(_entry_to_json(entry), ensure_ascii=False) + "\n")
        if embeddings_sidecar is not None:
            stacked = [
                entry.embedding
                for kind in (DST, DAT)
                for entry in self._entries[kind]
            ]
            np.savez_compressed(embeddings_sidecar, embeddings=np.array(stacked))

    @staticmethod
    def load(
        path: str | Path,
        schema: Schema,
        embedder: Callable[[str], np.ndarray],
        embeddings_sidecar: Optional[str | Path] = None,
    ) -> "ExamplePool":
        pool = ExamplePool(embedder)
        sidecar = None
        if embeddings_sidecar is not None and Path(embeddings_sidecar).exists():
            sidecar = np.load(embeddings_sidecar)["embeddings"]
        with open(path, encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                line = line.strip()
                if not line:
                    continue
                doc = json.loads(line)
                entry = _entry_from_json(doc, schema)
                embedding = sidecar[i] if sidecar is not None else embedder(entry.query_key)
                entry.embedding = embedding
                pool.add(entry)
        return pool


def _entry_to_json(entry: PoolEntry) -> dict:
    if entry.kind == DST:
        ex: DstExample = entry.example
        payload = {
            "prev_state": belief_to_json(ex.prev_state),
            "prev_response": ex.prev_response,
            "utterance": ex.utterance,
            "change": state_change_to_json(ex.change),
        }
    else:
        ex_dat: DatExample = entry.example
        payload = {"response": ex_dat.response, "acts": act_set_to_json(ex_dat.acts)}
    return {
        "kind": entry.kind,
        "query_key": entry.query_key,
        "rendered_example": entry.rendered_example,
        "source": list(entry.source),
        "example": payload,
    }


def _entry_from_json(doc: dict, schema: Schema) -> PoolEntry:
    kind = doc["kind"]
    payload = doc["example"]
    if kind == DST:
        example = DstExample(
            prev_state=belief_from_json(payload["prev_state"], schema),
            prev_response=payload["prev_response"],
            utterance=payload["utterance"],
            change=state_change_from_json(payload["change"], schema),
        )
        label = example.change
    else:
        example = DatExample(
            response=payload["response"],
            acts=act_set_from_json(payload["acts"], schema),
        )
        label = example.acts
    return PoolEntry(
        kind=kind,
        query_key=doc["query_key"],
        rendered_example=doc["rendered_example"],
        label=label,
        example=example,
        embedding=np.zeros(0),
        source=(doc["source"][0], int(doc["source"][1])),
    )
