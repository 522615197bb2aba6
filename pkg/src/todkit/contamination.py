"""Semi-automated contamination scanner: find supervised (utterance, label)
pairs planted inside a large text corpus.

Matching is tolerant to capitalization, punctuation, and interrupting
whitespace: both documents and utterances are canonicalized (lowercase, every
non-alphanumeric run becomes a single space) and matched on token boundaries.
A matched document needs manual review when at least 40 percent of the label's
keywords appear within 500 original characters before or after the match.
Correctness and authenticity judgments stay manual; the report leaves those
columns blank.
"""

from __future__ import annotations

import csv
import json
import pickle
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .corpus import ActSet, StateChange

WINDOW_CHARS = 500
# needs_review <=> found/total >= 0.40, compared in integers
REVIEW_NUM, REVIEW_DEN = 2, 5

DEFAULT_GENERIC_KEYWORDS = frozenset({"name", "type", "day", "book", "area"})


# word characters: letters and digits (unicode), excluding underscore
_WORD_RUN = re.compile(r"[^\W_]+", re.UNICODE)
_WORD_CHAR = re.compile(r"[^\W_]", re.UNICODE)


def canonicalize(text: str) -> tuple[str, list[int]]:
    """Canonical form plus a map from canonical char to original char index."""
    out: list[str] = []
    offsets: list[int] = []
    pending = False
    for i, ch in enumerate(text):
        for c in ch.lower():
            if _WORD_CHAR.match(c):
                if pending and out:
                    out.append(" ")
                    offsets.append(i)
                out.append(c)
                offsets.append(i)
                pending = False
            else:
                pending = True
    return "".join(out), offsets


def canonical_text(text: str) -> str:
    """Fast offset-free canonical form; agrees with canonicalize()[0]."""
    return " ".join(_WORD_RUN.findall(text.lower()))


def canonical_tokens(text: str) -> list[str]:
    return _WORD_RUN.findall(text.lower())


def _aligned_find(haystack: str, needle: str) -> list[int]:
    """Token-boundary-aligned occurrences of needle in canonical haystack."""
    if not needle:
        return []
    hits = []
    start = 0
    n = len(haystack)
    while True:
        idx = haystack.find(needle, start)
        if idx == -1:
            return hits
        end = idx + len(needle)
        left_ok = idx == 0 or haystack[idx - 1] == " "
        right_ok = end == n or haystack[end] == " "
        if left_ok and right_ok:
            hits.append(idx)
        start = idx + 1


@dataclass(frozen=True)
class ContamQuery:
    task: str  # "dst" or "dat"
    utterance: str
    keywords: tuple[str, ...]
    source: str = ""  # free-form provenance, e.g. "dlg-7/3"

    def __post_init__(self):
        if not self.keywords:
            raise ValueError("ContamQuery requires at least one keyword")


@dataclass
class ContamHit:
    document_id: str
    span: tuple[int, int]  # original character span of the matched utterance
    keyword_fraction: float
    keywords_found: tuple[str, ...]
    window_text: str
    needs_review: bool
    task: str = ""
    query_source: str = ""


def dst_keywords(change: StateChange, generic: frozenset[str] = DEFAULT_GENERIC_KEYWORDS) -> list[str]:
    """Slot names and values of a state change, minus generic terms."""
    words: list[str] = []
    for (_, slot), value in change.updates:
        words.extend([slot, value])
    return _dedupe_keywords(words, generic)


def dat_keywords(acts: ActSet, generic: frozenset[str] = DEFAULT_GENERIC_KEYWORDS) -> list[str]:
    """Act names, slot names, and values of an act set, minus generic terms."""
    words: list[str] = []
    for act in acts.acts:
        words.append(act.act_type)
        for (_, slot), value in act.args:
            words.append(slot)
            if value != "?":
                words.append(value)
    return _dedupe_keywords(words, generic)


def _dedupe_keywords(words: Iterable[str], generic: frozenset[str]) -> list[str]:
    out = []
    seen = set()
    for word in words:
        key = canonical_text(word)
        if not key or key in generic or key in seen:
            continue
        seen.add(key)
        out.append(word)
    return out


class CorpusIndex:
    """On-disk inverted index over canonicalized tokens.

    The corpus source is either a JSON Lines file of {"id", "text"} or a
    directory of *.txt files. Documents are re-read from the source on demand,
    so the pickled index stores only postings and locators.
    """

    def __init__(self, source: str | Path):
        self.source = str(source)
        self.postings: dict[str, list[int]] = {}
        self.doc_ids: list[str] = []
        self._locators: list[tuple[int, int]] = []  # (byte offset, byte length) for jsonl
        self._files: list[str] = []  # for directory corpora
        self.skipped_docs = 0

    # building ---------------------------------------------------------------

    @staticmethod
    def build(source: str | Path) -> "CorpusIndex":
        index = CorpusIndex(source)
        src = Path(source)
        if src.is_dir():
            for path in sorted(src.glob("*.txt")):
                try:
                    text = path.read_text(encoding="utf-8")
                except OSError:
                    index.skipped_docs += 1
                    continue
                index._add_doc(path.stem, text, file_path=str(path))
        else:
            with open(src, "rb") as fh:
                offset = 0
                for raw in fh:
                    length = len(raw)
                    line = raw.strip()
                    if line:
                        try:
                            doc = json.loads(line)
                            index._add_doc(
                                str(doc["id"]), str(doc["text"]), locator=(offset, length)
                            )
                        except (json.JSONDecodeError, KeyError):
                            index.skipped_docs += 1
                    offset += length
        return index

    def _add_doc(self, doc_id: str, text: str, locator=None, file_path=None):
        doc_idx = len(self.doc_ids)
        self.doc_ids.append(doc_id)
        self._locators.append(locator if locator is not None else (0, 0))
        self._files.append(file_path if file_path is not None else "")
        for token in set(canonical_tokens(text)):
            self.postings.setdefault(token, []).append(doc_idx)

    # access -------------------------------------------------------------------

    def get_text(self, doc_idx: int) -> Optional[str]:
        if self._files[doc_idx]:
            try:
                return Path(self._files[doc_idx]).read_text(encoding="utf-8")
            except OSError:
                return None
        offset, length = self._locators[doc_idx]
        try:
            with open(self.source, "rb") as fh:
                fh.seek(offset)
                doc = json.loads(fh.read(length))
            return str(doc["text"])
        except (OSError, json.JSONDecodeError, KeyError):
            return None

    def candidate_docs(self, utterance: str) -> list[int]:
        tokens = canonical_tokens(utterance)
        if not tokens:
            return []
        sets = []
        for token in tokens:
            posting = self.postings.get(token)
            if not posting:
                return []
            sets.append(set(posting))
        docs = set.intersection(*sets)
        return sorted(docs)

    # persistence ---------------------------------------------------------------

    def save(self, path: str | Path):
        with open(path, "wb") as fh:
            pickle.dump(
                {
                    "source": self.source,
                    "postings": self.postings,
                    "doc_ids": self.doc_ids,
                    "locators": self._locators,
                    "files": self._files,
                    "skipped_docs": self.skipped_docs,
                },
                fh,
                protocol=pickle.HIGHEST_PROTOCOL,
            )

    @staticmethod
    def load(path: str | Path) -> "CorpusIndex":
        with open(path, "rb") as fh:
            doc = pickle.load(fh)
        index = CorpusIndex(doc["source"])
        index.postings = doc["postings"]
        index.doc_ids = doc["doc_ids"]
        index._locators = doc["locators"]
        index._files = doc["files"]
        index.skipped_docs = doc["skipped_docs"]
        return index


def find_documents(index: CorpusIndex, utterance: str) -> list[str]:
    """Ids of documents containing the complete utterance, canonically."""
    return [index.doc_ids[idx] for idx, _, _ in _find_matches(index, utterance)]


def _find_matches(index: CorpusIndex, utterance: str):
    """(doc_idx, original span, doc text) for each aligned occurrence."""
    needle = canonical_text(utterance)
    if not needle:
        return
    for doc_idx in index.candidate_docs(utterance):
        text = index.get_text(doc_idx)
        if text is None:
            index.skipped_docs += 1
            continue
        canonical, offsets = canonicalize(text)
        for pos in _aligned_find(canonical, needle):
            end = pos + len(needle)
            span = (offsets[pos], offsets[end - 1] + 1)
            yield doc_idx, span, text


def score_window(
    document: str, span: tuple[int, int], keywords: tuple[str, ...]
) -> tuple[float, tuple[str, ...], str, bool]:
    """Keyword coverage in the 500 original characters before or after a
    match. The matched utterance itself is excluded, so its own words never
    count as label evidence; the returned window text keeps the match for
    human review."""
    start = max(0, span[0] - WINDOW_CHARS)
    end = min(len(document), span[1] + WINDOW_CHARS)
    before = canonical_text(document[start : span[0]])
    after = canonical_text(document[span[1] : end])
    found = tuple(
        kw
        for kw in keywords
        if _aligned_find(before, canonical_text(kw))
        or _aligned_find(after, canonical_text(kw))
    )
    fraction = len(found) / len(keywords)
    needs_review = len(found) * REVIEW_DEN >= len(keywords) * REVIEW_NUM
    return fraction, found, document[start:end], needs_review


def scan_query(index: CorpusIndex, query: ContamQuery) -> list[ContamHit]:
    hits = []
    for doc_idx, span, text in _find_matches(index, query.utterance):
        fraction, found, window, needs_review = score_window(text, span, query.keywords)
        hits.append(
            ContamHit(
                document_id=index.doc_ids[doc_idx],
                span=span,
                keyword_fraction=fraction,
                keywords_found=found,
                window_text=window,
                needs_review=needs_review,
                task=query.task,
                query_source=query.source,
            )
        )
    return hits


@dataclass
class ContamReport:
    hits: list[ContamHit] = field(default_factory=list)
    queries_scanned: int = 0
    skipped_docs: int = 0

    def flagged(self) -> list[ContamHit]:
        return [h for h in self.hits if h.needs_review]

    def per_task(self) -> dict:
        """Rows matching the manual-review table: discovered turns and the
        documents to review per task, with correct/authentic left for
        hand-checking."""
        turns: dict[str, set] = {}
        docs: dict[str, set] = {}
        for hit in self.flagged():
            turns.setdefault(hit.task, set()).add(hit.query_source)
            docs.setdefault(hit.task, set()).add(hit.document_id)
        return {
            task: {
                "turns": len(sources),
                "documents_for_review": len(docs[task]),
                "correct": None,
                "authentic": None,
            }
            for task, sources in sorted(turns.items())
        }

    def to_json(self) -> dict:
        return {
            "tasks": self.per_task(),
            "queries_scanned": self.queries_scanned,
            "skipped_docs": self.skipped_docs,
            "hits": [
                {
                    "task": h.task,
                    "query_source": h.query_source,
                    "document_id": h.document_id,
                    "span": list(h.span),
                    "keyword_fraction": h.keyword_fraction,
                    "keywords_found": list(h.keywords_found),
                    "needs_review": h.needs_review,
                }
                for h in self.hits
            ],
        }

    def write_csv(self, path: str | Path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["task", "turns", "correct", "authentic"])
            for task, row in self.per_task().items():
                writer.writerow([task, row["turns"], "", ""])


def _hit_to_json(h: ContamHit) -> dict:
    return {
        "task": h.task,
        "query_source": h.query_source,
        "document_id": h.document_id,
        "span": list(h.span),
        "keyword_fraction": h.keyword_fraction,
        "keywords_found": list(h.keywords_found),
        "window_text": h.window_text,
        "needs_review": h.needs_review,
    }


def _hit_from_json(doc: dict) -> ContamHit:
    return ContamHit(
        document_id=doc["document_id"],
        span=(doc["span"][0], doc["span"][1]),
        keyword_fraction=doc["keyword_fraction"],
        keywords_found=tuple(doc["keywords_found"]),
        window_text=doc.get("window_text", ""),
        needs_review=doc["needs_review"],
        task=doc["task"],
        query_source=doc["query_source"],
    )


def scan(
    index: CorpusIndex,
    queries: Iterable[ContamQuery],
    progress_path: Optional[str | Path] = None,
) -> ContamReport:
    """Deterministic scan over all queries. With a progress path, completed
    query indices are checkpointed and skipped on rerun; fresh and resumed
    runs produce identical reports."""
    hits_by_query: dict[int, list[ContamHit]] = {}
    if progress_path is not None and Path(progress_path).exists():
        with open(progress_path, encoding="utf-8") as fh:
            for line in fh:
                entry = json.loads(line)
                hits_by_query[entry["query_index"]] = [
                    _hit_from_json(doc) for doc in entry["hits"]
                ]
    report = ContamReport()
    progress = open(progress_path, "a", encoding="utf-8") if progress_path else None
    try:
        for qi, query in enumerate(queries):
            report.queries_scanned += 1
            if qi in hits_by_query:
                continue
            hits = scan_query(index, query)
            hits_by_query[qi] = hits
            if progress is not None:
                progress.write(
                    json.dumps({"query_index": qi, "hits": [_hit_to_json(h) for h in hits]})
                    + "\n"
                )
                progress.flush()
    finally:
        if progress is not None:
            progress.close()
    for qi in sorted(hits_by_query):
        report.hits.extend(hits_by_query[qi])
    report.skipped_docs = index.skipped_docs
    return report
