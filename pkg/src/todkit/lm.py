"""Uniform language-model access: top-p sampling with logprobs, continuation
scoring, and text embedding.

Two implementations share one interface so a prompted base model and a
fine-tuned model are interchangeable behind a config change:

* ``HTTPLMClient`` talks to a completions-style HTTP endpoint that exposes
  logprobs and echo scoring.
* ``ScriptedLM`` is a fully deterministic mock driven by matching rules; it
  backs the test suite and offline demos.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np

DEFAULT_EMBED_DIM = 256


class LMError(Exception):
    """Base class for model-access failures."""


class LMTransportError(LMError):
    """Endpoint unreachable, timed out, or returned a 5xx; retryable."""


class ContextOverflowError(LMError):
    """Prompt exceeded the model context budget; not retryable."""


@dataclass(frozen=True)
class SampledCompletion:
    text: str
    total_logprob: float
    token_count: int


@dataclass(frozen=True)
class SamplingConfig:
    """Decoding parameters. The defaults (k=10, top_p=0.9, temperature=1.0)
    are config, not verified constants."""

    num_samples: int = 10
    top_p: float = 0.9
    max_tokens: int = 128
    stop_sequences: tuple[str, ...] = ("\n",)
    temperature: float = 1.0
    seed: Optional[int] = None

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if not (0.0 < self.top_p <= 1.0):
            raise ValueError("top_p must be in (0, 1]")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be > 0")


# temperature low enough that the adjusted distribution is argmax in floats
GREEDY = SamplingConfig(num_samples=1, top_p=1.0, temperature=1e-6)


class LMClient(Protocol):
    def sample(self, prompt: str, cfg: SamplingConfig) -> list[SampledCompletion]: ...

    def score(self, prefix: str, continuation: str) -> float: ...

    def embed(self, text: str) -> np.ndarray: ...


def _tokens(text: str) -> list[str]:
    return text.split()


def _stable_hash(*parts: str) -> int:
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def hash_embedding(text: str, dim: int = DEFAULT_EMBED_DIM) -> np.ndarray:
    """Deterministic bag-of-tokens embedding: tokens hash to buckets, counts
    are L2-normalized. Disjoint token sets map to orthogonal vectors when
    their buckets do not collide."""
    vec = np.zeros(dim, dtype=np.float64)
    for token in re.findall(r"[a-z0-9]+", text.lower()):
        vec[_stable_hash("emb", token) % dim] += 1.0
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return vec


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 1.0
    return 1.0 - float(np.dot(a, b)) / (na * nb)


@dataclass
class ScriptRule:
    """One matcher with its completion distribution. Exactly one of `exact`,
    `contains`, `regex` should be set; probabilities are normalized."""

    completions: dict[str, float]
    exact: Optional[str] = None
    contains: Optional[str] = None
    regex: Optional[str] = None

    def matches(self, prompt: str) -> bool:
        if self.exact is not None:
            return prompt == self.exact
        if self.contains is not None:
            return self.contains in prompt
        if self.regex is not None:
            return re.search(self.regex, prompt) is not None
        return True


class ScriptedLM:
    """Deterministic scripted language model.

    Sampling draws from the first matching rule's distribution after applying
    temperature and top-p; reported logprobs are the raw scripted
    probabilities, so `score` agrees with `total_logprob`. All randomness is
    derived from (seed, prompt), making runs reproducible regardless of call
    order or concurrency.
    """

    def __init__(
        self,
        rules: Sequence[ScriptRule] = (),
        seed: int = 0,
        vocab_size: Optional[int] = None,
        embed_dim: int = DEFAULT_EMBED_DIM,
        default_completions: Optional[dict[str, float]] = None,
    ):
        self.rules = list(rules)
        self.seed = seed
        self.vocab_size = vocab_size
        self.embed_dim = embed_dim
        self.default_completions = dict(default_completions or {"": 1.0})
        self.calls: list[tuple[str, str]] = []  # (kind, prompt) audit log

    @staticmethod
    def from_file(path: str | Path) -> "ScriptedLM":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        rules = [
            ScriptRule(
                completions={str(k): float(v) for k, v in r["completions"].items()},
                exact=r.get("exact"),
                contains=r.get("contains"),
                regex=r.get("regex"),
            )
            for r in doc.get("rules", [])
        ]
        return ScriptedLM(
            rules=rules,
            seed=int(doc.get("seed", 0)),
            vocab_size=doc.get("vocab_size"),
            embed_dim=int(doc.get("embed_dim", DEFAULT_EMBED_DIM)),
            default_completions=doc.get("default_completions"),
        )

    def _rule_completions(self, prompt: str) -> Optional[dict[str, float]]:
        """Raw (unnormalized) completion probabilities of the first matching
        rule; these are treated as true probabilities, so a rule may carry
        less than full mass."""
        for rule in self.rules:
            if rule.matches(prompt):
                dist = {t: p for t, p in rule.completions.items() if p > 0}
                return dist or None
        return None

    def sample(self, prompt: str, cfg: SamplingConfig) -> list[SampledCompletion]:
        self.calls.append(("sample", prompt))
        raw = self._rule_completions(prompt) or dict(self.default_completions)
        # stop-sequence truncation, merging mass of texts that collapse
        truncated: dict[str, float] = {}
        for text, p in raw.items():
            cut = text
            for stop in cfg.stop_sequences:
                idx = cut.find(stop)
                if idx != -1:
                    cut = cut[:idx]
            truncated[cut] = truncated.get(cut, 0.0) + p

        # drawing weights: temperature then nucleus filtering, in log space
        items = sorted(truncated.items(), key=lambda kv: (-kv[1], kv[0]))
        logits = np.array([math.log(p) for _, p in items]) / cfg.temperature
        logits -= logits.max()
        probs = np.exp(logits)
        probs /= probs.sum()
        cum = np.cumsum(probs)
        keep = int(np.searchsorted(cum, cfg.top_p, side="left")) + 1
        kept = items[:keep]
        kept_probs = probs[:keep] / probs[:keep].sum()

        seed = cfg.seed if cfg.seed is not None else self.seed
        rng = random.Random(_stable_hash("sample", str(seed), prompt, str(cfg.num_samples)))
        out = []
        for _ in range(cfg.num_samples):
            r = rng.random()
            acc = 0.0
            chosen = kept[-1][0]
            for (text, _), p in zip(kept, kept_probs):
                acc += p
                if r <= acc:
                    chosen = text
                    break
            out.append(
                SampledCompletion(
                    text=chosen,
                    total_logprob=math.log(truncated[chosen]),
                    token_count=len(_tokens(chosen)),
                )
            )
        return out

    def score(self, prefix: str, continuation: str) -> float:
        self.calls.append(("score", prefix))
        if continuation == "":
            return 0.0
        dist = self._rule_completions(prefix)
        if dist is not None and continuation in dist:
            return math.log(dist[continuation])
        if self.vocab_size is not None:
            return -len(_tokens(continuation)) * math.log(self.vocab_size)
        # deterministic pseudo-random fallback, strictly negative and finite
        h = _stable_hash("score", prefix, continuation)
        return -max(1, len(_tokens(continuation))) * (1.0 + (h % 997) / 997.0)

    def embed(self, text: str) -> np.ndarray:
        self.calls.append(("embed", text))
        return hash_embedding(text, self.embed_dim)


class HTTPLMClient:
    """Client for a completions-style HTTP endpoint.

    Scoring prefers a single echo request using text offsets to isolate the
    continuation tokens; when the boundary falls inside a token it falls back
    to two-request subtraction, which can differ at token boundaries.
    """

    def __init__(
        self,
        base_url: str,
        model: str = "",
        auth_token: str = "",
        embed_model: str = "",
        embed_dim: Optional[int] = None,
        timeout: float = 60.0,
        max_attempts: int = 5,
        backoff: float = 0.25,
        max_in_flight: int = 4,
        transport=None,
    ):
        import httpx

        self.base_url = base_url.rstrip("/")
        self.model = model
        self.embed_model = embed_model or model
        self.embed_dim = embed_dim
        self.max_attempts = max_attempts
        self.backoff = backoff
        self._sem = threading.Semaphore(max_in_flight)
        headers = {"Authorization": f"Bearer {auth_token}"} if auth_token else {}
        self._http = httpx.Client(
            base_url=self.base_url, timeout=timeout, headers=headers, transport=transport
        )

    def _post(self, path: str, payload: dict) -> dict:
        import httpx

        last: Exception | None = None
        for attempt in range(self.max_attempts):
            try:
                with self._sem:
                    resp = self._http.post(path, json=payload)
            except httpx.HTTPError as exc:
                last = LMTransportError(f"POST {path}: {exc}")
            else:
                if resp.status_code >= 500:
                    last = LMTransportError(f"POST {path}: HTTP {resp.status_code}")
                elif resp.status_code >= 400:
                    detail = resp.text[:500]
                    if "context" in detail.lower() and "length" in detail.lower():
                        raise ContextOverflowError(detail)
                    raise LMError(f"POST {path}: HTTP {resp.status_code}: {detail}")
                else:
                    return resp.json()
            if attempt + 1 < self.max_attempts:
                time.sleep(self.backoff * (2**attempt))
        raise last if last is not None else LMTransportError(f"POST {path}: no attempts")

    def sample(self, prompt: str, cfg: SamplingConfig) -> list[SampledCompletion]:
        payload = {
            "model": self.model,
            "prompt": prompt,
            "n": cfg.num_samples,
            "top_p": cfg.top_p,
            "max_tokens": cfg.max_tokens,
            "temperature": cfg.temperature,
            "stop": list(cfg.stop_sequences),
            "logprobs": 0,
        }
        if cfg.seed is not None:
            payload["seed"] = cfg.seed
        doc = self._post("/completions", payload)
        out = []
        for choice in doc.get("choices", []):
            token_logprobs = (choice.get("logprobs") or {}).get("token_logprobs") or []
            logprobs = [lp for lp in token_logprobs if lp is not None]
            out.append(
                SampledCompletion(
                    text=choice.get("text", ""),
                    total_logprob=float(sum(logprobs)),
                    token_count=len(token_logprobs),
                )
            )
        if len(out) != cfg.num_samples:
            raise LMError(f"endpoint returned {len(out)} completions, wanted {cfg.num_samples}")
        return out

    def _echo_logprobs(self, text: str) -> dict:
        doc = self._post(
            "/completions",
            {
                "model": self.model,
                "prompt": text,
                "max_tokens": 0,
                "echo": True,
                "logprobs": 0,
            },
        )
        return doc["choices"][0]["logprobs"]

    def score(self, prefix: str, continuation: str) -> float:
        if continuation == "":
            return 0.0
        lp = self._echo_logprobs(prefix + continuation)
        offsets = lp.get("text_offset")
        token_logprobs = lp.get("token_logprobs") or []
        if offsets and len(prefix) in offsets:
            start = offsets.index(len(prefix))
            return float(sum(l for l in token_logprobs[start:] if l is not None))
        # boundary falls inside a token: two-request subtraction
        full = sum(l for l in token_logprobs if l is not None)
        prefix_lp = self._echo_logprobs(prefix)
        prefix_sum = sum(l for l in (prefix_lp.get("token_logprobs") or []) if l is not None)
        return float(full - prefix_sum)

    def embed(self, text: str) -> np.ndarray:
        doc = self._post("/embeddings", {"model": self.embed_model, "input": [text]})
        vec = np.asarray(doc["data"][0]["embedding"], dtype=np.float64)
        if self.embed_dim is not None and vec.shape[0] != self.embed_dim:
            raise LMError(f"embedding dim {vec.shape[0]} != configured {self.embed_dim}")
        return vec


class SentenceTransformerEmbedder:
    """Optional local embedding backend (requires the `embeddings` extra)."""

    def __init__(self, model_name: str = "sentence-transformers/all-mpnet-base-v2"):
        from sentence_transformers import SentenceTransformer

        self._model = SentenceTransformer(model_name)

    def embed(self, text: str) -> np.ndarray:
        return np.asarray(self._model.encode([text])[0], dtype=np.float64)
