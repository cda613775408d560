"""Language model backends: sampling, scoring, token counting.

The pipeline talks to one interface: sample completions for a prompt, score
an exact continuation string, count tokens.  Besides the HTTP client for a
real completion server, the module ships a deterministic hash-driven model
for offline runs and tests.  Continuations are scored verbatim; callers are
responsible for any leading separator they want included.
"""
from __future__ import annotations

import hashlib
import math
import random
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass

import requests

from .cache import RequestCache

DEFAULT_NUCLEUS_P = 0.8
DEFAULT_TEMPERATURE = 1.0
DEFAULT_MAX_NEW_TOKENS = 64
DEFAULT_STOP = ("\n",)


@dataclass(frozen=True)
class GenerationParams:
    nucleus_p: float = DEFAULT_NUCLEUS_P
    temperature: float = DEFAULT_TEMPERATURE
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS
    stop: tuple[str, ...] = DEFAULT_STOP
    n_samples: int = 1

    def __post_init__(self):
        if not 0.0 < self.nucleus_p <= 1.0:
            raise ValueError(f"nucleus_p must be in (0, 1], got {self.nucleus_p}")
        if self.temperature <= 0.0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.max_new_tokens < 1:
            raise ValueError(f"max_new_tokens must be >= 1, got {self.max_new_tokens}")
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")

    def to_json(self) -> dict:
        return {
            "nucleus_p": self.nucleus_p,
            "temperature": self.temperature,
            "max_new_tokens": self.max_new_tokens,
            "stop": list(self.stop),
            "n_samples": self.n_samples,
        }


@dataclass(frozen=True)
class Sample:
    """One completion; ``logprob`` is the model log-probability of ``text``."""

    text: str
    logprob: float


@dataclass(frozen=True)
class BackendDescriptor:
    name: str
    param_count: int
    context_tokens: int
    can_score: bool = True

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "param_count": self.param_count,
            "context_tokens": self.context_tokens,
            "can_score": self.can_score,
        }


class ScoringUnsupported(RuntimeError):
    """The configured backend cannot score continuations."""


class LMBackend(ABC):
    @abstractmethod
    def describe(self) -> BackendDescriptor:
        ...

    @abstractmethod
    def sample(self, prompt: str, params: GenerationParams, seed: int) -> list[Sample]:
        ...

    @abstractmethod
    def score(self, prompt: str, continuation: str) -> float:
        """log p(continuation | prompt), continuation taken verbatim."""

    @abstractmethod
    def count_tokens(self, text: str) -> int:
        ...


def softmax_scores(scores: dict[str, float]) -> dict[str, float]:
    """Normalize log scores into a probability distribution over the keys."""
    if not scores:
        raise ValueError("softmax over an empty score dict")
    peak = max(scores.values())
    exp = {k: math.exp(v - peak) for k, v in scores.items()}
    total = sum(exp.values())
    return {k: v / total for k, v in exp.items()}


def flops_for_tokens(param_count: int, n_tokens: int) -> int:
    """Forward-pass cost: two floating point operations per parameter per token."""
    return 2 * param_count * n_tokens


# --- deterministic hash-driven model ---------------------------------------

HASHLM_ALPHABET = "abcdefghijklmnopqrstuvwxyz 0123456789.\n"


class HashLM(LMBackend):
    """A fake but internally consistent character-level language model.

    The next-character distribution is derived from the SHA-256 state of the
    full preceding text, so scoring obeys the chain rule exactly:
    score(p, xy) == score(p, x) + score(p + x, y).  Sampling applies
    temperature and nucleus filtering on top of the same distributions.
    Tokens for counting purposes are whitespace words.
    """

    def __init__(
        self,
        name: str = "hashlm",
        param_count: int = 1_000_000,
        context_tokens: int = 2048,
        alphabet: str = HASHLM_ALPHABET,
        sharpness: int = 4,
    ):
        if len(set(alphabet)) != len(alphabet):
            raise ValueError("alphabet must not repeat characters")
        self._descriptor = BackendDescriptor(
            name=name, param_count=param_count, context_tokens=context_tokens
        )
        self.alphabet = alphabet
        self.sharpness = sharpness

    def describe(self) -> BackendDescriptor:
        return self._descriptor

    def count_tokens(self, text: str) -> int:
        return len(text.split())

    def _hasher(self, text: str):
        h = hashlib.sha256()
        h.update(text.encode("utf-8"))
        return h

    def _distribution(self, hasher) -> list[float]:
        rng = random.Random(hasher.digest())
        weights = [rng.random() ** self.sharpness + 1e-9 for _ in self.alphabet]
        total = sum(weights)
        return [w / total for w in weights]

    def score(self, prompt: str, continuation: str) -> float:
        h = self._hasher(prompt)
        logprob = 0.0
        for ch in continuation:
            probs = self._distribution(h)
            try:
                idx = self.alphabet.index(ch)
            except ValueError:
                raise ValueError(f"character {ch!r} is outside the model alphabet") from None
            logprob += math.log(probs[idx])
            h.update(ch.encode("utf-8"))
        return logprob

    def sample(self, prompt: str, params: GenerationParams, seed: int) -> list[Sample]:
        base = self._hasher(prompt).hexdigest()
        samples = []
        for i in range(params.n_samples):
            rng = random.Random(f"{base}:{seed}:{i}")
            h = self._hasher(prompt)
            chars: list[str] = []
            for _ in range(params.max_new_tokens):
                probs = self._distribution(h)
                probs = _nucleus_filter(_temper(probs, params.temperature), params.nucleus_p)
                ch = self._draw(rng, probs)
                chars.append(ch)
                h.update(ch.encode("utf-8"))
                if _hit_stop(chars, params.stop):
                    break
            text = _strip_stop("".join(chars), params.stop)
            samples.append(Sample(text=text, logprob=self.score(prompt, text)))
        return samples

    def _draw(self, rng: random.Random, probs: list[float]) -> str:
        x = rng.random()
        acc = 0.0
        for ch, p in zip(self.alphabet, probs):
            acc += p
            if x <= acc:
                return ch
        return self.alphabet[-1]


def _temper(probs: list[float], temperature: float) -> list[float]:
    if temperature == 1.0:
        return probs
    powered = [p ** (1.0 / temperature) for p in probs]
    total = sum(powered)
    return [p / total for p in powered]


def _nucleus_filter(probs: list[float], p: float) -> list[float]:
    """Keep the smallest probability mass >= p, zero the rest, renormalize."""
    if p >= 1.0:
        return probs
    order = sorted(range(len(probs)), key=lambda i: -probs[i])
    keep = []
    acc = 0.0
    for i in order:
        keep.append(i)
        acc += probs[i]
        if acc >= p:
            break
    kept = set(keep)
    filtered = [probs[i] if i in kept else 0.0 for i in range(len(probs))]
    total = sum(filtered)
    return [v / total for v in filtered]


def _hit_stop(chars: list[str], stop: tuple[str, ...]) -> bool:
    tail = "".join(chars[-max((len(s) for s in stop), default=0):]) if stop else ""
    return any(s and tail.endswith(s) for s in stop)


def _strip_stop(text: str, stop: tuple[str, ...]) -> str:
    for s in sorted(stop, key=len, reverse=True):
        if s and text.endswith(s):
            return text[: -len(s)]
    return text


# --- configurable test double ----------------------------------------------

def _to_alphabet(text: str) -> str:
    return "".join(ch if ch in HASHLM_ALPHABET else " " for ch in text.lower())


def extractive_completion(prompt: str, seed: int, index: int) -> str:
    """Pick a short word span from the prompt's final evidence line.

    Falls back to the final question line for closed-book prompts.  The span
    choice is a pure function of (prompt, seed, index), so runs are
    repeatable and different paragraphs yield different answers.
    """
    source = ""
    for line in reversed(prompt.split("\n")):
        if line.startswith("Evidence: "):
            source = line[len("Evidence: "):]
            break
        if not source and line.startswith("Question: "):
            source = line[len("Question: "):]
    words = source.split()
    if not words:
        return "unknown"
    digest = hashlib.sha256(f"{seed}:{index}:{prompt}".encode("utf-8")).digest()
    start = digest[0] % len(words)
    length = 1 + digest[1] % min(3, len(words) - start)
    return " ".join(words[start:start + length])


class MockBackend(LMBackend):
    """Deterministic backend for tests and offline pipeline runs.

    Generation produces extractive-looking spans via ``completion_fn`` while
    scores come from an internal :class:`HashLM` (chain-rule consistent), so
    reranking math behaves like it would against a real model.  Explicit
    ``score_table``/``sample_table`` entries override both, letting unit
    tests pin exact numbers.  Records every call for assertions.
    """

    def __init__(
        self,
        name: str = "mock",
        param_count: int = 1_000_000,
        context_tokens: int = 2048,
        completion_fn=extractive_completion,
        score_table: dict[tuple[str, str], float] | None = None,
        sample_table: dict[str, list[Sample]] | None = None,
        can_score: bool = True,
    ):
        self._descriptor = BackendDescriptor(
            name=name, param_count=param_count,
            context_tokens=context_tokens, can_score=can_score,
        )
        self._hash = HashLM(name=name, param_count=param_count, context_tokens=context_tokens)
        self.completion_fn = completion_fn
        self.score_table = dict(score_table or {})
        self.sample_table = dict(sample_table or {})
        self.calls: list[dict] = []
        self._lock = threading.Lock()

    def describe(self) -> BackendDescriptor:
        return self._descriptor

    def count_tokens(self, text: str) -> int:
        return len(text.split())

    def _record(self, entry: dict) -> None:
        with self._lock:
            self.calls.append(entry)

    def sample(self, prompt: str, params: GenerationParams, seed: int) -> list[Sample]:
        self._record({"method": "sample", "prompt": prompt, "params": params.to_json(), "seed": seed})
        if prompt in self.sample_table:
            return list(self.sample_table[prompt])[: params.n_samples]
        samples = []
        for i in range(params.n_samples):
            text = self.completion_fn(prompt, seed, i)
            samples.append(Sample(text=text, logprob=self.score_quiet(prompt, text)))
        return samples

    def score(self, prompt: str, continuation: str) -> float:
        if not self._descriptor.can_score:
            raise ScoringUnsupported(f"backend {self._descriptor.name!r} cannot score")
        self._record({"method": "score", "prompt": prompt, "continuation": continuation})
        return self.score_quiet(prompt, continuation)

    def score_quiet(self, prompt: str, continuation: str) -> float:
        key = (prompt, continuation)
        if key in self.score_table:
            return self.score_table[key]
        # per-character normalization keeps arbitrary bytes inside the hash
        # model's alphabet and commutes with concatenation, so the chain rule
        # carries over from HashLM
        return self._hash.score(_to_alphabet(prompt), _to_alphabet(continuation))


class HTTPBackend(LMBackend):
    """Client for a completion server.

    Endpoints: POST /v1/complete, /v1/score, /v1/count_tokens; GET /v1/model.
    """

    def __init__(self, base_url: str, timeout: float = 60.0, session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.session = session or requests.Session()
        self._descriptor: BackendDescriptor | None = None

    def describe(self) -> BackendDescriptor:
        if self._descriptor is None:
            resp = self.session.get(f"{self.base_url}/v1/model", timeout=self.timeout)
            resp.raise_for_status()
            obj = resp.json()
            self._descriptor = BackendDescriptor(
                name=obj["name"],
                param_count=int(obj["param_count"]),
                context_tokens=int(obj["context_tokens"]),
                can_score=bool(obj.get("can_score", True)),
            )
        return self._descriptor

    def _post(self, path: str, payload: dict) -> dict:
        resp = self.session.post(f"{self.base_url}{path}", json=payload, timeout=self.timeout)
        resp.raise_for_status()
        return resp.json()

    def sample(self, prompt: str, params: GenerationParams, seed: int) -> list[Sample]:
        obj = self._post("/v1/complete", {
            "prompt": prompt,
            "n": params.n_samples,
            "nucleus_p": params.nucleus_p,
            "temperature": params.temperature,
            "max_new_tokens": params.max_new_tokens,
            "stop": list(params.stop),
            "seed": seed,
        })
        return [Sample(text=s["text"], logprob=float(s["logprob"])) for s in obj["samples"]]

    def score(self, prompt: str, continuation: str) -> float:
        if not self.describe().can_score:
            raise ScoringUnsupported(f"backend {self.describe().name!r} cannot score")
        obj = self._post("/v1/score", {"prompt": prompt, "continuation": continuation})
        return float(obj["logprob"])

    def count_tokens(self, text: str) -> int:
        obj = self._post("/v1/count_tokens", {"text": text})
        return int(obj["tokens"])


class CachedBackend(LMBackend):
    """Content-addressed cache in front of any backend (namespace ``lm``).

    ``identity`` distinguishes cache entries of different models behind the
    same client class; pass something stable like the server URL or model
    name.
    """

    def __init__(self, inner: LMBackend, cache: RequestCache, offline: bool = False,
                 identity: str | None = None):
        self.inner = inner
        self.cache = cache
        self.offline = offline
        self.identity = identity if identity is not None else type(inner).__name__

    def describe(self) -> BackendDescriptor:
        request = {"op": "describe", "backend": self.identity}
        response = self.cache.get_or_fetch(
            "lm", request, lambda: self.inner.describe().to_json(), offline=self.offline
        )
        return BackendDescriptor(
            name=response["name"],
            param_count=int(response["param_count"]),
            context_tokens=int(response["context_tokens"]),
            can_score=bool(response["can_score"]),
        )

    def sample(self, prompt: str, params: GenerationParams, seed: int) -> list[Sample]:
        request = {
            "op": "sample", "backend": self.identity,
            "prompt": prompt, "params": params.to_json(), "seed": seed,
        }
        response = self.cache.get_or_fetch(
            "lm", request,
            lambda: [{"text": s.text, "logprob": s.logprob} for s in self.inner.sample(prompt, params, seed)],
            offline=self.offline,
        )
        return [Sample(text=s["text"], logprob=float(s["logprob"])) for s in response]

    def score(self, prompt: str, continuation: str) -> float:
        request = {
            "op": "score", "backend": self.identity,
            "prompt": prompt, "continuation": continuation,
        }
        response = self.cache.get_or_fetch(
            "lm", request, lambda: self.inner.score(prompt, continuation), offline=self.offline
        )
        return float(response)

    def count_tokens(self, text: str) -> int:
        request = {"op": "count_tokens", "backend": self.identity, "text": text}
        response = self.cache.get_or_fetch(
            "lm", request, lambda: self.inner.count_tokens(text), offline=self.offline
        )
        return int(response)
