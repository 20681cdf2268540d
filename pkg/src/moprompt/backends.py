"""Clients for the two services the evolutionary loop calls out to: a text
generation model and an emotion classifier.

Live clients speak HTTP (an Ollama-style /api/generate endpoint for
generation, a hosted-inference style endpoint for classification). Mock
implementations are pure functions of their inputs plus a seed, so offline
runs are fully reproducible and still expose a non-trivial fitness
landscape: the mock generator echoes prompt words into its stories and the
mock classifier counts emotion keywords.
"""

from __future__ import annotations

import logging
import math
import random
import re
import threading
import time
from dataclasses import dataclass
from typing import Protocol

import requests

from .domain import EmotionLabel, EmotionScores, GeneratedText

logger = logging.getLogger(__name__)

# token budget of the emotion evaluator; inputs are truncated to fit
CLASSIFIER_TOKEN_BUDGET = 512
# conservative subword estimate per whitespace token
SUBWORDS_PER_WORD = 1.3

LLM_URL_ENV = "EMO_LLM_URL"
CLASSIFIER_URL_ENV = "EMO_CLF_URL"
CLASSIFIER_TOKEN_ENV = "EMO_CLF_TOKEN"


class BackendError(RuntimeError):
    """Raised when a backend call failed after exhausting its retries."""


@dataclass(frozen=True)
class GenerationRequest:
    """One completion request, carrying the decoding parameters the wire
    protocol needs."""

    prompt_body: str
    system: str = ""
    model_name: str = "llama2"
    temperature: float = 0.7
    context_window: int = 512
    max_output_tokens: int = 256
    stop_sequences: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.context_window <= 0 or self.max_output_tokens <= 0:
            raise ValueError("token limits must be positive")


@dataclass(frozen=True)
class BackendPolicy:
    """Retry and concurrency behavior for a backend client."""

    timeout: float = 30.0
    max_retries: int = 2
    backoff: float = 0.5
    max_concurrent_requests: int = 4

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.backoff < 0:
            raise ValueError("backoff must be >= 0")
        if self.max_concurrent_requests < 1:
            raise ValueError("max_concurrent_requests must be >= 1")


@dataclass(frozen=True)
class LlmSettings:
    """Decoding defaults applied to every request a run issues."""

    model: str = "llama2"
    temperature: float = 0.7
    context_window: int = 512
    max_output_tokens: int = 256


class TextGenerationBackend(Protocol):
    def complete(self, request: GenerationRequest, policy: BackendPolicy | None = None) -> str: ...


class EmotionClassifierBackend(Protocol):
    def classify_emotions(
        self, text: GeneratedText, policy: BackendPolicy | None = None
    ) -> EmotionScores: ...


@dataclass(frozen=True)
class Backends:
    """The generator/classifier pair a run is wired to."""

    generator: TextGenerationBackend
    classifier: EmotionClassifierBackend


def estimate_tokens(text: str) -> int:
    """Conservative subword count estimate from whitespace tokens."""
    return math.ceil(len(text.split()) * SUBWORDS_PER_WORD)


def truncate_to_token_budget(text: str, budget: int = CLASSIFIER_TOKEN_BUDGET) -> str:
    """Drop trailing words until the estimated subword count fits the budget."""
    words = text.split()
    limit = int(budget / SUBWORDS_PER_WORD)
    if len(words) <= limit:
        return text
    return " ".join(words[:limit])


def _call_with_retries(policy: BackendPolicy, attempt, describe: str):
    delay = policy.backoff
    last: Exception | None = None
    for attempt_index in range(policy.max_retries + 1):
        try:
            return attempt()
        except (requests.RequestException, ValueError, KeyError, TypeError) as exc:
            last = exc
            if attempt_index < policy.max_retries:
                logger.debug("%s failed (attempt %d): %s", describe, attempt_index + 1, exc)
                if delay > 0:
                    time.sleep(delay)
                delay *= 2
    raise BackendError(f"{describe} failed after {policy.max_retries + 1} attempts: {last}") from last


class OllamaClient:
    """Text generation over an Ollama-compatible /api/generate endpoint.

    Sends the system instruction and prompt per request rather than baking
    them into a server-side model definition, so one running model serves
    every operator.
    """

    def __init__(self, base_url: str, policy: BackendPolicy | None = None):
        self.base_url = base_url.rstrip("/")
        self.policy = policy or BackendPolicy()
        self._slots = threading.BoundedSemaphore(self.policy.max_concurrent_requests)

    def complete(self, request: GenerationRequest, policy: BackendPolicy | None = None) -> str:
        policy = policy or self.policy
        payload = {
            "model": request.model_name,
            "prompt": request.prompt_body,
            "system": request.system,
            "stream": False,
            "options": {
                "temperature": request.temperature,
                "num_ctx": request.context_window,
                "num_predict": request.max_output_tokens,
            },
        }
        if request.stop_sequences:
            payload["options"]["stop"] = list(request.stop_sequences)

        def attempt() -> str:
            with self._slots:
                response = requests.post(
                    f"{self.base_url}/api/generate", json=payload, timeout=policy.timeout
                )
            response.raise_for_status()
            body = response.json()
            if "response" not in body:
                raise ValueError(f"no 'response' field in reply: {sorted(body)}")
            return str(body["response"])

        return _call_with_retries(policy, attempt, "text generation")


class HttpEmotionClassifier:
    """Emotion scoring over a hosted-inference style JSON endpoint.

    POSTs {"inputs": "<text>"} and expects a list (possibly nested one deep)
    of {"label": ..., "score": ...} objects covering all six emotions.
    Labels are matched by name, case-insensitively, in any order.
    """

    def __init__(
        self,
        base_url: str,
        token: str | None = None,
        policy: BackendPolicy | None = None,
    ):
        self.base_url = base_url
        self.token = token
        self.policy = policy or BackendPolicy()
        self._slots = threading.BoundedSemaphore(self.policy.max_concurrent_requests)

    def classify_emotions(
        self, text: GeneratedText, policy: BackendPolicy | None = None
    ) -> EmotionScores:
        policy = policy or self.policy
        payload = {"inputs": truncate_to_token_budget(text.text)}
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"

        def attempt() -> EmotionScores:
            with self._slots:
                response = requests.post(
                    self.base_url, json=payload, headers=headers, timeout=policy.timeout
                )
            response.raise_for_status()
            return parse_classifier_response(response.json())

        return _call_with_retries(policy, attempt, "emotion classification")


def parse_classifier_response(body) -> EmotionScores:
    """Turn the service's label/score list into EmotionScores.

    Accepts either a flat list of {"label", "score"} objects or the common
    singly-nested variant. A missing emotion is a parse failure.
    """
    entries = body
    if isinstance(entries, list) and entries and isinstance(entries[0], list):
        entries = entries[0]
    if not isinstance(entries, list):
        raise ValueError(f"expected a list of label/score objects, got {type(body).__name__}")
    scores: dict[EmotionLabel, float] = {}
    for entry in entries:
        label = EmotionLabel.parse(str(entry["label"]))
        scores[label] = float(entry["score"])
    return EmotionScores(scores)


# Keyword lexicons behind the mock classifier. One list per emotion; the
# label's own name is always included so evolved prompts can hit it directly.
DEFAULT_LEXICONS: dict[EmotionLabel, tuple[str, ...]] = {
    EmotionLabel.SADNESS: (
        "sadness", "sorrow", "grief", "tears", "mourning", "despair", "loss", "weeping",
    ),
    EmotionLabel.JOY: (
        "joy", "delight", "laughter", "cheerful", "bliss", "celebrate", "smile", "sunshine",
    ),
    EmotionLabel.LOVE: (
        "love", "tender", "devotion", "embrace", "darling", "affection", "beloved", "romance",
    ),
    EmotionLabel.ANGER: (
        "anger", "rage", "fury", "wrath", "seething", "bitter", "scorn", "vengeance",
    ),
    EmotionLabel.FEAR: (
        "fear", "dread", "terror", "shiver", "haunted", "panic", "ominous", "afraid",
    ),
    EmotionLabel.SURPRISE: (
        "surprise", "astonished", "sudden", "unexpected", "twist", "startled", "gasp", "marvel",
    ),
}


def load_lexicons(path) -> dict[EmotionLabel, tuple[str, ...]]:
    """Read keyword lexicons from a JSON file mapping label names to word
    lists. Labels not mentioned keep their defaults."""
    import json

    with open(path, encoding="utf-8") as handle:
        raw = json.load(handle)
    lexicons = dict(DEFAULT_LEXICONS)
    for name, words in raw.items():
        label = EmotionLabel.parse(name)
        lexicons[label] = tuple(str(w) for w in words)
    return lexicons


class MockEmotionClassifier:
    """Deterministic keyword-count classifier.

    Each emotion's raw score is 1 plus the number of occurrences of its
    lexicon words in the text; raw scores are normalized to sum to 1. Empty
    text therefore scores uniform 1/6.
    """

    def __init__(self, lexicons: dict[EmotionLabel, tuple[str, ...]] | None = None):
        self.lexicons = dict(lexicons) if lexicons is not None else dict(DEFAULT_LEXICONS)
        for label in EmotionLabel:
            self.lexicons.setdefault(label, ())
        self._patterns = {
            label: [re.compile(r"\b" + re.escape(word.lower()) + r"\b") for word in words]
            for label, words in self.lexicons.items()
        }

    def classify_emotions(
        self, text: GeneratedText, policy: BackendPolicy | None = None
    ) -> EmotionScores:
        lowered = truncate_to_token_budget(text.text).lower()
        raw = {}
        for label in EmotionLabel:
            count = sum(len(pattern.findall(lowered)) for pattern in self._patterns[label])
            raw[label] = 1.0 + count
        total = sum(raw.values())
        return EmotionScores({label: raw[label] / total for label in EmotionLabel})


# Fixed wording for mock stories. Deliberately disjoint from every default
# lexicon so scaffolding never leaks into the scores.
_STORY_OPENERS = (
    "Once upon a time",
    "In a quiet town",
    "Long ago",
    "One evening",
    "At the edge of the village",
    "Under a pale sky",
)
_STORY_CLOSERS = (
    "Nobody spoke of it again",
    "The lanterns burned until morning",
    "And so the season turned",
    "The road went on without them",
    "That was how it ended",
)
_NEUTRAL_WORDS = (
    "river", "lantern", "letter", "garden", "harbor", "window",
    "winter", "bridge", "orchard", "clock", "mirror", "train",
)
_PROMPT_STOPWORDS = {
    "a", "an", "the", "of", "to", "in", "on", "and", "or",
    "with", "about", "that", "this", "is", "for", "it", "its",
}

_WORD_RE = re.compile(r"[a-zA-Z]+")
_MOCK_MAX_PROMPT_TOKENS = 24


def _content_words(text: str) -> list[str]:
    words = [w.lower() for w in _WORD_RE.findall(text)]
    return [w for w in words if len(w) >= 3 and w not in _PROMPT_STOPWORDS]


def _injection_pool() -> tuple[str, ...]:
    pool: list[str] = []
    for label in EmotionLabel:
        pool.extend(DEFAULT_LEXICONS[label])
    pool.extend(_NEUTRAL_WORDS)
    return tuple(pool)


_INJECTION_POOL = _injection_pool()


class MockTextGenerator:
    """Seeded stand-in for the live model.

    The reply is a pure function of (system, prompt body, seed). The request
    body decides the task: prompt-combination requests merge the two quoted
    parent prompts, prompt-rewrite requests edit the embedded prompt and
    inject a word from a fixed pool, and anything else is treated as a story
    request whose reply echoes the prompt's content words. Replies are never
    empty.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed

    def complete(self, request: GenerationRequest, policy: BackendPolicy | None = None) -> str:
        rng = random.Random(f"{self.seed}|{request.system}|{request.prompt_body}")
        body = request.prompt_body
        if "Mutation Prompt:" in body:
            return self._rewrite(body, rng)
        if "One prompt is:" in body:
            return self._merge(body, rng)
        return self._story(body, rng)

    def _merge(self, body: str, rng: random.Random) -> str:
        quoted = re.findall(r'"([^"]*)"', body)
        parent_a = quoted[0] if quoted else ""
        parent_b = quoted[1] if len(quoted) > 1 else parent_a
        merged: list[str] = []
        for word in parent_a.split() + parent_b.split():
            lowered = word.lower().strip('"')
            if lowered and lowered not in merged and rng.random() < 0.9:
                merged.append(lowered)
        if not merged:
            merged = ["write", "a", "short", "story"]
        merged = _cap_tokens(merged, rng)
        return " ".join(merged)

    def _rewrite(self, body: str, rng: random.Random) -> str:
        targets = re.findall(r"(?m)^Prompt:\s*(.*)$", body)
        target = targets[-1].strip() if targets else "write a short story"
        tokens = [w.strip('"') for w in target.split() if w.strip('"')]
        if not tokens:
            tokens = ["write", "a", "short", "story"]
        if len(tokens) > 3 and rng.random() < 0.2:
            tokens.pop(rng.randrange(len(tokens)))
        injected = rng.choice(_INJECTION_POOL)
        tokens.insert(rng.randrange(len(tokens) + 1), injected)
        tokens = _cap_tokens(tokens, rng)
        return " ".join(tokens)

    def _story(self, body: str, rng: random.Random) -> str:
        words = _content_words(body)
        opener = rng.choice(_STORY_OPENERS)
        closer = rng.choice(_STORY_CLOSERS)
        filler = rng.choice(_NEUTRAL_WORDS)
        if words:
            middle = ", ".join(words)
            return (
                f"{opener}, the telling spoke of {middle}. "
                f"A {filler} stood witness through it all. {closer}."
            )
        return f"{opener}, a {filler} waited alone. {closer}."


def _cap_tokens(tokens: list[str], rng: random.Random) -> list[str]:
    if len(tokens) <= _MOCK_MAX_PROMPT_TOKENS:
        return tokens
    keep = sorted(rng.sample(range(len(tokens)), _MOCK_MAX_PROMPT_TOKENS))
    return [tokens[i] for i in keep]
