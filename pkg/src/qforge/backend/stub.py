"""Deterministic in-process backend.

Implements every capability with fixed rules so pipeline behavior is
reproducible bit-for-bit on any machine, with no model downloads.  The
embedding scheme is hash-based and normative: any conforming stub, in any
language, must produce identical vectors.
"""

from __future__ import annotations

import re
import string

from ..textproc import split_sentences
from . import ALL_CAPABILITIES, AnswerResponse, GenerationResponse

EMBED_DIM = 64

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

# Question templates.  The answering rule parses these back out, so the two
# halves of the stub agree about what the "topic" of a question is.
_TEMPLATE_IN_CONTEXT = "What does the article say about {}?"
_TEMPLATE_GENERIC = "What is {}?"


def _fnv1a(data: bytes, h: int = _FNV_OFFSET) -> int:
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def _token_vector(token: str, cache: dict[str, tuple[float, ...]]) -> tuple[float, ...]:
    vec = cache.get(token)
    if vec is None:
        # Component i hashes the token bytes followed by the single byte i,
        # which is one extra FNV round on top of the shared token hash.
        base = _fnv1a(token.encode("utf-8"))
        vec = tuple(
            (((base ^ i) * _FNV_PRIME & _MASK64) % 2_000_001) / 1_000_000 - 1.0
            for i in range(EMBED_DIM)
        )
        cache[token] = vec
    return vec


def embed_text(text: str, cache: dict[str, tuple[float, ...]] | None = None) -> tuple[float, ...]:
    """The normative hash embedding: sum of token vectors, L2-normalized.

    Tokens are whitespace-split.  Raises ValueError for text with no tokens,
    which cannot be given a unit vector.
    """
    tokens = text.split()
    if not tokens:
        raise ValueError("cannot embed empty text")
    if cache is None:
        cache = {}
    acc = [0.0] * EMBED_DIM
    for token in tokens:
        vec = _token_vector(token, cache)
        for i in range(EMBED_DIM):
            acc[i] += vec[i]
    norm = sum(x * x for x in acc) ** 0.5
    if norm == 0.0:
        raise ValueError("embedding degenerated to the zero vector")
    return tuple(x / norm for x in acc)


def load_blocklist(path: str) -> frozenset[str]:
    """One lowercase word per line; blank lines ignored."""
    words = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            word = line.strip().lower()
            if word:
                words.add(word)
    return frozenset(words)


class StubBackend:
    """All seven capabilities, rule-driven and deterministic.

    blocklist: lowercase words scored 1.0 by the toxicity rule.
    coref_table: exact word replacements applied on word boundaries; absent
        table means coref is the identity function.
    """

    def __init__(
        self,
        blocklist: frozenset[str] = frozenset(),
        coref_table: dict[str, str] | None = None,
    ) -> None:
        self._blocklist = blocklist
        self._coref_table = dict(coref_table) if coref_table else {}
        self._coref_re = None
        if self._coref_table:
            keys = sorted(self._coref_table, key=lambda k: (-len(k), k))
            self._coref_re = re.compile(
                r"\b(?:" + "|".join(re.escape(k) for k in keys) + r")\b"
            )
        self._token_cache: dict[str, tuple[float, ...]] = {}

    def capabilities(self) -> tuple[str, ...]:
        return ALL_CAPABILITIES

    def embed(self, texts: list[str]) -> list[tuple[float, ...]]:
        return [embed_text(t, self._token_cache) for t in texts]

    def resolve_coref(self, text: str) -> str:
        if not text:
            raise ValueError("empty text")
        if self._coref_re is None:
            return text
        return self._coref_re.sub(lambda m: self._coref_table[m.group(0)], text)

    def generate_question(self, context: str, keyphrase: str) -> GenerationResponse:
        if not context or not keyphrase:
            raise ValueError("context and keyphrase must be non-empty")
        if keyphrase.lower() in context.lower():
            return GenerationResponse(question=_TEMPLATE_IN_CONTEXT.format(keyphrase))
        return GenerationResponse(question=_TEMPLATE_GENERIC.format(keyphrase))

    def answer(self, question: str, context: str) -> AnswerResponse:
        if not question or not context:
            raise ValueError("question and context must be non-empty")
        topic = self._question_topic(question)
        if topic:
            lowered = topic.lower()
            for span in split_sentences(context):
                if lowered in span.text.lower():
                    # start/end are byte offsets of the trimmed sentence, and
                    # the span already carries them relative to the context.
                    return AnswerResponse(
                        answer_text=span.text,
                        no_answer=False,
                        score=0.9,
                        start=span.start,
                        end=span.end,
                    )
        return AnswerResponse(answer_text="", no_answer=True, score=0.0)

    def toxicity(self, text: str) -> float:
        if not text:
            raise ValueError("empty text")
        for token in text.split():
            if token.lower().strip(string.punctuation) in self._blocklist:
                return 1.0
        return 0.0

    def summarize(self, text: str) -> str:
        if not text.strip():
            raise ValueError("empty text")
        spans = split_sentences(text)
        return spans[0].text

    def count_tokens(self, text: str) -> int:
        return len(text.split())

    @staticmethod
    def _question_topic(question: str) -> str:
        body = question.strip().rstrip("?").strip()
        for prefix in ("What does the article say about ", "What is "):
            if body.startswith(prefix):
                return body[len(prefix):]
        # Free-form questions: last "about" clause, else the whole body.
        marker = body.rfind(" about ")
        if marker >= 0:
            return body[marker + len(" about "):]
        return body
