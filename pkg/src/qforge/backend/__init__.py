"""Model-inference backends behind one wire protocol.

Every model call the engine makes (embed, coref, question generation,
extractive QA, toxicity, summarize, count-tokens) goes through a backend
object.  Two implementations ship here: a deterministic in-process stub that
needs no models, and an HTTP client for protocol-v1 servers.  The client
validates every server invariant, so a non-extractive answer can never
reach the pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

ALL_CAPABILITIES = (
    "embed",
    "coref",
    "generate",
    "answer",
    "toxicity",
    "summarize",
    "count_tokens",
)


class BackendError(Exception):
    """Base class for backend failures."""


class BackendUnavailable(BackendError):
    """Transport failure after retries, or a non-200 response."""


class ProtocolViolation(BackendError):
    """A 200 response that breaks a protocol invariant (bad span, bounds, ...)."""


@dataclass(frozen=True)
class BackendConfig:
    base_url: str = "stub"
    timeout_ms: int = 10_000
    max_retries: int = 2
    max_batch: int = 64

    def __post_init__(self) -> None:
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")


@dataclass(frozen=True)
class GenerationResponse:
    question: str
    gen_score: float | None = None


@dataclass(frozen=True)
class AnswerResponse:
    """Extractive QA result; offsets are byte offsets into the context.

    Either ``no_answer`` is true and the answer is empty with no offsets, or
    ``answer_text`` equals the UTF-8 slice ``context[start:end]``.
    """

    answer_text: str
    no_answer: bool
    score: float
    start: int | None = None
    end: int | None = None


@runtime_checkable
class Backend(Protocol):
    """The call surface shared by the stub and the HTTP client."""

    def capabilities(self) -> tuple[str, ...]: ...

    def embed(self, texts: list[str]) -> list[tuple[float, ...]]: ...

    def resolve_coref(self, text: str) -> str: ...

    def generate_question(self, context: str, keyphrase: str) -> GenerationResponse: ...

    def answer(self, question: str, context: str) -> AnswerResponse: ...

    def toxicity(self, text: str) -> float: ...

    def summarize(self, text: str) -> str: ...

    def count_tokens(self, text: str) -> int: ...


def normalize_question(raw: str) -> str:
    """Client-side normalization: trim and guarantee a trailing '?'."""
    question = raw.strip()
    if not question:
        raise ProtocolViolation("backend returned an empty question")
    if not question.endswith("?"):
        question += "?"
    return question


def locate_span(context: str, answer: str, start: int | None, end: int | None) -> tuple[int, int]:
    """Validate or compute the byte span of an answer within its context.

    Offsets supplied by the server must slice the UTF-8 context bytes to the
    answer exactly; absent offsets are filled from the first occurrence.
    Raises :class:`ProtocolViolation` when the answer is not a span of the
    context.
    """
    context_bytes = context.encode("utf-8")
    answer_bytes = answer.encode("utf-8")
    if start is not None and end is not None:
        if 0 <= start <= end <= len(context_bytes) and context_bytes[start:end] == answer_bytes:
            return start, end
        raise ProtocolViolation(
            f"answer offsets [{start}, {end}) do not slice the context to the answer"
        )
    found = context_bytes.find(answer_bytes)
    if found < 0:
        raise ProtocolViolation("answer text is not a substring of the context")
    return found, found + len(answer_bytes)


from .stub import StubBackend  # noqa: E402
from .http import HttpBackend  # noqa: E402


def create_backend(
    config: BackendConfig,
    blocklist: frozenset[str] = frozenset(),
    coref_table: dict[str, str] | None = None,
) -> Backend:
    """Build a backend from config: ``base_url == "stub"`` selects the stub."""
    if config.base_url == "stub":
        return StubBackend(blocklist=blocklist, coref_table=coref_table)
    return HttpBackend(config)


__all__ = [
    "ALL_CAPABILITIES",
    "AnswerResponse",
    "Backend",
    "BackendConfig",
    "BackendError",
    "BackendUnavailable",
    "GenerationResponse",
    "HttpBackend",
    "ProtocolViolation",
    "StubBackend",
    "create_backend",
    "locate_span",
    "normalize_question",
]
