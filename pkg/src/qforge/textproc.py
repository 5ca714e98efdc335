"""Sentence segmentation, pluggable coreference resolution, and chunking.

Segmentation is rule-based and deterministic so that pipeline output is
byte-identical across runs and platforms.  All spans are byte offsets into
the UTF-8 encoding of the owning text.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable

if TYPE_CHECKING:
    from .corpus import Article

# Trailing tokens that end in '.' without ending a sentence.  Matching is
# case-sensitive against the end of the whitespace-delimited token, so
# quoted or parenthesized forms ("Dr.) still match.
DEFAULT_ABBREVIATIONS = frozenset(
    {"Mr.", "Mrs.", "Dr.", "U.S.", "St.", "vs.", "etc.", "e.g.", "i.e."}
)

_TERMINATORS = frozenset(".!?")


@dataclass(frozen=True)
class SentenceSpan:
    """One sentence with its byte span in the owning document."""

    index: int
    start: int
    end: int
    text: str


@dataclass(frozen=True)
class ResolvedDocument:
    """An article body after (optional) coreference rewriting, segmented."""

    article_id: str
    original: str
    resolved: str
    sentences: tuple[SentenceSpan, ...]
    coref_applied: bool
    coref_fallback: bool = False


@dataclass(frozen=True)
class Chunk:
    """A contiguous run of sentences packed under a token budget.

    ``first_sentence``/``last_sentence`` are inclusive indices into the
    owning document's sentence list.  ``oversized`` marks a single sentence
    whose own token count already meets or exceeds the budget.
    """

    first_sentence: int
    last_sentence: int
    text: str
    token_count: int
    oversized: bool = False


def _is_abbreviation(token: str, abbreviations: frozenset[str]) -> bool:
    for abbr in abbreviations:
        if token == abbr:
            return True
        if token.endswith(abbr) and not token[-len(abbr) - 1].isalnum():
            return True
    return False


def split_sentences(
    text: str, abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS
) -> list[SentenceSpan]:
    """Segment text into sentences with byte-accurate spans.

    A boundary is a '.', '!' or '?' followed by whitespace and an uppercase
    letter, or by (optionally whitespace and) end of text, unless the token
    ending at a '.' is a known abbreviation.  Text after the last boundary
    forms a final span even without terminal punctuation.  Whitespace
    between sentences belongs to no span.
    """
    chars = text
    n = len(chars)
    boundaries: list[int] = []  # char index one past each sentence terminator
    i = 0
    while i < n:
        ch = chars[i]
        if ch in _TERMINATORS:
            j = i + 1
            while j < n and chars[j].isspace():
                j += 1
            at_end = j >= n
            followed_by_upper = j > i + 1 and j < n and chars[j].isupper()
            if at_end or followed_by_upper:
                suppress = False
                if ch == ".":
                    k = i
                    while k > 0 and not chars[k - 1].isspace():
                        k -= 1
                    suppress = _is_abbreviation(chars[k : i + 1], abbreviations)
                if not suppress:
                    boundaries.append(i + 1)
        i += 1

    # Char-index spans, trimmed of surrounding whitespace.
    raw_spans: list[tuple[int, int]] = []
    prev = 0
    for b in boundaries:
        raw_spans.append((prev, b))
        prev = b
    if prev < n:
        raw_spans.append((prev, n))

    spans: list[SentenceSpan] = []
    byte_prefix = _byte_prefix_table(chars)
    for cstart, cend in raw_spans:
        while cstart < cend and chars[cstart].isspace():
            cstart += 1
        while cend > cstart and chars[cend - 1].isspace():
            cend -= 1
        if cstart == cend:
            continue
        spans.append(
            SentenceSpan(
                index=len(spans),
                start=byte_prefix[cstart],
                end=byte_prefix[cend],
                text=chars[cstart:cend],
            )
        )
    return spans


def _byte_prefix_table(text: str) -> list[int]:
    """byte_prefix[i] = UTF-8 byte offset of character i; last entry is total bytes."""
    table = [0] * (len(text) + 1)
    total = 0
    for i, ch in enumerate(text):
        table[i] = total
        total += len(ch.encode("utf-8"))
    table[len(text)] = total
    return table


def resolve_coreferences(
    article: "Article",
    resolve: Callable[[str], str],
    on_failure: str = "fallback",
) -> ResolvedDocument:
    """Rewrite pronouns via the backend's coref endpoint, then segment.

    ``on_failure`` is ``"fallback"`` (use the original text and record the
    fallback) or ``"fail"`` (re-raise the backend error).
    """
    if on_failure not in ("fallback", "fail"):
        raise ValueError(f"unknown coref failure policy: {on_failure!r}")
    fallback = False
    try:
        resolved = resolve(article.body)
    except Exception:
        if on_failure == "fail":
            raise
        resolved = article.body
        fallback = True
    return ResolvedDocument(
        article_id=article.id,
        original=article.body,
        resolved=resolved,
        sentences=tuple(split_sentences(resolved)),
        coref_applied=resolved != article.body,
        coref_fallback=fallback,
    )


def document_from_text(article_id: str, text: str) -> ResolvedDocument:
    """Segment plain text as-is, with no coreference pass."""
    return ResolvedDocument(
        article_id=article_id,
        original=text,
        resolved=text,
        sentences=tuple(split_sentences(text)),
        coref_applied=False,
    )


def chunk_document(
    doc: ResolvedDocument,
    max_input_tokens: int,
    count_tokens: Callable[[str], int],
) -> list[Chunk]:
    """Greedily pack sentences into chunks whose token total stays under budget.

    Sentences are appended left to right while the running sum of their
    token counts stays below ``max_input_tokens``; otherwise a new chunk
    starts.  A single sentence at or over budget becomes its own chunk,
    flagged oversized.  Chunk text is the verbatim slice of the resolved
    text from the first to the last sentence of the chunk.
    """
    if max_input_tokens < 1:
        raise ValueError("max_input_tokens must be >= 1")
    sentences = doc.sentences
    if not sentences:
        return []

    counts = [count_tokens(s.text) for s in sentences]
    resolved_bytes = doc.resolved.encode("utf-8")

    chunks: list[Chunk] = []
    start = 0
    running = 0
    for i, count in enumerate(counts):
        if i == start:
            running = count
            continue
        if running + count < max_input_tokens:
            running += count
        else:
            chunks.append(_make_chunk(sentences, counts, resolved_bytes, start, i - 1, max_input_tokens))
            start = i
            running = count
    chunks.append(_make_chunk(sentences, counts, resolved_bytes, start, len(counts) - 1, max_input_tokens))
    return chunks


def _make_chunk(
    sentences: tuple[SentenceSpan, ...],
    counts: list[int],
    resolved_bytes: bytes,
    first: int,
    last: int,
    budget: int,
) -> Chunk:
    token_count = sum(counts[first : last + 1])
    text = resolved_bytes[sentences[first].start : sentences[last].end].decode("utf-8")
    return Chunk(
        first_sentence=first,
        last_sentence=last,
        text=text,
        token_count=token_count,
        oversized=first == last and token_count >= budget,
    )
