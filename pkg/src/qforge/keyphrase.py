"""Embedding-based keyphrase extraction with MMR diversification.

Candidates are contiguous 1..3-grams of alphanumeric tokens taken within a
sentence, excluding phrases that start or end on a stopword.  Ranking uses
maximal marginal relevance over cosine similarity: each step selects

    argmax_c  lambda * cos(c, doc) - (1 - lambda) * max_{s in selected} cos(c, s)

with the first pick being the pure-relevance argmax and exact score ties
broken by lexicographic phrase order.  All similarity arithmetic is plain
Python floats, left to right, so ranking is bit-reproducible everywhere.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace

from .textproc import ResolvedDocument

# Compact English stopword list; boundary tokens of a candidate phrase must
# not be in it.  Fixed here rather than taken from an NLP package so results
# never shift under a dependency upgrade.
DEFAULT_STOPWORDS = frozenset(
    """
    a about above after again against all am an and any are as at be because
    been before being below between both but by can did do does doing down
    during each few for from further had has have having he her here hers
    herself him himself his how i if in into is it its itself just me more
    most my myself no nor not now of off on once only or other our ours
    ourselves out over own same she should so some such than that the their
    theirs them themselves then there these they this those through to too
    under until up very was we were what when where which while who whom why
    will with you your yours yourself yourselves
    """.split()
)

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass(frozen=True)
class Candidate:
    """A candidate keyphrase before ranking; embedding is attached separately."""

    phrase: str
    ngram_len: int
    first_sentence_index: int
    embedding: tuple[float, ...] | None = None


@dataclass(frozen=True)
class ScoredKeyphrase:
    phrase: str
    relevance: float
    rank: int


@dataclass(frozen=True)
class ContextKeyphrasePair:
    """The unit of maximal generation: one keyphrase in one sentence window.

    ``context`` is the verbatim slice of the resolved text spanning the
    matched sentence plus ``window`` neighbors on each side, so it is always
    a substring of the source document.
    """

    article_id: str
    keyphrase: str
    sentence_index: int
    context: str
    keyphrase_rank: int


def extract_candidates(
    doc: ResolvedDocument,
    ngram_range: tuple[int, int] = (1, 3),
    stopwords: frozenset[str] = DEFAULT_STOPWORDS,
) -> list[Candidate]:
    """Enumerate candidate phrases per sentence, deduplicated by phrase.

    Tokens are maximal alphanumeric runs, lowercased.  A phrase whose first
    or last token is a stopword is skipped.  A phrase seen in several
    sentences keeps the earliest sentence index.
    """
    lo, hi = ngram_range
    if lo < 1 or hi < lo:
        raise ValueError(f"invalid ngram range: {ngram_range}")
    seen: dict[str, Candidate] = {}
    for sentence in doc.sentences:
        tokens = [t.lower() for t in _TOKEN_RE.findall(sentence.text)]
        for n in range(lo, hi + 1):
            for start in range(0, len(tokens) - n + 1):
                gram = tokens[start : start + n]
                if gram[0] in stopwords or gram[-1] in stopwords:
                    continue
                phrase = " ".join(gram)
                if phrase not in seen:
                    seen[phrase] = Candidate(
                        phrase=phrase,
                        ngram_len=n,
                        first_sentence_index=sentence.index,
                    )
    return list(seen.values())


def embed_candidates(
    doc: ResolvedDocument,
    candidates: list[Candidate],
    embed,
    max_batch: int = 64,
) -> tuple[tuple[float, ...], list[Candidate]]:
    """Fetch the document embedding and one embedding per candidate phrase.

    ``embed`` maps a list of texts to a list of unit-norm vectors.  Requests
    are batched at ``max_batch`` texts.
    """
    texts = [doc.resolved] + [c.phrase for c in candidates]
    vectors: list[tuple[float, ...]] = []
    for i in range(0, len(texts), max_batch):
        vectors.extend(tuple(v) for v in embed(texts[i : i + max_batch]))
    doc_embedding = vectors[0]
    embedded = [replace(c, embedding=v) for c, v in zip(candidates, vectors[1:])]
    return doc_embedding, embedded


def _dot(a: tuple[float, ...], b: tuple[float, ...]) -> float:
    total = 0.0
    for x, y in zip(a, b):
        total += x * y
    return total


def _check_unit(vec: tuple[float, ...], dim: int, what: str) -> None:
    if len(vec) != dim:
        raise ValueError(f"{what}: dimension {len(vec)} != {dim}")
    norm = math.sqrt(_dot(vec, vec))
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"{what}: embedding norm {norm} is not 1")


def rank_mmr(
    doc_embedding: tuple[float, ...],
    candidates: list[Candidate],
    mmr_lambda: float = 0.5,
    top_k: int = 15,
) -> list[ScoredKeyphrase]:
    """Select up to ``top_k`` keyphrases by maximal marginal relevance.

    The reported relevance of each selection is its cosine similarity to the
    document embedding regardless of the (diversified) selection score.
    """
    if not 0.0 <= mmr_lambda <= 1.0:
        raise ValueError("mmr_lambda must be in [0, 1]")
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    if not candidates:
        return []

    dim = len(doc_embedding)
    embeddings: list[tuple[float, ...]] = []
    for c in candidates:
        if c.embedding is None:
            raise ValueError(f"candidate {c.phrase!r} has no embedding")
        _check_unit(c.embedding, dim, c.phrase)
        embeddings.append(c.embedding)

    doc_sim = [_dot(e, doc_embedding) for e in embeddings]
    # Running max similarity of each remaining candidate to the selected set.
    sel_sim = [-math.inf] * len(candidates)
    remaining = list(range(len(candidates)))
    selected: list[ScoredKeyphrase] = []

    while remaining and len(selected) < top_k:
        best_idx = -1
        best_score = -math.inf
        best_phrase = ""
        for idx in remaining:
            if selected:
                score = mmr_lambda * doc_sim[idx] - (1.0 - mmr_lambda) * sel_sim[idx]
            else:
                score = doc_sim[idx]
            phrase = candidates[idx].phrase
            if score > best_score or (score == best_score and phrase < best_phrase):
                best_idx, best_score, best_phrase = idx, score, phrase
        remaining.remove(best_idx)
        selected.append(
            ScoredKeyphrase(
                phrase=candidates[best_idx].phrase,
                relevance=doc_sim[best_idx],
                rank=len(selected),
            )
        )
        chosen = embeddings[best_idx]
        for idx in remaining:
            sim = _dot(embeddings[idx], chosen)
            if sim > sel_sim[idx]:
                sel_sim[idx] = sim
    return selected


def pair_contexts(
    keyphrases: list[ScoredKeyphrase],
    doc: ResolvedDocument,
    window: int = 0,
) -> list[ContextKeyphrasePair]:
    """Pair each keyphrase with every sentence that contains it.

    Containment is a case-insensitive substring match on the sentence text.
    The pair context spans sentences ``[i - window, i + window]`` clipped to
    the document, taken verbatim from the resolved text.  Output is ordered
    by (keyphrase rank, sentence index).  A phrase matching no sentence
    yields no pairs; coref rewriting can legitimately cause that.
    """
    if window < 0:
        raise ValueError("window must be >= 0")
    sentences = doc.sentences
    resolved_bytes = doc.resolved.encode("utf-8")
    lowered = [s.text.lower() for s in sentences]
    pairs: list[ContextKeyphrasePair] = []
    for kp in sorted(keyphrases, key=lambda k: k.rank):
        needle = kp.phrase.lower()
        for i, sent_lower in enumerate(lowered):
            if needle not in sent_lower:
                continue
            first = max(0, i - window)
            last = min(len(sentences) - 1, i + window)
            context = resolved_bytes[sentences[first].start : sentences[last].end].decode("utf-8")
            pairs.append(
                ContextKeyphrasePair(
                    article_id=doc.article_id,
                    keyphrase=kp.phrase,
                    sentence_index=i,
                    context=context,
                    keyphrase_rank=kp.rank,
                )
            )
    return pairs
