"""The generation pipeline: fan out, filter adversarially, keep what survives.

One article becomes one record per (keyphrase, sentence) pair.  Nothing is
summarized away on the main path; instead an extractive QA model prunes the
fan-out by answering each generated question against its own context, and
the extracted answer replaces the keyphrase as ground truth.  Every kept
answer is a verbatim byte slice of its context, and every context a
verbatim slice of the resolved article, so a record can always be traced
back to source text.

The summarize-first baseline lives here too, wired through the same
filters, so the two routes stay comparable record for record.
"""

from __future__ import annotations

import enum
import json
import os
import string
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .backend import AnswerResponse, Backend, BackendError, ProtocolViolation
from .corpus import Article, validate_article
from .keyphrase import embed_candidates, extract_candidates, pair_contexts, rank_mmr
from .textproc import chunk_document, document_from_text, resolve_coreferences


class Verdict(str, enum.Enum):
    """Terminal state of one generated pair; exactly one applies."""

    KEPT = "Kept"
    UNANSWERABLE = "Unanswerable"
    TOXIC = "Toxic"
    DUPLICATE = "Duplicate"
    LOWSCORE = "LowScore"


_REQUIRED_CAPS = ("embed", "generate", "answer")
_BASELINE_CAPS = ("summarize", "count_tokens")

# Serialized field order is frozen; readers depend on it byte for byte.
_FIELDS = (
    "article_id",
    "keyphrase",
    "keyphrase_rank",
    "sentence_index",
    "context",
    "question",
    "answer",
    "answer_start",
    "answer_end",
    "qa_score",
    "toxicity",
    "verdict",
    "baseline",
    "related_ids",
)


@dataclass(frozen=True)
class QAPair:
    """One generated question with its provenance and fate.

    ``answer_start``/``answer_end`` are byte offsets into ``context``.
    ``toxicity`` is null for pairs rejected before the toxicity gate ran.
    """

    article_id: str
    keyphrase: str
    keyphrase_rank: int
    sentence_index: int
    context: str
    question: str
    answer: str | None
    answer_start: int | None
    answer_end: int | None
    qa_score: float
    toxicity: float | None
    verdict: Verdict
    baseline: bool
    related_ids: tuple[str, ...] = ()

    @property
    def pair_id(self) -> str:
        return f"{self.article_id}:{self.keyphrase_rank}:{self.sentence_index}"

    def to_json_dict(self) -> dict:
        return {
            "article_id": self.article_id,
            "keyphrase": self.keyphrase,
            "keyphrase_rank": self.keyphrase_rank,
            "sentence_index": self.sentence_index,
            "context": self.context,
            "question": self.question,
            "answer": self.answer,
            "answer_start": self.answer_start,
            "answer_end": self.answer_end,
            "qa_score": self.qa_score,
            "toxicity": self.toxicity,
            "verdict": self.verdict.value,
            "baseline": self.baseline,
            "related_ids": list(self.related_ids),
        }


@dataclass(frozen=True)
class PipelineConfig:
    top_k_keyphrases: int = 15
    mmr_lambda: float = 0.5
    window: int = 0
    max_input_tokens: int = 512
    null_threshold: float = 0.5
    toxicity_threshold: float = 0.5
    dedupe: bool = True
    coref_policy: str = "fallback"
    min_words: int = 500

    def __post_init__(self) -> None:
        if self.top_k_keyphrases < 1:
            raise ValueError("top_k_keyphrases must be >= 1")
        if not 0.0 <= self.mmr_lambda <= 1.0:
            raise ValueError("mmr_lambda must be in [0, 1]")
        if self.window < 0:
            raise ValueError("window must be >= 0")
        if self.max_input_tokens < 16:
            raise ValueError("max_input_tokens must be >= 16")
        if not 0.0 <= self.null_threshold <= 1.0:
            raise ValueError("null_threshold must be in [0, 1]")
        if not 0.0 <= self.toxicity_threshold <= 1.0:
            raise ValueError("toxicity_threshold must be in [0, 1]")
        if self.coref_policy not in ("fallback", "fail"):
            raise ValueError("coref_policy must be 'fallback' or 'fail'")
        if self.min_words < 1:
            raise ValueError("min_words must be >= 1")

    def to_dict(self) -> dict:
        return {
            "top_k_keyphrases": self.top_k_keyphrases,
            "mmr_lambda": self.mmr_lambda,
            "window": self.window,
            "max_input_tokens": self.max_input_tokens,
            "null_threshold": self.null_threshold,
            "toxicity_threshold": self.toxicity_threshold,
            "dedupe": self.dedupe,
            "coref_policy": self.coref_policy,
            "min_words": self.min_words,
        }

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> "PipelineConfig":
        """Build a config from string key=value settings, e.g. CLI or file."""
        kwargs: dict = {}
        for key, raw in mapping.items():
            if key in ("top_k_keyphrases", "window", "max_input_tokens", "min_words"):
                try:
                    kwargs[key] = int(raw)
                except ValueError:
                    raise ValueError(f"config {key}: not an integer: {raw!r}") from None
            elif key in ("mmr_lambda", "null_threshold", "toxicity_threshold"):
                try:
                    kwargs[key] = float(raw)
                except ValueError:
                    raise ValueError(f"config {key}: not a number: {raw!r}") from None
            elif key == "dedupe":
                if raw.lower() not in ("true", "false"):
                    raise ValueError(f"config dedupe: expected true or false, got {raw!r}")
                kwargs[key] = raw.lower() == "true"
            elif key == "coref_policy":
                kwargs[key] = raw
            else:
                raise ValueError(f"unknown config key: {key}")
        return cls(**kwargs)


class QuestionGraph:
    """Keyphrase-keyed index linking questions generated from the same phrase.

    Phrases are normalized (lowercase, whitespace collapsed); pair ids keep
    insertion order within a phrase.
    """

    def __init__(self) -> None:
        self._by_phrase: dict[str, list[str]] = {}

    @staticmethod
    def normalize(phrase: str) -> str:
        return " ".join(phrase.lower().split())

    def add(self, keyphrase: str, pair_id: str) -> list[str]:
        """Register a pair under its phrase; returns the ids already there."""
        bucket = self._by_phrase.setdefault(self.normalize(keyphrase), [])
        prior = list(bucket)
        bucket.append(pair_id)
        return prior

    def related(self, keyphrase: str) -> list[str]:
        return list(self._by_phrase.get(self.normalize(keyphrase), []))

    def phrases(self) -> list[str]:
        return sorted(self._by_phrase)

    def to_dict(self) -> dict[str, list[str]]:
        return {phrase: list(self._by_phrase[phrase]) for phrase in sorted(self._by_phrase)}

    def save(self, path: str | Path) -> None:
        atomic_write_text(
            path, json.dumps(self.to_dict(), ensure_ascii=False, indent=2, sort_keys=True) + "\n"
        )

    @classmethod
    def load(cls, path: str | Path) -> "QuestionGraph":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError("graph file: expected an object")
        graph = cls()
        for phrase, ids in data.items():
            if not isinstance(ids, list) or not all(isinstance(i, str) for i in ids):
                raise ValueError(f"graph file: bad id list for {phrase!r}")
            graph._by_phrase[phrase] = list(ids)
        return graph


def adversarial_filter(response: AnswerResponse, null_threshold: float) -> Verdict | None:
    """Map a QA response to a rejection verdict, or None when it survives."""
    if response.no_answer:
        return Verdict.UNANSWERABLE
    if response.score < null_threshold:
        return Verdict.LOWSCORE
    return None


def dedupe_key(question: str) -> str:
    """Questions that collapse to the same key are duplicates of each other."""
    collapsed = " ".join(question.lower().split())
    return collapsed.rstrip(string.punctuation + " ")


def _check_extractive(context: str, response: AnswerResponse) -> None:
    start, end = response.start, response.end
    if start is None or end is None:
        raise ProtocolViolation("answer without byte offsets")
    context_bytes = context.encode("utf-8")
    if not (0 <= start <= end <= len(context_bytes)):
        raise ProtocolViolation(f"answer offsets [{start}, {end}) out of bounds")
    if context_bytes[start:end] != response.answer_text.encode("utf-8"):
        raise ProtocolViolation("answer text does not match its context slice")


def _judge_pair(
    backend: Backend,
    caps: set[str],
    config: PipelineConfig,
    *,
    article_id: str,
    keyphrase: str,
    keyphrase_rank: int,
    sentence_index: int,
    context: str,
    baseline: bool,
) -> QAPair:
    question = backend.generate_question(context, keyphrase).question
    response = backend.answer(question, context)
    rejection = adversarial_filter(response, config.null_threshold)

    answer = None if response.no_answer else response.answer_text
    start = None if response.no_answer else response.start
    end = None if response.no_answer else response.end
    if answer is not None:
        _check_extractive(context, response)

    toxicity = None
    verdict = rejection
    if rejection is None:
        verdict = Verdict.KEPT
        if "toxicity" in caps:
            toxicity = max(backend.toxicity(question), backend.toxicity(answer))
            if toxicity > config.toxicity_threshold:
                verdict = Verdict.TOXIC

    return QAPair(
        article_id=article_id,
        keyphrase=keyphrase,
        keyphrase_rank=keyphrase_rank,
        sentence_index=sentence_index,
        context=context,
        question=question,
        answer=answer,
        answer_start=start,
        answer_end=end,
        qa_score=response.score,
        toxicity=toxicity,
        verdict=verdict,
        baseline=baseline,
    )


def _mark_duplicates(records: list[QAPair]) -> list[QAPair]:
    """First kept question per dedupe key survives; later ones flip verdict."""
    seen: set[str] = set()
    out: list[QAPair] = []
    for record in records:
        if record.verdict is Verdict.KEPT:
            key = dedupe_key(record.question)
            if key in seen:
                record = replace(record, verdict=Verdict.DUPLICATE)
            else:
                seen.add(key)
        out.append(record)
    return out


def _require_caps(caps: set[str], needed: tuple[str, ...]) -> None:
    missing = [c for c in needed if c not in caps]
    if missing:
        raise BackendError(f"backend lacks required capabilities: {', '.join(missing)}")


def _pairs_for_document(
    backend: Backend,
    caps: set[str],
    config: PipelineConfig,
    doc,
    *,
    baseline: bool,
) -> list[QAPair]:
    candidates = extract_candidates(doc)
    if not candidates:
        return []
    doc_embedding, embedded = embed_candidates(doc, candidates, backend.embed)
    ranked = rank_mmr(doc_embedding, embedded, config.mmr_lambda, config.top_k_keyphrases)
    records = []
    for pair in pair_contexts(ranked, doc, config.window):
        records.append(
            _judge_pair(
                backend,
                caps,
                config,
                article_id=pair.article_id,
                keyphrase=pair.keyphrase,
                keyphrase_rank=pair.keyphrase_rank,
                sentence_index=pair.sentence_index,
                context=pair.context,
                baseline=baseline,
            )
        )
    return records


def run_article(article: Article, backend: Backend, config: PipelineConfig) -> list[QAPair]:
    """Maximal generation over one article; records pre-linking.

    Records come back ordered by (keyphrase rank, sentence index) with
    duplicate questions already marked when deduplication is on.
    """
    caps = set(backend.capabilities())
    _require_caps(caps, _REQUIRED_CAPS)
    resolve = backend.resolve_coref if "coref" in caps else _identity
    doc = resolve_coreferences(article, resolve, on_failure=config.coref_policy)
    if not doc.sentences:
        return []
    records = _pairs_for_document(backend, caps, config, doc, baseline=False)
    if config.dedupe:
        records = _mark_duplicates(records)
    return records


def run_baseline_summarization(
    article: Article, backend: Backend, config: PipelineConfig
) -> list[QAPair]:
    """Summarize-first route for comparison: chunk, summarize, then generate.

    Each chunk's summary is treated as its own small document, so sentence
    indices are local to the summary, not the article.  Deduplication runs
    across the whole article's records.
    """
    caps = set(backend.capabilities())
    _require_caps(caps, _REQUIRED_CAPS + _BASELINE_CAPS)
    resolve = backend.resolve_coref if "coref" in caps else _identity
    doc = resolve_coreferences(article, resolve, on_failure=config.coref_policy)
    if not doc.sentences:
        return []
    records: list[QAPair] = []
    for chunk in chunk_document(doc, config.max_input_tokens, backend.count_tokens):
        summary = backend.summarize(chunk.text)
        summary_doc = document_from_text(article.id, summary)
        if not summary_doc.sentences:
            continue
        records.extend(_pairs_for_document(backend, caps, config, summary_doc, baseline=True))
    if config.dedupe:
        records = _mark_duplicates(records)
    return records


def _identity(text: str) -> str:
    return text


@dataclass(frozen=True)
class ArticleFailure:
    article_id: str
    error: str


@dataclass(frozen=True)
class CorpusResult:
    """Outcome of a corpus run; ``records`` are sorted and link-finalized."""

    records: list[QAPair]
    graph: QuestionGraph
    articles_used: int
    articles_skipped: int
    failures: tuple[ArticleFailure, ...] = ()
    completed_ids: tuple[str, ...] = ()

    @property
    def complete(self) -> bool:
        return not self.failures


def _sort_key(record: QAPair) -> tuple:
    return (
        record.article_id,
        record.keyphrase_rank,
        record.sentence_index,
        record.keyphrase,
        record.context,
    )


def finalize_records(records: list[QAPair]) -> tuple[list[QAPair], QuestionGraph]:
    """Impose the canonical total order and link kept questions by phrase.

    Linking walks kept non-baseline records in sorted order; each record's
    related_ids are the ids already registered under the same normalized
    keyphrase, so links always point backward in the canonical order.
    Rerunning over the same records is idempotent, which is what makes a
    resumed run end up byte-identical to an uninterrupted one.
    """
    ordered = sorted(records, key=_sort_key)
    graph = QuestionGraph()
    out: list[QAPair] = []
    for record in ordered:
        if record.verdict is Verdict.KEPT and not record.baseline:
            prior = graph.add(record.keyphrase, record.pair_id)
            record = replace(record, related_ids=tuple(prior))
        out.append(record)
    return out, graph


def run_corpus(
    articles: list[Article],
    backend: Backend,
    config: PipelineConfig,
    *,
    workers: int = 1,
    baseline: bool = False,
    completed: dict[str, list[QAPair]] | None = None,
    on_article_done=None,
) -> CorpusResult:
    """Run the pipeline over a corpus, tolerating per-article backend failure.

    Articles below ``min_words`` are skipped.  ``completed`` carries records
    from an earlier partial run keyed by article id; those articles are not
    reprocessed.  ``on_article_done(article_id, records)`` fires in input
    order as results land, so callers can persist progress incrementally.
    A failed article never poisons the run: it is reported in ``failures``
    and every other article still completes.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    completed = completed or {}
    run_one = run_baseline_summarization if baseline else run_article

    eligible = [a for a in articles if validate_article(a, config.min_words).valid]
    skipped = len(articles) - len(eligible)
    todo = [a for a in eligible if a.id not in completed]

    results: dict[str, list[QAPair]] = {
        a.id: completed[a.id] for a in eligible if a.id in completed
    }
    failures: list[ArticleFailure] = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [(a, pool.submit(run_one, a, backend, config)) for a in todo]
        for article, future in futures:
            try:
                records = future.result()
            except BackendError as exc:
                failures.append(ArticleFailure(article_id=article.id, error=str(exc)))
                continue
            results[article.id] = records
            if on_article_done is not None:
                on_article_done(article.id, records)

    merged: list[QAPair] = []
    completed_ids = []
    for article in eligible:
        if article.id in results:
            completed_ids.append(article.id)
            merged.extend(results[article.id])

    if baseline:
        ordered = sorted(merged, key=_sort_key)
        graph = QuestionGraph()
    else:
        ordered, graph = finalize_records(merged)
    return CorpusResult(
        records=ordered,
        graph=graph,
        articles_used=len(completed_ids),
        articles_skipped=skipped,
        failures=tuple(failures),
        completed_ids=tuple(completed_ids),
    )


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a same-directory temp file and rename, so readers never see
    a half-written file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_pair(record: QAPair) -> str:
    return json.dumps(record.to_json_dict(), ensure_ascii=False, separators=(",", ":"))


def write_pairs(path: str | Path, records: list[QAPair]) -> None:
    """Serialize records as JSONL, one compact object per line, LF endings."""
    text = "".join(dumps_pair(r) + "\n" for r in records)
    atomic_write_text(path, text)


def parse_pair_line(raw: str, line_no: int) -> QAPair:
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValueError(f"line {line_no}: invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ValueError(f"line {line_no}: expected an object")
    unknown = set(data) - set(_FIELDS)
    if unknown:
        raise ValueError(f"line {line_no}: unknown field {sorted(unknown)[0]!r}")
    missing = [f for f in _FIELDS if f not in data]
    if missing:
        raise ValueError(f"line {line_no}: missing field {missing[0]!r}")
    try:
        verdict = Verdict(data["verdict"])
    except ValueError:
        raise ValueError(f"line {line_no}: unknown verdict {data['verdict']!r}") from None
    related = data["related_ids"]
    if not isinstance(related, list) or not all(isinstance(i, str) for i in related):
        raise ValueError(f"line {line_no}: related_ids must be a list of strings")

    def _str(name: str) -> str:
        value = data[name]
        if not isinstance(value, str):
            raise ValueError(f"line {line_no}: {name} must be a string")
        return value

    def _int(name: str, optional: bool = False) -> int | None:
        value = data[name]
        if value is None and optional:
            return None
        if not isinstance(value, int) or isinstance(value, bool):
            raise ValueError(f"line {line_no}: {name} must be an integer")
        return value

    def _float(name: str, optional: bool = False) -> float | None:
        value = data[name]
        if value is None and optional:
            return None
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ValueError(f"line {line_no}: {name} must be a number")
        return float(value)

    answer = data["answer"]
    if answer is not None and not isinstance(answer, str):
        raise ValueError(f"line {line_no}: answer must be a string or null")
    if not isinstance(data["baseline"], bool):
        raise ValueError(f"line {line_no}: baseline must be a boolean")
    return QAPair(
        article_id=_str("article_id"),
        keyphrase=_str("keyphrase"),
        keyphrase_rank=_int("keyphrase_rank"),
        sentence_index=_int("sentence_index"),
        context=_str("context"),
        question=_str("question"),
        answer=answer,
        answer_start=_int("answer_start", optional=True),
        answer_end=_int("answer_end", optional=True),
        qa_score=_float("qa_score"),
        toxicity=_float("toxicity", optional=True),
        verdict=verdict,
        baseline=data["baseline"],
        related_ids=tuple(related),
    )


def load_pairs(path: str | Path) -> list[QAPair]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            records.append(parse_pair_line(line, line_no))
    return records
