"""Article corpus ingestion, validation, and JSONL persistence."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


class CorpusError(ValueError):
    """Raised for malformed corpus files or invalid corpus operations."""


@dataclass(frozen=True)
class Article:
    """One source document.

    ``line_no`` is a load-time diagnostic (1-based line in the source file)
    and is not part of the serialized field set.  ``extra`` carries unknown
    input keys through unchanged; nothing in the engine interprets them.
    """

    id: str
    body: str
    title: str = ""
    hashtags: tuple[str, ...] = ()
    evergreen: bool = False
    source: str | None = None
    line_no: int = field(default=0, compare=False)
    extra: dict = field(default_factory=dict, compare=False)

    def word_count(self) -> int:
        """Number of words in the body; a word is a maximal run of non-whitespace."""
        return len(self.body.split())


@dataclass(frozen=True)
class ArticleVerdict:
    """Result of a minimum-length check: ``valid`` or too short at ``word_count``."""

    valid: bool
    word_count: int


@dataclass(frozen=True)
class CorpusStats:
    article_count: int
    with_hashtags: int
    evergreen_count: int
    evergreen_fraction: float

    def to_dict(self) -> dict:
        return {
            "article_count": self.article_count,
            "with_hashtags": self.with_hashtags,
            "evergreen_count": self.evergreen_count,
            "evergreen_fraction": self.evergreen_fraction,
        }


def _parse_line(raw: str, line_no: int) -> Article:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise CorpusError(f"line {line_no}: expected a JSON object")

    if "id" not in obj:
        raise CorpusError(f"line {line_no}: missing id")
    if not isinstance(obj["id"], str) or not obj["id"]:
        raise CorpusError(f"line {line_no}: id must be a non-empty string")
    if "body" not in obj:
        raise CorpusError(f"line {line_no}: missing body")
    if not isinstance(obj["body"], str) or not obj["body"].strip():
        raise CorpusError(f"line {line_no}: body must be a non-empty string")

    title = obj.get("title", "")
    if not isinstance(title, str):
        raise CorpusError(f"line {line_no}: title must be a string")
    hashtags = obj.get("hashtags", [])
    if not isinstance(hashtags, list) or not all(isinstance(h, str) for h in hashtags):
        raise CorpusError(f"line {line_no}: hashtags must be an array of strings")
    evergreen = obj.get("evergreen", False)
    if not isinstance(evergreen, bool):
        raise CorpusError(f"line {line_no}: evergreen must be a boolean")
    source = obj.get("source")
    if source is not None and not isinstance(source, str):
        raise CorpusError(f"line {line_no}: source must be a string")

    known = {"id", "title", "body", "hashtags", "evergreen", "source"}
    extra = {k: v for k, v in obj.items() if k not in known}
    return Article(
        id=obj["id"],
        body=obj["body"],
        title=title,
        hashtags=tuple(hashtags),
        evergreen=evergreen,
        source=source,
        line_no=line_no,
        extra=extra,
    )


def load_articles(path: str | Path) -> list[Article]:
    """Load an article corpus from a JSONL file, one object per line.

    Blank lines are ignored.  Raises :class:`CorpusError` naming the line
    number for any malformed line, and naming both lines for a duplicate id.
    """
    path = Path(path)
    articles: list[Article] = []
    seen: dict[str, int] = {}
    with path.open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            article = _parse_line(raw, line_no)
            if article.id in seen:
                raise CorpusError(
                    f"duplicate id {article.id!r} on lines {seen[article.id]} and {line_no}"
                )
            seen[article.id] = line_no
            articles.append(article)
    return articles


def write_articles(path: str | Path, articles: list[Article]) -> None:
    """Write articles as JSONL; inverse of :func:`load_articles` on the field set."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for a in articles:
            obj: dict = {
                "id": a.id,
                "title": a.title,
                "body": a.body,
                "hashtags": list(a.hashtags),
                "evergreen": a.evergreen,
            }
            if a.source is not None:
                obj["source"] = a.source
            obj.update(a.extra)
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def validate_article(article: Article, min_words: int = 500) -> ArticleVerdict:
    """Check the article body against a minimum word count (inclusive bound)."""
    if min_words < 1:
        raise ValueError("min_words must be >= 1")
    count = article.word_count()
    return ArticleVerdict(valid=count >= min_words, word_count=count)


def corpus_stats(articles: list[Article]) -> CorpusStats:
    """Aggregate counts over a non-empty corpus."""
    if not articles:
        raise CorpusError("empty corpus")
    with_hashtags = sum(1 for a in articles if a.hashtags)
    evergreen_count = sum(1 for a in articles if a.evergreen)
    return CorpusStats(
        article_count=len(articles),
        with_hashtags=with_hashtags,
        evergreen_count=evergreen_count,
        evergreen_fraction=evergreen_count / len(articles),
    )
