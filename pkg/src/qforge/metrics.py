"""Run statistics and human-evaluation arithmetic.

Two kinds of numbers live here.  Run statistics (verdict counts, dropout,
article economy) are computed straight from pipeline records.  Evaluation
metrics (relevance fractions, Likert means, score histograms) come from a
rater annotation CSV joined to records by pair id.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from .pipeline import CorpusResult, QAPair, Verdict


class MetricError(ValueError):
    """Bad metric input: empty sets, missing raters, out-of-range scores."""


ANNOTATION_HEADER = ("pair_id", "rater_id", "dimension", "score")


@dataclass(frozen=True)
class AnnotationRecord:
    """One rater's score for one question on one dimension."""

    pair_id: str
    rater_id: str
    dimension: str
    score: int


def load_annotations(path: str | Path) -> list[AnnotationRecord]:
    """Read rater scores from CSV: pair_id,rater_id,dimension,score.

    A (pair_id, rater_id, dimension) triple may appear once; scores must be
    integers.  Range rules belong to each metric, not the loader.
    """
    records: list[AnnotationRecord] = []
    seen: set[tuple[str, str, str]] = set()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MetricError("annotation file is empty") from None
        if tuple(header) != ANNOTATION_HEADER:
            raise MetricError(
                f"bad annotation header: expected {','.join(ANNOTATION_HEADER)}, "
                f"got {','.join(header)}"
            )
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise MetricError(f"row {row_no}: expected 4 columns, got {len(row)}")
            pair_id, rater_id, dimension, raw_score = row
            if not pair_id or not rater_id or not dimension:
                raise MetricError(f"row {row_no}: empty pair_id, rater_id, or dimension")
            try:
                score = int(raw_score)
            except ValueError:
                raise MetricError(f"row {row_no}: score is not an integer: {raw_score!r}") from None
            key = (pair_id, rater_id, dimension)
            if key in seen:
                raise MetricError(
                    f"row {row_no}: duplicate annotation for {pair_id}/{rater_id}/{dimension}"
                )
            seen.add(key)
            records.append(AnnotationRecord(pair_id, rater_id, dimension, score))
    return records


def _scores_by_question(
    annotations: list[AnnotationRecord], dimension: str
) -> dict[str, list[int]]:
    grouped: dict[str, list[int]] = {}
    for record in annotations:
        if record.dimension == dimension:
            grouped.setdefault(record.pair_id, []).append(record.score)
    if not grouped:
        raise MetricError(f"no annotations for dimension {dimension!r}")
    return grouped


def dropout(records: list[QAPair]) -> float:
    """Fraction of generated pairs the QA filter rejected.

    Rejected means Unanswerable or LowScore; toxicity and deduplication are
    not the filter's doing and do not count.
    """
    if not records:
        raise MetricError("dropout of zero records")
    rejected = sum(
        1 for r in records if r.verdict in (Verdict.UNANSWERABLE, Verdict.LOWSCORE)
    )
    return rejected / len(records)


def articles_per_100(articles_used: int, kept: int) -> float:
    """Source articles consumed per 100 kept questions."""
    if articles_used < 0:
        raise MetricError("articles_used must be >= 0")
    if kept < 1:
        raise MetricError("articles_per_100 needs at least one kept question")
    return 100.0 * articles_used / kept


def relevance_fraction(annotations: list[AnnotationRecord], dimension: str = "relevance") -> float:
    """Fraction of questions a strict majority of raters marked relevant.

    Scores must be 0 or 1.  An even split is not a majority.
    """
    grouped = _scores_by_question(annotations, dimension)
    relevant = 0
    for pair_id in grouped:
        scores = grouped[pair_id]
        for score in scores:
            if score not in (0, 1):
                raise MetricError(
                    f"{pair_id}: relevance score must be 0 or 1, got {score}"
                )
        if sum(scores) * 2 > len(scores):
            relevant += 1
    return relevant / len(grouped)


def likert_aggregate(annotations: list[AnnotationRecord], dimension: str = "quality") -> float:
    """Macro-averaged Likert score: mean per question, then mean of means.

    Every scored question needs at least two raters; a shortfall is an
    error naming the offending questions, never a silent skew.
    """
    grouped = _scores_by_question(annotations, dimension)
    short = sorted(pid for pid, scores in grouped.items() if len(scores) < 2)
    if short:
        raise MetricError(
            f"questions with fewer than 2 raters on {dimension!r}: " + ", ".join(short)
        )
    for pair_id, scores in grouped.items():
        for score in scores:
            if not 1 <= score <= 5:
                raise MetricError(f"{pair_id}: Likert score must be in 1..5, got {score}")
    means = [sum(grouped[pid]) / len(grouped[pid]) for pid in sorted(grouped)]
    return sum(means) / len(means)


def quality_uplift(ours: float, baseline: float) -> float:
    """Percent improvement of one mean score over another."""
    if baseline <= 0.0:
        raise MetricError("baseline score must be > 0")
    return 100.0 * (ours / baseline - 1.0)


def quality_histogram(annotations: list[AnnotationRecord], dimension: str = "quality") -> dict[int, int]:
    """Bucket per-question mean scores into 1..5, rounding halves up."""
    grouped = _scores_by_question(annotations, dimension)
    buckets = {b: 0 for b in range(1, 6)}
    for pair_id in sorted(grouped):
        scores = grouped[pair_id]
        for score in scores:
            if not 1 <= score <= 5:
                raise MetricError(f"{pair_id}: Likert score must be in 1..5, got {score}")
        mean = sum(scores) / len(scores)
        bucket = min(5, max(1, math.floor(mean + 0.5)))
        buckets[bucket] += 1
    return buckets


@dataclass(frozen=True)
class RunReport:
    """Verdict accounting for one pipeline run."""

    generated: int
    kept: int
    unanswerable: int
    lowscore: int
    toxic: int
    duplicate: int
    dropout: float
    articles_used: int
    articles_skipped: int
    articles_per_100: float | None
    keyword_in_answer_fraction: float | None

    def to_dict(self) -> dict:
        return {
            "generated": self.generated,
            "kept": self.kept,
            "unanswerable": self.unanswerable,
            "lowscore": self.lowscore,
            "toxic": self.toxic,
            "duplicate": self.duplicate,
            "dropout": self.dropout,
            "articles_used": self.articles_used,
            "articles_skipped": self.articles_skipped,
            "articles_per_100": self.articles_per_100,
            "keyword_in_answer_fraction": self.keyword_in_answer_fraction,
        }

    def to_text(self) -> str:
        rows = [
            ("generated", str(self.generated)),
            ("kept", str(self.kept)),
            ("unanswerable", str(self.unanswerable)),
            ("low score", str(self.lowscore)),
            ("toxic", str(self.toxic)),
            ("duplicate", str(self.duplicate)),
            ("dropout", f"{self.dropout:.4f}"),
            ("articles used", str(self.articles_used)),
            ("articles skipped", str(self.articles_skipped)),
            (
                "articles per 100 kept",
                "n/a" if self.articles_per_100 is None else f"{self.articles_per_100:.2f}",
            ),
            (
                "keyword in answer",
                "n/a"
                if self.keyword_in_answer_fraction is None
                else f"{self.keyword_in_answer_fraction:.4f}",
            ),
        ]
        width = max(len(label) for label, _ in rows)
        return "\n".join(f"{label.ljust(width)}  {value}" for label, value in rows)


def verdict_counts(records: list[QAPair]) -> dict[Verdict, int]:
    counts = {verdict: 0 for verdict in Verdict}
    for record in records:
        counts[record.verdict] += 1
    return counts


def build_report(result: CorpusResult) -> RunReport:
    records = result.records
    counts = verdict_counts(records)
    kept = counts[Verdict.KEPT]
    keyword_fraction = None
    if kept:
        containing = sum(
            1
            for r in records
            if r.verdict is Verdict.KEPT
            and r.answer is not None
            and r.keyphrase.lower() in r.answer.lower()
        )
        keyword_fraction = containing / kept
    return RunReport(
        generated=len(records),
        kept=kept,
        unanswerable=counts[Verdict.UNANSWERABLE],
        lowscore=counts[Verdict.LOWSCORE],
        toxic=counts[Verdict.TOXIC],
        duplicate=counts[Verdict.DUPLICATE],
        dropout=dropout(records) if records else 0.0,
        articles_used=result.articles_used,
        articles_skipped=result.articles_skipped,
        articles_per_100=articles_per_100(result.articles_used, kept) if kept else None,
        keyword_in_answer_fraction=keyword_fraction,
    )


@dataclass(frozen=True)
class CompareReport:
    """Maximal route vs summarize-first route over the same corpus."""

    maximal: RunReport
    baseline: RunReport
    kept_ratio: float | None

    def to_dict(self) -> dict:
        return {
            "maximal": self.maximal.to_dict(),
            "baseline": self.baseline.to_dict(),
            "kept_ratio": self.kept_ratio,
        }

    def to_text(self) -> str:
        ratio = "n/a" if self.kept_ratio is None else f"{self.kept_ratio:.2f}"
        return "\n".join(
            [
                "== maximal ==",
                self.maximal.to_text(),
                "",
                "== baseline (summarize-first) ==",
                self.baseline.to_text(),
                "",
                f"kept ratio (maximal / baseline)  {ratio}",
            ]
        )


def build_compare_report(maximal: CorpusResult, baseline: CorpusResult) -> CompareReport:
    ours = build_report(maximal)
    theirs = build_report(baseline)
    ratio = ours.kept / theirs.kept if theirs.kept else None
    return CompareReport(maximal=ours, baseline=theirs, kept_ratio=ratio)


@dataclass(frozen=True)
class EvalReport:
    """Human-evaluation summary for one annotated run."""

    questions_scored: int
    relevance: float | None
    quality: float | None
    histogram: dict[int, int] | None
    reference_quality: float | None
    uplift: float | None

    def to_dict(self) -> dict:
        return {
            "questions_scored": self.questions_scored,
            "relevance": self.relevance,
            "quality": self.quality,
            "histogram": None
            if self.histogram is None
            else {str(k): v for k, v in sorted(self.histogram.items())},
            "reference_quality": self.reference_quality,
            "uplift": self.uplift,
        }

    def to_text(self) -> str:
        lines = [f"questions scored      {self.questions_scored}"]
        if self.relevance is not None:
            lines.append(f"relevance fraction    {self.relevance:.4f}")
        if self.quality is not None:
            lines.append(f"quality (mean 1-5)    {self.quality:.4f}")
        if self.uplift is not None:
            lines.append(
                f"uplift vs reference   {self.uplift:+.1f}% (reference {self.reference_quality})"
            )
        if self.histogram is not None:
            lines.append("score histogram")
            for bucket in range(1, 6):
                lines.append(f"  {bucket}  {self.histogram[bucket]}")
        return "\n".join(lines)


def build_eval_report(
    records: list[QAPair],
    annotations: list[AnnotationRecord],
    reference_quality: float | None = None,
) -> EvalReport:
    """Join annotations to records and aggregate whichever dimensions exist.

    Annotations must reference known pair ids; a stray id is an error, not
    a silent drop.
    """
    known = {r.pair_id for r in records}
    stray = sorted({a.pair_id for a in annotations} - known)
    if stray:
        raise MetricError("annotations reference unknown pair ids: " + ", ".join(stray[:10]))
    dimensions = {a.dimension for a in annotations}
    relevance = relevance_fraction(annotations) if "relevance" in dimensions else None
    quality = None
    histogram = None
    if "quality" in dimensions:
        quality = likert_aggregate(annotations)
        histogram = quality_histogram(annotations)
    uplift = None
    if reference_quality is not None:
        if quality is None:
            raise MetricError("uplift needs quality annotations")
        uplift = quality_uplift(quality, reference_quality)
    return EvalReport(
        questions_scored=len({a.pair_id for a in annotations}),
        relevance=relevance,
        quality=quality,
        histogram=histogram,
        reference_quality=reference_quality,
        uplift=uplift,
    )
