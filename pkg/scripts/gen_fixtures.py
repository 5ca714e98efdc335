"""Regenerate the committed test fixtures under tests/data/.

Deterministic: same seed, same bytes.  Run from the repo root after an
editable install:

    python scripts/gen_fixtures.py

golden_run.jsonl and golden_run.graph.json are not produced here; they
pin the engine's own output on the fixture corpus.  After an intentional
behavior change, refresh them with:

    qforge run --input tests/data/articles_12.jsonl --out /tmp/run.jsonl
    cp /tmp/run.jsonl tests/data/golden_run.jsonl
    cp /tmp/run.graph.json tests/data/golden_run.graph.json
"""

from __future__ import annotations

import csv
import random
from pathlib import Path

from qforge.corpus import Article, write_articles
from qforge.pipeline import QAPair, Verdict, write_pairs

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"

ADJECTIVES = ["new", "quiet", "busy", "old", "narrow", "bright", "heavy", "spare"]
VERBS = ["passed", "reached", "cleared", "measured", "served", "moved", "filled", "crossed"]
PLACES = ["station", "square", "bridge", "yard", "hall", "lane", "shore", "corner"]

# One lede noun and one topic word bank per article.  Ledes are chosen so
# the first sentence carries exactly one candidate phrase.
TOPICS = [
    ("a01", "briefing", ["tram", "depot", "timetable", "platform", "conductor"]),
    ("a02", "digest", ["ferry", "quay", "lighthouse", "tide", "mooring"]),
    ("a03", "bulletin", ["oven", "rye", "sourdough", "miller", "flour"]),
    ("a04", "recap", ["apple", "cider", "beekeeper", "blossom", "harvest"]),
    ("a05", "rundown", ["archive", "catalog", "shelf", "librarian", "atlas"]),
    ("a06", "overview", ["panel", "inverter", "substation", "meadow", "turbine"]),
    ("a07", "update", ["weir", "turbine", "salmon", "gauge", "floodplain"]),
    ("a08", "readout", ["gallery", "curator", "mosaic", "exhibit", "vault"]),
    ("a09", "notice", ["café", "crêpe", "terrace", "barista", "menu"]),
    ("a10", "memo", ["stall", "vendor", "crate", "auction", "scale"]),
    ("a11", "dispatch", ["nurse", "ward", "vaccine", "clinic", "registry"]),
    ("a12", "gazette", ["storm", "radar", "forecast", "barometer", "front"]),
]

BODY_SENTENCES = 56  # 4 lede words + 56 * 9 = 508 words, inside [500, 511]


def build_articles() -> list[Article]:
    rng = random.Random(20260822)
    articles = []
    for i, (article_id, lede_noun, nouns) in enumerate(TOPICS):
        sentences = [f"Here is the {lede_noun}."]
        for _ in range(BODY_SENTENCES):
            sentences.append(
                "The {} {} {} the {} near the {}.".format(
                    rng.choice(ADJECTIVES),
                    rng.choice(nouns),
                    rng.choice(VERBS),
                    rng.choice(nouns),
                    rng.choice(PLACES),
                )
            )
        body = " ".join(sentences)
        word_count = len(body.split())
        assert 500 <= word_count <= 511, (article_id, word_count)
        articles.append(
            Article(
                id=article_id,
                title=f"The {lede_noun} for {nouns[0]} watchers",
                body=body,
                hashtags=("#news", f"#{nouns[0]}") if i < 7 else (),
                evergreen=article_id == "a05",
                source="wire" if i % 2 == 0 else None,
            )
        )
    return articles


def build_eval_pairs() -> list[QAPair]:
    pairs = []
    for article_id, rank, sentence in (("e01", 0, 0), ("e01", 1, 0), ("e02", 0, 1), ("e02", 1, 1)):
        topic = f"topic {article_id}-{rank}"
        context = f"A line about {topic} sits here."
        pairs.append(
            QAPair(
                article_id=article_id,
                keyphrase=topic,
                keyphrase_rank=rank,
                sentence_index=sentence,
                context=context,
                question=f"What does the article say about {topic}?",
                answer=context,
                answer_start=0,
                answer_end=len(context.encode("utf-8")),
                qa_score=0.9,
                toxicity=0.0,
                verdict=Verdict.KEPT,
                baseline=False,
            )
        )
    return pairs


def write_eval_annotations(path: Path) -> None:
    quality = {
        "e01:0:0": (4, 4),
        "e01:1:0": (3, 4),
        "e02:0:1": (2, 3),
        "e02:1:1": (3, 3),
    }
    relevance = {
        "e01:0:0": (1, 1, 0),
        "e01:1:0": (1, 0, 0),
        "e02:0:1": (1, 1, 1),
        "e02:1:1": (0, 0, 1),
    }
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["pair_id", "rater_id", "dimension", "score"])
        for pair_id, scores in quality.items():
            for rater, score in enumerate(scores, start=1):
                writer.writerow([pair_id, f"r{rater}", "quality", score])
        for pair_id, votes in relevance.items():
            for rater, vote in enumerate(votes, start=1):
                writer.writerow([pair_id, f"r{rater}", "relevance", vote])


def main() -> None:
    DATA.mkdir(parents=True, exist_ok=True)
    write_articles(DATA / "articles_12.jsonl", build_articles())
    write_pairs(DATA / "eval_pairs.jsonl", build_eval_pairs())
    write_eval_annotations(DATA / "eval_annotations.csv")
    (DATA / "blocklist.txt").write_text("zorgul\nflarnox\ngrimble\n", encoding="utf-8")
    print(f"fixtures written to {DATA}")


if __name__ == "__main__":
    main()
