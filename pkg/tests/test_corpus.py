import json

import pytest

from qforge.corpus import (
    Article,
    CorpusError,
    corpus_stats,
    load_articles,
    validate_article,
    write_articles,
)


def _write(tmp_path, lines):
    path = tmp_path / "articles.jsonl"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_load_minimal_article(tmp_path):
    path = _write(tmp_path, ['{"id": "a1", "body": "Words here."}'])
    (article,) = load_articles(path)
    assert article.id == "a1"
    assert article.body == "Words here."
    assert article.title == ""
    assert article.hashtags == ()
    assert article.evergreen is False
    assert article.source is None
    assert article.line_no == 1


def test_load_skips_blank_lines(tmp_path):
    path = _write(
        tmp_path,
        ['{"id": "a1", "body": "One."}', "", "   ", '{"id": "a2", "body": "Two."}'],
    )
    articles = load_articles(path)
    assert [a.id for a in articles] == ["a1", "a2"]
    assert articles[1].line_no == 4


def test_load_rejects_missing_id(tmp_path):
    path = _write(tmp_path, ['{"id": "a1", "body": "x y."}', '{"body": "no id."}'])
    with pytest.raises(CorpusError, match=r"line 2: missing id"):
        load_articles(path)


def test_load_rejects_blank_body(tmp_path):
    path = _write(tmp_path, ['{"id": "a1", "body": "   "}'])
    with pytest.raises(CorpusError, match=r"line 1: body must be a non-empty string"):
        load_articles(path)


def test_load_rejects_bad_json(tmp_path):
    path = _write(tmp_path, ["{not json"])
    with pytest.raises(CorpusError, match=r"line 1: invalid JSON"):
        load_articles(path)


def test_load_rejects_non_object(tmp_path):
    path = _write(tmp_path, ['["id", "a1"]'])
    with pytest.raises(CorpusError, match=r"line 1: expected a JSON object"):
        load_articles(path)


def test_load_rejects_bad_hashtags(tmp_path):
    path = _write(tmp_path, ['{"id": "a1", "body": "x.", "hashtags": "nope"}'])
    with pytest.raises(CorpusError, match=r"hashtags must be an array of strings"):
        load_articles(path)


def test_load_rejects_duplicate_id_naming_both_lines(tmp_path):
    path = _write(
        tmp_path,
        [
            '{"id": "a1", "body": "One."}',
            '{"id": "a2", "body": "Two."}',
            '{"id": "a1", "body": "Three."}',
        ],
    )
    with pytest.raises(CorpusError, match=r"duplicate id 'a1' on lines 1 and 3"):
        load_articles(path)


def test_unknown_keys_ride_along(tmp_path):
    path = _write(tmp_path, ['{"id": "a1", "body": "x.", "lang": "en", "n": 3}'])
    (article,) = load_articles(path)
    assert article.extra == {"lang": "en", "n": 3}

    out = tmp_path / "out.jsonl"
    write_articles(out, [article])
    written = json.loads(out.read_text(encoding="utf-8"))
    assert written["lang"] == "en"
    assert written["n"] == 3


def test_write_then_load_round_trips(tmp_path):
    original = [
        Article(id="a1", body="Some body text.", title="T", hashtags=("#x",), evergreen=True),
        Article(id="a2", body="Another body.", source="wire"),
    ]
    path = tmp_path / "rt.jsonl"
    write_articles(path, original)
    loaded = load_articles(path)
    assert loaded == original  # line_no/extra excluded from equality


def test_write_omits_null_source(tmp_path):
    path = tmp_path / "s.jsonl"
    write_articles(path, [Article(id="a1", body="b.")])
    assert "source" not in json.loads(path.read_text(encoding="utf-8"))


def test_word_count_is_whitespace_runs():
    assert Article(id="a", body="one  two\tthree\nfour ").word_count() == 4


def test_validate_article_bound_is_inclusive():
    article = Article(id="a", body="w1 w2 w3 w4 w5")
    assert validate_article(article, min_words=5).valid
    assert not validate_article(article, min_words=6).valid
    assert validate_article(article, min_words=6).word_count == 5


def test_validate_article_rejects_bad_min_words():
    with pytest.raises(ValueError):
        validate_article(Article(id="a", body="b"), min_words=0)


def test_corpus_stats_counts():
    articles = [
        Article(id="a1", body="b", hashtags=("#x",)),
        Article(id="a2", body="b", evergreen=True),
        Article(id="a3", body="b", hashtags=("#y", "#z"), evergreen=True),
        Article(id="a4", body="b"),
    ]
    stats = corpus_stats(articles)
    assert stats.article_count == 4
    assert stats.with_hashtags == 2
    assert stats.evergreen_count == 2
    assert stats.evergreen_fraction == 0.5


def test_corpus_stats_rejects_empty():
    with pytest.raises(CorpusError, match="empty corpus"):
        corpus_stats([])


def test_fixture_corpus_shape(articles_path):
    articles = load_articles(articles_path)
    stats = corpus_stats(articles)
    assert stats.article_count == 12
    assert stats.with_hashtags == 7
    assert stats.evergreen_count == 1
    for article in articles:
        assert validate_article(article, min_words=500).valid
        assert article.word_count() <= 511
