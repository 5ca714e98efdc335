import json
import subprocess
import sys

import pytest

from qforge.cli import main
from qforge.corpus import Article, write_articles
from qforge.pipeline import Verdict, load_pairs

ENV = "QFORGE_BACKEND_URL"


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv(ENV, raising=False)


@pytest.fixture
def small_corpus(tmp_path):
    articles = [
        Article(id="z0", body="."),  # parses, yields no candidate phrases
        Article(id="a1", body="The silver maple grew. A crow watched."),
        Article(id="a2", body="The silver maple fell. The crow left."),
        Article(id="a3", body="Quiet rivers bend north. Old mills turn slow."),
    ]
    path = tmp_path / "articles.jsonl"
    write_articles(path, articles)
    return path


def run_cli(args, capsys):
    code = main(args)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestUsage:
    def test_no_command_exits_1(self, capsys):
        code, _, err = run_cli([], capsys)
        assert code == 1
        assert "error" in err

    def test_unknown_command_exits_1(self, capsys):
        code, _, _ = run_cli(["transmogrify"], capsys)
        assert code == 1

    def test_version_exits_0(self, capsys):
        code, out, _ = run_cli(["--version"], capsys)
        assert code == 0
        assert out.startswith("qforge ")

    def test_missing_input_file(self, tmp_path, capsys):
        code, _, err = run_cli(
            ["run", "--input", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "o.jsonl")],
            capsys,
        )
        assert code == 1
        assert "error:" in err

    def test_bad_config_value(self, small_corpus, tmp_path, capsys):
        code, _, err = run_cli(
            [
                "run",
                "--input",
                str(small_corpus),
                "--out",
                str(tmp_path / "o.jsonl"),
                "--mmr-lambda",
                "sideways",
            ],
            capsys,
        )
        assert code == 1
        assert "not a number" in err

    def test_missing_output_directory(self, small_corpus, tmp_path, capsys):
        code, _, err = run_cli(
            [
                "run",
                "--input",
                str(small_corpus),
                "--out",
                str(tmp_path / "absent" / "o.jsonl"),
                "--min-words",
                "1",
            ],
            capsys,
        )
        assert code == 1
        assert "output directory" in err

    def test_stub_only_flags_rejected_for_http(self, small_corpus, tmp_path, capsys):
        blocklist = tmp_path / "block.txt"
        blocklist.write_text("maple\n", encoding="utf-8")
        code, _, err = run_cli(
            [
                "run",
                "--input",
                str(small_corpus),
                "--out",
                str(tmp_path / "o.jsonl"),
                "--backend",
                "http://127.0.0.1:1",
                "--blocklist",
                str(blocklist),
            ],
            capsys,
        )
        assert code == 1
        assert "only apply to the stub backend" in err

    def test_bad_workers(self, small_corpus, tmp_path, capsys):
        code, _, err = run_cli(
            [
                "run",
                "--input",
                str(small_corpus),
                "--out",
                str(tmp_path / "o.jsonl"),
                "--workers",
                "0",
            ],
            capsys,
        )
        assert code == 1
        assert "--workers" in err


class TestRun:
    def _run(self, corpus, out, capsys, *extra):
        return run_cli(
            ["run", "--input", str(corpus), "--out", str(out), "--min-words", "1", *extra],
            capsys,
        )

    def test_happy_path_writes_all_artifacts(self, small_corpus, tmp_path, capsys):
        out = tmp_path / "pairs.jsonl"
        code, stdout, _ = self._run(small_corpus, out, capsys)
        assert code == 0
        assert "generated" in stdout and "dropout" in stdout
        assert out.exists()
        assert (tmp_path / "pairs.graph.json").exists()
        assert (tmp_path / "pairs.report.json").exists()
        assert (tmp_path / "pairs.manifest.json").exists()
        assert not (tmp_path / "pairs.partial.jsonl").exists()
        assert not (tmp_path / "pairs.resume.json").exists()
        records = load_pairs(out)
        assert records
        assert all(not r.baseline for r in records)

    def test_two_runs_are_byte_identical(self, small_corpus, tmp_path, capsys):
        first = tmp_path / "one" / "pairs.jsonl"
        second = tmp_path / "two" / "pairs.jsonl"
        first.parent.mkdir()
        second.parent.mkdir()
        assert self._run(small_corpus, first, capsys)[0] == 0
        assert self._run(small_corpus, second, capsys)[0] == 0
        assert first.read_bytes() == second.read_bytes()
        assert (first.parent / "pairs.graph.json").read_bytes() == (
            second.parent / "pairs.graph.json"
        ).read_bytes()
        assert (first.parent / "pairs.report.json").read_bytes() == (
            second.parent / "pairs.report.json"
        ).read_bytes()

    def test_worker_count_does_not_change_output(self, small_corpus, tmp_path, capsys):
        one = tmp_path / "w1.jsonl"
        four = tmp_path / "w4.jsonl"
        assert self._run(small_corpus, one, capsys, "--workers", "1")[0] == 0
        assert self._run(small_corpus, four, capsys, "--workers", "4")[0] == 0
        assert one.read_bytes() == four.read_bytes()

    def test_manifest_records_settings(self, small_corpus, tmp_path, capsys):
        out = tmp_path / "pairs.jsonl"
        self._run(small_corpus, out, capsys, "--top-k-keyphrases", "3")
        manifest = json.loads((tmp_path / "pairs.manifest.json").read_text(encoding="utf-8"))
        assert manifest["command"] == "run"
        assert manifest["backend"] == "stub"
        assert manifest["config"]["top_k_keyphrases"] == 3
        assert manifest["config"]["min_words"] == 1
        assert manifest["articles_used"] == 4

    def test_config_file_with_flag_override(self, small_corpus, tmp_path, capsys):
        config = tmp_path / "settings.conf"
        config.write_text(
            "top_k_keyphrases = 1\nmin_words = 1  # fixture articles are tiny\n",
            encoding="utf-8",
        )
        out = tmp_path / "pairs.jsonl"
        code, _, _ = run_cli(
            [
                "run",
                "--input",
                str(small_corpus),
                "--out",
                str(out),
                "--config",
                str(config),
                "--top-k-keyphrases",
                "2",
            ],
            capsys,
        )
        assert code == 0
        manifest = json.loads((tmp_path / "pairs.manifest.json").read_text(encoding="utf-8"))
        assert manifest["config"]["top_k_keyphrases"] == 2  # flag beats file
        assert manifest["config"]["min_words"] == 1  # file beats default

    def test_config_file_unknown_key(self, small_corpus, tmp_path, capsys):
        config = tmp_path / "settings.conf"
        config.write_text("beam_width=4\n", encoding="utf-8")
        code, _, err = run_cli(
            [
                "run",
                "--input",
                str(small_corpus),
                "--out",
                str(tmp_path / "o.jsonl"),
                "--config",
                str(config),
            ],
            capsys,
        )
        assert code == 1
        assert "unknown config key" in err

    def test_default_min_words_skips_small_articles(self, small_corpus, tmp_path, capsys):
        out = tmp_path / "pairs.jsonl"
        code, stdout, _ = run_cli(
            ["run", "--input", str(small_corpus), "--out", str(out)], capsys
        )
        assert code == 0
        assert "articles skipped" in stdout
        report = json.loads((tmp_path / "pairs.report.json").read_text(encoding="utf-8"))
        assert report["articles_skipped"] == 4
        assert load_pairs(out) == []

    def test_blocklist_marks_toxic(self, small_corpus, tmp_path, capsys):
        blocklist = tmp_path / "block.txt"
        blocklist.write_text("maple\n", encoding="utf-8")
        out = tmp_path / "pairs.jsonl"
        code, _, _ = self._run(small_corpus, out, capsys, "--blocklist", str(blocklist))
        assert code == 0
        records = load_pairs(out)
        assert any(r.verdict is Verdict.TOXIC for r in records)

    def test_coref_table_rewrites(self, tmp_path, capsys):
        articles = tmp_path / "a.jsonl"
        write_articles(articles, [Article(id="c1", body="Vera arrived. She spoke.")])
        table = tmp_path / "coref.json"
        table.write_text('{"She": "Vera"}', encoding="utf-8")
        out = tmp_path / "pairs.jsonl"
        code, _, _ = self._run(articles, out, capsys, "--coref-table", str(table))
        assert code == 0
        assert any(r.context == "Vera spoke." for r in load_pairs(out))


class TestRunFixtureCorpus:
    def test_matches_recorded_golden_output(self, articles_path, data_dir, tmp_path, capsys):
        out = tmp_path / "pairs.jsonl"
        code, _, _ = run_cli(
            ["run", "--input", str(articles_path), "--out", str(out)], capsys
        )
        assert code == 0
        assert out.read_bytes() == (data_dir / "golden_run.jsonl").read_bytes()
        assert (tmp_path / "pairs.graph.json").read_bytes() == (
            data_dir / "golden_run.graph.json"
        ).read_bytes()


class TestResume:
    def _args(self, corpus, out, *extra):
        return [
            "run",
            "--input",
            str(corpus),
            "--out",
            str(out),
            "--min-words",
            "1",
            "--workers",
            "1",
            *extra,
        ]

    def test_partial_then_resume_matches_clean_run(
        self, small_corpus, tmp_path, capsys, wire_server, monkeypatch
    ):
        monkeypatch.setenv(ENV, wire_server.url)
        clean = tmp_path / "clean" / "pairs.jsonl"
        clean.parent.mkdir()
        assert main(self._args(small_corpus, clean)) == 0
        capsys.readouterr()

        out = tmp_path / "resumed" / "pairs.jsonl"
        out.parent.mkdir()
        # z0 makes no answer calls, so the first /v1/answer hit is a1's.
        # Three failures outlast the client's two retries.
        wire_server.fail_next("/v1/answer", 3)
        code, _, err = run_cli(self._args(small_corpus, out), capsys)
        assert code == 2
        assert "article a1" in err
        assert "--resume" in err
        assert not out.exists()
        resume_path = out.parent / "pairs.resume.json"
        state = json.loads(resume_path.read_text(encoding="utf-8"))
        assert state["completed"] == ["z0", "a2", "a3"]

        code, _, err = run_cli(self._args(small_corpus, out, "--resume"), capsys)
        assert code == 0
        assert "resuming: 3 articles already done" in err
        assert out.read_bytes() == clean.read_bytes()
        assert (out.parent / "pairs.graph.json").read_bytes() == (
            clean.parent / "pairs.graph.json"
        ).read_bytes()
        assert (out.parent / "pairs.report.json").read_bytes() == (
            clean.parent / "pairs.report.json"
        ).read_bytes()
        assert not resume_path.exists()
        assert not (out.parent / "pairs.partial.jsonl").exists()

    def test_resume_tolerates_torn_final_line(
        self, small_corpus, tmp_path, capsys, wire_server, monkeypatch
    ):
        monkeypatch.setenv(ENV, wire_server.url)
        out = tmp_path / "pairs.jsonl"
        wire_server.fail_next("/v1/answer", 3)
        assert main(self._args(small_corpus, out)) == 2
        capsys.readouterr()
        partial = tmp_path / "pairs.partial.jsonl"
        with open(partial, "a", encoding="utf-8") as fh:
            fh.write('{"article_id": "a3", "keyph')  # simulated death mid-append
        code, _, err = run_cli(self._args(small_corpus, out, "--resume"), capsys)
        assert code == 0
        assert "torn final line" in err

    def test_stale_state_from_other_run_is_discarded(
        self, small_corpus, tmp_path, capsys
    ):
        out = tmp_path / "pairs.jsonl"
        (tmp_path / "pairs.partial.jsonl").write_text("not json\n", encoding="utf-8")
        (tmp_path / "pairs.resume.json").write_text('{"completed": []}', encoding="utf-8")
        code, _, _ = run_cli(self._args(small_corpus, out), capsys)
        assert code == 0  # without --resume the leftovers are ignored and removed
        assert not (tmp_path / "pairs.partial.jsonl").exists()

    def test_resume_with_unreadable_state(self, small_corpus, tmp_path, capsys):
        out = tmp_path / "pairs.jsonl"
        (tmp_path / "pairs.resume.json").write_text("{broken", encoding="utf-8")
        code, _, err = run_cli(self._args(small_corpus, out, "--resume"), capsys)
        assert code == 1
        assert "unreadable resume file" in err


class TestBackendSelection:
    def test_env_url_is_used(self, small_corpus, tmp_path, capsys, wire_server, monkeypatch):
        monkeypatch.setenv(ENV, wire_server.url)
        out = tmp_path / "pairs.jsonl"
        code, _, _ = run_cli(
            ["run", "--input", str(small_corpus), "--out", str(out), "--min-words", "1"],
            capsys,
        )
        assert code == 0
        assert wire_server.request_counts.get("/v1/embed", 0) > 0
        manifest = json.loads((tmp_path / "pairs.manifest.json").read_text(encoding="utf-8"))
        assert manifest["backend"] == wire_server.url

    def test_backend_flag_overrides_env(
        self, small_corpus, tmp_path, capsys, wire_server, monkeypatch
    ):
        monkeypatch.setenv(ENV, wire_server.url)
        out = tmp_path / "pairs.jsonl"
        code, _, _ = run_cli(
            [
                "run",
                "--input",
                str(small_corpus),
                "--out",
                str(out),
                "--min-words",
                "1",
                "--backend",
                "stub",
            ],
            capsys,
        )
        assert code == 0
        assert wire_server.request_counts == {}

    def test_http_and_stub_runs_agree(
        self, small_corpus, tmp_path, capsys, wire_server, monkeypatch
    ):
        monkeypatch.setenv(ENV, wire_server.url)
        via_http = tmp_path / "http.jsonl"
        via_stub = tmp_path / "stub.jsonl"
        base = ["run", "--input", str(small_corpus), "--min-words", "1"]
        assert main(base + ["--out", str(via_http)]) == 0
        assert main(base + ["--out", str(via_stub), "--backend", "stub"]) == 0
        capsys.readouterr()
        assert via_http.read_bytes() == via_stub.read_bytes()

    def test_unreachable_backend_exits_with_error(self, small_corpus, tmp_path, capsys):
        out = tmp_path / "pairs.jsonl"
        code, _, err = run_cli(
            [
                "run",
                "--input",
                str(small_corpus),
                "--out",
                str(out),
                "--min-words",
                "1",
                "--backend",
                "http://127.0.0.1:1",
                "--timeout-ms",
                "200",
                "--max-retries",
                "0",
            ],
            capsys,
        )
        assert code == 1  # health probe fails before any article work
        assert "error:" in err


class TestCompare:
    def test_compare_writes_both_routes(self, small_corpus, tmp_path, capsys):
        out = tmp_path / "cmp.jsonl"
        code, stdout, _ = run_cli(
            ["compare", "--input", str(small_corpus), "--out", str(out), "--min-words", "1"],
            capsys,
        )
        assert code == 0
        assert "== maximal ==" in stdout
        assert "kept ratio" in stdout
        records = load_pairs(out)
        assert any(r.baseline for r in records)
        assert any(not r.baseline for r in records)
        report = json.loads((tmp_path / "cmp.report.json").read_text(encoding="utf-8"))
        assert report["kept_ratio"] is None or report["kept_ratio"] > 0
        assert (tmp_path / "cmp.manifest.json").exists()
        assert not (tmp_path / "cmp.graph.json").exists()


class TestEval:
    def test_eval_text_output(self, data_dir, capsys):
        code, out, _ = run_cli(
            [
                "eval",
                "--pairs",
                str(data_dir / "eval_pairs.jsonl"),
                "--annotations",
                str(data_dir / "eval_annotations.csv"),
            ],
            capsys,
        )
        assert code == 0
        assert "questions scored      4" in out
        assert "relevance fraction    0.5000" in out
        assert "quality (mean 1-5)    3.2500" in out

    def test_eval_json_output_with_reference(self, data_dir, capsys):
        code, out, _ = run_cli(
            [
                "eval",
                "--pairs",
                str(data_dir / "eval_pairs.jsonl"),
                "--annotations",
                str(data_dir / "eval_annotations.csv"),
                "--reference-quality",
                "2.5",
                "--json",
            ],
            capsys,
        )
        assert code == 0
        data = json.loads(out)
        assert data["questions_scored"] == 4
        assert data["uplift"] == pytest.approx(100 * (3.25 / 2.5 - 1))

    def test_eval_stray_annotation(self, data_dir, tmp_path, capsys):
        stray = tmp_path / "stray.csv"
        stray.write_text(
            "pair_id,rater_id,dimension,score\nghost:0:0,r1,quality,3\n", encoding="utf-8"
        )
        code, _, err = run_cli(
            [
                "eval",
                "--pairs",
                str(data_dir / "eval_pairs.jsonl"),
                "--annotations",
                str(stray),
            ],
            capsys,
        )
        assert code == 1
        assert "unknown pair ids" in err


class TestGraphCommand:
    @pytest.fixture
    def run_outputs(self, small_corpus, tmp_path, capsys):
        out = tmp_path / "pairs.jsonl"
        assert (
            main(
                ["run", "--input", str(small_corpus), "--out", str(out), "--min-words", "1"]
            )
            == 0
        )
        capsys.readouterr()
        return out, tmp_path / "pairs.graph.json"

    def test_phrase_lookup(self, run_outputs, capsys):
        _, graph_file = run_outputs
        code, out, _ = run_cli(
            ["graph", "--graph-file", str(graph_file), "--phrase", "silver maple"], capsys
        )
        assert code == 0
        ids = out.splitlines()
        assert len(ids) == 2
        assert all(":" in pid for pid in ids)

    def test_rebuild_from_pairs_matches_graph_file(self, run_outputs, capsys):
        pairs, graph_file = run_outputs
        code, from_file, _ = run_cli(["graph", "--graph-file", str(graph_file)], capsys)
        assert code == 0
        code, from_pairs, _ = run_cli(["graph", "--pairs", str(pairs)], capsys)
        assert code == 0
        assert from_file == from_pairs
        assert "silver maple" in from_file.splitlines()

    def test_unknown_phrase_prints_nothing(self, run_outputs, capsys):
        _, graph_file = run_outputs
        code, out, _ = run_cli(
            ["graph", "--graph-file", str(graph_file), "--phrase", "krakatoa"], capsys
        )
        assert code == 0
        assert out == ""

    def test_requires_exactly_one_source(self, run_outputs, capsys):
        pairs, graph_file = run_outputs
        code, _, _ = run_cli(
            ["graph", "--graph-file", str(graph_file), "--pairs", str(pairs)], capsys
        )
        assert code == 1


class TestStats:
    def test_text_output(self, articles_path, capsys):
        code, out, _ = run_cli(["stats", "--input", str(articles_path)], capsys)
        assert code == 0
        assert "article_count" in out
        assert "evergreen_fraction" in out

    def test_json_output(self, articles_path, capsys):
        code, out, _ = run_cli(["stats", "--input", str(articles_path), "--json"], capsys)
        assert code == 0
        data = json.loads(out)
        assert data["article_count"] == 12
        assert data["evergreen_count"] == 1


class TestSubprocessEntry:
    def test_module_entry_point(self, articles_path):
        proc = subprocess.run(
            [sys.executable, "-m", "qforge.cli", "stats", "--input", str(articles_path)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert "article_count" in proc.stdout
        assert proc.stderr == ""

    def test_console_script(self):
        proc = subprocess.run(
            ["qforge", "--version"], capture_output=True, text=True
        )
        assert proc.returncode == 0
        assert proc.stdout.startswith("qforge ")

    def test_diagnostics_go_to_stderr(self, tmp_path):
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "qforge.cli",
                "stats",
                "--input",
                str(tmp_path / "missing.jsonl"),
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 1
        assert proc.stdout == ""
        assert "error:" in proc.stderr
