"""Command-line front end.

Commands: run (maximal generation over a corpus), compare (maximal vs the
summarize-first baseline), eval (rater-annotation metrics), graph (query
keyphrase links), stats (corpus shape).  Data goes to stdout or the --out
file; diagnostics go to stderr.  Exit codes: 0 success, 1 usage or input
error, 2 partial run with a resume file left behind.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .backend import BackendConfig, BackendError, create_backend
from .backend.stub import load_blocklist
from .corpus import CorpusError, corpus_stats, load_articles
from .metrics import (
    MetricError,
    build_compare_report,
    build_eval_report,
    build_report,
    load_annotations,
)
from .pipeline import (
    PipelineConfig,
    QAPair,
    QuestionGraph,
    Verdict,
    atomic_write_text,
    dumps_pair,
    load_pairs,
    parse_pair_line,
    run_corpus,
    write_pairs,
)

_ENV_BACKEND = "QFORGE_BACKEND_URL"
_CONFIG_KEYS = (
    "top_k_keyphrases",
    "mmr_lambda",
    "window",
    "max_input_tokens",
    "null_threshold",
    "toxicity_threshold",
    "dedupe",
    "coref_policy",
    "min_words",
)
_RUN_CAPS = ("embed", "generate", "answer")
_COMPARE_CAPS = _RUN_CAPS + ("summarize", "count_tokens")


class _UsageError(Exception):
    """Raised for input problems that should exit 1 with a message."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage by default; this tool reserves 2 for
    # partial runs, so usage errors exit 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="qforge", description=__doc__)
    parser.add_argument("--version", action="version", version=f"qforge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_backend_args(p: _Parser) -> None:
        p.add_argument(
            "--backend",
            help=f"backend URL, or 'stub' (default: ${_ENV_BACKEND} if set, else stub)",
        )
        p.add_argument("--timeout-ms", type=int, default=10_000)
        p.add_argument("--max-retries", type=int, default=2)
        p.add_argument("--blocklist", help="toxicity word list for the stub backend")
        p.add_argument(
            "--coref-table", help="JSON word-replacement table for the stub backend"
        )

    def add_config_args(p: _Parser) -> None:
        p.add_argument("--config", help="key=value settings file")
        for key in _CONFIG_KEYS:
            p.add_argument("--" + key.replace("_", "-"), dest=key)

    run = sub.add_parser("run", help="generate question-answer pairs for a corpus")
    run.add_argument("--input", required=True, help="articles JSONL")
    run.add_argument("--out", required=True, help="output pairs JSONL")
    run.add_argument("--workers", type=int, default=None)
    run.add_argument(
        "--resume", action="store_true", help="continue from a partial run's resume file"
    )
    add_config_args(run)
    add_backend_args(run)

    compare = sub.add_parser(
        "compare", help="run the maximal route and the summarize-first baseline"
    )
    compare.add_argument("--input", required=True)
    compare.add_argument("--out", required=True)
    compare.add_argument("--workers", type=int, default=None)
    add_config_args(compare)
    add_backend_args(compare)

    ev = sub.add_parser("eval", help="aggregate rater annotations for a pairs file")
    ev.add_argument("--pairs", required=True)
    ev.add_argument("--annotations", required=True, help="CSV: pair_id,rater_id,dimension,score")
    ev.add_argument(
        "--reference-quality",
        type=float,
        help="mean quality score to report uplift against",
    )
    ev.add_argument("--json", action="store_true")

    graph = sub.add_parser("graph", help="query keyphrase links between questions")
    source = graph.add_mutually_exclusive_group(required=True)
    source.add_argument("--graph-file", help="graph JSON written by run")
    source.add_argument("--pairs", help="pairs JSONL to rebuild the graph from")
    graph.add_argument("--phrase", help="print pair ids linked to this keyphrase")

    stats = sub.add_parser("stats", help="summarize an article corpus")
    stats.add_argument("--input", required=True)
    stats.add_argument("--json", action="store_true")

    return parser


def _parse_config_file(path: str) -> dict[str, str]:
    mapping: dict[str, str] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise _UsageError(f"cannot read config file: {exc}") from None
    for line_no, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise _UsageError(f"config line {line_no}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        mapping[key.strip()] = value.strip()
    return mapping


def _build_config(args) -> PipelineConfig:
    mapping: dict[str, str] = {}
    if args.config:
        mapping.update(_parse_config_file(args.config))
    for key in _CONFIG_KEYS:
        value = getattr(args, key)
        if value is not None:
            mapping[key] = value
    try:
        return PipelineConfig.from_mapping(mapping)
    except ValueError as exc:
        raise _UsageError(str(exc)) from None


def _make_backend(args):
    url = args.backend or os.environ.get(_ENV_BACKEND) or "stub"
    blocklist = frozenset()
    if args.blocklist:
        try:
            blocklist = load_blocklist(args.blocklist)
        except OSError as exc:
            raise _UsageError(f"cannot read blocklist: {exc}") from None
    coref_table = None
    if args.coref_table:
        try:
            with open(args.coref_table, encoding="utf-8") as fh:
                coref_table = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise _UsageError(f"cannot read coref table: {exc}") from None
        if not isinstance(coref_table, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in coref_table.items()
        ):
            raise _UsageError("coref table must map strings to strings")
    if url != "stub" and (args.blocklist or args.coref_table):
        raise _UsageError("--blocklist and --coref-table only apply to the stub backend")
    try:
        config = BackendConfig(
            base_url=url, timeout_ms=args.timeout_ms, max_retries=args.max_retries
        )
    except ValueError as exc:
        raise _UsageError(str(exc)) from None
    return create_backend(config, blocklist=blocklist, coref_table=coref_table)


def _check_caps(backend, needed: tuple[str, ...]) -> None:
    caps = set(backend.capabilities())
    missing = [c for c in needed if c not in caps]
    if missing:
        raise _UsageError(f"backend lacks required capabilities: {', '.join(missing)}")


def _workers(args) -> int:
    workers = args.workers if args.workers is not None else (os.cpu_count() or 1)
    if workers < 1:
        raise _UsageError("--workers must be >= 1")
    return workers


def _sidecar(out: Path, kind: str) -> Path:
    name = out.name
    base = name[: -len(".jsonl")] if name.endswith(".jsonl") else name
    return out.with_name(f"{base}.{kind}")


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_manifest(path: Path, payload: dict) -> None:
    atomic_write_text(path, json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n")


def _load_partial(path: Path, allowed: set[str]) -> dict[str, list[QAPair]]:
    """Read per-article records saved by an aborted run.

    A torn final line (the process died mid-append) is dropped with a
    warning; damage anywhere else is a real error.
    """
    grouped: dict[str, list[QAPair]] = {}
    lines = path.read_text(encoding="utf-8").splitlines()
    for idx, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            record = parse_pair_line(line, idx + 1)
        except ValueError:
            if idx == len(lines) - 1:
                print(f"warning: dropping torn final line of {path}", file=sys.stderr)
                break
            raise
        if record.article_id in allowed:
            grouped.setdefault(record.article_id, []).append(record)
    return grouped


def _cmd_run(args) -> int:
    articles = load_articles(args.input)
    config = _build_config(args)
    backend = _make_backend(args)
    _check_caps(backend, _RUN_CAPS)
    workers = _workers(args)

    out = Path(args.out)
    if out.parent and not out.parent.exists():
        raise _UsageError(f"output directory does not exist: {out.parent}")
    partial_path = _sidecar(out, "partial.jsonl")
    resume_path = _sidecar(out, "resume.json")

    completed: dict[str, list[QAPair]] = {}
    completed_order: list[str] = []
    if args.resume and resume_path.exists():
        try:
            state = json.loads(resume_path.read_text(encoding="utf-8"))
            prior_ids = state["completed"]
            if not isinstance(prior_ids, list) or not all(
                isinstance(i, str) for i in prior_ids
            ):
                raise KeyError("completed")
        except (ValueError, KeyError):
            raise _UsageError(f"unreadable resume file: {resume_path}") from None
        grouped: dict[str, list[QAPair]] = {}
        if partial_path.exists():
            grouped = _load_partial(partial_path, set(prior_ids))
        # An article may complete with zero records; the resume list, not
        # the partial file, is the authority on what finished.
        completed = {pid: grouped.get(pid, []) for pid in prior_ids}
        completed_order = list(prior_ids)
        print(
            f"resuming: {len(completed_order)} articles already done", file=sys.stderr
        )
    else:
        # A stale partial from some earlier run must not leak into this one.
        for stale in (partial_path, resume_path):
            if stale.exists():
                stale.unlink()

    def on_article_done(article_id: str, records: list[QAPair]) -> None:
        with open(partial_path, "a", encoding="utf-8", newline="\n") as fh:
            for record in records:
                fh.write(dumps_pair(record) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        completed_order.append(article_id)
        atomic_write_text(
            resume_path, json.dumps({"completed": completed_order}, ensure_ascii=False) + "\n"
        )

    started = _utc_now()
    result = run_corpus(
        articles,
        backend,
        config,
        workers=workers,
        completed=completed,
        on_article_done=on_article_done,
    )

    if result.failures:
        for failure in result.failures:
            print(f"article {failure.article_id}: {failure.error}", file=sys.stderr)
        print(
            f"partial run: {len(result.failures)} articles failed; "
            f"rerun with --resume to retry (state in {resume_path})",
            file=sys.stderr,
        )
        return 2

    write_pairs(out, result.records)
    result.graph.save(_sidecar(out, "graph.json"))
    report = build_report(result)
    atomic_write_text(
        _sidecar(out, "report.json"),
        json.dumps(report.to_dict(), ensure_ascii=False, indent=2, sort_keys=True) + "\n",
    )
    _write_manifest(
        _sidecar(out, "manifest.json"),
        {
            "engine_version": __version__,
            "command": "run",
            "input": str(args.input),
            "output": str(out),
            "backend": args.backend or os.environ.get(_ENV_BACKEND) or "stub",
            "config": config.to_dict(),
            "workers": workers,
            "started_at": started,
            "finished_at": _utc_now(),
            "articles_used": result.articles_used,
            "articles_skipped": result.articles_skipped,
        },
    )
    for leftover in (partial_path, resume_path):
        if leftover.exists():
            leftover.unlink()
    print(report.to_text())
    return 0


def _cmd_compare(args) -> int:
    articles = load_articles(args.input)
    config = _build_config(args)
    backend = _make_backend(args)
    _check_caps(backend, _COMPARE_CAPS)
    workers = _workers(args)

    out = Path(args.out)
    if out.parent and not out.parent.exists():
        raise _UsageError(f"output directory does not exist: {out.parent}")

    started = _utc_now()
    maximal = run_corpus(articles, backend, config, workers=workers)
    baseline = run_corpus(articles, backend, config, workers=workers, baseline=True)
    failures = list(maximal.failures) + list(baseline.failures)
    if failures:
        for failure in failures:
            print(f"article {failure.article_id}: {failure.error}", file=sys.stderr)
        print("comparison incomplete; nothing written", file=sys.stderr)
        return 2

    write_pairs(out, maximal.records + baseline.records)
    report = build_compare_report(maximal, baseline)
    atomic_write_text(
        _sidecar(out, "report.json"),
        json.dumps(report.to_dict(), ensure_ascii=False, indent=2, sort_keys=True) + "\n",
    )
    _write_manifest(
        _sidecar(out, "manifest.json"),
        {
            "engine_version": __version__,
            "command": "compare",
            "input": str(args.input),
            "output": str(out),
            "backend": args.backend or os.environ.get(_ENV_BACKEND) or "stub",
            "config": config.to_dict(),
            "workers": workers,
            "started_at": started,
            "finished_at": _utc_now(),
        },
    )
    print(report.to_text())
    return 0


def _cmd_eval(args) -> int:
    records = load_pairs(args.pairs)
    annotations = load_annotations(args.annotations)
    report = build_eval_report(records, annotations, args.reference_quality)
    if args.json:
        print(json.dumps(report.to_dict(), ensure_ascii=False, indent=2, sort_keys=True))
    else:
        print(report.to_text())
    return 0


def _cmd_graph(args) -> int:
    if args.graph_file:
        graph = QuestionGraph.load(args.graph_file)
    else:
        graph = QuestionGraph()
        for record in load_pairs(args.pairs):
            if record.verdict is Verdict.KEPT and not record.baseline:
                graph.add(record.keyphrase, record.pair_id)
    if args.phrase is not None:
        for pair_id in graph.related(args.phrase):
            print(pair_id)
    else:
        for phrase in graph.phrases():
            print(phrase)
    return 0


def _cmd_stats(args) -> int:
    stats = corpus_stats(load_articles(args.input))
    if args.json:
        print(json.dumps(stats.to_dict(), ensure_ascii=False, indent=2, sort_keys=True))
    else:
        data = stats.to_dict()
        width = max(len(k) for k in data)
        for key, value in data.items():
            shown = f"{value:.4f}" if isinstance(value, float) else str(value)
            print(f"{key.ljust(width)}  {shown}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "compare": _cmd_compare,
    "eval": _cmd_eval,
    "graph": _cmd_graph,
    "stats": _cmd_stats,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse handles -h/--version/usage errors
        return int(exc.code or 0)
    handler = _COMMANDS[args.command]
    try:
        return handler(args)
    except (_UsageError, CorpusError, MetricError, BackendError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
