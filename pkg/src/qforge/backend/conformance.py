"""Black-box contract checks that any backend must pass.

Runs the same assertions against the in-process stub and against a live
protocol-v1 server, so a server that passes here can be swapped in without
touching engine code.  Checks test the contract only (shapes, bounds,
determinism, span extractivity), never model quality.
"""

from __future__ import annotations

from . import Backend

_CONTEXTS = (
    "The harbor bridge reopened after a two-year repair. Engineers replaced "
    "every cable on the north span. Ferries resumed their old schedule the "
    "same week.",
    "A small bakery on Elm Street won the regional bread prize. The judges "
    "praised its rye loaf. The owner plans to hire two apprentices.",
    "The city library extended its evening hours for the exam season. "
    "Students filled the reading rooms by six. Staff added a quiet floor "
    "upstairs.",
    "Farmers in the valley switched to drip irrigation last spring. Water "
    "use fell by a third. The county now offers grants for the equipment.",
)

_KEYPHRASES = (
    "harbor bridge",
    "rye loaf",
    "evening hours",
    "drip irrigation",
    "ferries",
    "reading rooms",
)

_LONG_TEXT = (
    "The regional rail line carried a record number of passengers this "
    "year. Planners credit the new timetable, which added early trains on "
    "weekdays. Stations along the coast reported crowded platforms through "
    "the summer. A second phase of upgrades will extend the line to the "
    "airport. Funding for that phase cleared the council vote in March. "
    "Local businesses expect the extension to bring more weekend visitors."
)


def run_conformance(backend: Backend, n_samples: int = 100) -> list[str]:
    """Return a list of contract violations; an empty list means conformant."""
    failures: list[str] = []
    caps = set(backend.capabilities())

    def check(condition: bool, message: str) -> None:
        if not condition:
            failures.append(message)

    if "embed" in caps:
        first = backend.embed(list(_CONTEXTS))
        second = backend.embed(list(_CONTEXTS))
        check(first == second, "embed: not deterministic across calls")
        dims = {len(v) for v in first}
        check(len(dims) == 1, f"embed: inconsistent dimensions {sorted(dims)}")
        for i, vec in enumerate(first):
            norm = sum(x * x for x in vec) ** 0.5
            check(abs(norm - 1.0) <= 1e-6, f"embed: vector {i} norm {norm!r} not unit")

    if "count_tokens" in caps:
        check(backend.count_tokens("") == 0, "count_tokens: empty text must count 0")
        a = backend.count_tokens(_LONG_TEXT)
        b = backend.count_tokens(_LONG_TEXT)
        check(a == b, "count_tokens: not deterministic")
        check(a > 0, "count_tokens: long text counted 0 tokens")

    if "coref" in caps:
        resolved = backend.resolve_coref(_CONTEXTS[0])
        check(bool(resolved), "coref: empty resolution")
        check(resolved == backend.resolve_coref(_CONTEXTS[0]), "coref: not deterministic")

    if "generate" in caps:
        for context in _CONTEXTS:
            for keyphrase in _KEYPHRASES:
                first_gen = backend.generate_question(context, keyphrase)
                check(bool(first_gen.question.strip()), "generate: empty question")
                check(first_gen.question.endswith("?"),
                      f"generate: question lacks '?': {first_gen.question!r}")
                check(first_gen == backend.generate_question(context, keyphrase),
                      "generate: not deterministic")
                if first_gen.gen_score is not None:
                    check(0.0 <= first_gen.gen_score <= 1.0,
                          f"generate: score {first_gen.gen_score} outside [0, 1]")

    if "answer" in caps and "generate" in caps:
        done = 0
        while done < n_samples:
            context = _CONTEXTS[done % len(_CONTEXTS)]
            keyphrase = _KEYPHRASES[done % len(_KEYPHRASES)]
            question = backend.generate_question(context, keyphrase).question
            result = backend.answer(question, context)
            check(result == backend.answer(question, context), "answer: not deterministic")
            check(0.0 <= result.score <= 1.0,
                  f"answer: score {result.score} outside [0, 1]")
            if result.no_answer:
                check(result.answer_text == "" and result.start is None and result.end is None,
                      "answer: no_answer response carries text or offsets")
            else:
                check(bool(result.answer_text), "answer: empty answer without no_answer")
                context_bytes = context.encode("utf-8")
                check(
                    result.start is not None
                    and result.end is not None
                    and 0 <= result.start <= result.end <= len(context_bytes)
                    and context_bytes[result.start:result.end]
                    == result.answer_text.encode("utf-8"),
                    f"answer: offsets do not slice context to answer for {question!r}",
                )
            done += 1

    if "toxicity" in caps:
        for text in _CONTEXTS:
            score = backend.toxicity(text)
            check(0.0 <= score <= 1.0, f"toxicity: score {score} outside [0, 1]")
            check(score == backend.toxicity(text), "toxicity: not deterministic")

    if "summarize" in caps:
        summary = backend.summarize(_LONG_TEXT)
        check(bool(summary.strip()), "summarize: empty summary")
        check(summary == backend.summarize(_LONG_TEXT), "summarize: not deterministic")
        if "count_tokens" in caps and bool(summary.strip()):
            check(
                backend.count_tokens(summary) < backend.count_tokens(_LONG_TEXT),
                "summarize: summary not shorter than a long input",
            )

    return failures


def assert_conformant(backend: Backend, n_samples: int = 100) -> None:
    failures = run_conformance(backend, n_samples=n_samples)
    if failures:
        raise AssertionError(
            "backend failed conformance:\n" + "\n".join(f"- {f}" for f in failures)
        )
