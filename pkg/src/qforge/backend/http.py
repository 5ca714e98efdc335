"""HTTP client for protocol-v1 model servers.

Field names on the wire are part of the protocol and never change.  The
client owns invariant enforcement: scores must sit in [0, 1], answers must
slice their context, questions must be non-empty, vectors must be unit
length (normalized here when the server leaves them raw).  Violations raise
typed errors instead of leaking bad data into the pipeline.
"""

from __future__ import annotations

import math
import threading

import requests

from . import (
    AnswerResponse,
    BackendConfig,
    BackendUnavailable,
    GenerationResponse,
    ProtocolViolation,
    locate_span,
    normalize_question,
)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ProtocolViolation(message)


def _checked_score(value: object, endpoint: str) -> float:
    _require(isinstance(value, (int, float)) and not isinstance(value, bool),
             f"{endpoint}: score is not a number")
    score = float(value)
    _require(0.0 <= score <= 1.0, f"{endpoint}: score {score} outside [0, 1]")
    return score


class HttpBackend:
    def __init__(self, config: BackendConfig) -> None:
        self._config = config
        self._base = config.base_url.rstrip("/")
        # Sessions are not documented thread-safe; one per worker thread.
        self._local = threading.local()
        self._caps: tuple[str, ...] | None = None
        self._caps_lock = threading.Lock()

    def _session(self) -> requests.Session:
        session = getattr(self._local, "session", None)
        if session is None:
            session = requests.Session()
            self._local.session = session
        return session

    def capabilities(self) -> tuple[str, ...]:
        # Cached: the engine asks once per article and the answer is static.
        with self._caps_lock:
            if self._caps is None:
                payload = self._request("GET", "/v1/health")
                caps = payload.get("capabilities")
                _require(isinstance(caps, list) and all(isinstance(c, str) for c in caps),
                         "health: capabilities is not a list of strings")
                self._caps = tuple(caps)
            return self._caps

    def embed(self, texts: list[str]) -> list[tuple[float, ...]]:
        vectors: list[tuple[float, ...]] = []
        for lo in range(0, len(texts), self._config.max_batch):
            batch = texts[lo:lo + self._config.max_batch]
            payload = self._request("POST", "/v1/embed", {"texts": batch})
            dim = payload.get("dim")
            raw = payload.get("vectors")
            _require(isinstance(dim, int) and dim > 0, "embed: bad dim")
            _require(isinstance(raw, list) and len(raw) == len(batch),
                     "embed: vector count does not match text count")
            for row in raw:
                _require(isinstance(row, list) and len(row) == dim,
                         "embed: vector length does not match dim")
                vec = [float(x) for x in row]
                norm = math.sqrt(sum(x * x for x in vec))
                _require(norm > 0.0, "embed: zero vector")
                if abs(norm - 1.0) > 1e-6:
                    vec = [x / norm for x in vec]
                vectors.append(tuple(vec))
        return vectors

    def resolve_coref(self, text: str) -> str:
        payload = self._request("POST", "/v1/coref", {"text": text})
        resolved = payload.get("resolved")
        _require(isinstance(resolved, str) and bool(resolved), "coref: empty resolution")
        return resolved

    def generate_question(self, context: str, keyphrase: str) -> GenerationResponse:
        payload = self._request(
            "POST", "/v1/generate", {"context": context, "keyphrase": keyphrase}
        )
        raw = payload.get("question")
        _require(isinstance(raw, str), "generate: question is not a string")
        question = normalize_question(raw)
        score = payload.get("score")
        gen_score = None if score is None else _checked_score(score, "generate")
        return GenerationResponse(question=question, gen_score=gen_score)

    def answer(self, question: str, context: str) -> AnswerResponse:
        payload = self._request(
            "POST", "/v1/answer", {"question": question, "context": context}
        )
        text = payload.get("answer")
        no_answer = payload.get("no_answer")
        _require(isinstance(text, str), "answer: answer is not a string")
        _require(isinstance(no_answer, bool), "answer: no_answer is not a bool")
        score = _checked_score(payload.get("score"), "answer")
        if no_answer:
            _require(text == "", "answer: no_answer response carries answer text")
            return AnswerResponse(answer_text="", no_answer=True, score=score)
        _require(text != "", "answer: empty answer without no_answer")
        start = payload.get("start")
        end = payload.get("end")
        for name, value in (("start", start), ("end", end)):
            _require(value is None or (isinstance(value, int) and not isinstance(value, bool)),
                     f"answer: {name} is not an integer")
        span = locate_span(context, text, start, end)
        return AnswerResponse(
            answer_text=text, no_answer=False, score=score, start=span[0], end=span[1]
        )

    def toxicity(self, text: str) -> float:
        payload = self._request("POST", "/v1/toxicity", {"text": text})
        return _checked_score(payload.get("toxicity"), "toxicity")

    def summarize(self, text: str) -> str:
        payload = self._request("POST", "/v1/summarize", {"text": text})
        summary = payload.get("summary")
        _require(isinstance(summary, str) and bool(summary.strip()), "summarize: empty summary")
        return summary

    def count_tokens(self, text: str) -> int:
        payload = self._request("POST", "/v1/count_tokens", {"text": text})
        count = payload.get("count")
        _require(isinstance(count, int) and not isinstance(count, bool) and count >= 0,
                 "count_tokens: count is not a non-negative integer")
        return count

    def _request(self, method: str, path: str, body: dict | None = None) -> dict:
        url = self._base + path
        timeout = self._config.timeout_ms / 1000.0
        attempts = self._config.max_retries + 1
        last_error = "unknown error"
        for _ in range(attempts):
            try:
                response = self._session().request(method, url, json=body, timeout=timeout)
            except requests.RequestException as exc:
                last_error = f"transport error: {exc}"
                continue
            if response.status_code == 200:
                try:
                    payload = response.json()
                except ValueError as exc:
                    raise ProtocolViolation(f"{path}: response is not JSON ({exc})") from exc
                _require(isinstance(payload, dict), f"{path}: response is not an object")
                return payload
            detail = self._error_detail(response)
            if response.status_code >= 500:
                last_error = f"HTTP {response.status_code}: {detail}"
                continue
            # 4xx is not retried: the request itself was refused.
            raise BackendUnavailable(f"{path}: HTTP {response.status_code}: {detail}")
        raise BackendUnavailable(f"{path}: {last_error}")

    @staticmethod
    def _error_detail(response: requests.Response) -> str:
        try:
            payload = response.json()
        except ValueError:
            return response.text[:200]
        if isinstance(payload, dict) and isinstance(payload.get("error"), str):
            return payload["error"]
        return str(payload)[:200]
