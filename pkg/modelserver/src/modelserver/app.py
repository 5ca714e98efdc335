"""HTTP surface: /v1/* endpoints over a model registry.

Every error, of any kind, is a non-200 JSON body of the form
{"error": "..."} so clients need exactly one error path.  Handlers are
plain functions (not coroutines): the server runs them on its worker
threads, which gives request-level parallelism while the registry lock
bounds actual inference.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel
from starlette.exceptions import HTTPException as StarletteHTTPException

from .registry import ModelError, ModelRegistry


class EmbedRequest(BaseModel):
    texts: list[str]


class GenerateRequest(BaseModel):
    context: str
    keyphrase: str


class AnswerRequest(BaseModel):
    question: str
    context: str


class TextRequest(BaseModel):
    text: str


class CapabilityMissing(Exception):
    def __init__(self, capability: str) -> None:
        self.capability = capability


class BadRequest(Exception):
    def __init__(self, message: str) -> None:
        self.message = message


def create_app(registry: ModelRegistry) -> FastAPI:
    app = FastAPI(title="modelserver", docs_url=None, redoc_url=None)
    loaded = set(registry.capabilities())

    def require(capability: str) -> None:
        if capability not in loaded:
            raise CapabilityMissing(capability)

    def require_text(value: str, name: str) -> str:
        if not value.strip():
            raise BadRequest(f"{name} must not be empty")
        return value

    @app.exception_handler(CapabilityMissing)
    def _missing(request: Request, exc: CapabilityMissing) -> JSONResponse:
        return JSONResponse(
            status_code=501,
            content={"error": f"capability '{exc.capability}' is not loaded"},
        )

    @app.exception_handler(BadRequest)
    def _bad(request: Request, exc: BadRequest) -> JSONResponse:
        return JSONResponse(status_code=400, content={"error": exc.message})

    @app.exception_handler(RequestValidationError)
    def _invalid(request: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(StarletteHTTPException)
    def _http(request: Request, exc: StarletteHTTPException) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status_code, content={"error": str(exc.detail)}
        )

    @app.exception_handler(ModelError)
    def _model(request: Request, exc: ModelError) -> JSONResponse:
        return JSONResponse(status_code=500, content={"error": str(exc)})

    @app.exception_handler(Exception)
    def _internal(request: Request, exc: Exception) -> JSONResponse:
        return JSONResponse(
            status_code=500, content={"error": f"internal error: {exc}"}
        )

    @app.get("/v1/health")
    def health() -> dict:
        return {"ok": True, "capabilities": registry.capabilities()}

    @app.post("/v1/embed")
    def embed(request: EmbedRequest) -> dict:
        require("embed")
        if not request.texts:
            raise BadRequest("texts must not be empty")
        for text in request.texts:
            require_text(text, "each text")
        vectors, dim = registry.embed(request.texts)
        return {"vectors": vectors, "dim": dim}

    @app.post("/v1/generate")
    def generate(request: GenerateRequest) -> dict:
        require("generate")
        context = require_text(request.context, "context")
        keyphrase = require_text(request.keyphrase, "keyphrase")
        question = registry.generate_question(context, keyphrase)
        return {"question": question}

    @app.post("/v1/answer")
    def answer(request: AnswerRequest) -> dict:
        require("answer")
        question = require_text(request.question, "question")
        context = require_text(request.context, "context")
        return registry.answer(question, context)

    @app.post("/v1/toxicity")
    def toxicity(request: TextRequest) -> dict:
        require("toxicity")
        text = require_text(request.text, "text")
        return {"toxicity": registry.toxicity(text)}

    @app.post("/v1/summarize")
    def summarize(request: TextRequest) -> dict:
        require("summarize")
        text = require_text(request.text, "text")
        return {"summary": registry.summarize(text)}

    @app.post("/v1/coref")
    def coref(request: TextRequest) -> dict:
        require("coref")
        text = require_text(request.text, "text")
        return {"resolved": registry.resolve_coref(text)}

    @app.post("/v1/count_tokens")
    def count_tokens(request: TextRequest) -> dict:
        require("count_tokens")
        return {"count": registry.count_tokens(request.text)}

    return app
