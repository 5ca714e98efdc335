"""Checkpoint loading and inference behind the wire protocol.

One registry instance owns every loaded model.  All generation is greedy
(no sampling, single beam) so repeated requests are bit-identical, and
every decoded string drops special tokens, so delimiter markup such as
"<s>" can never leak into a response field.
"""

from __future__ import annotations

import threading

import torch
from transformers import (
    AutoModel,
    AutoModelForQuestionAnswering,
    AutoModelForSeq2SeqLM,
    AutoModelForSequenceClassification,
    AutoTokenizer,
)

from .config import MODEL_CAPABILITIES, ServerConfig

# Generation and encoding budgets.  Generous for their jobs but bounded,
# so a single request cannot stall the queue.
QUESTION_MAX_TOKENS = 48
SUMMARY_MAX_TOKENS = 24
RESOLVE_MAX_TOKENS = 384
ENCODER_MAX_TOKENS = 384
# Longest answer span considered, in tokens.
ANSWER_MAX_SPAN_TOKENS = 30

SEQ2SEQ_PROMPTS = {
    "generate": "generate question: {keyphrase} context: {context}",
    "summarize": "summarize: {text}",
    "coref": "resolve coreferences: {text}",
}


class ModelError(RuntimeError):
    """An inference request that the loaded model could not serve."""


class ModelRegistry:
    """Loads the configured checkpoints eagerly and serves inference.

    Loading is eager so a bad model identifier fails at startup, not on
    the first unlucky request.  Inference runs under a single lock: the
    HTTP layer accepts requests in parallel, and this lock is the bounded
    queue in front of the models.
    """

    def __init__(self, config: ServerConfig) -> None:
        self.config = config
        self._device = torch.device(config.device)
        self._lock = threading.Lock()
        self._seq2seq: dict[str, tuple] = {}
        self._answer = None
        self._answer_tokenizer = None
        self._embed = None
        self._embed_tokenizer = None
        self._toxicity = None
        self._toxicity_tokenizer = None
        self._count_tokenizer = None
        self._load()

    # -- loading ---------------------------------------------------------

    def _load(self) -> None:
        cfg = self.config
        # One checkpoint may back several capabilities; load it once.
        seq2seq_cache: dict[str, tuple] = {}
        for cap in ("generate", "summarize", "coref"):
            name = getattr(cfg, cap)
            if not name:
                continue
            if name not in seq2seq_cache:
                tokenizer = AutoTokenizer.from_pretrained(name)
                model = AutoModelForSeq2SeqLM.from_pretrained(name)
                seq2seq_cache[name] = (tokenizer, self._prepare(model))
            self._seq2seq[cap] = seq2seq_cache[name]
        if cfg.answer:
            self._answer_tokenizer = AutoTokenizer.from_pretrained(cfg.answer)
            self._answer = self._prepare(
                AutoModelForQuestionAnswering.from_pretrained(cfg.answer)
            )
        if cfg.embed:
            self._embed_tokenizer = AutoTokenizer.from_pretrained(cfg.embed)
            self._embed = self._prepare(AutoModel.from_pretrained(cfg.embed))
        if cfg.toxicity:
            self._toxicity_tokenizer = AutoTokenizer.from_pretrained(cfg.toxicity)
            self._toxicity = self._prepare(
                AutoModelForSequenceClassification.from_pretrained(cfg.toxicity)
            )
        self._count_tokenizer = self._pick_count_tokenizer()

    def _prepare(self, model):
        model.to(self._device)
        model.eval()
        return model

    def _pick_count_tokenizer(self):
        if self.config.tokenizer:
            return AutoTokenizer.from_pretrained(self.config.tokenizer)
        for cap in ("summarize", "generate", "coref"):
            if cap in self._seq2seq:
                return self._seq2seq[cap][0]
        for tokenizer in (
            self._answer_tokenizer,
            self._embed_tokenizer,
            self._toxicity_tokenizer,
        ):
            if tokenizer is not None:
                return tokenizer
        return None

    def capabilities(self) -> list[str]:
        caps = [cap for cap in MODEL_CAPABILITIES if self._has(cap)]
        if self._count_tokenizer is not None:
            caps.append("count_tokens")
        return sorted(caps)

    def _has(self, capability: str) -> bool:
        if capability in ("generate", "summarize", "coref"):
            return capability in self._seq2seq
        if capability == "answer":
            return self._answer is not None
        if capability == "embed":
            return self._embed is not None
        if capability == "toxicity":
            return self._toxicity is not None
        if capability == "count_tokens":
            return self._count_tokenizer is not None
        return False

    # -- seq2seq capabilities --------------------------------------------

    def _decode_greedy(self, capability: str, prompt: str, max_new_tokens: int) -> str:
        tokenizer, model = self._seq2seq[capability]
        # Banning non-terminal special tokens keeps markup such as "<s>"
        # or sentinel ids out of the decoded text and, together with
        # min_new_tokens, guarantees a non-empty decode.
        banned = [
            [token_id]
            for token_id in tokenizer.all_special_ids
            if token_id != tokenizer.eos_token_id
        ]
        with self._lock, torch.no_grad():
            inputs = tokenizer(
                prompt,
                return_tensors="pt",
                truncation=True,
                max_length=ENCODER_MAX_TOKENS,
            ).to(self._device)
            output = model.generate(
                **inputs,
                do_sample=False,
                num_beams=1,
                max_new_tokens=max_new_tokens,
                min_new_tokens=2,
                bad_words_ids=banned or None,
            )
        text = tokenizer.decode(output[0], skip_special_tokens=True).strip()
        if not text:
            raise ModelError(f"{capability} model produced empty output")
        return text

    def generate_question(self, context: str, keyphrase: str) -> str:
        prompt = SEQ2SEQ_PROMPTS["generate"].format(keyphrase=keyphrase, context=context)
        question = self._decode_greedy("generate", prompt, QUESTION_MAX_TOKENS)
        if not question.endswith("?"):
            question += "?"
        return question

    def summarize(self, text: str) -> str:
        prompt = SEQ2SEQ_PROMPTS["summarize"].format(text=text)
        return self._decode_greedy("summarize", prompt, SUMMARY_MAX_TOKENS)

    def resolve_coref(self, text: str) -> str:
        prompt = SEQ2SEQ_PROMPTS["coref"].format(text=text)
        return self._decode_greedy("coref", prompt, RESOLVE_MAX_TOKENS)

    # -- extractive question answering -----------------------------------

    def answer(self, question: str, context: str) -> dict:
        """Best answer span for question in context.

        The span is decoded from token offsets back into the context
        string, so a returned answer is always a verbatim slice of the
        context.  Offsets in the response are byte positions.
        """
        tokenizer = self._answer_tokenizer
        with self._lock, torch.no_grad():
            enc = tokenizer(
                question,
                context,
                return_tensors="pt",
                return_offsets_mapping=True,
                truncation="only_second",
                max_length=ENCODER_MAX_TOKENS,
            )
            offsets = enc.pop("offset_mapping")[0].tolist()
            sequence_ids = enc.sequence_ids(0)
            enc = enc.to(self._device)
            output = self._answer(**enc)
            start_logits = output.start_logits[0]
            end_logits = output.end_logits[0]

        null_score = (start_logits[0] + end_logits[0]).item()
        context_idx = [
            i
            for i, seq in enumerate(sequence_ids)
            if seq == 1 and offsets[i][1] > offsets[i][0]
        ]
        if not context_idx:
            return self._no_answer(0.0)

        best_score = None
        best_span = None
        for pos, i in enumerate(context_idx):
            for j in context_idx[pos : pos + ANSWER_MAX_SPAN_TOKENS]:
                score = (start_logits[i] + end_logits[j]).item()
                if best_score is None or score > best_score:
                    best_score = score
                    best_span = (i, j)

        score = torch.sigmoid(torch.tensor(best_score - null_score)).item()
        if (
            self.config.answer_style == "squad2"
            and null_score - best_score > self.config.answer_null_margin
        ):
            return self._no_answer(score)

        char_start = offsets[best_span[0]][0]
        char_end = offsets[best_span[1]][1]
        answer = context[char_start:char_end]
        if not answer.strip():
            # Whitespace-only span: the model pointed at nothing usable.
            return self._no_answer(score)
        byte_start = len(context[:char_start].encode("utf-8"))
        byte_end = byte_start + len(answer.encode("utf-8"))
        return {
            "answer": answer,
            "no_answer": False,
            "score": score,
            "start": byte_start,
            "end": byte_end,
        }

    @staticmethod
    def _no_answer(score: float) -> dict:
        return {"answer": "", "no_answer": True, "score": score}

    # -- encoders ----------------------------------------------------------

    def embed(self, texts: list[str]) -> tuple[list[list[float]], int]:
        """Mean-pooled, L2-normalized sentence vectors."""
        vectors: list[list[float]] = []
        for base in range(0, len(texts), self.config.max_batch):
            batch = texts[base : base + self.config.max_batch]
            with self._lock, torch.no_grad():
                enc = self._embed_tokenizer(
                    batch,
                    return_tensors="pt",
                    padding=True,
                    truncation=True,
                    max_length=ENCODER_MAX_TOKENS,
                ).to(self._device)
                hidden = self._embed(**enc).last_hidden_state
                mask = enc["attention_mask"].unsqueeze(-1).to(hidden.dtype)
                counts = mask.sum(dim=1).clamp(min=1)
                pooled = (hidden * mask).sum(dim=1) / counts
                norms = pooled.norm(dim=1)
                if (norms < 1e-9).any():
                    raise ModelError("embedding collapsed to a zero vector")
            # Normalize in float64 so the wire values are unit-norm to
            # well under the protocol's 1e-6 tolerance.
            for row in pooled.tolist():
                norm = sum(x * x for x in row) ** 0.5
                vectors.append([x / norm for x in row])
        dim = self._embed.config.hidden_size
        return vectors, dim

    def toxicity(self, text: str) -> float:
        with self._lock, torch.no_grad():
            enc = self._toxicity_tokenizer(
                text,
                return_tensors="pt",
                truncation=True,
                max_length=ENCODER_MAX_TOKENS,
            ).to(self._device)
            logits = self._toxicity(**enc).logits[0]
            probs = torch.softmax(logits, dim=-1)
        return probs[self._toxic_label_index()].item()

    def _toxic_label_index(self) -> int:
        labels = self._toxicity.config.id2label
        for idx, label in labels.items():
            if "toxic" in str(label).lower() and "non" not in str(label).lower():
                return int(idx)
        # Binary classifiers conventionally put the positive class last.
        return len(labels) - 1

    def count_tokens(self, text: str) -> int:
        if not text:
            return 0
        return len(self._count_tokenizer(text, add_special_tokens=False)["input_ids"])
