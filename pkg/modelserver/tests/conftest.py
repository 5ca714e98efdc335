"""Session fixtures: tiny random-weight checkpoints built on the fly.

The suite must run offline, so instead of pulling published models it
assembles miniature ones (word-level vocab, 2-layer transformers) in a
session tmp directory.  Weights are random; tests assert contract
properties such as shapes, determinism, and span extractivity, never
output quality.
"""

from __future__ import annotations

import socket
import threading
import time

import pytest
import torch
import transformers
from tokenizers import Tokenizer
from tokenizers.models import WordLevel
from tokenizers.pre_tokenizers import Whitespace
from tokenizers.processors import TemplateProcessing
from transformers import (
    BertConfig,
    BertForQuestionAnswering,
    BertForSequenceClassification,
    BertModel,
    PreTrainedTokenizerFast,
    T5Config,
    T5ForConditionalGeneration,
)

from modelserver.app import create_app
from modelserver.config import ServerConfig
from modelserver.registry import ModelRegistry

# Checkpoint save/load progress bars drown out test output.
transformers.utils.logging.disable_progress_bar()
transformers.utils.logging.set_verbosity_error()

SPECIALS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[EOS]"]

WORDS = [
    "the", "a", "an", "of", "on", "in", "by", "to", "for", "and",
    "bridge", "harbor", "bakery", "library", "valley", "station", "river",
    "market", "garden", "mill", "ferries", "students", "farmers", "judges",
    "engineers", "repair", "cable", "span", "bread", "prize", "loaf",
    "hours", "exam", "season", "irrigation", "water", "grants", "equipment",
    "schedule", "week", "north", "old", "small", "quiet", "regional",
    "won", "plans", "fell", "added", "resumed", "extended", "switched",
    "reopened", "praised", "filled", "offers", "carried", "what", "which",
    "who", "where", "did", "was", "were", "how", "café", "señal", "übung",
    ".", ",", "?", ":",
]


def _base_tokenizer() -> Tokenizer:
    vocab = {token: i for i, token in enumerate(SPECIALS + WORDS)}
    tokenizer = Tokenizer(WordLevel(vocab, unk_token="[UNK]"))
    tokenizer.pre_tokenizer = Whitespace()
    return tokenizer


def _wrap(tokenizer: Tokenizer) -> PreTrainedTokenizerFast:
    return PreTrainedTokenizerFast(
        tokenizer_object=tokenizer,
        pad_token="[PAD]",
        unk_token="[UNK]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        mask_token="[MASK]",
        eos_token="[EOS]",
        model_max_length=512,
    )


def encoder_tokenizer() -> PreTrainedTokenizerFast:
    """BERT-style: [CLS] ... [SEP] framing with pair support."""
    tokenizer = _base_tokenizer()
    cls_id = tokenizer.token_to_id("[CLS]")
    sep_id = tokenizer.token_to_id("[SEP]")
    tokenizer.post_processor = TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B:1 [SEP]:1",
        special_tokens=[("[CLS]", cls_id), ("[SEP]", sep_id)],
    )
    return _wrap(tokenizer)


def seq2seq_tokenizer() -> PreTrainedTokenizerFast:
    """T5-style: plain tokens with a trailing [EOS]."""
    tokenizer = _base_tokenizer()
    eos_id = tokenizer.token_to_id("[EOS]")
    tokenizer.post_processor = TemplateProcessing(
        single="$A [EOS]",
        pair="$A [EOS] $B:1 [EOS]:1",
        special_tokens=[("[EOS]", eos_id)],
    )
    return _wrap(tokenizer)


def build_seq2seq(path) -> None:
    tokenizer = seq2seq_tokenizer()
    config = T5Config(
        vocab_size=len(tokenizer),
        d_model=32,
        d_kv=8,
        d_ff=64,
        num_layers=2,
        num_decoder_layers=2,
        num_heads=4,
        relative_attention_num_buckets=8,
        dropout_rate=0.0,
        pad_token_id=tokenizer.pad_token_id,
        eos_token_id=tokenizer.eos_token_id,
        decoder_start_token_id=tokenizer.pad_token_id,
    )
    torch.manual_seed(7)
    T5ForConditionalGeneration(config).save_pretrained(path)
    tokenizer.save_pretrained(path)


def _bert_config(tokenizer: PreTrainedTokenizerFast, **extra) -> BertConfig:
    return BertConfig(
        vocab_size=len(tokenizer),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=4,
        intermediate_size=64,
        max_position_embeddings=512,
        hidden_dropout_prob=0.0,
        attention_probs_dropout_prob=0.0,
        pad_token_id=tokenizer.pad_token_id,
        **extra,
    )


def build_qa(path) -> None:
    tokenizer = encoder_tokenizer()
    torch.manual_seed(11)
    BertForQuestionAnswering(_bert_config(tokenizer)).save_pretrained(path)
    tokenizer.save_pretrained(path)


def build_encoder(path) -> None:
    tokenizer = encoder_tokenizer()
    torch.manual_seed(13)
    BertModel(_bert_config(tokenizer)).save_pretrained(path)
    tokenizer.save_pretrained(path)


def build_classifier(path) -> None:
    tokenizer = encoder_tokenizer()
    torch.manual_seed(17)
    BertForSequenceClassification(_bert_config(tokenizer, num_labels=2)).save_pretrained(path)
    tokenizer.save_pretrained(path)


@pytest.fixture(scope="session")
def model_dirs(tmp_path_factory) -> dict[str, str]:
    root = tmp_path_factory.mktemp("checkpoints")
    dirs = {
        "seq2seq": root / "seq2seq",
        "qa": root / "qa",
        "encoder": root / "encoder",
        "classifier": root / "classifier",
    }
    build_seq2seq(dirs["seq2seq"])
    build_qa(dirs["qa"])
    build_encoder(dirs["encoder"])
    build_classifier(dirs["classifier"])
    return {name: str(path) for name, path in dirs.items()}


def full_config(model_dirs: dict[str, str], **overrides) -> ServerConfig:
    settings: dict = {
        "generate": model_dirs["seq2seq"],
        "summarize": model_dirs["seq2seq"],
        "coref": model_dirs["seq2seq"],
        "answer": model_dirs["qa"],
        "embed": model_dirs["encoder"],
        "toxicity": model_dirs["classifier"],
    }
    settings.update(overrides)
    return ServerConfig(**settings)


@pytest.fixture(scope="session")
def registry(model_dirs) -> ModelRegistry:
    return ModelRegistry(full_config(model_dirs))


@pytest.fixture(scope="session")
def live_server(registry):
    """The full app behind a real socket, for wire-level clients."""
    import uvicorn

    app = create_app(registry)
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    server = uvicorn.Server(
        uvicorn.Config(app, host="127.0.0.1", port=port, log_level="error")
    )
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 30
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("server did not start within 30s")
        time.sleep(0.05)
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=10)
