"""Server configuration.

Which checkpoint backs which capability is configuration, not code: the
config file maps capability names to model identifiers (hub ids or local
paths) and any capability left unset is simply not served.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    """Raised when a server config file cannot be used."""


# Capabilities that require their own checkpoint.  count_tokens is not
# listed: it is served by whichever tokenizer the config provides.
MODEL_CAPABILITIES = ("generate", "answer", "embed", "toxicity", "summarize", "coref")

ANSWER_STYLES = ("squad2", "squad1")


@dataclass(frozen=True)
class ServerConfig:
    """Checkpoint roster plus runtime knobs for one server process."""

    generate: str | None = None
    answer: str | None = None
    embed: str | None = None
    toxicity: str | None = None
    summarize: str | None = None
    coref: str | None = None
    # Optional explicit tokenizer for count_tokens; defaults to the first
    # loaded model's tokenizer.
    tokenizer: str | None = None
    device: str = "cpu"
    max_batch: int = 16
    port: int = 8100
    # squad2 checkpoints emit a null answer when the no-answer score beats
    # the best span by more than answer_null_margin; squad1 checkpoints
    # have no null option and always commit to a span.
    answer_style: str = "squad2"
    answer_null_margin: float = 0.0

    def __post_init__(self) -> None:
        if not any(getattr(self, cap) for cap in MODEL_CAPABILITIES):
            raise ConfigError(
                "config names no models: set at least one of "
                + ", ".join(MODEL_CAPABILITIES)
            )
        if self.max_batch < 1:
            raise ConfigError("max_batch must be >= 1")
        if not 0 < self.port < 65536:
            raise ConfigError("port must be in 1..65535")
        if self.answer_style not in ANSWER_STYLES:
            raise ConfigError(
                f"answer_style must be one of {', '.join(ANSWER_STYLES)}: "
                f"got {self.answer_style!r}"
            )

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> "ServerConfig":
        known = {f.name for f in fields(cls)}
        kwargs: dict[str, object] = {}
        for key, raw in mapping.items():
            if key not in known:
                raise ConfigError(f"unknown config key: {key}")
            if key in ("max_batch", "port"):
                try:
                    kwargs[key] = int(raw)
                except ValueError:
                    raise ConfigError(f"{key} is not an integer: {raw!r}") from None
            elif key == "answer_null_margin":
                try:
                    kwargs[key] = float(raw)
                except ValueError:
                    raise ConfigError(f"{key} is not a number: {raw!r}") from None
            else:
                kwargs[key] = raw
        return cls(**kwargs)


def load_config(path: str | Path) -> ServerConfig:
    """Parse a key = value config file, one setting per line.

    Blank lines and lines starting with # are skipped.
    """
    text = Path(path).read_text(encoding="utf-8")
    mapping: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        if key in mapping:
            raise ConfigError(f"line {lineno}: duplicate key {key}")
        mapping[key] = value
    return ServerConfig.from_mapping(mapping)
