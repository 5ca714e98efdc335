"""HTTP model server speaking the qforge backend wire protocol.

Loads one transformer checkpoint per configured capability and exposes
them behind the /v1/* JSON endpoints the pipeline engine consumes.
"""

from .config import ConfigError, ServerConfig, load_config
from .registry import ModelError, ModelRegistry

__all__ = [
    "ConfigError",
    "ModelError",
    "ModelRegistry",
    "ServerConfig",
    "load_config",
]
