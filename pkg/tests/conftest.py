import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from wire import WireServer  # noqa: E402

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def articles_path() -> Path:
    return DATA / "articles_12.jsonl"


@pytest.fixture()
def wire_server():
    server = WireServer().start()
    try:
        yield server
    finally:
        server.stop()
