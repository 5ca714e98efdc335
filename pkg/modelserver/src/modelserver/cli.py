"""Command line entry point: load the roster, then serve."""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modelserver",
        description="Serve transformer checkpoints over the /v1 wire protocol.",
    )
    parser.add_argument("--config", required=True, help="key = value config file")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=None, help="override config port")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    # Imports deferred so --help and config errors stay fast.
    import uvicorn

    from .app import create_app
    from .registry import ModelRegistry

    print("loading models ...", file=sys.stderr)
    registry = ModelRegistry(config)
    print(f"capabilities: {', '.join(registry.capabilities())}", file=sys.stderr)
    app = create_app(registry)
    port = args.port if args.port is not None else config.port
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
