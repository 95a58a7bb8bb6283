"""CLI: train a checkpoint, or serve one over HTTP."""

from __future__ import annotations

import argparse
import logging

from .config import ServiceConfig


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="modelservice")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fine-tune on a taskset JSONL")
    p.add_argument("--taskset", required=True)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("serve", help="serve a checkpoint over HTTP")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=None)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    if args.command == "train":
        from .train import train

        config = ServiceConfig()
        if args.epochs is not None:
            config.epochs = args.epochs
        if args.seed is not None:
            config.seed = args.seed
        out = train(args.taskset, config, args.out)
        print(f"checkpoint written to {out}")
        return 0

    import uvicorn

    from .serve import create_app

    app = create_app(args.checkpoint)
    port = args.port if args.port is not None else ServiceConfig.load(
        f"{args.checkpoint}/config.json"
    ).port
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
