"""Command line entry point.

One subcommand per pipeline stage plus `serve` for the annotation service.
Exit codes: 0 ok, 1 usage or config problem, 2 data problem (missing or
inconsistent artifacts), 3 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .manifest import Manifest, StaleManifest, config_hash
from .pipeline import (
    ConfigError,
    DataError,
    STAGES,
    _load_assembly_inputs,
    ensure_tasks,
    load_config,
    open_store,
    run_stage,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; usage errors are 1
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="afkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    commands = list(STAGES) + ["serve"]
    help_text = {
        "synth": "write a synthetic corpus with planted artifacts",
        "ingest": "tokenize, filter, split contexts and the LM training text",
        "train-lm": "train per-fold forward and backward n-gram models",
        "generate": "sample candidate ending pools for every context",
        "filter": "run adversarial filtering over the pools",
        "annotate": "answer the task queue with scripted annotators",
        "assemble": "turn completed tasks into the final question set",
        "evaluate": "run shallow baselines over the assembled questions",
        "report": "summarize the run: trace series and headline numbers",
        "serve": "start the annotation HTTP service",
    }
    for name in commands:
        p = sub.add_parser(name, help=help_text[name])
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--workdir", default=None, help="override config workdir")
        p.add_argument("--resume", action="store_true",
                       help="continue filtering from the last checkpoint")
        p.add_argument("--force", action="store_true",
                       help="overwrite a workdir built with a different config")
        p.add_argument("--threads", type=int, default=1,
                       help="worker processes for feature precomputation")
        if name == "serve":
            p.add_argument("--host", default="127.0.0.1")
            p.add_argument("--port", type=int, default=8000)
    return parser


def cmd_serve(cfg: dict, args) -> None:
    from .validation.service import create_app, serve

    workdir = Path(cfg["workdir"])
    manifest = Manifest.load(workdir)
    manifest.check(config_hash(cfg), cfg["seed"], force=args.force)
    manifest.save()
    store = open_store(cfg, workdir)
    contexts, pools, assignment = _load_assembly_inputs(cfg, workdir)
    created = ensure_tasks(cfg, store, contexts, pools, assignment)
    logging.getLogger("afkit").info("serve: %d tasks created, %d total",
                                    created, len(store.all_tasks()))
    serve(create_app(store), host=args.host, port=args.port)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"error[usage]: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help and friends
        return int(e.code or 0)

    try:
        cfg = load_config(args.config, {"seed": args.seed, "workdir": args.workdir})
        if args.command == "serve":
            cmd_serve(cfg, args)
        else:
            run_stage(args.command, cfg, resume=args.resume, force=args.force,
                      threads=args.threads)
        return EXIT_OK
    except (ConfigError, StaleManifest) as e:
        print(f"error[config]: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"error[data]: {e}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as e:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"error[internal]: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
