"""Command-line front end.

Every subcommand is a thin client of the HTTP service: it assembles a
payload (config-file text plus flag overrides), POSTs it, and prints the
JSON response. By default the service runs in-process, so no server needs
to be up; ``--server URL`` sends the same request to a remote instance
instead. Exit codes follow the error taxonomy: 2 for configuration
problems, 3 for data problems, 4 for numeric failures, 1 otherwise.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

import httpx

from . import __version__
from .errors import ConfigError
from .service import create_app

_EXIT_BY_CATEGORY = {"config": 2, "data": 3, "numeric": 4}

# Dedicated convenience flags and the config keys they set.
_FLAG_KEYS = {
    "out": "output_dir",
    "seed": "master_seed",
    "threads": "threads",
    "label_column": "label_column",
    "positive_label": "positive_label",
    "threshold": "threshold",
    "n": "synth.n",
    "attack_fraction": "synth.attack_fraction",
    "separation": "synth.separation",
    "features": "synth.features",
    "batch_size": "hp.batch_size",
    "epochs": "hp.epochs",
    "learning_rate": "hp.learning_rate",
    "particles": "pso.particles",
    "iterations": "pso.iterations",
    "variant": "pso.variant",
    "model": "model_file",
    "normalization": "normalization_file",
    "weight_mode": "compress.weight_mode",
}


def _add_common(sub: argparse.ArgumentParser, with_inputs: bool = True) -> None:
    sub.add_argument("--config", help="key = value configuration file")
    sub.add_argument(
        "--set",
        dest="assignments",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one configuration key (repeatable; wins over --config)",
    )
    sub.add_argument("--out", help="output directory for run artifacts")
    sub.add_argument("--seed", type=int, help="master seed; all other seeds derive from it")
    sub.add_argument("--threads", type=int, help="worker threads for tuning evaluations")
    sub.add_argument("--server", help="URL of a running service (default: in-process)")
    if with_inputs:
        sub.add_argument("--input", dest="inputs", action="append", default=[],
                         metavar="CSV", help="input flow CSV (repeatable)")
        sub.add_argument("--label-column", dest="label_column", help="label column name")
        sub.add_argument("--positive-label", dest="positive_label",
                         help="label value to treat as attack (1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmflow",
        description="Flow-classification pipeline: ingest, preserve, tune, train, report.",
    )
    parser.add_argument("--version", action="version", version=f"swarmflow {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("synth", help="generate a labeled synthetic flow dataset")
    _add_common(p, with_inputs=False)
    p.add_argument("--n", type=int, help="number of records")
    p.add_argument("--attack-fraction", dest="attack_fraction", type=float)
    p.add_argument("--separation", type=float, help="distance between class means")
    p.add_argument("--features", type=int, help="feature count")

    p = commands.add_parser("digest", help="print SHA-256 manifest entries for files")
    p.add_argument("paths", nargs="+")
    p.add_argument("--server", help="URL of a running service (default: in-process)")

    p = commands.add_parser("ingest", help="validate flow CSVs and write a preservation manifest")
    p.add_argument("paths", nargs="+")
    p.add_argument("--out", required=True, help="directory for manifest.jsonl")
    p.add_argument("--label-column", dest="label_column", default="label")
    p.add_argument("--positive-label", dest="positive_label")
    p.add_argument("--server", help="URL of a running service (default: in-process)")

    p = commands.add_parser("tune", help="swarm-tune batch size, epochs and learning rate")
    _add_common(p)
    p.add_argument("--particles", type=int, help="particles per swarm")
    p.add_argument("--iterations", type=int, help="swarm iterations per hyperparameter")
    p.add_argument("--variant", choices=["original", "inertia", "constriction"])

    p = commands.add_parser("train", help="train once at the configured hyperparameters")
    _add_common(p)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)

    p = commands.add_parser("evaluate", help="score a saved model against a labeled CSV")
    _add_common(p)
    p.add_argument("--model", help="saved model file")
    p.add_argument("--normalization", help="saved normalization stats to apply to the input")
    p.add_argument("--threshold", type=float, help="decision threshold")

    p = commands.add_parser("compress", help="compare full-width and single-feature models")
    _add_common(p)
    p.add_argument("--weight-mode", dest="weight_mode", choices=["row_mean", "global_mean"])
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)

    p = commands.add_parser("validate", help="check a configuration, reporting every problem")
    _add_common(p)

    p = commands.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _overrides_from(args: argparse.Namespace) -> dict:
    overrides: dict[str, object] = {}
    for assignment in getattr(args, "assignments", []):
        if "=" not in assignment:
            raise ConfigError(f"--set expects KEY=VALUE, got {assignment!r}")
        key, _, value = assignment.partition("=")
        overrides[key.strip()] = value.strip()
    for flag, key in _FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    inputs = getattr(args, "inputs", None)
    if inputs:
        overrides["inputs"] = list(inputs)
    return overrides


def _config_payload(args: argparse.Namespace) -> dict:
    config_text = None
    if getattr(args, "config", None):
        try:
            config_text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
    return {"config_text": config_text, "overrides": _overrides_from(args)}


async def _post(args: argparse.Namespace, path: str, payload: dict) -> tuple[int, dict]:
    server = getattr(args, "server", None)
    if server:
        client = httpx.AsyncClient(base_url=server, timeout=None)
    else:
        client = httpx.AsyncClient(
            transport=httpx.ASGITransport(app=create_app()),
            base_url="http://swarmflow.internal",
            timeout=None,
        )
    async with client:
        response = await client.post(path, json=payload)
    try:
        body = response.json()
    except ValueError:
        body = {"category": "internal", "errors": [response.text]}
    return response.status_code, body


def _print_failure(body: dict) -> int:
    category = body.get("category", "internal")
    for error in body.get("errors", []):
        print(f"swarmflow: {category}: {error}", file=sys.stderr)
    return _EXIT_BY_CATEGORY.get(category, 1)


def _emit(status: int, body: dict) -> int:
    if status != 200:
        return _print_failure(body)
    print(json.dumps(body, indent=2, sort_keys=True))
    return 0


async def _dispatch(args: argparse.Namespace) -> int:
    command = args.command
    if command == "digest":
        return _emit(*await _post(args, "/v1/digest", {"paths": args.paths}))
    if command == "ingest":
        payload = {
            "paths": args.paths,
            "output_dir": args.out,
            "label_column": args.label_column,
            "positive_label": args.positive_label,
        }
        return _emit(*await _post(args, "/v1/ingest", payload))
    if command == "validate":
        status, body = await _post(args, "/v1/config/validate", _config_payload(args))
        if status != 200:
            return _print_failure(body)
        if not body.get("valid", False):
            for error in body.get("errors", []):
                print(f"swarmflow: config: {error}", file=sys.stderr)
            return 2
        print(json.dumps(body, indent=2, sort_keys=True))
        return 0
    endpoint = {
        "synth": "/v1/synth",
        "tune": "/v1/tune",
        "train": "/v1/train",
        "evaluate": "/v1/evaluate",
        "compress": "/v1/compress",
    }[command]
    return _emit(*await _post(args, endpoint, _config_payload(args)))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        # uvicorn owns the event loop, so it must not start inside asyncio.run.
        import uvicorn

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return 0
    try:
        return asyncio.run(_dispatch(args))
    except ConfigError as exc:
        print(f"swarmflow: config: {exc}", file=sys.stderr)
        return exc.exit_code
    except httpx.HTTPError as exc:
        print(f"swarmflow: cannot reach server: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
