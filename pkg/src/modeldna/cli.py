"""Command line entry point; a thin client over the stage-execution API.

By default commands run against an in-process instance of the service, so no
server needs to be running. Point --server at a deployed instance to execute
stages remotely instead. Stage output is deterministic for a given config
and directory state; verdicts and reports are printed as JSON, never encoded
in exit codes.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from typing import Any

import httpx

from .config import ConfigError, load_run_config
from .pipeline import DELTA_STAGES, STAGES

STAGE_HELP = {
    "train-source": "generate task data and train the source classifier",
    "build-pool": "fine-tune homologous and train non-homologous pool models",
    "train-mgmp": "train the fragment generator and pair classifier",
    "verify": "fingerprint candidate models and write provenance verdicts",
    "evaluate": "score the verifier on held-out models",
    "baseline": "run the parameter-distance reference classifier",
    "replace-diagnostic": "trace layer replacement curves and forgetting",
    "export-viz": "project fragment sets to 2-D for plotting",
    "ablation": "compare fingerprint training variants",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modeldna",
        description="Behavioral fingerprints for model provenance verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        p = sub.add_parser(stage, help=STAGE_HELP[stage])
        p.add_argument("--config", required=True, help="run config file (YAML or JSON)")
        p.add_argument("--seed", type=int, default=None, help="override the run seed")
        p.add_argument("--out", default=None, help="run directory (default: derived)")
        if stage in DELTA_STAGES:
            p.add_argument(
                "--delta", type=float, default=None, help="override the decision threshold"
            )
        p.add_argument(
            "--server", default=None, help="base URL of a running service (default: in-process)"
        )
    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _post_stage(server: str | None, stage: str, body: dict[str, Any]) -> httpx.Response:
    path = f"/stages/{stage}"
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            return client.post(path, json=body)

    async def in_process() -> httpx.Response:
        from .service.app import create_app

        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://modeldna.internal", timeout=None
        ) as client:
            return await client.post(path, json=body)

    return asyncio.run(in_process())


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn

        from .service.app import create_app

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return 0

    try:
        cfg = load_run_config(args.config)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    body: dict[str, Any] = {
        "config": cfg.model_dump(mode="json", by_alias=True),
        "outDir": args.out,
        "seed": args.seed,
        "delta": getattr(args, "delta", None),
    }
    try:
        response = _post_stage(args.server, args.command, body)
    except httpx.HTTPError as exc:
        print(f"cannot reach service: {exc}", file=sys.stderr)
        return 2
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        print(f"error: {detail}", file=sys.stderr)
        return 1
    result = response.json()
    for line in result.get("messages", []):
        print(line)
    payload = result.get("payload")
    if payload is not None:
        print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
