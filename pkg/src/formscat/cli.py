"""Thin command-line client over the solver service.

By default the CLI talks to the FastAPI app in-process (no server
needed); --server points it at a running instance instead.  The client
only ships the JSON config and writes the returned artifacts to --out.

Exit codes: 0 all checks passed, 2 config/usage errors, 3 numerical
failures (a machine-readable failure record is written to the output
directory).
"""

from __future__ import annotations

import argparse
import contextlib
import json
import sys
from pathlib import Path

import httpx

COMMANDS = ("solve", "certify", "deriv-check", "tcc", "invert", "oracle-suite")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="formscat",
        description="Batch experiment runner for the Robin scattering toolkit "
                    "(thin client of the formscat service).",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} command")
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--out", required=True, help="output directory for artifacts")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--threads", type=int, default=None,
                       help="cap BLAS threads for the in-process run")
        p.add_argument("--server", default=None,
                       help="base URL of a running service (default: in-process)")
    serve = sub.add_parser("serve", help="run the service with uvicorn")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


@contextlib.contextmanager
def _thread_cap(n: int | None):
    if n is None:
        yield
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        yield
        return
    with threadpool_limits(limits=n):
        yield


class _SyncASGITransport(httpx.BaseTransport):
    """Drive the ASGI app from the synchronous client, one loop per request."""

    def __init__(self, app):
        self._inner = httpx.ASGITransport(app=app)

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        import asyncio

        async def _go():
            response = await self._inner.handle_async_request(request)
            body = await response.aread()
            return response.status_code, response.headers, body

        status, headers, body = asyncio.run(_go())
        return httpx.Response(status, headers=headers, content=body)


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    from .service import create_app
    return httpx.Client(transport=_SyncASGITransport(create_app()),
                        base_url="http://formscat.local", timeout=600.0)


def _run_command(args) -> int:
    config_path = Path(args.config)
    try:
        config = json.loads(config_path.read_text())
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not isinstance(config, dict):
        print("error: config must be a JSON object", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        config["seed"] = args.seed

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    with _thread_cap(args.threads), _client(args.server) as client:
        try:
            resp = client.post(f"/{args.command}", json=config)
        except httpx.HTTPError as exc:
            print(f"error: service unreachable: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    if resp.status_code in (400, 422):
        record = {"error": "config_rejected", "detail": resp.json().get("detail")}
        (out_dir / "config_error.json").write_text(json.dumps(record, indent=2) + "\n")
        print(f"config rejected: {json.dumps(record['detail'])[:500]}", file=sys.stderr)
        return EXIT_CONFIG
    if resp.status_code != 200:
        print(f"error: service returned {resp.status_code}: {resp.text[:500]}",
              file=sys.stderr)
        return EXIT_CONFIG

    payload = resp.json()
    for name, content in payload["artifacts"].items():
        (out_dir / name).write_text(content)
        print(f"wrote {out_dir / name}")
    print(f"status: {payload['status']} (config {payload['config_sha256'][:12]})")
    if payload["status"] != "ok":
        failure = payload.get("failure") or {}
        (out_dir / "failure.json").write_text(json.dumps(
            {"config_sha256": payload["config_sha256"], **failure},
            indent=2, sort_keys=True) + "\n")
        return EXIT_NUMERICAL
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn

        from .service import create_app
        uvicorn.run(create_app(), host=args.host, port=args.port)
        return EXIT_OK
    return _run_command(args)


if __name__ == "__main__":
    sys.exit(main())
