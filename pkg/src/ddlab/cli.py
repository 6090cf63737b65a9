"""Command-line front end: a thin client of the HTTP service.

By default the CLI talks to the ASGI app in-process (no server needed); the
--server flag points it at a running instance instead. Exit codes: 0 all
theorem checks pass, 1 input/validation error, 2 a theorem check failed
(e.g. a measured distance exceeding its bound).

    ddlab run scenario.json --out results/
    ddlab preset euler-5.1 --emit scenario.json
    ddlab verify-set scenario.json
    ddlab euler scenario.json
    ddlab serve --port 8000
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import httpx

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_VIOLATION = 2


class _InProcessTransport(httpx.BaseTransport):
    """Sync bridge to the ASGI app so the CLI works without a server."""

    def __init__(self, app):
        self._asgi = httpx.ASGITransport(app=app)

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        import asyncio

        async def call():
            response = await self._asgi.handle_async_request(request)
            content = await response.aread()
            await response.aclose()
            return httpx.Response(
                status_code=response.status_code,
                headers=response.headers,
                content=content,
                request=request,
            )

        return asyncio.run(call())


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server.rstrip("/"), timeout=600.0)
    from .service import create_app

    return httpx.Client(transport=_InProcessTransport(create_app()),
                        base_url="http://ddlab.internal")


def _load_scenario(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SystemExit(f"error: cannot read {path}: {exc}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        print(f"error: {path} is not valid JSON: line {exc.lineno} column {exc.colno}: {exc.msg}",
              file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def _fail_from_response(resp: httpx.Response) -> int:
    try:
        detail = resp.json().get("detail", resp.text)
    except ValueError:
        detail = resp.text
    if isinstance(detail, list):  # pydantic validation errors: show field paths
        for item in detail:
            loc = ".".join(str(p) for p in item.get("loc", []))
            print(f"error: {loc}: {item.get('msg')}", file=sys.stderr)
    else:
        print(f"error: {detail}", file=sys.stderr)
    return EXIT_INPUT


def cmd_run(args) -> int:
    scenario = _load_scenario(args.scenario)
    with _client(args.server) as client:
        resp = client.post("/run", json={"scenario": scenario})
        if resp.status_code != 200:
            return _fail_from_response(resp)
        body = resp.json()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = scenario.get("outputs", {}) if isinstance(scenario, dict) else {}
    csv_name = outputs.get("csv", "results.csv")
    summary_name = outputs.get("summary", "summary.json")
    (out / csv_name).write_text(body["results_csv"])
    (out / summary_name).write_text(json.dumps(body["summary"], indent=2, sort_keys=True) + "\n")

    flags = body["summary"]["flags"]
    for key, val in flags.items():
        state = "pass" if val else ("FAIL" if val is False else "n/a")
        print(f"{key}: {state}")
    print(f"wrote {out / csv_name} and {out / summary_name}")
    code = int(body["exit_code"])
    if code != 0:
        print("theorem check failed; see summary flags", file=sys.stderr)
    return code


def cmd_preset(args) -> int:
    with _client(args.server) as client:
        resp = client.get(f"/presets/{args.name}")
        if resp.status_code != 200:
            return _fail_from_response(resp)
        scenario = resp.json()
    text = json.dumps(scenario, indent=2) + "\n"
    if args.emit:
        Path(args.emit).write_text(text)
        print(f"wrote {args.emit}")
    else:
        print(text, end="")
    return EXIT_OK


def cmd_verify_set(args) -> int:
    scenario = _load_scenario(args.scenario)
    with _client(args.server) as client:
        resp = client.post("/verify-set", json={"scenario": scenario})
        if resp.status_code != 200:
            return _fail_from_response(resp)
        body = resp.json()
    print(json.dumps(body, indent=2))
    return EXIT_OK if body["passed"] else EXIT_VIOLATION


def cmd_euler(args) -> int:
    scenario = _load_scenario(args.scenario)
    with _client(args.server) as client:
        resp = client.post("/euler", json={"scenario": scenario})
        if resp.status_code != 200:
            return _fail_from_response(resp)
        body = resp.json()
    print(json.dumps(body["visits"]))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("ddlab.service:app", host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddlab", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario sweep; write CSV + JSON summary")
    p_run.add_argument("scenario", help="scenario JSON file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--server", default=None, help="remote service URL (default: in-process)")
    p_run.set_defaults(func=cmd_run)

    p_preset = sub.add_parser("preset", help="print (or emit) a canned scenario")
    p_preset.add_argument("name", help=f"one of: counterexample-4.1, euler-5.1, factorized-5.6, "
                                       f"deep-pocket, deep-pocket(n=...), pauli-bangbang")
    p_preset.add_argument("--emit", default=None, help="write the scenario JSON to this file")
    p_preset.add_argument("--server", default=None)
    p_preset.set_defaults(func=cmd_preset)

    p_verify = sub.add_parser("verify-set", help="check the averaging identity of the decoupling set")
    p_verify.add_argument("scenario")
    p_verify.add_argument("--server", default=None)
    p_verify.set_defaults(func=cmd_verify_set)

    p_euler = sub.add_parser("euler", help="emit the scenario's Euler cycle as element indices")
    p_euler.add_argument("scenario")
    p_euler.add_argument("--server", default=None)
    p_euler.set_defaults(func=cmd_euler)

    p_serve = sub.add_parser("serve", help="run the HTTP service under uvicorn")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
