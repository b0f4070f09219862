"""Command line client for the experiment service.

The CLI is a thin HTTP client: by default it mounts the FastAPI app
in-process (no server needed); --server points it at a running instance
instead. Exit codes: 0 success, 2 config/validation failure, 3 solver
divergence, 1 verification failure or transport error.

    fblab <kind> --config cfg.json [--out DIR] [--jobs N] [--seed-check]
    fblab scenario <name> --print
"""

from __future__ import annotations

import argparse
import filecmp
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import httpx

KINDS = ("minimize", "diagnose", "monotonicity", "blowup", "verify")


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    # in-process: mount the app behind a synchronous test transport
    from fastapi.testclient import TestClient

    from fblab.service import app

    return TestClient(app)


def _post_run(client: httpx.Client, config: dict, out_dir: str) -> dict:
    resp = client.post("/experiments", json={"config": config, "out_dir": out_dir})
    if resp.status_code == 422:
        print(f"error: invalid config: {resp.text}", file=sys.stderr)
        return {"exit_code": 2, "message": "validation failure"}
    resp.raise_for_status()
    return resp.json()


def _compare_dirs(a: str, b: str) -> bool:
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.diff_files or cmp.funny_files:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    if mismatch or errors:
        return False
    return all(
        _compare_dirs(os.path.join(a, d), os.path.join(b, d)) for d in cmp.common_dirs
    )


def _run_kind(args: argparse.Namespace) -> int:
    out_root = args.out or os.environ.get("FBLAB_OUT") or os.getcwd()
    configs = []
    for path in args.config:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config {path}: {exc}", file=sys.stderr)
            return 2
        doc["kind"] = args.kind
        configs.append((path, doc))

    def one(item, suffix: str = "") -> int:
        path, doc = item
        stem = os.path.splitext(os.path.basename(path))[0]
        out_dir = os.path.join(out_root, stem + suffix)
        with _client(args.server) as client:
            payload = _post_run(client, doc, out_dir)
        if payload.get("message"):
            print(f"{stem}: {payload['message']}", file=sys.stderr)
        return int(payload["exit_code"])

    if args.seed_check:
        codes = []
        for item in configs:
            c1 = one(item, suffix="-run1")
            c2 = one(item, suffix="-run2")
            stem = os.path.splitext(os.path.basename(item[0]))[0]
            same = _compare_dirs(
                os.path.join(out_root, stem + "-run1"),
                os.path.join(out_root, stem + "-run2"),
            )
            if not same:
                print(f"{stem}: outputs differ between runs", file=sys.stderr)
            codes.extend([c1, c2, 0 if same else 1])
        return max(codes)

    if args.jobs > 1 and len(configs) > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(one, configs))
        return max(codes)
    return max(one(item) for item in configs)


def _run_scenario(args: argparse.Namespace) -> int:
    with _client(args.server) as client:
        resp = client.get(f"/scenarios/{args.name}")
        if resp.status_code == 404:
            print(f"error: {resp.json()['detail']}", file=sys.stderr)
            return 2
        resp.raise_for_status()
        doc = resp.json()
    if args.print_config:
        json.dump(doc, sys.stdout, sort_keys=True, indent=2)
        sys.stdout.write("\n")
        return 0
    out_root = args.out or os.environ.get("FBLAB_OUT") or os.getcwd()
    out_dir = os.path.join(out_root, args.name)
    with _client(args.server) as client:
        payload = _post_run(client, doc, out_dir)
    if payload.get("message"):
        print(f"{args.name}: {payload['message']}", file=sys.stderr)
    return int(payload["exit_code"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fblab", description="free-boundary minimization laboratory"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument(
            "--config", action="append", required=True, help="experiment JSON (repeatable)"
        )
        p.add_argument("--out", default=None, help="output root (default FBLAB_OUT or cwd)")
        p.add_argument("--jobs", type=int, default=1, help="concurrent sweep width")
        p.add_argument(
            "--seed-check",
            action="store_true",
            help="run twice and fail unless outputs are byte-identical",
        )
        p.add_argument("--server", default=None, help="remote service URL")
        p.set_defaults(func=_run_kind, kind=kind)
    ps = sub.add_parser("scenario", help="fetch or run a built-in scenario")
    ps.add_argument("name")
    ps.add_argument(
        "--print", dest="print_config", action="store_true", help="dump the config JSON"
    )
    ps.add_argument("--out", default=None)
    ps.add_argument("--server", default=None)
    ps.set_defaults(func=_run_scenario)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except httpx.HTTPError as exc:
        print(f"error: transport failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
