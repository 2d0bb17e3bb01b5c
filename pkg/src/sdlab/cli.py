"""Command-line entry point.

Usage::

    lab run manifest.json [--seed S] [--out-dir DIR] [--threads K]
    lab render DIR/index.json

Exit status: 0 when every certificate passes, 1 on a computation error,
2 on an invalid manifest or arguments, 3 when the run finished but some
certificate failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_COMPUTE, EXIT_INVALID, EXIT_FAILED = 0, 1, 2, 3

log = logging.getLogger("sdlab")


def _set_threads(n):
    if n is None:
        env = os.environ.get("SDLAB_THREADS")
        if not env:
            return
        try:
            n = int(env)
        except ValueError:
            raise SystemExit(f"SDLAB_THREADS must be an integer, got {env!r}")
    if n < 1:
        raise SystemExit("thread count must be at least 1")
    from . import _kernels
    _kernels.set_threads(n)


def cmd_run(args) -> int:
    from .pipelines import Context, ValidationError, prepare_manifest, write_json

    try:
        with open(args.manifest) as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        print(f"error: manifest {args.manifest} not found", file=sys.stderr)
        return EXIT_INVALID
    except json.JSONDecodeError as exc:
        print(f"error: manifest is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if not isinstance(manifest, dict):
        print("error: manifest: expected a JSON object", file=sys.stderr)
        return EXIT_INVALID
    seed = args.seed if args.seed is not None else manifest.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        print(f"error: manifest.seed: expected a non-negative integer, got {seed!r}",
              file=sys.stderr)
        return EXIT_INVALID
    out_dir = Path(args.out_dir or manifest.get("out_dir") or "lab_out")
    ctx = Context(out_dir=out_dir, seed=seed)
    try:
        jobs = prepare_manifest(manifest, ctx)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out_dir.mkdir(parents=True, exist_ok=True)
    index = {"seed": seed, "experiments": []}
    status = EXIT_OK
    for name, kind, runner in jobs:
        log.info("running %s (%s)", name, kind)
        entry = {"name": name, "kind": kind}
        try:
            arts = runner()
        except Exception as exc:  # reported per experiment; the rest still run
            log.error("%s failed: %s", name, exc)
            entry.update(error=f"{type(exc).__name__}: {exc}", passed=False, artifacts=[])
            status = EXIT_COMPUTE
        else:
            flags = [a["passed"] for a in arts if a["passed"] is not None]
            entry.update(passed=all(flags), artifacts=arts)
            if not entry["passed"] and status == EXIT_OK:
                status = EXIT_FAILED
        print(f"{name}: {'PASS' if entry['passed'] else 'FAIL'}")
        index["experiments"].append(entry)
    write_json(out_dir / "index.json", index)
    return status


def cmd_render(args) -> int:
    from .report import render_index

    path = Path(args.index)
    if not path.exists():
        print(f"error: {path} not found", file=sys.stderr)
        return EXIT_INVALID
    try:
        res = render_index(path)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        print(f"error: cannot read index: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for p in res["rendered"]:
        print(f"rendered {p}")
    for s in res["skipped"]:
        print(f"skipped {s.get('path', s.get('series'))}: {s['reason']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lab", description="Drift-diffusion experiment runner")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiments of a JSON manifest")
    r.add_argument("manifest")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out-dir", default=None)
    r.add_argument("--threads", type=int, default=None)
    r.set_defaults(func=cmd_run)
    d = sub.add_parser("render", help="draw SVG plots for an index.json")
    d.add_argument("index")
    d.set_defaults(func=cmd_render)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "run":
        try:
            _set_threads(args.threads)
        except SystemExit as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INVALID
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
