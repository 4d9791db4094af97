"""Command-line front end.

A thin client for the HTTP service: each subcommand posts one request.
By default the service app runs in-process (no daemon needed); pass
--server to talk to a remote instance instead. Exit codes: 0 on
success, 2 on contract errors (bad arguments, malformed configs), 1 on
I/O and transport errors.
"""

from __future__ import annotations

import argparse
import asyncio
import sys

import httpx

from . import __version__
from .errors import FrescoError


def _typed(raw: str):
    low = raw.lower()
    if low in ("true", "yes"):
        return True
    if low in ("false", "no"):
        return False
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def _overrides(pairs: list[str]) -> dict:
    out = {}
    for raw in pairs:
        key, sep, value = raw.partition("=")
        if not sep or not key:
            print(f"error (contract): --set needs KEY=VALUE, got {raw!r}", file=sys.stderr)
            raise SystemExit(2)
        out[key.strip()] = _typed(value.strip())
    return out


def _post(server: str | None, path: str, payload: dict) -> tuple[int, dict]:
    async def go():
        if server:
            async with httpx.AsyncClient(base_url=server, timeout=3600.0) as client:
                r = await client.post(path, json=payload)
                return r.status_code, r.json()
        from .service.app import app

        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport, base_url="http://fresco", timeout=3600.0) as client:
            r = await client.post(path, json=payload)
            return r.status_code, r.json()

    return asyncio.run(go())


def _run_command(server: str | None, path: str, payload: dict, on_ok) -> int:
    try:
        status, body = _post(server, path, payload)
    except FrescoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except httpx.HTTPError as exc:
        print(f"error: cannot reach service: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # in-process app failures propagate as raw exceptions
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if status == 200:
        on_ok(body)
        return 0
    if status == 400:
        detail = body.get("detail", {})
        if isinstance(detail, dict):
            print(f"error ({detail.get('kind', 'unknown')}): {detail.get('message', '')}", file=sys.stderr)
            return int(detail.get("exit_code", 1))
    if status == 422:  # request body failed the service's schema validation
        print(f"error (contract): {body.get('detail')}", file=sys.stderr)
        return 2
    print(f"error: HTTP {status}: {body}", file=sys.stderr)
    return 1


def _add_run_arguments(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("frames", help="input frame directory (or glob pattern)")
    sp.add_argument("--out", required=True, help="output frame directory")
    sp.add_argument("--config", help="run configuration file (INI key=value)")
    sp.add_argument("--seed", type=int, help="override the run seed")
    sp.add_argument("--prompt", help="override the prompt")
    sp.add_argument("--fmt", choices=("ppm", "ftns"), default="ppm", help="output frame format")
    sp.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config key (repeatable)",
    )
    sp.add_argument(
        "--no-gt-flows",
        action="store_true",
        help="ignore flow/mask tensors stored beside the input frames",
    )


def _run_payload(args) -> dict:
    return {
        "frames": args.frames,
        "out": args.out,
        "config": args.config,
        "seed": args.seed,
        "prompt": args.prompt,
        "overrides": _overrides(args.overrides),
        "fmt": args.fmt,
        "use_gt_flows": not args.no_gt_flows,
        "save_inversion": getattr(args, "save_inversion", None),
        "emit_plan": getattr(args, "emit_plan", False),
    }


def _print_run(body: dict) -> None:
    print(f"wrote {body['n_frames']} frames ({body['mode']}, {body['seconds']:.2f}s)")
    if body.get("plan") is not None:
        print("keyframes:", " ".join(str(i) for i in body["plan"]))
        for b, batch in enumerate(body.get("batches") or []):
            print(f"batch {b}:", " ".join(str(i) for i in batch))
    if body.get("plan_file"):
        print("plan file:", body["plan_file"])
    if body.get("inversion_files"):
        print(f"saved {len(body['inversion_files'])} inversion tensors")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fresco", description="Flow-guided zero-shot video translation and editing.")
    p.add_argument("--server", help="base URL of a running service (default: run in-process)")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="render a synthetic scene with ground-truth flows")
    sp.add_argument("--config", required=True, help="scene description file (INI)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--fmt", choices=("ppm", "ftns"), default="ppm")
    sp.add_argument("--no-flows", action="store_true", help="skip writing flow/mask tensors")

    sp = sub.add_parser("flow", help="estimate optical flow and occlusion masks")
    sp.add_argument("frames", help="input frame directory")
    sp.add_argument("--out", required=True, help="output directory for flow/mask tensors")
    sp.add_argument("--config", help="run configuration file supplying block size and radius")
    sp.add_argument("--block-size", type=int, help="matching block size")
    sp.add_argument("--radius", type=int, help="search radius in pixels")

    sp = sub.add_parser("translate", help="prompt-guided video translation")
    _add_run_arguments(sp)

    sp = sub.add_parser("edit", help="inversion-based video editing")
    _add_run_arguments(sp)
    sp.add_argument("--save-inversion", metavar="DIR", help="persist inversion records as FTNS tensors")

    sp = sub.add_parser("long", help="long-video run with keyframe scheduling")
    _add_run_arguments(sp)
    sp.add_argument("--emit-plan", action="store_true", help="print and save the keyframe/batch plan")

    sp = sub.add_parser("metrics", help="score an output clip against its source")
    sp.add_argument("frames", help="output frame directory")
    sp.add_argument("--reference", required=True, help="source frame directory")
    sp.add_argument("--config", help="run configuration file")
    sp.add_argument("--out", help="write a machine-readable key=value report here")
    sp.add_argument("--no-gt-flows", action="store_true", help="ignore tensors stored beside the reference")

    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "synth":
        payload = {
            "config": args.config,
            "seed": args.seed,
            "out": args.out,
            "fmt": args.fmt,
            "write_flows": not args.no_flows,
        }

        def ok(body):
            print(f"wrote {body['n_frames']} frames ({body['width']}x{body['height']}) to {args.out}")
            if body["flows"]:
                print(f"wrote {len(body['flows'])} flow and {len(body['masks'])} mask tensors")

        return _run_command(args.server, "/synth", payload, ok)

    if args.command == "flow":
        payload = {
            "frames": args.frames,
            "out": args.out,
            "config": args.config,
            "block_size": args.block_size,
            "radius": args.radius,
        }

        def ok(body):
            print(f"wrote {len(body['flows'])} flow pairs to {args.out}")
            print(f"mean |flow| {body['mean_abs_flow']:.4g}, valid fraction {body['valid_fraction']:.4g}")

        return _run_command(args.server, "/flow", payload, ok)

    if args.command in ("translate", "edit", "long"):
        return _run_command(args.server, f"/{args.command}", _run_payload(args), _print_run)

    if args.command == "metrics":
        payload = {
            "frames": args.frames,
            "reference": args.reference,
            "config": args.config,
            "out": args.out,
            "use_gt_flows": not args.no_gt_flows,
        }

        def ok(body):
            print(body["text"], end="")
            if body.get("report_file"):
                print("report:", body["report_file"])

        return _run_command(args.server, "/metrics", payload, ok)

    return 2


if __name__ == "__main__":
    sys.exit(main())
