"""Command line: pretrain, run, sweep, serve, report.

Every command reads one JSON config (all fields optional) and applies
--set key=value overrides on top; flags win over the file.
"""

from __future__ import annotations

import argparse
import os
import sys

from .harness.config import ConfigError, ExperimentConfig, load_config, parse_field_value
from .harness.report import (
    load_report,
    report_text,
    summarize,
    write_summary_csv,
    write_summary_json,
)
from .harness.run import pretrained_policy, run
from .harness.serve import make_server
from .harness.sweep import sweep
from .policy import save_checkpoint


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; defaults apply when omitted")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config field (repeatable; wins over --config)",
    )
    parser.add_argument("--seed", type=int, help="run seed; default: first of config.seeds")


def _load(args) -> tuple[ExperimentConfig, int]:
    config = load_config(args.config, args.set)
    seed = args.seed if args.seed is not None else config.seeds[0]
    return config, seed


def _cmd_pretrain(args) -> int:
    config, seed = _load(args)
    params = pretrained_policy(config, seed)
    out = args.out or os.path.join(config.out_dir, f"pretrained-seed{seed}.ckpt")
    parent = os.path.dirname(out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    save_checkpoint(out, params, seed)
    print(f"wrote {out}")
    return 0


def _cmd_run(args) -> int:
    config, seed = _load(args)
    out = args.out or os.path.join(
        config.out_dir, f"{config.method}-{config.sampling}-seed{seed}"
    )
    run(config, seed, run_dir=out)
    print(f"run dir: {out}")
    print(report_text([out]))
    return 0


def _cmd_sweep(args) -> int:
    config, _ = _load(args)
    grid = {}
    for item in args.grid:
        if "=" not in item:
            raise ConfigError(f"grid {item!r} is not of the form key=v1,v2,...")
        key, raw = item.split("=", 1)
        key = key.strip()
        grid[key] = [parse_field_value(key, part) for part in raw.split(",")]
    out_csv = args.out or os.path.join(config.out_dir, "sweep.csv")
    cells = sweep(config, grid, out_csv=out_csv, run_root=args.run_root, n_workers=args.workers)
    print(f"wrote {out_csv} ({len(cells)} cells x {len(config.seeds)} seeds)")
    for cell in cells:
        sr_mean, sr_std = cell.stats("sr")
        tag = ", ".join(f"{k}={v}" for k, v in sorted(cell.overrides.items())) or "base"
        flag = f"  [{cell.flag()}]" if cell.flag() else ""
        print(f"  {tag}: sr {sr_mean:.2f} ({sr_std:.2f}){flag}")
    return 0


def _cmd_serve(args) -> int:
    config, seed = _load(args)
    if config.oracle != "interactive":
        # serve hosts the live oracle by definition; saves typing --set.
        config = config.replace(oracle="interactive")
    static = args.static
    if static is None and os.path.isdir(os.path.join("frontend", "dist")):
        static = os.path.join("frontend", "dist")
    server = make_server(
        config, seed, host=args.host, port=args.port, run_dir=args.out, static_dir=static
    )
    host, port = server.server_address[0], server.server_address[1]
    server.controller.start()
    print(f"serving {config.method} (seed {seed}) on http://{host}:{port}/")
    if static:
        print(f"static assets: {static}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def _cmd_report(args) -> int:
    print(report_text(args.run_dirs, verify=not args.no_verify))
    if args.out_csv or args.out_json:
        rows = summarize([load_report(d) for d in args.run_dirs])
        if args.out_csv:
            write_summary_csv(rows, args.out_csv)
            print(f"wrote {args.out_csv}")
        if args.out_json:
            write_summary_json(rows, args.out_json)
            print(f"wrote {args.out_json}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="navadapt",
        description="Instruction-conditioned graph navigation with test-time adaptation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="behavior-clone the source policy and save a checkpoint")
    _add_common(p)
    p.add_argument("--out", help="checkpoint path (default: <out_dir>/pretrained-seed<seed>.ckpt)")
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("run", help="one adaptation run; writes logs and prints the report")
    _add_common(p)
    p.add_argument("--out", help="run directory (default: <out_dir>/<method>-<sampling>-seed<seed>)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="grid sweep over config fields, all config seeds per cell")
    _add_common(p)
    p.add_argument(
        "--grid",
        action="append",
        required=True,
        metavar="KEY=V1,V2,...",
        help="one swept field with its values (repeatable; cells are the cross product)",
    )
    p.add_argument("--out", help="sweep CSV path (default: <out_dir>/sweep.csv)")
    p.add_argument("--run-root", help="keep per-cell run logs under this directory")
    p.add_argument("--workers", type=int, help="thread pool size (default: min(4, cpus))")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("serve", help="host one interactive run plus the HTTP console API")
    _add_common(p)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--static", help="static asset directory (default: frontend/dist if present)")
    p.add_argument("--out", help="run directory for the served run's logs")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("report", help="summarize finished run directories")
    p.add_argument("run_dirs", nargs="+", help="run directories containing report.json")
    p.add_argument("--out-csv", help="also write the method table as CSV")
    p.add_argument("--out-json", help="also write the method table as JSON")
    p.add_argument("--no-verify", action="store_true", help="skip recomputing reports from episodes")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"not found: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
