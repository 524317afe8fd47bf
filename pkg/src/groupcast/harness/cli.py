"""Command line: ``groupcast {run,sweep,replay,validate}``.

Config precedence is defaults < ``--config`` file < ``--set key=value`` <
dedicated flags.  Failures print one JSON object on stderr, prefixed with
``error:``, and exit nonzero (2 for configuration problems, 1 otherwise).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..access_strategies import StrategyKind
from ..resource_frame import LEDGER_HEADER
from .config import ConfigError, SimConfig, dump_config, load_config
from .export import ExportError, report_csv, rows_to_csv, write_report, write_text, write_trace
from .export import replay as replay_trace
from .simulation import simulate
from .sweep import SweepError, sweep


def _int_list(text: str) -> list[int]:
    """``"2-16"``, ``"1,2,4"`` or a mix such as ``"2-4,8"``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty list: {text!r}")
    return out


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one dotted config key (repeatable)")
    p.add_argument("--seed", type=int)
    p.add_argument("--strategy", choices=[k.value for k in StrategyKind])
    p.add_argument("--group-size", type=int)
    p.add_argument("--groups", type=int)
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--print-config", action="store_true", help="dump the effective config")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groupcast", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="one simulation; writes report.csv and trace.csv"))
    sw = sub.add_parser("sweep", help="strategy x group size x seed cross product")
    _common(sw)
    sw.add_argument("--sizes", type=_int_list, default=_int_list("2-16"))
    sw.add_argument("--strategies", default=",".join(k.value for k in StrategyKind))
    sw.add_argument("--seeds", type=_int_list, default=_int_list("1-5"))
    sw.add_argument("--workers", type=int, default=1)
    rp = sub.add_parser("replay", help="recompute a report from trace.csv")
    rp.add_argument("trace", type=Path)
    rp.add_argument("--out", type=Path)
    _common(sub.add_parser("validate", help="check a config and exit"))
    return parser


def effective_config(args) -> SimConfig:
    cfg = load_config(args.config) if args.config else SimConfig()
    updates = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError({item: "expected KEY=VALUE"})
        k, v = item.split("=", 1)
        updates[k.strip()] = v.strip()
    for flag, key in (("seed", "sim.seed"), ("strategy", "sim.strategy"),
                      ("group_size", "sim.group_size"), ("groups", "sim.groups")):
        if getattr(args, flag, None) is not None:
            updates[key] = getattr(args, flag)
    return cfg.with_updates(updates) if updates else cfg.validate()


def _cmd_run(args, cfg) -> None:
    report, trace, ledger = simulate(cfg)
    out = args.out or Path(".")
    write_report(report, out / "report.csv")
    write_trace(trace, out / "trace.csv")
    write_text(out / "ledger.csv", rows_to_csv(LEDGER_HEADER, ledger.rows()))
    sys.stdout.write(report_csv(report))


def _cmd_sweep(args, cfg) -> None:
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    res = sweep(cfg, args.sizes, strategies, args.seeds, workers=args.workers)
    out = args.out or Path(".")
    write_text(out / "sweep.csv", res.to_csv())
    for row in res.summary:
        ratio = row["ic_ratio"]
        sys.stdout.write(f"{row['strategy']:>14} N={row['group_size']:<3} "
                         f"capacity={row['group_capacity']:.2f}"
                         + (f" ic_ratio={ratio:.4f}" if ratio is not None else "") + "\n")


def _cmd_replay(args) -> None:
    report = replay_trace(args.trace)
    if args.out:
        write_report(report, args.out / "report.csv")
    sys.stdout.write(report_csv(report))


def _fail(kind: str, message: str, code: int, **extra) -> int:
    sys.stderr.write("error: " + json.dumps({"error": kind, "message": message, **extra},
                                            sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            _cmd_replay(args)
            return 0
        cfg = effective_config(args)
        if args.print_config:
            sys.stdout.write(dump_config(cfg))
        if args.command == "validate":
            if not args.print_config:
                sys.stdout.write("ok\n")
        elif args.command == "run":
            _cmd_run(args, cfg)
        else:
            _cmd_sweep(args, cfg)
    except ConfigError as exc:
        return _fail("config", str(exc), 2, problems=exc.problems)
    except SweepError as exc:
        return _fail("sweep", str(exc), 1, key=list(exc.key))
    except (ExportError, OSError) as exc:
        return _fail("io", str(exc), 1)
    except ValueError as exc:
        return _fail("value", str(exc), 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
