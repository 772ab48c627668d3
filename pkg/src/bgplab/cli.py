"""Command line front end: run one scenario, sweep seeds, or check a history file.

Exit codes: 0 all properties hold, 1 a property was violated, 2 bad config.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .cluster import ConfigError
from .core import KEYSET, CmdSequence, Command, CommandId
from .sim.campaign import campaign, parse_seed_range
from .sim.config import load_scenario
from .sim.engine import run
from .sim.oracle import check_history

LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging():
    name = os.environ.get("BGP_LOG_LEVEL", "quiet").lower()
    level = LOG_LEVELS.get(name, logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def _report_text(result) -> str:
    v, st = result.verdict, result.stats
    lines = [
        f"seed {result.config.seed}: {'PASS' if v.ok else 'FAIL'}",
        f"steps {st['steps']}  time {st['time']}  stop {st['stop']}  final view {st['final_view']}",
    ]
    for viol in v.violations:
        lines.append(f"violation {viol.prop} at step {viol.step}: {viol.detail}")
    lines.append(f"liveness {'evaluated' if v.liveness_evaluated else 'not evaluated'}")
    for lid, n in sorted(st["log_lengths"].items()):
        lines.append(f"learner {lid} executed {n}")
    return "\n".join(lines) + "\n"


def _report_json_lines(result) -> str:
    v, st = result.verdict, result.stats
    recs = [{"record": "verdict", "seed": result.config.seed, "ok": v.ok,
             "liveness_evaluated": v.liveness_evaluated}]
    recs += [dict(record="violation", **viol.to_dict()) for viol in v.violations]
    for e in result.learns:
        recs.append({"record": "learn", "command": f"{e.command.proposer}.{e.command.seqno}",
                     "learner": e.learner, "step": e.step, "depth": e.depth,
                     "path": e.path, "quorum": e.quorum})
    recs.append({"record": "stats", "steps": st["steps"], "time": st["time"], "stop": st["stop"],
                 "final_view": st["final_view"], "view_changes": len(st["views_adopted"]),
                 "delivered": st["delivered"], "by_tag": dict(sorted(st["by_tag"].items()))})
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in recs)


def cmd_run(args) -> int:
    cfg = load_scenario(args.scenario)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    result = run(cfg)
    if args.trace_out:
        with open(args.trace_out, "w", encoding="utf-8") as fh:
            fh.write(result.trace_text())
    out = _report_json_lines(result) if args.report == "json-lines" else _report_text(result)
    sys.stdout.write(out)
    return 0 if result.ok else 1


def cmd_campaign(args) -> int:
    cfg = load_scenario(args.scenario)
    report = campaign(cfg, parse_seed_range(args.seeds), args.jobs)
    if args.report == "json-lines":
        sys.stdout.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")
    else:
        sys.stdout.write(report.text())
    return 0 if not report.failed else 1


def _command(obj) -> Command:
    p, _, s = str(obj["id"]).partition(".")
    return Command(
        CommandId(int(p), int(s)),
        obj.get("payload", "").encode(),
        frozenset(obj.get("read", ())),
        frozenset(obj.get("write", ())),
        bool(obj.get("universal", False)),
    )


def load_history(path):
    """JSON lines: ``{"learner": id, "log": [cmd, ...]}`` snapshots in time order,
    plus an optional ``{"proposed": [cmd, ...]}`` registry line."""
    histories, registry = {}, None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if "proposed" in rec:
                    registry = [_command(c) for c in rec["proposed"]]
                else:
                    snap = CmdSequence(_command(c) for c in rec["log"])
                    histories.setdefault(int(rec["learner"]), []).append(snap)
            except (KeyError, ValueError, TypeError) as e:
                raise ConfigError(f"{path}:{lineno}: bad history record ({e})") from None
    return histories, registry


def cmd_check(args) -> int:
    histories, registry = load_history(args.history)
    verdict = check_history(histories, registry, KEYSET)
    for viol in verdict.violations:
        print(f"violation {viol.prop} at step {viol.step}: {viol.detail}")
    print("PASS" if verdict.ok else "FAIL")
    return 0 if verdict.ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bgplab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run-scenario", help="run one seeded simulation")
    r.add_argument("--scenario", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--trace-out")
    r.add_argument("--report", choices=("text", "json-lines"), default="text")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("campaign", help="run a scenario over a seed range")
    c.add_argument("--scenario", required=True)
    c.add_argument("--seeds", default="0..99", help="inclusive range a..b")
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--report", choices=("text", "json-lines"), default="text")
    c.set_defaults(func=cmd_campaign)

    k = sub.add_parser("check", help="check a recorded learner history")
    k.add_argument("--history", required=True)
    k.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
