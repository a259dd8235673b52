"""Command line: ``archersim sim|overlay|match|report ...``.

Every failure prints one line ``error: <kind>: <message>`` to stderr and
exits nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from pathlib import Path
from typing import Optional, Sequence

SEED_ENV = "ARCHERSIM_SEED"


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int = 1):
        super().__init__(message)
        self.kind = kind
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", f"{self.prog}: {message}", 2)


def _seed(args) -> int:
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise CliError("usage", f"{SEED_ENV} must be an integer, got {env!r}", 2) from None
    return args.seed


def _sweep_seeds(spec: Optional[str]) -> Optional[list[int]]:
    if spec is None:
        return None
    m = re.fullmatch(r"seeds=(-?\d+)\.\.(-?\d+)", spec.strip())
    if not m:
        raise CliError("usage", f"--sweep expects seeds=A..B, got {spec!r}", 2)
    a, b = int(m.group(1)), int(m.group(2))
    if b < a:
        raise CliError("usage", f"empty seed range {a}..{b}", 2)
    return list(range(a, b + 1))


# -- sim ----------------------------------------------------------------------

def _cmd_sim(args) -> int:
    from .harness import emit_report, format_summary, load_config, load_summary, run_any, sweep

    if args.experiment == "run":
        if not args.config:
            raise CliError("usage", "sim run needs --config FILE", 2)
        cfg = load_config(args.config)
    else:
        cfg = load_config(args.experiment)
    out = Path(args.out or cfg.output.dir)
    seeds = _sweep_seeds(args.sweep)
    if seeds is not None:
        reports = sweep(run_any, cfg, seeds, out, workers=args.workers)
        for r in reports:
            m = r.metrics
            print(f"seed {r.seed}: median {m.median_runtime:.1f} s, mean {m.mean_runtime:.1f} s, "
                  f"makespan {m.makespan:.1f} s, steady gap {m.steady_state_intercompletion:.1f} s")
        print(f"wrote {len(reports)} reports under {out}")
        return 0
    report = run_any(_seed(args), cfg)
    paths = emit_report(report, out)
    print(format_summary(load_summary(paths["summary"])))
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return 0


# -- overlay --------------------------------------------------------------------

def _nat_mix(text: Optional[str]) -> Optional[dict[str, float]]:
    if not text:
        return None
    mix = {}
    for part in text.split(","):
        key, _, value = part.partition("=")
        try:
            mix[key.strip()] = float(value)
        except ValueError:
            raise CliError("usage", f"bad --nat-mix entry {part!r} (want kind=weight)", 2) from None
    return mix


def _cmd_overlay(args) -> int:
    import random

    from .overlay import LoopbackTransport, NatClass, build_overlay
    from .overlay.analysis import all_pairs

    seed = _seed(args)
    if args.nodes < 1:
        raise CliError("usage", "--nodes must be positive", 2)
    mix = _nat_mix(args.nat_mix)
    if mix:
        bad = set(mix) - {k.value for k in NatClass}
        if bad:
            raise CliError("usage", f"unknown NAT class(es) {sorted(bad)}", 2)
    transport = LoopbackTransport() if args.transport == "loopback" else None
    try:
        kw = {"transport": transport} if transport is not None else {}
        ov = build_overlay(args.nodes, bits=args.bits, seed=seed, nat_mix=mix, **kw)
        ov.stabilize()
        ids = ov.live_ids()
        rng = random.Random(f"demo:{seed}")
        delivered = 0
        hops = []
        for _ in range(args.pairs):
            src, dst = rng.choice(ids), rng.choice(ids)
            payload = rng.randbytes(32)
            receipt = ov.tunnel_send(src, ov.nodes[dst].desc.vip, payload)
            if receipt.payload == payload:
                delivered += 1
                hops.append(receipt.hops)
        table = all_pairs(ov)
        if args.dump_topology:
            with open(args.dump_topology, "w", encoding="utf-8") as fh:
                ov.dump_topology(fh)
    finally:
        if transport is not None:
            transport.close()
    result = {
        "nodes": args.nodes,
        "seed": seed,
        "transport": args.transport,
        "sampled_pairs": args.pairs,
        "sampled_delivered": delivered,
        "sampled_mean_hops": round(sum(hops) / len(hops), 4) if hops else 0.0,
        "all_pairs_delivery_rate": table.delivery_rate,
        "all_pairs_mean_hops": round(table.mean_hops, 4),
        "relayed_links": sum(1 for link in ov.links() if link.relay is not None),
    }
    print(json.dumps(result, indent=2))
    return 0 if delivered == args.pairs else 1


# -- match ------------------------------------------------------------------------

def _cmd_match(args) -> int:
    from .matchmaker import AdKind, load_ad, rank_score, requirement_value, symmetric_match
    from .matchmaker.ads import describe

    job = load_ad(args.job, AdKind.JOB)
    res = load_ad(args.resource, AdKind.RESOURCE)
    job_req = requirement_value(job, res)
    res_req = requirement_value(res, job)
    matched = symmetric_match(job, res)
    result = {
        "match": matched,
        "job_requirements": describe(job_req),
        "resource_requirements": describe(res_req),
        "rank": rank_score(job, res),
    }
    print(json.dumps(result, indent=2))
    return 0 if matched else 3


# -- report -----------------------------------------------------------------------

def _cmd_report(args) -> int:
    from .harness import format_summary, load_summary

    summary = load_summary(args.path)
    if args.json:
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        print(format_summary(summary))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="archersim", description="Desk-scale community grid: overlay, matchmaking, pools, simulation.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("sim", help="run an experiment and write summary.json, trace.jsonl, cdf.csv")
    sim.add_argument("experiment", choices=["run", "fig2", "scenario1"])
    sim.add_argument("--config", help="TOML or JSON experiment file (sim run)")
    sim.add_argument("--seed", type=int, default=0, help=f"run seed ({SEED_ENV} overrides)")
    sim.add_argument("--out", help="output directory (default: the config's output.dir)")
    sim.add_argument("--sweep", help="seeds=A..B runs every seed into OUT/seed-N")
    sim.add_argument("--workers", type=int, default=1, help="parallel processes for --sweep")
    sim.set_defaults(func=_cmd_sim)

    ov = sub.add_parser("overlay", help="overlay tools")
    ov_sub = ov.add_subparsers(dest="action", required=True, parser_class=_Parser)
    demo = ov_sub.add_parser("demo", help="build an overlay and tunnel payloads between random pairs")
    demo.add_argument("--nodes", type=int, default=16)
    demo.add_argument("--seed", type=int, default=0)
    demo.add_argument("--pairs", type=int, default=20)
    demo.add_argument("--bits", type=int, default=160)
    demo.add_argument("--nat-mix", help="e.g. public=0.5,cone=0.3,symmetric=0.2")
    demo.add_argument("--transport", choices=["memory", "loopback"], default="memory")
    demo.add_argument("--dump-topology", metavar="FILE", help="write routing tables as JSON lines")
    demo.set_defaults(func=_cmd_overlay)

    match = sub.add_parser("match", help="matchmaking tools")
    m_sub = match.add_subparsers(dest="action", required=True, parser_class=_Parser)
    check = m_sub.add_parser("check", help="evaluate a job ad against a resource ad (exit 3 on no match)")
    check.add_argument("--job", required=True)
    check.add_argument("--resource", required=True)
    check.set_defaults(func=_cmd_match)

    rep = sub.add_parser("report", help="report tools")
    r_sub = rep.add_subparsers(dest="action", required=True, parser_class=_Parser)
    show = r_sub.add_parser("show", help="print a summary.json (or a directory holding one)")
    show.add_argument("path")
    show.add_argument("--json", action="store_true", help="print the raw summary")
    show.set_defaults(func=_cmd_report)
    return p


def _classify(exc: BaseException) -> str:
    kind = getattr(exc, "kind", None)
    if isinstance(kind, str):
        return kind
    name = type(exc).__name__
    table = {
        "ExpressionSyntaxError": "syntax",
        "UnknownOperator": "syntax",
        "AdError": "ad",
        "JSONDecodeError": "parse",
        "InvalidConfig": "validation",
        "SimulationStuck": "stuck",
        "FileNotFoundError": "io",
        "PermissionError": "io",
        "IsADirectoryError": "io",
        "TransportError": "transport",
    }
    if name in table:
        return table[name]
    if isinstance(exc, OSError):
        return "io"
    return "internal"


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
        return exc.code
    except KeyboardInterrupt:
        print("error: interrupted: stopped by user", file=sys.stderr)
        return 130
    except Exception as exc:  # noqa: BLE001 - every failure becomes one line
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"error: {_classify(exc)}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
