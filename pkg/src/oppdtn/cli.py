"""Command-line entry point: simulate, gen-trace, report, node, config-docs.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import os
import signal
import sys

from .config import ConfigError, config_docs_table, load_config
from .experiment import atomic_write_text, run_matrix, write_reports
from .metrics import MalformedLogError, aggregate, reduce_log_file
from .node import NodeConfig, NodeDaemon, NodeStartError
from .traceio import TraceParseError, write_pairwise_intervals
from .types import MalformedEndpointError, parse_endpoint
from .workload import SyntheticParams, generate_synthetic_contacts, resolve_activity_profile

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def _setup_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO,
             "debug": logging.DEBUG}.get(os.environ.get("OPPDTN_LOG", "info"),
                                         logging.INFO)
    logging.basicConfig(level=level,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def cmd_simulate(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = args.out or cfg.get("run", "out")
    try:
        def progress(router, ttl, seed, m):
            print(f"run {router} ttl={ttl} seed={seed}: "
                  f"created={m.created} delivered={m.delivered} "
                  f"replicas={m.replicas}")

        run_matrix(cfg, out_dir, seed_offset=args.seed_offset,
                   progress=progress if not args.quiet else None)
    except (TraceParseError, ValueError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    print(f"report written to {os.path.join(out_dir, 'report.csv')}")
    return EXIT_OK


def cmd_gen_trace(args) -> int:
    try:
        activity = resolve_activity_profile(args.activity_profile)
        params = SyntheticParams(nodes=args.nodes, communities=args.communities,
                                 duration_s=args.days * 86400.0,
                                 lambda_in=args.lambda_in,
                                 lambda_out=args.lambda_out,
                                 mean_contact_s=args.mean_contact_s,
                                 activity=tuple(activity))
        contacts = generate_synthetic_contacts(params, args.seed)
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    atomic_write_text(args.out, write_pairwise_intervals(contacts))
    print(f"wrote {len(contacts)} contacts to {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        names = sorted(n for n in os.listdir(args.logs) if n.endswith(".log"))
    except OSError as e:
        print(f"data error: cannot list {args.logs}: {e}", file=sys.stderr)
        return EXIT_DATA
    if not names:
        print(f"data error: no .log files in {args.logs}", file=sys.stderr)
        return EXIT_DATA
    per_key: dict[tuple[str, int], list] = {}
    run_rows = []
    metas = []
    try:
        for name in names:
            metrics, meta = reduce_log_file(os.path.join(args.logs, name))
            try:
                router = meta["router"]
                ttl = int(meta["ttl_s"])
                seed = int(meta["seed"])
            except (KeyError, ValueError):
                raise MalformedLogError(f"{name}: missing #meta router/ttl_s/seed")
            per_key.setdefault((router, ttl), []).append(metrics)
            run_rows.append((router, ttl, seed, metrics))
            metas.append(meta)
    except MalformedLogError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    cost_mode = args.cost_mode or metas[0].get("cost_mode", "replicas")
    aggregates = [aggregate(router, ttl, runs, cost_mode)
                  for (router, ttl), runs in sorted(per_key.items())]
    meta = {"reduced_from": args.logs, "cost_mode": cost_mode,
            "logs": len(names)}
    write_reports(aggregates, run_rows, meta, args.out, cost_mode)
    print(f"report written to {os.path.join(args.out, 'report.csv')}")
    return EXIT_OK


def _parse_targets(text: str) -> list[tuple[str, int]]:
    targets = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        host, _, port = part.rpartition(":")
        targets.append((host, int(port)))
    return targets


def cmd_node(args) -> int:
    try:
        parse_endpoint(args.eid)
    except MalformedEndpointError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        targets = _parse_targets(args.beacon_targets) if args.beacon_targets else []
    except ValueError:
        print(f"config error: bad --beacon-targets {args.beacon_targets!r}",
              file=sys.stderr)
        return EXIT_CONFIG
    cfg = NodeConfig(
        eid=args.eid, listen_port=args.listen, beacon_port=args.beacon_port,
        router=args.router, store_dir=args.store, inbox_dir=args.inbox,
        outbox_dir=args.outbox, ttl_s=args.ttl, capacity_bytes=args.capacity,
        beacon_addr=args.beacon_addr, beacon_targets=targets,
        beacon_interval_s=args.beacon_interval, holdoff_s=args.holdoff,
        session_timeout_s=args.session_timeout,
        max_payload_bytes=args.max_payload,
        capture_dir=os.environ.get("OPPDTN_CAPTURE", ""),
    )
    daemon = NodeDaemon(cfg)

    def on_term(signum, frame):
        daemon.running.clear()

    signal.signal(signal.SIGTERM, on_term)
    try:
        daemon.run_forever()
    except NodeStartError as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_config_docs(args) -> int:
    print(config_docs_table(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oppdtn",
        description="Opportunistic DTN toolkit: simulator, trace tools, live node")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the router x TTL x seed matrix from a config")
    p.add_argument("--config", required=True, help="experiment config file")
    p.add_argument("--seed-offset", type=int, default=0,
                   help="shift every run seed by this amount")
    p.add_argument("--out", default=None, help="output directory (overrides run.out)")
    p.add_argument("--quiet", action="store_true", help="suppress per-run progress")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-trace", help="generate a synthetic routine contact trace")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--communities", type=int, default=3)
    p.add_argument("--days", type=float, required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.add_argument("--lambda-in", type=float, default=0.127,
                   help="hourly rate per intra-community pair")
    p.add_argument("--lambda-out", type=float, default=0.0159,
                   help="hourly rate per inter-community pair")
    p.add_argument("--mean-contact-s", type=float, default=90.0)
    p.add_argument("--activity-profile", default="diurnal")
    p.set_defaults(func=cmd_gen_trace)

    p = sub.add_parser("report", help="re-reduce raw run logs into reports")
    p.add_argument("--logs", required=True, help="directory of .log files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--cost-mode", choices=["replicas", "overhead"], default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("node", help="run a live store-carry-and-forward node")
    p.add_argument("--eid", required=True, help="endpoint, e.g. dtn://n01")
    p.add_argument("--listen", type=int, default=4556, help="session TCP port")
    p.add_argument("--beacon-port", type=int, default=4555, help="discovery UDP port")
    p.add_argument("--router", choices=["dlife", "prophet", "epidemic"],
                   default="epidemic")
    p.add_argument("--store", default="store", help="store directory")
    p.add_argument("--inbox", default="inbox", help="delivered-payload directory")
    p.add_argument("--outbox", default="outbox", help="application spool directory")
    p.add_argument("--ttl", type=int, default=86400, help="TTL for submitted bundles")
    p.add_argument("--capacity", type=int, default=10_000_000,
                   help="store capacity in bytes, 0 = unlimited")
    p.add_argument("--beacon-addr", default="127.255.255.255",
                   help="beacon broadcast address")
    p.add_argument("--beacon-targets", default="",
                   help="comma-separated host:port beacon destinations "
                        "(overrides --beacon-addr)")
    p.add_argument("--beacon-interval", type=float, default=5.0)
    p.add_argument("--holdoff", type=float, default=60.0,
                   help="seconds to ignore a peer after a session")
    p.add_argument("--session-timeout", type=float, default=30.0)
    p.add_argument("--max-payload", type=int, default=1_000_000)
    p.set_defaults(func=cmd_node)

    p = sub.add_parser("config-docs", help="print the config key reference table")
    p.set_defaults(func=cmd_config_docs)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
