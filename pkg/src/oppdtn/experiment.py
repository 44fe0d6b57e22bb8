"""Experiment orchestration: config -> run matrix -> logs, metrics, reports.

Routers and TTLs are matrix axes inside one config so the fixed-workload
guarantee (same source/destination pairs for every router) is enforced
structurally. Every output file is written atomically (temp + rename).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from .config import ExperimentConfig
from .engine import RunSetup, run
from .metrics import (AggregateMetrics, LOG_HEADER, MetricsAccumulator,
                      RunMetrics, aggregate, emit_csv, emit_plot_data)
from .traceio import NodeMap, TraceParseError, load_trace_file
from .types import ContactEvent, SimClock, align_epoch
from .workload import (SyntheticParams, TrafficSpec, generate_synthetic_contacts,
                       generate_traffic, resolve_activity_profile)


def atomic_write_text(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(text)
    os.replace(tmp, path)


def atomic_write_bytes(path: str, data: bytes) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


@dataclass
class Scenario:
    """Resolved scenario inputs shared by every run of a matrix."""

    node_count: int
    duration_s: float
    epoch_shift_s: float
    trace_path: str  # empty for synthetic
    nodemap: NodeMap | None
    fixed_contacts: list[ContactEvent] | None  # None => synthetic, per seed
    synth: SyntheticParams | None
    synth_seed_base: int

    def contacts_for_seed(self, run_seed: int) -> list[ContactEvent]:
        if self.fixed_contacts is not None:
            return self.fixed_contacts
        # Each run seed realizes an independent mobility sample; this is the
        # variance the seed axis measures for synthetic scenarios.
        mixed = self.synth_seed_base * 1_000_003 + run_seed
        return generate_synthetic_contacts(self.synth, mixed)


def resolve_scenario(cfg: ExperimentConfig) -> Scenario:
    trace = cfg.get("scenario", "trace")
    duration = cfg.get("scenario", "duration_s")
    if trace:
        contacts, nodemap = load_trace_file(trace, cfg.get("scenario", "time_scale"))
        if not contacts:
            raise TraceParseError(f"trace {trace} has no contacts")
        contacts, shift = align_epoch(contacts)
        if duration <= 0:
            duration = max(c.end_s for c in contacts)
        return Scenario(node_count=nodemap.count, duration_s=duration,
                        epoch_shift_s=shift, trace_path=trace, nodemap=nodemap,
                        fixed_contacts=contacts, synth=None, synth_seed_base=0)
    activity = resolve_activity_profile(cfg.get("scenario", "activity_profile"))
    if duration <= 0:
        duration = cfg.get("scenario", "days") * 86400.0
    synth = SyntheticParams(
        nodes=cfg.get("scenario", "nodes"),
        communities=cfg.get("scenario", "communities"),
        duration_s=duration,
        lambda_in=cfg.get("scenario", "lambda_in"),
        lambda_out=cfg.get("scenario", "lambda_out"),
        mean_contact_s=cfg.get("scenario", "mean_contact_s"),
        activity=tuple(activity),
    )
    return Scenario(node_count=synth.nodes, duration_s=duration,
                    epoch_shift_s=0.0, trace_path="", nodemap=None,
                    fixed_contacts=None, synth=synth,
                    synth_seed_base=cfg.get("scenario", "seed"))


def traffic_for(cfg: ExperimentConfig, scenario: Scenario):
    end = cfg.get("traffic", "end_s")
    if end <= 0:
        end = scenario.duration_s
    spec = TrafficSpec(
        message_count=cfg.get("traffic", "messages"),
        size_min_bytes=cfg.get("traffic", "size_min"),
        size_max_bytes=cfg.get("traffic", "size_max"),
        window_start_s=cfg.get("traffic", "start_s"),
        window_end_s=end,
        workload_seed=cfg.get("traffic", "workload_seed"),
    )
    return generate_traffic(spec, scenario.node_count)


def router_params(cfg: ExperimentConfig) -> dict:
    return {
        "dlife_damping": cfg.get("router", "dlife_damping"),
        "dlife_blend": cfg.get("router", "dlife_blend"),
        "prophet_pinit": cfg.get("router", "prophet_pinit"),
        "prophet_beta": cfg.get("router", "prophet_beta"),
        "prophet_gamma": cfg.get("router", "prophet_gamma"),
        "prophet_time_unit_s": cfg.get("router", "prophet_time_unit_s"),
    }


def log_meta_lines(router: str, ttl_s: int, seed: int, scenario: Scenario,
                   cost_mode: str) -> list[str]:
    return [
        LOG_HEADER,
        (f"#meta router={router} ttl_s={ttl_s} seed={seed} cost_mode={cost_mode} "
         f"nodes={scenario.node_count} epoch_shift_s={scenario.epoch_shift_s:g} "
         f"buffer_policy=refuse-incoming meta_exchange=zero-cost "
         f"queue_policy=once-per-contact"),
    ]


def log_name(router: str, ttl_s: int, seed: int) -> str:
    return f"{router}_ttl{ttl_s}_seed{seed}.log"


class LogWriter:
    """Buffers formatted records and writes the file atomically on close."""

    def __init__(self, path: str, header_lines: list[str]):
        self.path = path
        self._tmp = path + ".tmp"
        self._f = open(self._tmp, "w", encoding="utf-8")
        for line in header_lines:
            self._f.write(line + "\n")

    def __call__(self, t: float, event: str, bundle_id: str, frm: str, to: str) -> None:
        self._f.write(f"{t:.6f}\t{event}\t{bundle_id}\t{frm}\t{to}\n")

    def close(self) -> None:
        self._f.close()
        os.replace(self._tmp, self.path)

    def abort(self) -> None:
        self._f.close()
        os.unlink(self._tmp)


def run_matrix(cfg: ExperimentConfig, out_dir: str,
               seed_offset: int = 0, progress=None
               ) -> tuple[list[AggregateMetrics], dict]:
    """Run router x ttl x seed, writing logs and reports under out_dir."""
    scenario = resolve_scenario(cfg)
    messages = traffic_for(cfg, scenario)
    routers = cfg.get("router", "types")
    ttls = cfg.get("traffic", "ttls")
    seeds = [s + seed_offset for s in cfg.get("run", "seeds")]
    cost_mode = cfg.get("run", "cost_mode")
    params = router_params(cfg)
    clock = SimClock(samples_per_day=cfg.get("router", "dlife_samples"))

    logs_dir = os.path.join(out_dir, "logs")
    os.makedirs(logs_dir, exist_ok=True)

    per_run: dict[tuple[str, int], list[RunMetrics]] = {}
    run_rows: list[tuple] = []
    for seed in seeds:
        contacts = scenario.contacts_for_seed(seed)
        for router in routers:
            for ttl in ttls:
                setup = RunSetup(
                    node_count=scenario.node_count, contacts=contacts,
                    duration_s=scenario.duration_s, router_kind=router,
                    messages=messages, ttl_s=ttl,
                    capacity_bytes=cfg.get("node", "capacity_bytes"),
                    bandwidth_Bps=cfg.get("link", "bandwidth_bps"),
                    setup_s=cfg.get("link", "setup_s"),
                    router_params=params, clock=clock)
                path = os.path.join(logs_dir, log_name(router, ttl, seed))
                writer = LogWriter(path, log_meta_lines(router, ttl, seed,
                                                        scenario, cost_mode))
                acc = MetricsAccumulator()

                def sink(t, ev, bid, frm, to, _w=writer, _a=acc):
                    _w(t, ev, bid, frm, to)
                    _a.feed(t, ev, bid, frm, to)

                try:
                    run(setup, sink)
                except BaseException:
                    writer.abort()
                    raise
                writer.close()
                per_run.setdefault((router, ttl), []).append(acc.metrics)
                run_rows.append((router, ttl, seed, acc.metrics))
                if progress is not None:
                    progress(router, ttl, seed, acc.metrics)

    aggregates = [aggregate(router, ttl, runs, cost_mode)
                  for (router, ttl), runs in sorted(per_run.items())]
    meta = {
        "nodes": scenario.node_count,
        "duration_s": scenario.duration_s,
        "epoch_shift_s": scenario.epoch_shift_s,
        "trace": scenario.trace_path or "synthetic",
        "cost_mode": cost_mode,
        "seeds": seeds,
        "buffer_policy": "refuse-incoming",
        "meta_exchange": "zero-cost",
        "queue_policy": "once-per-contact",
    }
    write_reports(aggregates, run_rows, meta, out_dir, cost_mode)
    return aggregates, meta


RUNS_CSV_COLUMNS = ("router,ttl_s,seed,created,delivered,delivery_ratio,"
                    "replicas,cost,avg_latency_s,refused,expired,aborted")


def _runs_csv(run_rows: list[tuple], cost_mode: str) -> str:
    lines = [RUNS_CSV_COLUMNS]
    for router, ttl, seed, m in sorted(run_rows, key=lambda r: (r[0], r[1], r[2])):
        cost = m.cost(cost_mode)
        latency = m.avg_latency_s
        lines.append(",".join([
            router, str(ttl), str(seed), str(m.created), str(m.delivered),
            f"{m.delivery_ratio:.6g}",
            str(m.replicas),
            f"{cost:.6g}" if cost is not None else "NA",
            f"{latency:.6g}" if latency is not None else "NA",
            str(m.refused), str(m.expired), str(m.aborted),
        ]))
    return "\n".join(lines) + "\n"


def write_reports(aggregates: list[AggregateMetrics], run_rows: list[tuple],
                  meta: dict, out_dir: str, cost_mode: str,
                  figures: bool = True) -> None:
    os.makedirs(out_dir, exist_ok=True)
    atomic_write_text(os.path.join(out_dir, "report.csv"), emit_csv(aggregates))
    for name, text in emit_plot_data(aggregates).items():
        atomic_write_text(os.path.join(out_dir, f"metric_{name}.dat"), text)
    if run_rows:
        atomic_write_text(os.path.join(out_dir, "runs.csv"),
                          _runs_csv(run_rows, cost_mode))
    atomic_write_text(os.path.join(out_dir, "scenario_meta.json"),
                      json.dumps(meta, sort_keys=True, indent=2) + "\n")
    if figures and aggregates:
        from .figures import render_figures
        render_figures(aggregates, out_dir)
