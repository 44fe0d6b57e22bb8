"""Reduce raw run logs into delivery/cost metrics and aggregate over seeds.

Delivery ratio is delivered/created; cost is replicas per delivered message,
where every successful inter-node transfer counts as one replica, including
the delivering hop (``cost_mode = overhead`` excludes it). Aggregates carry
95% Student-t confidence intervals over the run seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

LOG_HEADER = "#oppdtn-log v1"

# Two-sided 95% t quantiles by degrees of freedom; 1.96 beyond the table.
_T_975 = {
    1: 12.706, 2: 4.303, 3: 3.182, 4: 2.776, 5: 2.571, 6: 2.447, 7: 2.365,
    8: 2.306, 9: 2.262, 10: 2.228, 11: 2.201, 12: 2.179, 13: 2.160,
    14: 2.145, 15: 2.131, 16: 2.120, 17: 2.110, 18: 2.101, 19: 2.093,
    20: 2.086, 21: 2.080, 22: 2.074, 23: 2.069, 24: 2.064, 25: 2.060,
    26: 2.056, 27: 2.052, 28: 2.048, 29: 2.045,
}


def t_quantile_975(dof: int) -> float:
    if dof < 1:
        raise ValueError("degrees of freedom must be >= 1")
    return _T_975.get(dof, 1.96)


@dataclass
class RunMetrics:
    created: int = 0
    delivered: int = 0
    replicas: int = 0
    refused: int = 0
    expired: int = 0
    aborted: int = 0
    latency_sum_s: float = 0.0

    @property
    def delivery_ratio(self) -> float:
        return self.delivered / self.created if self.created else 0.0

    def cost(self, mode: str = "replicas") -> float | None:
        """Replicas per delivered message; None when nothing was delivered."""
        if self.delivered == 0:
            return None
        if mode == "overhead":
            return (self.replicas - self.delivered) / self.delivered
        return self.replicas / self.delivered

    @property
    def avg_latency_s(self) -> float | None:
        return self.latency_sum_s / self.delivered if self.delivered else None


class MalformedLogError(ValueError):
    pass


class MetricsAccumulator:
    """Streaming reducer over log records; also usable as an engine sink."""

    def __init__(self):
        self.metrics = RunMetrics()
        self._create_time: dict[str, float] = {}

    def feed(self, t: float, event: str, bundle_id: str, frm: str, to: str) -> None:
        m = self.metrics
        if event == "RELAY":
            m.replicas += 1
        elif event == "DELIVER":
            m.delivered += 1
            m.replicas += 1
            created_at = self._create_time.get(bundle_id)
            if created_at is None:
                raise MalformedLogError(f"DELIVER before CREATE for {bundle_id}")
            m.latency_sum_s += t - created_at
        elif event == "CREATE":
            m.created += 1
            self._create_time[bundle_id] = t
        elif event == "REFUSE":
            m.refused += 1
        elif event == "EXPIRE":
            m.expired += 1
        elif event == "ABORT":
            m.aborted += 1
        else:
            raise MalformedLogError(f"unknown event {event!r}")

    __call__ = feed


def reduce_log_lines(lines) -> tuple[RunMetrics, dict[str, str]]:
    """Reduce an iterable of log lines; returns (metrics, #meta key/values)."""
    acc = MetricsAccumulator()
    meta: dict[str, str] = {}
    saw_header = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line:
            continue
        if line.startswith("#"):
            if line == LOG_HEADER:
                saw_header = True
            elif line.startswith("#meta "):
                for part in line[len("#meta "):].split():
                    key, _, value = part.partition("=")
                    meta[key] = value
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise MalformedLogError(f"line {lineno}: expected 5 tab-separated fields")
        try:
            t = float(fields[0])
        except ValueError:
            raise MalformedLogError(f"line {lineno}: bad timestamp {fields[0]!r}") from None
        acc.feed(t, fields[1], fields[2], fields[3], fields[4])
    if not saw_header:
        raise MalformedLogError(f"missing {LOG_HEADER} header")
    return acc.metrics, meta


def reduce_log_file(path: str) -> tuple[RunMetrics, dict[str, str]]:
    with open(path, "r", encoding="utf-8") as f:
        return reduce_log_lines(f)


@dataclass
class Estimate:
    mean: float
    ci_half_width: float | None  # None when fewer than 2 values
    n: int


def estimate(values: list[float]) -> Estimate | None:
    """Mean with 95% t confidence half-width (n-1 dof); None for no data."""
    n = len(values)
    if n == 0:
        return None
    mean = sum(values) / n
    if n < 2:
        return Estimate(mean, None, n)
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    half = t_quantile_975(n - 1) * math.sqrt(var / n)
    return Estimate(mean, half, n)


@dataclass
class AggregateMetrics:
    """Per-(router, ttl) summary over run seeds."""

    router: str
    ttl_s: int
    seeds: int
    created: Estimate | None
    delivered: Estimate | None
    delivery_ratio: Estimate | None
    replicas: Estimate | None
    cost: Estimate | None
    avg_latency_s: Estimate | None
    refused: Estimate | None
    expired: Estimate | None
    aborted: Estimate | None


def aggregate(router: str, ttl_s: int, runs: list[RunMetrics],
              cost_mode: str = "replicas") -> AggregateMetrics:
    if not runs:
        raise ValueError("aggregate needs at least one run")
    costs = [c for c in (r.cost(cost_mode) for r in runs) if c is not None]
    latencies = [v for v in (r.avg_latency_s for r in runs) if v is not None]
    return AggregateMetrics(
        router=router, ttl_s=ttl_s, seeds=len(runs),
        created=estimate([float(r.created) for r in runs]),
        delivered=estimate([float(r.delivered) for r in runs]),
        delivery_ratio=estimate([r.delivery_ratio for r in runs]),
        replicas=estimate([float(r.replicas) for r in runs]),
        cost=estimate(costs),
        avg_latency_s=estimate(latencies),
        refused=estimate([float(r.refused) for r in runs]),
        expired=estimate([float(r.expired) for r in runs]),
        aborted=estimate([float(r.aborted) for r in runs]),
    )


CSV_COLUMNS = ("router,ttl_s,seeds,created,delivered_mean,delivery_ratio_mean,"
               "delivery_ratio_ci,replicas_mean,cost_mean,cost_ci,"
               "avg_latency_mean,refused_mean,expired_mean")

NA = "NA"


def _fmt(value: float | None) -> str:
    if value is None:
        return NA
    return f"{value:.6g}"


def _mean(est: Estimate | None) -> str:
    return _fmt(est.mean if est else None)


def _ci(est: Estimate | None) -> str:
    return _fmt(est.ci_half_width if est and est.ci_half_width is not None else None)


def emit_csv(aggregates: list[AggregateMetrics]) -> str:
    """Aggregate CSV, rows sorted by (router, ttl_s); NA for undefined."""
    lines = [CSV_COLUMNS]
    for a in sorted(aggregates, key=lambda a: (a.router, a.ttl_s)):
        lines.append(",".join([
            a.router, str(a.ttl_s), str(a.seeds),
            _mean(a.created), _mean(a.delivered),
            _mean(a.delivery_ratio), _ci(a.delivery_ratio),
            _mean(a.replicas), _mean(a.cost), _ci(a.cost),
            _mean(a.avg_latency_s), _mean(a.refused), _mean(a.expired),
        ]))
    return "\n".join(lines) + "\n"


PLOT_METRICS = ("delivery_ratio", "cost", "replicas", "avg_latency")


def _plot_value(a: AggregateMetrics, metric: str, ci: bool) -> str:
    est = {
        "delivery_ratio": a.delivery_ratio,
        "cost": a.cost,
        "replicas": a.replicas,
        "avg_latency": a.avg_latency_s,
    }[metric]
    if ci:
        return _ci(est)
    return _mean(est)


def emit_plot_data(aggregates: list[AggregateMetrics]) -> dict[str, str]:
    """One whitespace-separated matrix per metric: ttl on rows, routers as columns.

    Returns {metric name: file text}; every metric also gets a `<name>_ci`
    companion holding the confidence half-widths.
    """
    routers = sorted({a.router for a in aggregates})
    ttls = sorted({a.ttl_s for a in aggregates})
    by_key = {(a.router, a.ttl_s): a for a in aggregates}
    out: dict[str, str] = {}
    for metric in PLOT_METRICS:
        for ci in (False, True):
            name = f"{metric}_ci" if ci else metric
            lines = [f"# metric={name}", "ttl_s " + " ".join(routers)]
            for ttl in ttls:
                row = [str(ttl)]
                for router in routers:
                    a = by_key.get((router, ttl))
                    row.append(_plot_value(a, metric, ci) if a else NA)
                lines.append(" ".join(row))
            out[name] = "\n".join(lines) + "\n"
    return out
