"""Render the aggregate metrics as figures next to the CSV/plot data."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import AggregateMetrics, Estimate

_LABELS = {
    "delivery_ratio": "delivery probability",
    "cost": "cost (replicas per delivered message)",
    "replicas": "replicas",
    "avg_latency": "average delivery latency (s)",
}

_DAY = 86400.0


def _series(aggregates: list[AggregateMetrics], metric: str
            ) -> dict[str, list[tuple[int, Estimate]]]:
    out: dict[str, list[tuple[int, Estimate]]] = {}
    for a in sorted(aggregates, key=lambda a: (a.router, a.ttl_s)):
        est = {
            "delivery_ratio": a.delivery_ratio,
            "cost": a.cost,
            "replicas": a.replicas,
            "avg_latency": a.avg_latency_s,
        }[metric]
        if est is not None:
            out.setdefault(a.router, []).append((a.ttl_s, est))
    return out


def render_metric_figure(aggregates: list[AggregateMetrics], metric: str,
                         path: str) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for router, points in sorted(_series(aggregates, metric).items()):
        xs = [ttl / _DAY for ttl, _ in points]
        ys = [est.mean for _, est in points]
        errs = [est.ci_half_width or 0.0 for _, est in points]
        ax.errorbar(xs, ys, yerr=errs, marker="o", capsize=3, label=router)
    ax.set_xscale("log")
    ticks = sorted({a.ttl_s / _DAY for a in aggregates})
    ax.set_xticks(ticks)
    ax.set_xticklabels([f"{t:g}" for t in ticks])
    ax.set_xlabel("TTL (days)")
    ax.set_ylabel(_LABELS.get(metric, metric))
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_figures(aggregates: list[AggregateMetrics], out_dir: str) -> list[str]:
    """One PNG per metric; returns the written paths."""
    written = []
    for metric in ("delivery_ratio", "cost", "replicas", "avg_latency"):
        path = os.path.join(out_dir, f"fig_{metric}.png")
        render_metric_figure(aggregates, metric, path)
        written.append(path)
    return written
