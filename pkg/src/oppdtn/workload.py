"""Workload inputs for the simulator: message traffic and synthetic contacts."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import NamedTuple

from .types import ContactEvent, normalize_contacts

# Hour-of-day activity multipliers, normalized to mean 1.0 so lambda values
# read directly as average hourly rates.
_DIURNAL_RAW = [0.1] * 7 + [0.8, 0.8] + [2.0] * 9 + [1.2] * 3 + [0.3] * 3
ACTIVITY_PROFILES = {
    "flat": [1.0] * 24,
    "diurnal": [v * 24 / sum(_DIURNAL_RAW) for v in _DIURNAL_RAW],
}


def resolve_activity_profile(spec: str) -> list[float]:
    if spec in ACTIVITY_PROFILES:
        return list(ACTIVITY_PROFILES[spec])
    parts = [p for p in spec.split(",") if p.strip() != ""]
    if len(parts) != 24:
        raise ValueError(f"activity profile needs 24 values or a named profile, got {spec!r}")
    values = [float(p) for p in parts]
    if any(v < 0 for v in values):
        raise ValueError("activity multipliers must be >= 0")
    return values


class Message(NamedTuple):
    creation_s: float
    source: int
    dest: int
    size_bytes: int


@dataclass(frozen=True)
class TrafficSpec:
    message_count: int
    size_min_bytes: int
    size_max_bytes: int
    window_start_s: float
    window_end_s: float
    workload_seed: int


def generate_traffic(spec: TrafficSpec, node_count: int) -> list[Message]:
    """Deterministic workload: a pure function of (spec, node_count).

    Creation times are uniformly spaced across the window; sizes and
    source/destination pairs come from the workload seed only, so every
    router and every run seed sees the identical message set.
    """
    if node_count < 2:
        raise ValueError("traffic needs at least 2 nodes")
    if spec.window_end_s < spec.window_start_s:
        raise ValueError("traffic window ends before it starts")
    rng = random.Random(spec.workload_seed)
    span = spec.window_end_s - spec.window_start_s
    messages = []
    for i in range(spec.message_count):
        t = spec.window_start_s + i * span / spec.message_count
        src = rng.randrange(node_count)
        dst = rng.randrange(node_count - 1)
        if dst >= src:
            dst += 1
        size = rng.randint(spec.size_min_bytes, spec.size_max_bytes)
        messages.append(Message(t, src, dst, size))
    return messages


@dataclass(frozen=True)
class SyntheticParams:
    nodes: int
    communities: int
    duration_s: float
    lambda_in: float   # contacts per intra-community pair per hour
    lambda_out: float  # contacts per inter-community pair per hour
    mean_contact_s: float
    activity: tuple[float, ...] = tuple(ACTIVITY_PROFILES["diurnal"])

    def community_of(self, node: int) -> int:
        return node * self.communities // self.nodes


def _poisson(rng: random.Random, lam: float) -> int:
    """Knuth sampler; fine for the small per-hour rates used here."""
    if lam <= 0:
        return 0
    threshold = math.exp(-lam)
    k = 0
    p = 1.0
    while True:
        p *= rng.random()
        if p <= threshold:
            return k
        k += 1


def generate_synthetic_contacts(params: SyntheticParams, seed: int) -> list[ContactEvent]:
    """Community-structured routine mobility as merged contact intervals.

    Per pair and hour, contacts arrive as a Poisson process whose rate is
    the pair's base rate scaled by the hour-of-day multiplier; durations are
    exponential with the configured mean, truncated at four times the mean.
    """
    if params.nodes < 2:
        raise ValueError("need at least 2 nodes")
    if params.lambda_in < 0 or params.lambda_out < 0:
        raise ValueError("contact rates must be >= 0")
    if params.communities < 1 or params.communities > params.nodes:
        raise ValueError("communities must be in [1, nodes]")
    rng = random.Random(seed)
    hours = int(math.ceil(params.duration_s / 3600.0))
    contacts: list[ContactEvent] = []
    for a in range(params.nodes):
        com_a = params.community_of(a)
        for b in range(a + 1, params.nodes):
            same = params.community_of(b) == com_a
            base = params.lambda_in if same else params.lambda_out
            if base <= 0:
                continue
            for h in range(hours):
                lam = base * params.activity[h % 24]
                n = _poisson(rng, lam)
                for _ in range(n):
                    start = (h + rng.random()) * 3600.0
                    dur = min(rng.expovariate(1.0 / params.mean_contact_s),
                              4.0 * params.mean_contact_s)
                    end = min(start + dur, params.duration_s)
                    if end > start and start < params.duration_s:
                        contacts.append(ContactEvent(a, b, start, end))
    return normalize_contacts(contacts)
