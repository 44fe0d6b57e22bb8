"""Shared domain vocabulary: endpoints, bundles, contacts, simulation clock."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple


class MalformedEndpointError(ValueError):
    """Raised when text does not match the dtn://<name> grammar."""


@dataclass(frozen=True)
class EndpointId:
    """A DTN endpoint identifier of the form dtn://<name>.

    Comparison and hashing are exact byte equality on the full URI.
    """

    uri: str

    @property
    def name(self) -> str:
        return self.uri[len("dtn://"):]

    def __str__(self) -> str:
        return self.uri

    def __lt__(self, other: "EndpointId") -> bool:
        return self.uri < other.uri


def parse_endpoint(text: str) -> EndpointId:
    """Parse `dtn://<name>` where name is nonempty ASCII with no whitespace."""
    if not text.startswith("dtn://"):
        raise MalformedEndpointError(f"endpoint must use dtn:// scheme: {text!r}")
    name = text[len("dtn://"):]
    if not name:
        raise MalformedEndpointError("endpoint name is empty")
    for ch in name:
        if ord(ch) > 127:
            raise MalformedEndpointError(f"endpoint name is not ASCII: {text!r}")
        if ch.isspace():
            raise MalformedEndpointError(f"endpoint name contains whitespace: {text!r}")
    return EndpointId(text)


def node_eid(index: int) -> EndpointId:
    """Endpoint for a dense node index: dtn://n<index zero-padded to 2>."""
    return EndpointId(f"dtn://n{index:02d}")


class BundleId(NamedTuple):
    """Identity triple; a source never reuses (creation_ms, seq)."""

    source: EndpointId
    creation_ms: int
    seq: int

    @property
    def text(self) -> str:
        return f"{self.source.uri}:{self.creation_ms}:{self.seq}"

    @property
    def sort_key(self) -> tuple[int, str, int]:
        return (self.creation_ms, self.source.uri, self.seq)


def parse_bundle_id(text: str) -> BundleId:
    """Inverse of BundleId.text."""
    uri, _, rest = text.rpartition(":")
    uri, _, ms = uri.rpartition(":")
    return BundleId(parse_endpoint(uri), int(ms), int(rest))


class Bundle:
    """An application message; payload is carried only in live mode."""

    __slots__ = ("id", "dest", "ttl_s", "size_bytes", "payload", "expiry_s", "id_text")

    def __init__(self, id: BundleId, dest: EndpointId, ttl_s: int,
                 size_bytes: int, payload: bytes | None = None):
        if ttl_s <= 0:
            raise ValueError("ttl_s must be > 0")
        if size_bytes <= 0:
            raise ValueError("size_bytes must be > 0")
        if payload is not None and len(payload) != size_bytes:
            raise ValueError("size_bytes does not match payload length")
        self.id = id
        self.dest = dest
        self.ttl_s = ttl_s
        self.size_bytes = size_bytes
        self.payload = payload
        self.expiry_s = id.creation_ms / 1000.0 + ttl_s
        self.id_text = id.text

    def expired(self, now_s: float) -> bool:
        """A bundle is invalid for forwarding/delivery at any time >= expiry."""
        return now_s >= self.expiry_s

    def __repr__(self) -> str:
        return f"Bundle({self.id.text} -> {self.dest.uri}, {self.size_bytes} B, ttl {self.ttl_s} s)"


class ContactEvent(NamedTuple):
    """A timed pairwise connectivity interval [start_s, end_s) between node indices."""

    a: int
    b: int
    start_s: float
    end_s: float


def normalize_contacts(contacts: Iterable[ContactEvent]) -> list[ContactEvent]:
    """Canonical contact list: pairs ordered a < b, per-pair overlapping or
    touching intervals merged, result sorted by (start, a, b, end).

    Idempotent and independent of input order.
    """
    by_pair: dict[tuple[int, int], list[tuple[float, float]]] = {}
    for c in contacts:
        if c.a == c.b:
            raise ValueError(f"contact with itself: node {c.a}")
        if c.end_s <= c.start_s:
            raise ValueError(f"contact end {c.end_s} <= start {c.start_s}")
        if c.start_s < 0:
            raise ValueError(f"negative contact start {c.start_s}")
        pair = (c.a, c.b) if c.a < c.b else (c.b, c.a)
        by_pair.setdefault(pair, []).append((c.start_s, c.end_s))
    merged: list[ContactEvent] = []
    for (a, b), ivals in by_pair.items():
        ivals.sort()
        cur_s, cur_e = ivals[0]
        for s, e in ivals[1:]:
            if s <= cur_e:
                cur_e = max(cur_e, e)
            else:
                merged.append(ContactEvent(a, b, cur_s, cur_e))
                cur_s, cur_e = s, e
        merged.append(ContactEvent(a, b, cur_s, cur_e))
    merged.sort(key=lambda c: (c.start_s, c.a, c.b, c.end_s))
    return merged


def align_epoch(contacts: list[ContactEvent]) -> tuple[list[ContactEvent], float]:
    """Shift times so the first event lands at time 0 (midnight of day 1).

    Daily samples then align with trace-local days. Returns the shifted list
    and the shift amount, which callers record for reproducibility.
    """
    if not contacts:
        return [], 0.0
    shift = min(c.start_s for c in contacts)
    if shift == 0.0:
        return list(contacts), 0.0
    return [ContactEvent(c.a, c.b, c.start_s - shift, c.end_s - shift)
            for c in contacts], shift


@dataclass(frozen=True)
class SimClock:
    """Decomposes scenario time into days and fixed per-day samples."""

    day_length_s: int = 86400
    samples_per_day: int = 24

    @property
    def sample_length_s(self) -> float:
        return self.day_length_s / self.samples_per_day

    def locate(self, t_s: float) -> tuple[int, int, float]:
        """Return (day k >= 1, sample index 0 <= i < T, seconds remaining in sample)."""
        if t_s < 0:
            raise ValueError("time must be >= 0")
        day = int(t_s // self.day_length_s) + 1
        into_day = t_s - (day - 1) * self.day_length_s
        sample = int(into_day // self.sample_length_s)
        if sample >= self.samples_per_day:  # float edge at the day boundary
            sample = self.samples_per_day - 1
        remaining = (sample + 1) * self.sample_length_s - into_day
        return day, sample, remaining

    def sample_of(self, t_s: float) -> int:
        return self.locate(t_s)[1]


def clock_locate(clock: SimClock, t_s: float) -> tuple[int, int, float]:
    return clock.locate(t_s)


def split_at_sample_boundaries(clock: SimClock, start_s: float,
                               end_s: float) -> list[tuple[int, float]]:
    """Split [start_s, end_s) at every sample boundary it crosses.

    Returns (sample index, piece duration) pairs; durations sum exactly to
    end_s - start_s. A piece starting exactly on a boundary belongs to the
    new sample.
    """
    if end_s < start_s:
        raise ValueError("interval end before start")
    pieces: list[tuple[int, float]] = []
    sl = clock.sample_length_s
    t = start_s
    while t < end_s:
        boundary = (math.floor(t / sl) + 1) * sl
        cut = min(boundary, end_s)
        if cut <= t:  # float safety: always make progress
            cut = end_s
        pieces.append((clock.sample_of(t), cut - t))
        t = cut
    if pieces:
        # Make the pieces sum exactly to end - start despite rounding.
        total = end_s - start_s
        last_i, _ = pieces[-1]
        rest = sum(d for _, d in pieces[:-1])
        pieces[-1] = (last_i, max(0.0, total - rest))
    return pieces
