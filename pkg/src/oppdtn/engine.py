"""Deterministic discrete-event simulator over a contact trace.

Replays contact intervals, runs the encounter protocol with a
bandwidth-limited serial transfer model per direction, injects traffic,
drives the daily-sample rolls, and emits one record per outcome. Identical
inputs always produce the identical record sequence.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable

from .routing import DLIFE, plan_transfers, make_agent
from .store import BundleStore, StoreEntry
from .types import Bundle, BundleId, ContactEvent, EndpointId, SimClock, node_eid
from .workload import Message

# Tie order for simultaneous events; then stable sequence number.
EV_ROLL, EV_DOWN, EV_UP, EV_CREATE, EV_XFER = range(5)

CREATE, RELAY, DELIVER, REFUSE, EXPIRE, ABORT = (
    "CREATE", "RELAY", "DELIVER", "REFUSE", "EXPIRE", "ABORT")

# emit(time_s, event, bundle_id_text, from_uri, to_uri)
RecordSink = Callable[[float, str, str, str, str], None]

NO_NODE = "-"


@dataclass
class RunSetup:
    node_count: int
    contacts: list[ContactEvent]
    duration_s: float
    router_kind: str
    messages: list[Message]
    ttl_s: int
    capacity_bytes: int = 0
    bandwidth_Bps: float = 250000.0
    setup_s: float = 0.1
    router_params: dict = field(default_factory=dict)
    clock: SimClock = field(default_factory=SimClock)

    def validate(self) -> None:
        if self.node_count < 1:
            raise ValueError("need at least one node")
        for c in self.contacts:
            if not (0 <= c.a < self.node_count and 0 <= c.b < self.node_count):
                raise ValueError(f"contact references node out of range: {c}")
        for m in self.messages:
            if not (0 <= m.source < self.node_count and 0 <= m.dest < self.node_count):
                raise ValueError(f"message references node out of range: {m}")
        if self.bandwidth_Bps <= 0:
            raise ValueError("bandwidth must be positive")
        if self.setup_s < 0:
            raise ValueError("setup latency must be >= 0")
        if self.duration_s <= 0:
            raise ValueError("duration must be positive")


class _Encounter:
    __slots__ = ("a", "b", "open", "queues", "pos", "inflight")

    def __init__(self, a: int, b: int, queues):
        self.a = a
        self.b = b
        self.open = True
        self.queues = queues   # [a->b ids, b->a ids]
        self.pos = [0, 0]
        self.inflight: list[Bundle | None] = [None, None]


def run(setup: RunSetup, emit: RecordSink) -> None:
    """Replay the scenario, emitting a record for every outcome event."""
    setup.validate()
    n = setup.node_count
    eids = [node_eid(i) for i in range(n)]
    uris = [e.uri for e in eids]
    clock = setup.clock

    heap: list = []
    seq = 0

    def push(t: float, rank: int, data) -> None:
        nonlocal seq
        heapq.heappush(heap, (t, rank, seq, data))
        seq += 1

    def make_on_expire(node_idx: int):
        uri = uris[node_idx]

        def on_expire(ids: list[BundleId], now_s: float) -> None:
            for bid in ids:
                emit(now_s, EXPIRE, bid.text, NO_NODE, uri)
        return on_expire

    stores = [BundleStore(setup.capacity_bytes, on_expire=make_on_expire(i))
              for i in range(n)]
    agents = [make_agent(setup.router_kind, eids[i], clock, setup.router_params)
              for i in range(n)]
    dest_of: dict[BundleId, int] = {}

    # Static events. Contacts are clipped to the run window; a pair has at
    # most one live interval at a time after normalization, so DOWN events
    # can address encounters by pair.
    for c in setup.contacts:
        if c.start_s >= setup.duration_s:
            continue
        end = min(c.end_s, setup.duration_s)
        if end <= c.start_s:
            continue
        pair = (c.a, c.b)
        push(c.start_s, EV_UP, pair)
        push(end, EV_DOWN, pair)

    if setup.router_kind == DLIFE:
        sl = clock.sample_length_s
        boundaries = int(math.floor(setup.duration_s / sl))
        for k in range(1, boundaries + 1):
            push(k * sl, EV_ROLL, k * sl)

    for i, m in enumerate(setup.messages):
        if m.creation_s >= setup.duration_s:
            continue
        bundle = Bundle(BundleId(eids[m.source], int(round(m.creation_s * 1000)), i),
                        eids[m.dest], ttl_s=setup.ttl_s, size_bytes=m.size_bytes)
        dest_of[bundle.id] = m.dest
        push(m.creation_s, EV_CREATE, (m.source, bundle))

    encounters: dict[tuple[int, int], _Encounter] = {}
    bandwidth = setup.bandwidth_Bps
    setup_lat = setup.setup_s

    def schedule_next(enc: _Encounter, d: int, t: float) -> None:
        sender = enc.a if d == 0 else enc.b
        queue = enc.queues[d]
        pos = enc.pos[d]
        store = stores[sender]
        while pos < len(queue):
            bid = queue[pos]
            pos += 1
            entry = store.get(bid)
            if entry is None or entry.bundle.expired(t):
                continue
            bundle = entry.bundle
            enc.pos[d] = pos
            enc.inflight[d] = bundle
            push(t + setup_lat + bundle.size_bytes / bandwidth, EV_XFER, (enc, d, bundle))
            return
        enc.pos[d] = pos
        enc.inflight[d] = None

    def handle_up(pair: tuple[int, int], t: float) -> None:
        a, b = pair
        stores[a].purge_expired(t)
        stores[b].purge_expired(t)
        agents[a].begin_encounter(eids[b], t)
        agents[b].begin_encounter(eids[a], t)
        meta_a = agents[a].meta(t)
        meta_b = agents[b].meta(t)
        agents[a].absorb_meta(eids[b], meta_b, t)
        agents[b].absorb_meta(eids[a], meta_a, t)
        known_a = stores[a].known_ids()
        known_b = stores[b].known_ids()
        queue_ab = plan_transfers(stores[a].offers(), meta_a, meta_b, eids[b], known_b)
        queue_ba = plan_transfers(stores[b].offers(), meta_b, meta_a, eids[a], known_a)
        enc = _Encounter(a, b, [queue_ab, queue_ba])
        encounters[pair] = enc
        schedule_next(enc, 0, t)
        schedule_next(enc, 1, t)

    def handle_down(pair: tuple[int, int], t: float) -> None:
        enc = encounters.pop(pair)
        for d in (0, 1):
            bundle = enc.inflight[d]
            if bundle is not None:
                sender = enc.a if d == 0 else enc.b
                receiver = enc.b if d == 0 else enc.a
                emit(t, ABORT, bundle.id_text, uris[sender], uris[receiver])
                enc.inflight[d] = None
        enc.open = False
        agents[enc.a].end_encounter(eids[enc.b], t)
        agents[enc.b].end_encounter(eids[enc.a], t)

    def handle_xfer(enc: _Encounter, d: int, bundle: Bundle, t: float) -> None:
        if not enc.open or enc.inflight[d] is not bundle:
            return
        enc.inflight[d] = None
        sender = enc.a if d == 0 else enc.b
        receiver = enc.b if d == 0 else enc.a
        bid_text = bundle.id_text
        if bundle.expired(t):
            emit(t, ABORT, bid_text, uris[sender], uris[receiver])
        elif dest_of.get(bundle.id) == receiver:
            st = stores[receiver]
            if bundle.id in st.delivered_ids:
                st.refused_total += 1
                emit(t, REFUSE, bid_text, uris[sender], uris[receiver])
            else:
                st.mark_delivered(bundle.id)
                emit(t, DELIVER, bid_text, uris[sender], uris[receiver])
        else:
            outcome = stores[receiver].insert(
                StoreEntry(bundle, t, eids[sender]), t)
            if outcome.accepted:
                emit(t, RELAY, bid_text, uris[sender], uris[receiver])
            else:
                emit(t, REFUSE, bid_text, uris[sender], uris[receiver])
        schedule_next(enc, d, t)

    def handle_create(source: int, bundle: Bundle, t: float) -> None:
        emit(t, CREATE, bundle.id_text, NO_NODE, uris[source])
        outcome = stores[source].insert(StoreEntry(bundle, t, None), t)
        if not outcome.accepted:
            emit(t, REFUSE, bundle.id_text, NO_NODE, uris[source])

    while heap:
        t, rank, _, data = heapq.heappop(heap)
        if rank == EV_XFER:
            enc, d, bundle = data
            handle_xfer(enc, d, bundle, t)
        elif rank == EV_UP:
            handle_up(data, t)
        elif rank == EV_DOWN:
            handle_down(data, t)
        elif rank == EV_CREATE:
            source, bundle = data
            handle_create(source, bundle, t)
        else:  # EV_ROLL
            for agent in agents:
                agent.roll_sample(data)

    for store in stores:
        store.purge_expired(setup.duration_s)
