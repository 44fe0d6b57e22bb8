"""Per-node bundle buffer: store-carry-and-forward with TTL and capacity limits.

Capacity policy is purge-expired-then-refuse-incoming; refusing never evicts
stored bundles, which keeps cost accounting deterministic. Only destinations
remember delivered ids; relays may re-accept a bundle they once expired.
"""

from __future__ import annotations

import bisect
import enum
import heapq
from dataclasses import dataclass
from typing import Callable

from .types import Bundle, BundleId, EndpointId


class InsertOutcome(enum.Enum):
    ACCEPTED = "accepted"
    DUPLICATE = "duplicate"
    CAPACITY = "capacity"

    @property
    def accepted(self) -> bool:
        return self is InsertOutcome.ACCEPTED


@dataclass
class StoreEntry:
    bundle: Bundle
    received_s: float
    from_eid: EndpointId | None  # None = locally created


class BundleStore:
    """Single-writer bundle buffer for one node.

    Entries stay ordered by (creation_ms, source, seq) so encounter planning
    can iterate them without re-sorting; an expiry heap makes the
    purge-before-capacity-check cheap when nothing has expired.
    """

    def __init__(self, capacity_bytes: int = 0,
                 on_expire: Callable[[list[BundleId], float], None] | None = None):
        if capacity_bytes < 0:
            raise ValueError("capacity_bytes must be >= 0 (0 = unlimited)")
        self.capacity_bytes = capacity_bytes
        self.on_expire = on_expire
        self._entries: dict[BundleId, StoreEntry] = {}
        self._order: list[tuple[tuple[int, str, int], BundleId]] = []
        self._expiry_heap: list[tuple[float, tuple[int, str, int], BundleId]] = []
        self.stored_bytes = 0
        self.expired_total = 0
        self.refused_total = 0
        self.delivered_ids: set[BundleId] = set()

    @property
    def stored_count(self) -> int:
        return len(self._entries)

    def __contains__(self, bundle_id: BundleId) -> bool:
        return bundle_id in self._entries

    def get(self, bundle_id: BundleId) -> StoreEntry | None:
        return self._entries.get(bundle_id)

    def insert(self, entry: StoreEntry, now_s: float) -> InsertOutcome:
        """Purge expired entries, then accept unless duplicate or over capacity."""
        if entry.bundle.expired(now_s):
            raise ValueError(f"insert of expired bundle {entry.bundle.id_text} at {now_s}")
        bid = entry.bundle.id
        self.purge_expired(now_s)
        if bid in self._entries or bid in self.delivered_ids:
            self.refused_total += 1
            return InsertOutcome.DUPLICATE
        size = entry.bundle.size_bytes
        if self.capacity_bytes > 0 and self.stored_bytes + size > self.capacity_bytes:
            self.refused_total += 1
            return InsertOutcome.CAPACITY
        self._entries[bid] = entry
        bisect.insort(self._order, (bid.sort_key, bid))
        heapq.heappush(self._expiry_heap, (entry.bundle.expiry_s, bid.sort_key, bid))
        self.stored_bytes += size
        return InsertOutcome.ACCEPTED

    def purge_expired(self, now_s: float) -> list[BundleId]:
        """Remove every bundle with expiry <= now_s; returns the expired ids."""
        heap = self._expiry_heap
        expired: list[BundleId] = []
        while heap and heap[0][0] <= now_s:
            _, _, bid = heapq.heappop(heap)
            entry = self._entries.get(bid)
            if entry is not None and entry.bundle.expired(now_s):
                self._remove(bid)
                expired.append(bid)
        if expired:
            self.expired_total += len(expired)
            if self.on_expire is not None:
                self.on_expire(expired, now_s)
        return expired

    def mark_delivered(self, bundle_id: BundleId) -> None:
        """Record a delivery at this node; idempotent, permanent for the run."""
        self.delivered_ids.add(bundle_id)
        if bundle_id in self._entries:
            self._remove(bundle_id)

    def remove(self, bundle_id: BundleId) -> None:
        if bundle_id in self._entries:
            self._remove(bundle_id)

    def _remove(self, bid: BundleId) -> None:
        entry = self._entries.pop(bid)
        self.stored_bytes -= entry.bundle.size_bytes
        i = bisect.bisect_left(self._order, (bid.sort_key, bid))
        assert self._order[i][1] == bid
        del self._order[i]

    def entries_in_order(self) -> list[StoreEntry]:
        """Live entries ordered by (creation time, source, seq)."""
        return [self._entries[bid] for _, bid in self._order]

    def offers(self) -> list[tuple[BundleId, EndpointId]]:
        """(id, dest) pairs in canonical order, for encounter planning."""
        entries = self._entries
        return [(bid, entries[bid].bundle.dest) for _, bid in self._order]

    def stored_ids(self) -> set[BundleId]:
        return set(self._entries.keys())

    def known_ids(self) -> set[BundleId]:
        """Stored plus delivered ids: everything this node need not receive."""
        if self.delivered_ids:
            return set(self._entries.keys()) | self.delivered_ids
        return set(self._entries.keys())
