"""Opportunistic routing agents deciding which bundles to replicate at encounters.

Three strategies share one decision surface:

* social routine weights (``dlife``): per-neighbor average contact durations
  over the day's samples, blended toward the current sample, with a damped
  importance score as fallback when weights are uninformative;
* delivery predictability (``prophet``): per-destination probability-like
  utility with encounter boosts, multiplicative aging and transitivity;
* flooding (``epidemic``): replicate whatever the peer lacks.

All comparisons are strict; ties never replicate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from operator import mul as _mul

from .types import BundleId, EndpointId, SimClock, split_at_sample_boundaries

DLIFE = "dlife"
PROPHET = "prophet"
EPIDEMIC = "epidemic"

# Predictabilities live in [0, 1); repeated boosts would round to exactly 1.0
# in floats without this ceiling.
_P_MAX = math.nextafter(1.0, 0.0)


@dataclass
class RoutingMeta:
    """Snapshot exchanged between nodes at an encounter.

    dlife: weights per destination uri + importance; prophet: predictability
    per destination uri; epidemic: carries nothing beyond its kind.
    """

    kind: str
    weights: dict[str, float] = field(default_factory=dict)
    importance: float = 0.0
    predictability: dict[str, float] = field(default_factory=dict)


def should_replicate(holder_meta: RoutingMeta, receiver_meta: RoutingMeta,
                     dest: EndpointId) -> bool:
    """Would the holder hand a copy for `dest` to the receiver?

    Bundles destined to the receiver itself are not routed through here;
    the encounter logic delivers those unconditionally.
    """
    kind = holder_meta.kind
    if kind == EPIDEMIC:
        return True  # summary filtering already excluded what the peer has
    d = dest.uri
    if kind == DLIFE:
        w_mine = holder_meta.weights.get(d, 0.0)
        w_peer = receiver_meta.weights.get(d, 0.0)
        if w_peer > w_mine:
            return True
        if w_peer == 0.0 and w_mine == 0.0:
            return receiver_meta.importance > holder_meta.importance
        return False
    if kind == PROPHET:
        return receiver_meta.predictability.get(d, 0.0) > holder_meta.predictability.get(d, 0.0)
    raise ValueError(f"unknown routing meta kind {kind!r}")


def plan_transfers(offers: list[tuple[BundleId, EndpointId]],
                   holder_meta: RoutingMeta, receiver_meta: RoutingMeta,
                   receiver_eid: EndpointId,
                   receiver_known: set[BundleId]) -> list[BundleId]:
    """Ordered transfer plan from the holder's offers to the receiver.

    Bundles destined to the receiver come first (unconditional), then those
    the routing decision approves; each group ordered by creation time,
    ties broken by bundle id. The same function backs the simulator's
    encounter queues and the live session's REQUEST computation.
    """
    deliveries: list[BundleId] = []
    relays: list[BundleId] = []
    for bid, dest in sorted(offers, key=lambda o: o[0].sort_key):
        if bid in receiver_known:
            continue
        if dest == receiver_eid:
            deliveries.append(bid)
        elif should_replicate(holder_meta, receiver_meta, dest):
            relays.append(bid)
    return deliveries + relays


class EpidemicAgent:
    """Flooding: no state beyond the store's own summary."""

    kind = EPIDEMIC

    def begin_encounter(self, peer: EndpointId, now_s: float) -> None:
        pass

    def absorb_meta(self, peer: EndpointId, meta: RoutingMeta, now_s: float) -> None:
        pass

    def end_encounter(self, peer: EndpointId, now_s: float) -> None:
        pass

    def meta(self, now_s: float = 0.0) -> RoutingMeta:
        return RoutingMeta(EPIDEMIC)


class ProphetAgent:
    """Delivery-predictability table for one node."""

    kind = PROPHET

    def __init__(self, own: EndpointId | None = None, p_init: float = 0.75,
                 beta: float = 0.25, gamma: float = 0.98, time_unit_s: float = 30.0):
        self.own_uri = own.uri if own is not None else None
        self.p_init = p_init
        self.beta = beta
        self.gamma = gamma
        self.time_unit_s = time_unit_s
        self.table: dict[str, float] = {}
        self.last_aged_s = 0.0

    def age(self, now_s: float) -> None:
        """Multiplicative aging of every entry; lazy, driven by encounters."""
        elapsed = now_s - self.last_aged_s
        if elapsed > 0:
            factor = self.gamma ** (elapsed / self.time_unit_s)
            for d in self.table:
                self.table[d] *= factor
        self.last_aged_s = max(self.last_aged_s, now_s)

    def begin_encounter(self, peer: EndpointId, now_s: float) -> None:
        """Age the table, then apply the direct-encounter update for the peer."""
        self.age(now_s)
        p = self.table.get(peer.uri, 0.0)
        self.table[peer.uri] = min(p + (1.0 - p) * self.p_init, _P_MAX)

    def absorb_meta(self, peer: EndpointId, meta: RoutingMeta, now_s: float) -> None:
        """Transitivity: lift P toward destinations the peer predicts well."""
        if meta.kind != PROPHET:
            return
        p_ab = self.table.get(peer.uri, 0.0)
        for d, p_bd in meta.predictability.items():
            if d == self.own_uri or d == peer.uri:
                continue
            old = self.table.get(d, 0.0)
            cand = min(old + (1.0 - old) * p_ab * p_bd * self.beta, _P_MAX)
            if cand > old:
                self.table[d] = cand

    def end_encounter(self, peer: EndpointId, now_s: float) -> None:
        pass

    def meta(self, now_s: float = 0.0) -> RoutingMeta:
        return RoutingMeta(PROPHET, predictability=dict(self.table))


class DlifeContactError(RuntimeError):
    """Contact bookkeeping misuse: double start or end without start."""


class DlifeAgent:
    """Social routine state for one node.

    For every known peer, `ad[b][i]` is the running mean of per-day contact
    seconds in daily sample i, and `tct[b][i]` accumulates the current day.
    `days_completed[i]` counts every completed day of sample i, so weights
    decay for neighbors that stop appearing.
    """

    kind = DLIFE

    def __init__(self, own: EndpointId, clock: SimClock | None = None,
                 damping: float = 0.8, blend: bool = True):
        self.own = own
        self.clock = clock or SimClock()
        self.T = self.clock.samples_per_day
        self.damping = damping
        self.blend = blend
        self.ad: dict[str, list[float]] = {}
        self.tct: dict[str, list[float]] = {}
        self.days_completed = [0] * self.T
        self.open_contacts: dict[str, float] = {}
        self.peer_importance: dict[str, float] = {}
        self.importance = 1.0 - damping
        self._blend_coeffs = [(self.T - j) / self.T for j in range(self.T)]
        self._weights_cache: dict[str, float] | None = None
        self._cache_sample = -1

    def _tables_for(self, peer_uri: str) -> None:
        if peer_uri not in self.ad:
            self.ad[peer_uri] = [0.0] * self.T
            self.tct[peer_uri] = [0.0] * self.T

    # -- contact accounting ------------------------------------------------

    def contact_start(self, peer: EndpointId, now_s: float) -> None:
        if peer.uri in self.open_contacts:
            raise DlifeContactError(f"contact with {peer.uri} already open")
        self._tables_for(peer.uri)
        self.open_contacts[peer.uri] = now_s

    def contact_end(self, peer: EndpointId, now_s: float) -> None:
        start = self.open_contacts.pop(peer.uri, None)
        if start is None:
            raise DlifeContactError(f"contact end without start for {peer.uri}")
        self._credit(peer.uri, start, now_s)

    def _credit(self, peer_uri: str, start_s: float, end_s: float) -> None:
        tct = self.tct[peer_uri]
        for sample, dur in split_at_sample_boundaries(self.clock, start_s, end_s):
            tct[sample] += dur

    # -- daily sample roll ---------------------------------------------------

    def roll_sample(self, boundary_s: float) -> None:
        """Close the sample ending at `boundary_s`.

        Open contacts are first credited up to the boundary (and restarted
        there), then every peer's running mean for the ended sample absorbs
        the accumulated contact time, zero or not.
        """
        for peer_uri, start in list(self.open_contacts.items()):
            self._credit(peer_uri, start, boundary_s)
            self.open_contacts[peer_uri] = boundary_s
        sl = self.clock.sample_length_s
        ended = (round(boundary_s / sl) - 1) % self.T
        k = self.days_completed[ended] + 1
        for peer_uri, ad in self.ad.items():
            tct = self.tct[peer_uri]
            ad[ended] = ((k - 1) * ad[ended] + tct[ended]) / k
            tct[ended] = 0.0
        self.days_completed[ended] = k
        self._weights_cache = None
        self._recompute_importance(boundary_s)

    # -- utilities -----------------------------------------------------------

    def weight(self, dest: EndpointId, now_s: float) -> float:
        return self.weights_at(now_s).get(dest.uri, 0.0)

    def weights_at(self, now_s: float) -> dict[str, float]:
        """Per-destination social weights for the sample containing now_s.

        With blending, sample j ahead of the current one contributes its
        average duration scaled by (T - j) / T; with blending off only the
        current sample counts.
        """
        i = self.clock.sample_of(now_s)
        if self._weights_cache is not None and self._cache_sample == i:
            return self._weights_cache
        coeffs = self._blend_coeffs
        weights: dict[str, float] = {}
        for peer_uri, ad in self.ad.items():
            if self.blend:
                rotated = ad[i:] + ad[:i]
                w = sum(map(_mul, rotated, coeffs))
            else:
                w = ad[i]
            if w > 0.0:
                weights[peer_uri] = w
        self._weights_cache = weights
        self._cache_sample = i
        return weights

    def _recompute_importance(self, now_s: float) -> None:
        weights = self.weights_at(now_s)
        acc = 0.0
        default = 1.0 - self.damping
        for peer_uri, w in weights.items():
            acc += w * self.peer_importance.get(peer_uri, default)
        self.importance = (1.0 - self.damping) + self.damping * acc

    # -- encounter hooks -------------------------------------------------------

    def begin_encounter(self, peer: EndpointId, now_s: float) -> None:
        self.contact_start(peer, now_s)

    def absorb_meta(self, peer: EndpointId, meta: RoutingMeta, now_s: float) -> None:
        if meta.kind != DLIFE:
            return
        self._tables_for(peer.uri)
        self.peer_importance[peer.uri] = meta.importance
        self._recompute_importance(now_s)

    def end_encounter(self, peer: EndpointId, now_s: float) -> None:
        self.contact_end(peer, now_s)

    def meta(self, now_s: float) -> RoutingMeta:
        return RoutingMeta(DLIFE, weights=dict(self.weights_at(now_s)),
                           importance=self.importance)


def make_agent(kind: str, own: EndpointId, clock: SimClock,
               params: dict | None = None):
    params = params or {}
    if kind == DLIFE:
        return DlifeAgent(own, clock,
                          damping=params.get("dlife_damping", 0.8),
                          blend=params.get("dlife_blend", True))
    if kind == PROPHET:
        return ProphetAgent(own, p_init=params.get("prophet_pinit", 0.75),
                            beta=params.get("prophet_beta", 0.25),
                            gamma=params.get("prophet_gamma", 0.98),
                            time_unit_s=params.get("prophet_time_unit_s", 30.0))
    if kind == EPIDEMIC:
        return EpidemicAgent()
    raise ValueError(f"unknown router kind {kind!r}")
