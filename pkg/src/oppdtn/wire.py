"""Binary wire formats: beacons, session frames, and their bodies.

One codec serves the live convergence layer, the on-disk store snapshot and
the golden session dumps. All integers are big-endian.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .routing import DLIFE, EPIDEMIC, PROPHET, RoutingMeta
from .types import Bundle, BundleId, EndpointId, parse_endpoint

BEACON_MAGIC = b"SDTN"
BEACON_VERSION = 0x01

FRAME_HELLO = 0x01
FRAME_ROUTING_META = 0x02
FRAME_SUMMARY = 0x03
FRAME_REQUEST = 0x04
FRAME_BUNDLE = 0x05
FRAME_BYE = 0x06
FRAME_TYPES = (FRAME_HELLO, FRAME_ROUTING_META, FRAME_SUMMARY,
               FRAME_REQUEST, FRAME_BUNDLE, FRAME_BYE)

MAX_FRAME_LEN = 16 * 1024 * 1024

META_KIND_BYTES = {DLIFE: 0x01, PROPHET: 0x02, EPIDEMIC: 0x03}
META_KINDS_BY_BYTE = {v: k for k, v in META_KIND_BYTES.items()}


class WireError(ValueError):
    """Malformed bytes on the wire or in a snapshot file."""


def _pack_eid(eid: EndpointId) -> bytes:
    raw = eid.uri.encode("utf-8")
    return struct.pack(">H", len(raw)) + raw


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise WireError("truncated data")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def f64(self) -> float:
        return struct.unpack(">d", self.take(8))[0]

    def eid(self) -> EndpointId:
        n = self.u16()
        try:
            return parse_endpoint(self.take(n).decode("utf-8"))
        except (UnicodeDecodeError, ValueError) as e:
            raise WireError(f"bad endpoint on wire: {e}") from None

    def done(self) -> bool:
        return self.pos == len(self.data)


# -- beacon ---------------------------------------------------------------

def encode_beacon(eid: EndpointId, listen_port: int) -> bytes:
    return (BEACON_MAGIC + bytes([BEACON_VERSION]) + _pack_eid(eid)
            + struct.pack(">H", listen_port))


def decode_beacon(data: bytes) -> tuple[EndpointId, int]:
    """Strict decode; total length must match the declared eid length."""
    r = _Reader(data)
    if r.take(4) != BEACON_MAGIC:
        raise WireError("bad beacon magic")
    if r.u8() != BEACON_VERSION:
        raise WireError("unsupported beacon version")
    eid = r.eid()
    port = r.u16()
    if not r.done():
        raise WireError("beacon has trailing bytes")
    return eid, port


# -- frames ------------------------------------------------------------------

def encode_frame(frame_type: int, body: bytes = b"") -> bytes:
    if frame_type not in FRAME_TYPES:
        raise WireError(f"unknown frame type {frame_type:#x}")
    length = 1 + len(body)
    if length > MAX_FRAME_LEN:
        raise WireError("frame exceeds 16 MiB guard")
    return struct.pack(">I", length) + bytes([frame_type]) + body


def decode_frame(data: bytes, offset: int = 0) -> tuple[int, bytes, int]:
    """Decode one frame at `offset`; returns (type, body, next offset)."""
    if offset + 4 > len(data):
        raise WireError("truncated frame header")
    (length,) = struct.unpack_from(">I", data, offset)
    if length < 1 or length > MAX_FRAME_LEN:
        raise WireError(f"bad frame length {length}")
    end = offset + 4 + length
    if end > len(data):
        raise WireError("truncated frame body")
    frame_type = data[offset + 4]
    if frame_type not in FRAME_TYPES:
        raise WireError(f"unknown frame type {frame_type:#x}")
    return frame_type, data[offset + 5:end], end


def iter_frames(data: bytes):
    offset = 0
    while offset < len(data):
        frame_type, body, offset = decode_frame(data, offset)
        yield frame_type, body


# -- frame bodies ----------------------------------------------------------

def encode_hello(eid: EndpointId) -> bytes:
    return encode_frame(FRAME_HELLO, _pack_eid(eid))


def decode_hello_body(body: bytes) -> EndpointId:
    r = _Reader(body)
    eid = r.eid()
    if not r.done():
        raise WireError("hello has trailing bytes")
    return eid


def encode_meta_body(meta: RoutingMeta) -> bytes:
    kind = META_KIND_BYTES.get(meta.kind)
    if kind is None:
        raise WireError(f"unknown meta kind {meta.kind!r}")
    out = [bytes([kind])]
    if meta.kind == DLIFE:
        out.append(struct.pack(">d", meta.importance))
        items = sorted(meta.weights.items())
        out.append(struct.pack(">I", len(items)))
        for uri, w in items:
            out.append(_pack_eid(EndpointId(uri)))
            out.append(struct.pack(">d", w))
    elif meta.kind == PROPHET:
        items = sorted(meta.predictability.items())
        out.append(struct.pack(">I", len(items)))
        for uri, p in items:
            out.append(_pack_eid(EndpointId(uri)))
            out.append(struct.pack(">d", p))
    return b"".join(out)


def decode_meta_body(body: bytes) -> RoutingMeta:
    r = _Reader(body)
    kind = META_KINDS_BY_BYTE.get(r.u8())
    if kind is None:
        raise WireError("unknown routing meta kind byte")
    if kind == DLIFE:
        importance = r.f64()
        weights = {}
        for _ in range(r.u32()):
            eid = r.eid()
            weights[eid.uri] = r.f64()
        meta = RoutingMeta(DLIFE, weights=weights, importance=importance)
    elif kind == PROPHET:
        preds = {}
        for _ in range(r.u32()):
            eid = r.eid()
            preds[eid.uri] = r.f64()
        meta = RoutingMeta(PROPHET, predictability=preds)
    else:
        meta = RoutingMeta(EPIDEMIC)
    if not r.done():
        raise WireError("routing meta has trailing bytes")
    return meta


def encode_meta(meta: RoutingMeta) -> bytes:
    return encode_frame(FRAME_ROUTING_META, encode_meta_body(meta))


def _pack_bundle_id(bid: BundleId) -> bytes:
    return _pack_eid(bid.source) + struct.pack(">QI", bid.creation_ms, bid.seq)


def _read_bundle_id(r: _Reader) -> BundleId:
    source = r.eid()
    creation_ms = r.u64()
    seq = r.u32()
    return BundleId(source, creation_ms, seq)


def encode_summary_body(entries: list[tuple[BundleId, EndpointId]]) -> bytes:
    """Summary entries carry (id, dest) so the peer can run routing decisions."""
    out = [struct.pack(">I", len(entries))]
    for bid, dest in sorted(entries, key=lambda e: e[0].sort_key):
        out.append(_pack_bundle_id(bid))
        out.append(_pack_eid(dest))
    return b"".join(out)


def decode_summary_body(body: bytes) -> list[tuple[BundleId, EndpointId]]:
    r = _Reader(body)
    entries = []
    for _ in range(r.u32()):
        bid = _read_bundle_id(r)
        entries.append((bid, r.eid()))
    if not r.done():
        raise WireError("summary has trailing bytes")
    return entries


def encode_summary(entries: list[tuple[BundleId, EndpointId]]) -> bytes:
    return encode_frame(FRAME_SUMMARY, encode_summary_body(entries))


def encode_request_body(ids: list[BundleId]) -> bytes:
    out = [struct.pack(">I", len(ids))]
    for bid in ids:
        out.append(_pack_bundle_id(bid))
    return b"".join(out)


def decode_request_body(body: bytes) -> list[BundleId]:
    r = _Reader(body)
    ids = [_read_bundle_id(r) for _ in range(r.u32())]
    if not r.done():
        raise WireError("request has trailing bytes")
    return ids


def encode_request(ids: list[BundleId]) -> bytes:
    return encode_frame(FRAME_REQUEST, encode_request_body(ids))


def encode_bundle_body(bundle: Bundle) -> bytes:
    payload = bundle.payload if bundle.payload is not None else b""
    return (_pack_eid(bundle.id.source) + _pack_eid(bundle.dest)
            + struct.pack(">QIQ", bundle.id.creation_ms, bundle.id.seq, bundle.ttl_s)
            + struct.pack(">I", len(payload)) + payload)


def decode_bundle_body(body: bytes) -> Bundle:
    r = _Reader(body)
    source = r.eid()
    dest = r.eid()
    creation_ms = r.u64()
    seq = r.u32()
    ttl_s = r.u64()
    payload_len = r.u32()
    payload = r.take(payload_len)
    if not r.done():
        raise WireError("bundle body has trailing bytes")
    if payload_len == 0:
        raise WireError("bundle payload is empty")
    try:
        return Bundle(BundleId(source, creation_ms, seq), dest,
                      ttl_s=ttl_s, size_bytes=payload_len, payload=payload)
    except ValueError as e:
        raise WireError(str(e)) from None


def encode_bundle(bundle: Bundle) -> bytes:
    return encode_frame(FRAME_BUNDLE, encode_bundle_body(bundle))


def encode_bye() -> bytes:
    return encode_frame(FRAME_BYE)


# -- store snapshot: concatenated BUNDLE frames -------------------------------

def encode_store_snapshot(bundles: list[Bundle]) -> bytes:
    return b"".join(encode_bundle(b) for b in bundles)


def decode_store_snapshot(data: bytes) -> list[Bundle]:
    bundles = []
    for frame_type, body in iter_frames(data):
        if frame_type != FRAME_BUNDLE:
            raise WireError(f"unexpected frame type {frame_type:#x} in store snapshot")
        bundles.append(decode_bundle_body(body))
    return bundles
