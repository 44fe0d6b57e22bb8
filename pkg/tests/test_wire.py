import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oppdtn import wire
from oppdtn.routing import RoutingMeta
from oppdtn.types import Bundle, BundleId, node_eid
from oppdtn.wire import WireError

N1, N2 = node_eid(1), node_eid(2)


class TestBeacon:
    def test_hand_encoded_bytes(self):
        # "SDTN", version 1, len 9, "dtn://n01", port 4556 = 0x11CC
        expected = bytes.fromhex("5344544E01000964746E3A2F2F6E303111CC")
        assert wire.encode_beacon(N1, 4556) == expected

    def test_round_trip(self):
        data = wire.encode_beacon(node_eid(7), 12345)
        assert wire.decode_beacon(data) == (node_eid(7), 12345)

    def test_bad_magic_rejected(self):
        data = bytearray(wire.encode_beacon(N1, 4556))
        data[0] = 0x58
        with pytest.raises(WireError):
            wire.decode_beacon(bytes(data))

    def test_wrong_total_length_rejected(self):
        data = wire.encode_beacon(N1, 4556) + b"\x00"
        with pytest.raises(WireError):
            wire.decode_beacon(data)

    def test_truncated_rejected(self):
        data = wire.encode_beacon(N1, 4556)[:-1]
        with pytest.raises(WireError):
            wire.decode_beacon(data)


class TestFrames:
    def test_frame_layout(self):
        frame = wire.encode_frame(wire.FRAME_BYE)
        assert frame == b"\x00\x00\x00\x01\x06"

    def test_round_trip(self):
        body = b"payload-bytes"
        frame = wire.encode_frame(wire.FRAME_SUMMARY, body)
        frame_type, decoded, end = wire.decode_frame(frame)
        assert (frame_type, decoded, end) == (wire.FRAME_SUMMARY, body, len(frame))

    def test_unknown_type_rejected(self):
        with pytest.raises(WireError):
            wire.decode_frame(b"\x00\x00\x00\x01\x99")

    def test_oversize_rejected(self):
        huge = (17 * 1024 * 1024).to_bytes(4, "big") + b"\x05"
        with pytest.raises(WireError):
            wire.decode_frame(huge)

    def test_iter_frames(self):
        data = wire.encode_bye() + wire.encode_hello(N1)
        frames = list(wire.iter_frames(data))
        assert [t for t, _ in frames] == [wire.FRAME_BYE, wire.FRAME_HELLO]


class TestMetaCodec:
    def test_dlife_round_trip(self):
        meta = RoutingMeta("dlife", weights={"dtn://n02": 12.5, "dtn://n01": 0.25},
                           importance=0.568)
        decoded = wire.decode_meta_body(wire.encode_meta_body(meta))
        assert decoded.kind == "dlife"
        assert decoded.importance == 0.568
        assert decoded.weights == meta.weights

    def test_prophet_round_trip(self):
        meta = RoutingMeta("prophet", predictability={"dtn://n05": 0.9375})
        decoded = wire.decode_meta_body(wire.encode_meta_body(meta))
        assert decoded.kind == "prophet"
        assert decoded.predictability == {"dtn://n05": 0.9375}

    def test_epidemic_is_one_byte(self):
        assert wire.encode_meta_body(RoutingMeta("epidemic")) == b"\x03"

    def test_kind_bytes(self):
        assert wire.encode_meta_body(RoutingMeta("dlife"))[0] == 0x01
        assert wire.encode_meta_body(RoutingMeta("prophet"))[0] == 0x02

    def test_dlife_layout(self):
        # kind byte, importance f64 BE, u32 count, then (u16 len + eid, f64)
        meta = RoutingMeta("dlife", weights={"dtn://n02": 1.0}, importance=0.5)
        body = wire.encode_meta_body(meta)
        assert body[0] == 0x01
        assert body[1:9] == bytes.fromhex("3FE0000000000000")
        assert body[9:13] == b"\x00\x00\x00\x01"
        assert body[13:15] == b"\x00\x09"
        assert body[15:24] == b"dtn://n02"


class TestSummaryRequest:
    def test_summary_round_trip(self):
        entries = [(BundleId(N1, 1000, 0), N2), (BundleId(N2, 500, 3), N1)]
        decoded = wire.decode_summary_body(wire.encode_summary_body(entries))
        assert sorted(decoded) == sorted(entries)

    def test_request_round_trip(self):
        ids = [BundleId(N1, 1000, 0), BundleId(N2, 2000, 9)]
        assert wire.decode_request_body(wire.encode_request_body(ids)) == ids


class TestBundleCodec:
    def bundle(self):
        return Bundle(BundleId(N1, 123000, 7), N2, ttl_s=86400,
                      size_bytes=9, payload=b"hello-dtn")

    def test_round_trip(self):
        b = self.bundle()
        decoded = wire.decode_bundle_body(wire.encode_bundle_body(b))
        assert decoded.id == b.id
        assert decoded.dest == b.dest
        assert decoded.ttl_s == b.ttl_s
        assert decoded.payload == b.payload
        assert decoded.size_bytes == 9

    def test_layout(self):
        body = wire.encode_bundle_body(self.bundle())
        # u16 len + source, u16 len + dest, u64 creation_ms, u32 seq,
        # u64 ttl_s, u32 payload_len, payload
        assert body[0:2] == b"\x00\x09"
        assert body[2:11] == b"dtn://n01"
        assert body[11:13] == b"\x00\x09"
        assert body[13:22] == b"dtn://n02"
        assert int.from_bytes(body[22:30], "big") == 123000
        assert int.from_bytes(body[30:34], "big") == 7
        assert int.from_bytes(body[34:42], "big") == 86400
        assert int.from_bytes(body[42:46], "big") == 9
        assert body[46:] == b"hello-dtn"

    def test_truncated_rejected(self):
        body = wire.encode_bundle_body(self.bundle())
        with pytest.raises(WireError):
            wire.decode_bundle_body(body[:-1])

    def test_payload_length_must_match(self):
        body = bytearray(wire.encode_bundle_body(self.bundle()))
        body[45] = 200  # claim a longer payload than present
        with pytest.raises(WireError):
            wire.decode_bundle_body(bytes(body))


class TestStoreSnapshot:
    def test_round_trip(self):
        bundles = [
            Bundle(BundleId(N1, 1000, i), N2, ttl_s=100, size_bytes=4,
                   payload=bytes([i]) * 4)
            for i in range(5)
        ]
        data = wire.encode_store_snapshot(bundles)
        decoded = wire.decode_store_snapshot(data)
        assert [b.id for b in decoded] == [b.id for b in bundles]
        assert [b.payload for b in decoded] == [b.payload for b in bundles]

    def test_empty(self):
        assert wire.decode_store_snapshot(b"") == []

    def test_non_bundle_frame_rejected(self):
        with pytest.raises(WireError):
            wire.decode_store_snapshot(wire.encode_bye())


class TestFuzz:
    @given(st.binary(max_size=200))
    @settings(max_examples=300)
    def test_beacon_decode_never_crashes(self, data):
        try:
            wire.decode_beacon(data)
        except WireError:
            pass

    @given(st.binary(max_size=200))
    @settings(max_examples=300)
    def test_frame_decode_never_crashes(self, data):
        try:
            wire.decode_frame(data)
        except WireError:
            pass

    @given(st.binary(max_size=300))
    @settings(max_examples=300)
    def test_body_decoders_never_crash(self, data):
        for decoder in (wire.decode_meta_body, wire.decode_summary_body,
                        wire.decode_request_body, wire.decode_bundle_body,
                        wire.decode_hello_body, wire.decode_store_snapshot):
            try:
                decoder(data)
            except WireError:
                pass
