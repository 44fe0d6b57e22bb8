import os
import socket
import threading

import pytest

from oppdtn.engine import RunSetup, run
from oppdtn.node import (FrameChannel, NodeConfig, NodeState, SessionTap,
                         run_session)
from oppdtn.store import StoreEntry
from oppdtn.types import Bundle, BundleId, ContactEvent, node_eid, parse_endpoint
from oppdtn.workload import Message

FIXED_NOW = 1000.0


def node_config(tmp_path, name, router="epidemic", **overrides):
    base = tmp_path / name
    kwargs = dict(
        eid=f"dtn://{name}",
        listen_port=0, beacon_port=0, router=router,
        store_dir=str(base / "store"),
        inbox_dir=str(base / "inbox"),
        outbox_dir=str(base / "outbox"),
        session_timeout_s=5.0,
    )
    kwargs.update(overrides)
    return NodeConfig(**kwargs)


def make_state(tmp_path, name, router="epidemic", clock=lambda: FIXED_NOW,
               **overrides):
    return NodeState(node_config(tmp_path, name, router, **overrides), clock)


def fixture_bundle(src="n01", dst="n02", creation_ms=900_000, seq=1,
                   payload=b"hello-dtn"):
    return Bundle(BundleId(parse_endpoint(f"dtn://{src}"), creation_ms, seq),
                  parse_endpoint(f"dtn://{dst}"), ttl_s=86400,
                  size_bytes=len(payload), payload=payload)


def run_pair_session(state_a, state_b, tap_a=None, tap_b=None):
    """Drive both ends of a session over a socketpair; returns exceptions."""
    sock_a, sock_b = socket.socketpair()
    chan_a = FrameChannel(sock_a, 5.0, tap_a)
    chan_b = FrameChannel(sock_b, 5.0, tap_b)
    errors = [None, None]

    def side(i, chan, state):
        try:
            run_session(chan, state)
        except Exception as e:  # surfaced to the asserting test
            errors[i] = e

    ta = threading.Thread(target=side, args=(0, chan_a, state_a))
    tb = threading.Thread(target=side, args=(1, chan_b, state_b))
    ta.start(); tb.start()
    ta.join(10.0); tb.join(10.0)
    chan_a.close(); chan_b.close()
    return errors


class TestSession:
    def test_bundle_flows_to_destination_inbox(self, tmp_path):
        a = make_state(tmp_path, "n01")
        b = make_state(tmp_path, "n02")
        bundle = fixture_bundle()
        a.store.insert(StoreEntry(bundle, FIXED_NOW, None), FIXED_NOW)
        errors = run_pair_session(a, b)
        assert errors == [None, None]
        inbox_files = os.listdir(b.cfg.inbox_dir)
        assert inbox_files == ["n01.900000.1"]
        with open(os.path.join(b.cfg.inbox_dir, inbox_files[0]), "rb") as f:
            assert f.read() == b"hello-dtn"
        assert bundle.id in b.store.delivered_ids
        assert bundle.id in a.store  # sender keeps its copy

    def test_relay_stored_not_delivered(self, tmp_path):
        a = make_state(tmp_path, "n01")
        b = make_state(tmp_path, "n02")
        bundle = fixture_bundle(dst="n07")
        a.store.insert(StoreEntry(bundle, FIXED_NOW, None), FIXED_NOW)
        errors = run_pair_session(a, b)
        assert errors == [None, None]
        assert bundle.id in b.store
        assert os.listdir(b.cfg.inbox_dir) == []

    def test_identical_stores_no_transfer(self, tmp_path):
        a = make_state(tmp_path, "n01")
        b = make_state(tmp_path, "n02")
        bundle = fixture_bundle(dst="n07")
        for st in (a, b):
            st.store.insert(StoreEntry(bundle, FIXED_NOW, None), FIXED_NOW)
        tap_a, tap_b = SessionTap(), SessionTap()
        errors = run_pair_session(a, b, tap_a, tap_b)
        assert errors == [None, None]
        # no REQUEST (0x04) and no BUNDLE (0x05) frames on either stream
        from oppdtn import wire
        for tap in (tap_a, tap_b):
            kinds = [t for t, _ in wire.iter_frames(bytes(tap.sent))]
            assert wire.FRAME_REQUEST not in kinds
            assert wire.FRAME_BUNDLE not in kinds
            assert kinds[-1] == wire.FRAME_BYE

    def test_second_session_sends_nothing_new(self, tmp_path):
        a = make_state(tmp_path, "n01")
        b = make_state(tmp_path, "n02")
        bundle = fixture_bundle()
        a.store.insert(StoreEntry(bundle, FIXED_NOW, None), FIXED_NOW)
        assert run_pair_session(a, b) == [None, None]
        tap_a = SessionTap()
        assert run_pair_session(a, b, tap_a) == [None, None]
        from oppdtn import wire
        kinds = [t for t, _ in wire.iter_frames(bytes(tap_a.sent))]
        assert wire.FRAME_BUNDLE not in kinds
        assert os.listdir(b.cfg.inbox_dir) == ["n01.900000.1"]  # exactly once

    def test_prophet_tables_updated_both_sides(self, tmp_path):
        a = make_state(tmp_path, "n01", router="prophet")
        b = make_state(tmp_path, "n02", router="prophet")
        assert run_pair_session(a, b) == [None, None]
        assert a.agent.table["dtn://n02"] == 0.75
        assert b.agent.table["dtn://n01"] == 0.75

    def test_dlife_counts_session_as_contact(self, tmp_path):
        clock_holder = {"now": FIXED_NOW}
        clock = lambda: clock_holder["now"]
        a = make_state(tmp_path, "n01", router="dlife", clock=clock)
        b = make_state(tmp_path, "n02", router="dlife", clock=clock)
        assert run_pair_session(a, b) == [None, None]
        assert a.agent.tct["dtn://n02"][0] >= 0.0
        assert "dtn://n02" not in a.agent.open_contacts  # closed at BYE


class TestTruncatedTransfer:
    def test_truncated_bundle_aborts_without_insert(self, tmp_path):
        from oppdtn import wire
        b = make_state(tmp_path, "n02")
        bundle = fixture_bundle()
        sock_x, sock_y = socket.socketpair()
        chan_b = FrameChannel(sock_y, 2.0)
        result = {}

        def b_side():
            try:
                run_session(chan_b, b)
                result["ok"] = True
            except Exception as e:
                result["error"] = e

        t = threading.Thread(target=b_side)
        t.start()
        # hand-rolled peer: valid handshake, then a truncated BUNDLE frame
        raw = sock_x.makefile("rwb")
        raw.write(wire.encode_hello(parse_endpoint("dtn://n01")))
        from oppdtn.routing import RoutingMeta
        raw.write(wire.encode_meta(RoutingMeta("epidemic")))
        raw.write(wire.encode_summary([(bundle.id, bundle.dest)]))
        raw.flush()
        full = wire.encode_bundle(bundle)
        raw.write(full[: len(full) - 4])  # cut the payload short
        raw.flush()
        sock_x.close()
        t.join(5.0)
        assert "error" in result
        assert bundle.id not in b.store


class TestDecisionParity:
    def test_live_request_equals_engine_queue(self, tmp_path):
        import random
        from oppdtn.routing import RoutingMeta, plan_transfers
        rng = random.Random(31)
        for case in range(50):
            # random holder store and receiver knowledge; a holder never
            # stores bundles destined to itself (node 0 here)
            n_bundles = rng.randint(0, 12)
            offers = []
            for i in range(n_bundles):
                dest = node_eid(rng.randrange(1, 6))
                bid = BundleId(node_eid(rng.randrange(6)), rng.randrange(5000), i)
                offers.append((bid, dest))
            receiver_known = {bid for bid, _ in offers if rng.random() < 0.3}
            kind = rng.choice(["dlife", "prophet", "epidemic"])
            def rand_meta():
                if kind == "dlife":
                    return RoutingMeta("dlife",
                                       weights={node_eid(i).uri: rng.random() * 10
                                                for i in range(6) if rng.random() < 0.5},
                                       importance=rng.random())
                if kind == "prophet":
                    return RoutingMeta("prophet",
                                       predictability={node_eid(i).uri: rng.random()
                                                       for i in range(6)
                                                       if rng.random() < 0.5})
                return RoutingMeta("epidemic")
            holder_meta, receiver_meta = rand_meta(), rand_meta()
            receiver = node_eid(1)
            engine_queue = plan_transfers(offers, holder_meta, receiver_meta,
                                          receiver, receiver_known)
            # live path: the receiver computes its REQUEST from the summary
            state = make_state(tmp_path, f"p{case:03d}x")
            state.eid = receiver
            summary = list(offers)
            for bid in receiver_known:
                state.store.delivered_ids.add(bid)
            live_request = state.request_plan(node_eid(0), summary,
                                              holder_meta, receiver_meta)
            assert live_request == engine_queue


class TestPersistence:
    def test_reload_restores_store_and_delivered(self, tmp_path):
        a = make_state(tmp_path, "n01")
        kept = fixture_bundle(dst="n07", seq=1)
        done = fixture_bundle(dst="n01", seq=2)
        a.store.insert(StoreEntry(kept, FIXED_NOW, None), FIXED_NOW)
        a.store.mark_delivered(done.id)
        a.persist()
        # simulate a crash: fresh state over the same directory
        b = NodeState(a.cfg, lambda: FIXED_NOW)
        assert kept.id in b.store
        assert b.store.get(kept.id).bundle.payload == kept.payload
        assert done.id in b.store.delivered_ids

    def test_expired_dropped_on_reload(self, tmp_path):
        a = make_state(tmp_path, "n01")
        bundle = fixture_bundle(dst="n07")
        a.store.insert(StoreEntry(bundle, FIXED_NOW, None), FIXED_NOW)
        a.persist()
        later = FIXED_NOW + 2 * 86400
        b = NodeState(a.cfg, lambda: later)
        assert bundle.id not in b.store

    def test_reload_idempotent(self, tmp_path):
        a = make_state(tmp_path, "n01")
        a.store.insert(StoreEntry(fixture_bundle(dst="n07"), FIXED_NOW, None),
                       FIXED_NOW)
        a.persist()
        for _ in range(3):
            b = NodeState(a.cfg, lambda: FIXED_NOW)
            assert b.store.stored_count == 1


class TestSpool:
    def test_submit_valid_file(self, tmp_path):
        a = make_state(tmp_path, "n01")
        os.makedirs(a.cfg.outbox_dir, exist_ok=True)
        path = os.path.join(a.cfg.outbox_dir, "n02.1")
        with open(path, "wb") as f:
            f.write(b"x" * 1024)
        assert a.submit_outbox_file(path) == "sent"
        offers = a.store.offers()
        assert len(offers) == 1
        assert offers[0][1].uri == "dtn://n02"
        entry = a.store.get(offers[0][0])
        assert entry.bundle.size_bytes == 1024
        assert entry.bundle.ttl_s == a.cfg.ttl_s

    def test_submit_to_self_rejected(self, tmp_path):
        a = make_state(tmp_path, "n01")
        os.makedirs(a.cfg.outbox_dir, exist_ok=True)
        path = os.path.join(a.cfg.outbox_dir, "n01.1")
        with open(path, "wb") as f:
            f.write(b"x")
        assert a.submit_outbox_file(path) == "rejected"

    def test_unparsable_name_rejected(self, tmp_path):
        a = make_state(tmp_path, "n01")
        os.makedirs(a.cfg.outbox_dir, exist_ok=True)
        path = os.path.join(a.cfg.outbox_dir, "notaname")
        with open(path, "wb") as f:
            f.write(b"x")
        assert a.submit_outbox_file(path) == "rejected"

    def test_oversize_payload_rejected(self, tmp_path):
        # the field-experiment ceiling: payloads above 1 MB are refused
        a = make_state(tmp_path, "n01")
        os.makedirs(a.cfg.outbox_dir, exist_ok=True)
        path = os.path.join(a.cfg.outbox_dir, "n02.9")
        with open(path, "wb") as f:
            f.write(b"x" * (1_000_001))
        assert a.submit_outbox_file(path) == "rejected"


def free_ports(n):
    socks, ports = [], []
    for _ in range(n):
        s = socket.socket()
        s.bind(("127.0.0.1", 0))
        socks.append(s)
        ports.append(s.getsockname()[1])
    for s in socks:
        s.close()
    return ports


class TestDaemonLoopback:
    def test_discovery_session_and_inbox_delivery(self, tmp_path):
        import time
        from oppdtn.node import NodeDaemon
        la, ba, lb, bb = free_ports(4)
        cfg_a = node_config(tmp_path, "n01", listen_port=la, beacon_port=ba,
                            beacon_targets=[("127.0.0.1", bb)],
                            beacon_interval_s=0.3, holdoff_s=2.0)
        cfg_b = node_config(tmp_path, "n02", listen_port=lb, beacon_port=bb,
                            beacon_targets=[("127.0.0.1", ba)],
                            beacon_interval_s=0.3, holdoff_s=2.0)
        da, db = NodeDaemon(cfg_a), NodeDaemon(cfg_b)
        da.start()
        db.start()
        try:
            os.makedirs(cfg_a.outbox_dir, exist_ok=True)
            with open(os.path.join(cfg_a.outbox_dir, "n02.1"), "wb") as f:
                f.write(b"k" * 1024)
            deadline = time.time() + 15.0
            delivered = []
            while time.time() < deadline:
                delivered = os.listdir(cfg_b.inbox_dir)
                if delivered:
                    break
                time.sleep(0.2)
            assert len(delivered) == 1
            with open(os.path.join(cfg_b.inbox_dir, delivered[0]), "rb") as f:
                assert f.read() == b"k" * 1024
            assert os.listdir(os.path.join(cfg_a.outbox_dir, "sent")) == ["n02.1"]
        finally:
            da.stop()
            db.stop()

    def test_port_collision_raises(self, tmp_path):
        from oppdtn.node import NodeDaemon, NodeStartError
        port = free_ports(1)[0]
        blocker = socket.socket()
        blocker.bind(("0.0.0.0", port))
        blocker.listen(1)
        try:
            cfg = node_config(tmp_path, "n09", listen_port=port, beacon_port=0)
            with pytest.raises(NodeStartError):
                NodeDaemon(cfg).start()
        finally:
            blocker.close()


GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")


def load_golden(name):
    with open(os.path.join(GOLDEN_DIR, name), "r", encoding="utf-8") as f:
        return bytes.fromhex(f.read().strip())


class TestGoldenSession:
    def test_canonical_session_bytes_are_stable(self, tmp_path):
        # fixed stores, fixed clock, epidemic: the full two-node exchange
        # must reproduce the checked-in byte dumps exactly
        a = make_state(tmp_path, "n01")
        b = make_state(tmp_path, "n02")
        bundle = fixture_bundle()
        a.store.insert(StoreEntry(bundle, FIXED_NOW, None), FIXED_NOW)
        tap_a, tap_b = SessionTap(), SessionTap()
        assert run_pair_session(a, b, tap_a, tap_b) == [None, None]
        assert bytes(tap_a.sent) == load_golden("session_n01_sent.hex")
        assert bytes(tap_b.sent) == load_golden("session_n02_sent.hex")
        assert bytes(tap_a.received) == bytes(tap_b.sent)
        assert bytes(tap_b.received) == bytes(tap_a.sent)


class TestEngineSessionEquivalence:
    def test_one_hop_matches_simulation(self, tmp_path):
        # same single-encounter scenario through the simulator and the live
        # session path must produce the same outcome set
        msgs = [Message(5.0, 0, 1, 100), Message(6.0, 0, 1, 200)]
        setup = RunSetup(node_count=2,
                         contacts=[ContactEvent(0, 1, 10.0, 1000.0)],
                         duration_s=2000.0, router_kind="epidemic",
                         messages=msgs, ttl_s=86400, bandwidth_Bps=1e6,
                         setup_s=0.0)
        records = []
        run(setup, lambda *r: records.append(r))
        sim_delivered = {r[2] for r in records if r[1] == "DELIVER"}

        a = make_state(tmp_path, "n00")
        b = make_state(tmp_path, "n01")
        live_ids = []
        for i, m in enumerate(msgs):
            bundle = Bundle(BundleId(node_eid(0), int(m.creation_s * 1000), i),
                            node_eid(1), ttl_s=86400, size_bytes=m.size_bytes,
                            payload=bytes(m.size_bytes))
            live_ids.append(bundle.id_text)
            a.store.insert(StoreEntry(bundle, FIXED_NOW, None), FIXED_NOW)
        assert run_pair_session(a, b) == [None, None]
        assert {bid for bid in live_ids} == sim_delivered
