"""Live store-carry-and-forward node.

Neighbor discovery runs over datagram broadcast beacons; bundle exchange runs
over stream sessions framed exactly like the store snapshot. A session
mirrors the simulator's encounter protocol: HELLO, ROUTING_META and SUMMARY
both ways, at most one REQUEST per side computed by the shared routing
decision path, the answering BUNDLE frames, then BYE. The lexicographically
smaller endpoint initiates, and a holdoff after every session emulates
discrete encounters between co-located nodes.
"""

from __future__ import annotations

import logging
import os
import queue
import socket
import threading
import time
from dataclasses import dataclass, field

from . import wire
from .routing import make_agent, plan_transfers
from .store import BundleStore, StoreEntry
from .types import Bundle, BundleId, EndpointId, SimClock, parse_endpoint
from .wire import WireError

log = logging.getLogger("oppdtn.node")

DEFAULT_BEACON_INTERVAL_S = 5.0
DEFAULT_HOLDOFF_S = 60.0
DEFAULT_SESSION_TIMEOUT_S = 30.0
DEFAULT_MAX_PAYLOAD = 1_000_000
DEFAULT_TTL_S = 86400


class NodeStartError(RuntimeError):
    """Daemon could not start (bad flags, port collision, bad store)."""


@dataclass
class NodeConfig:
    eid: str
    listen_port: int
    beacon_port: int
    router: str = "epidemic"
    store_dir: str = "store"
    inbox_dir: str = "inbox"
    outbox_dir: str = "outbox"
    ttl_s: int = DEFAULT_TTL_S
    capacity_bytes: int = 10_000_000
    beacon_addr: str = "127.255.255.255"
    beacon_targets: list[tuple[str, int]] = field(default_factory=list)
    beacon_interval_s: float = DEFAULT_BEACON_INTERVAL_S
    holdoff_s: float = DEFAULT_HOLDOFF_S
    session_timeout_s: float = DEFAULT_SESSION_TIMEOUT_S
    max_payload_bytes: int = DEFAULT_MAX_PAYLOAD
    router_params: dict = field(default_factory=dict)
    capture_dir: str = ""


class SessionTap:
    """Collects the raw bytes a session sent and received."""

    def __init__(self):
        self.sent = bytearray()
        self.received = bytearray()


class FrameChannel:
    """Blocking framed I/O over a connected stream socket."""

    def __init__(self, sock: socket.socket, timeout_s: float,
                 tap: SessionTap | None = None):
        self.sock = sock
        self.sock.settimeout(timeout_s)
        self.tap = tap

    def send(self, data: bytes) -> None:
        self.sock.sendall(data)
        if self.tap is not None:
            self.tap.sent.extend(data)

    def _read_exact(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            chunk = self.sock.recv(n - len(buf))
            if not chunk:
                raise ConnectionError("peer closed the stream")
            buf.extend(chunk)
        return bytes(buf)

    def read_frame(self) -> tuple[int, bytes]:
        header = self._read_exact(4)
        length = int.from_bytes(header, "big")
        if length < 1 or length > wire.MAX_FRAME_LEN:
            raise WireError(f"bad frame length {length}")
        rest = self._read_exact(length)
        if self.tap is not None:
            self.tap.received.extend(header + rest)
        frame_type = rest[0]
        if frame_type not in wire.FRAME_TYPES:
            raise WireError(f"unknown frame type {frame_type:#x}")
        return frame_type, rest[1:]

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class NodeState:
    """Store, routing agent and persistence for one node; one guard for all."""

    def __init__(self, cfg: NodeConfig, clock_fn=time.time):
        self.cfg = cfg
        self.eid = parse_endpoint(cfg.eid)
        self.clock_fn = clock_fn
        self.lock = threading.RLock()
        self.store = BundleStore(cfg.capacity_bytes)
        self.agent = make_agent(cfg.router, self.eid, SimClock(), cfg.router_params)
        self.store_path = os.path.join(cfg.store_dir, "store.bin")
        self.delivered_path = os.path.join(cfg.store_dir, "delivered.ids")
        os.makedirs(cfg.store_dir, exist_ok=True)
        os.makedirs(cfg.inbox_dir, exist_ok=True)
        self._load()

    # -- persistence -------------------------------------------------------

    def _load(self) -> None:
        now = self.clock_fn()
        if os.path.exists(self.delivered_path):
            with open(self.delivered_path, "r", encoding="utf-8") as f:
                for line in f:
                    parts = line.split()
                    if len(parts) == 3:
                        self.store.delivered_ids.add(
                            BundleId(parse_endpoint(parts[0]), int(parts[1]), int(parts[2])))
        if os.path.exists(self.store_path):
            with open(self.store_path, "rb") as f:
                data = f.read()
            for bundle in wire.decode_store_snapshot(data):
                if bundle.expired(now):
                    continue
                self.store.insert(StoreEntry(bundle, now, None), now)

    def persist(self) -> None:
        """Rewrite both snapshot files atomically; called on every mutation."""
        bundles = [e.bundle for e in self.store.entries_in_order()]
        tmp = self.store_path + ".tmp"
        with open(tmp, "wb") as f:
            f.write(wire.encode_store_snapshot(bundles))
        os.replace(tmp, self.store_path)
        tmp = self.delivered_path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            for bid in sorted(self.store.delivered_ids, key=lambda b: b.sort_key):
                f.write(f"{bid.source.uri} {bid.creation_ms} {bid.seq}\n")
        os.replace(tmp, self.delivered_path)

    # -- session-facing state --------------------------------------------------

    def snapshot(self, now_s: float):
        """Purged offers, summary entries and routing meta, under the guard."""
        with self.lock:
            self.store.purge_expired(now_s)
            offers = self.store.offers()
            summary = list(offers)
            summary.extend((bid, self.eid) for bid in
                           sorted(self.store.delivered_ids, key=lambda b: b.sort_key))
            meta = self.agent.meta(now_s)
            return offers, summary, meta

    def request_plan(self, peer_eid: EndpointId, peer_summary, peer_meta,
                     my_meta) -> list[BundleId]:
        """What to REQUEST: shared decision path applied to the peer's offer."""
        peer_offers = [(bid, dest) for bid, dest in peer_summary if dest != peer_eid]
        with self.lock:
            known = self.store.known_ids()
        return plan_transfers(peer_offers, peer_meta, my_meta, self.eid, known)

    def owe_plan(self, peer_eid: EndpointId, my_offers, my_meta, peer_summary,
                 peer_meta) -> list[BundleId]:
        """What the peer will REQUEST from us, computed symmetrically."""
        peer_known = {bid for bid, _ in peer_summary}
        return plan_transfers(my_offers, my_meta, peer_meta, peer_eid, peer_known)

    def handle_incoming_bundle(self, bundle: Bundle, peer_eid: EndpointId) -> None:
        now = self.clock_fn()
        with self.lock:
            if bundle.expired(now):
                log.debug("dropping expired bundle %s", bundle.id_text)
                return
            if bundle.dest == self.eid:
                if bundle.id in self.store.delivered_ids:
                    return
                self._deliver_to_inbox(bundle)
                self.store.mark_delivered(bundle.id)
                self.persist()
                log.info("delivered %s to inbox", bundle.id_text)
            else:
                outcome = self.store.insert(StoreEntry(bundle, now, peer_eid), now)
                if outcome.accepted:
                    self.persist()
                    log.info("stored %s (%d B) from %s",
                             bundle.id_text, bundle.size_bytes, peer_eid.uri)
                else:
                    log.debug("refused %s: %s", bundle.id_text, outcome.value)

    def _deliver_to_inbox(self, bundle: Bundle) -> None:
        name = f"{bundle.id.source.name}.{bundle.id.creation_ms}.{bundle.id.seq}"
        path = os.path.join(self.cfg.inbox_dir, name)
        tmp = path + ".tmp"
        with open(tmp, "wb") as f:
            f.write(bundle.payload or b"")
        os.replace(tmp, path)

    def get_bundle(self, bid: BundleId) -> Bundle | None:
        with self.lock:
            entry = self.store.get(bid)
            if entry is None or entry.bundle.expired(self.clock_fn()):
                return None
            return entry.bundle

    # -- application spool ---------------------------------------------------------

    def submit_outbox_file(self, path: str) -> str:
        """Turn an outbox file `<dest-name>.<seq>` into a locally stored bundle.

        Returns 'sent', 'rejected' or 'retry' (capacity refusal keeps the
        file in place for the next scan).
        """
        filename = os.path.basename(path)
        dest_name, _, seq_text = filename.rpartition(".")
        try:
            seq = int(seq_text)
            dest = parse_endpoint(f"dtn://{dest_name}")
        except ValueError:
            return "rejected"
        if dest == self.eid:
            return "rejected"
        with open(path, "rb") as f:
            payload = f.read()
        if not payload or len(payload) > self.cfg.max_payload_bytes:
            return "rejected"
        now = self.clock_fn()
        with self.lock:
            creation_ms = int(now * 1000)
            bid = BundleId(self.eid, creation_ms, seq)
            while bid in self.store or bid in self.store.delivered_ids:
                creation_ms += 1
                bid = BundleId(self.eid, creation_ms, seq)
            bundle = Bundle(bid, dest, ttl_s=self.cfg.ttl_s,
                            size_bytes=len(payload), payload=payload)
            outcome = self.store.insert(StoreEntry(bundle, now, None), now)
            if outcome.accepted:
                self.persist()
                log.info("submitted %s -> %s (%d B)", bundle.id_text, dest.uri,
                         len(payload))
                return "sent"
            if outcome is outcome.CAPACITY:
                return "retry"
            return "rejected"

    def roll_to(self, now_s: float, last_rolled_s: float) -> float:
        """Fire any daily-sample rolls between last_rolled_s and now_s."""
        sl = SimClock().sample_length_s
        boundary = (int(last_rolled_s // sl) + 1) * sl
        with self.lock:
            while boundary <= now_s:
                self.agent.roll_sample(boundary)
                last_rolled_s = boundary
                boundary += sl
        return last_rolled_s


class SessionError(RuntimeError):
    pass


def run_session(channel: FrameChannel, state: NodeState,
                expected_peer: EndpointId | None = None) -> EndpointId:
    """Drive one bundle-exchange session over an open channel.

    Returns the peer endpoint on clean completion; raises SessionError on
    timeout or protocol violation (the caller applies the holdoff either way).
    Incoming frames are drained by a reader thread so large transfers in both
    directions cannot deadlock; store mutations take the node guard per frame.
    """
    inbox: queue.Queue = queue.Queue()
    peer_holder: dict = {}

    def reader() -> None:
        try:
            while True:
                frame_type, body = channel.read_frame()
                if frame_type == wire.FRAME_BUNDLE:
                    peer = peer_holder.get("eid")
                    if peer is None:
                        raise WireError("BUNDLE before HELLO")
                    state.handle_incoming_bundle(wire.decode_bundle_body(body), peer)
                else:
                    inbox.put(("frame", frame_type, body))
                if frame_type == wire.FRAME_BYE:
                    return
        except (WireError, ConnectionError, OSError) as e:
            inbox.put(("error", e))

    reader_thread = threading.Thread(target=reader, daemon=True)
    reader_thread.start()
    timeout = state.cfg.session_timeout_s

    def expect(*frame_types: int) -> tuple[int, bytes]:
        try:
            item = inbox.get(timeout=timeout)
        except queue.Empty:
            raise SessionError("session idle timeout") from None
        if item[0] == "error":
            raise SessionError(f"session aborted: {item[1]}")
        _, frame_type, body = item
        if frame_type not in frame_types:
            raise SessionError(f"unexpected frame type {frame_type:#x}")
        return frame_type, body

    now = state.clock_fn()
    channel.send(wire.encode_hello(state.eid))
    _, hello_body = expect(wire.FRAME_HELLO)
    peer_eid = wire.decode_hello_body(hello_body)
    if peer_eid == state.eid:
        raise SessionError("peer claims our own endpoint")
    if expected_peer is not None and peer_eid != expected_peer:
        raise SessionError(f"peer is {peer_eid.uri}, expected {expected_peer.uri}")
    peer_holder["eid"] = peer_eid

    with state.lock:
        state.agent.begin_encounter(peer_eid, now)
        offers, summary, my_meta = state.snapshot(now)
    try:
        channel.send(wire.encode_meta(my_meta))
        channel.send(wire.encode_summary(summary))
        _, meta_body = expect(wire.FRAME_ROUTING_META)
        peer_meta = wire.decode_meta_body(meta_body)
        _, summary_body = expect(wire.FRAME_SUMMARY)
        peer_summary = wire.decode_summary_body(summary_body)

        with state.lock:
            state.agent.absorb_meta(peer_eid, peer_meta, now)
        want = state.request_plan(peer_eid, peer_summary, peer_meta, my_meta)
        owe = state.owe_plan(peer_eid, offers, my_meta, peer_summary, peer_meta)

        if want:
            channel.send(wire.encode_request(want))
        peer_done = False
        if owe:
            # The peer may skip its predicted REQUEST if a concurrent session
            # already gave it those bundles; its BYE then arrives instead.
            frame_type, request_body = expect(wire.FRAME_REQUEST, wire.FRAME_BYE)
            if frame_type == wire.FRAME_REQUEST:
                for bid in wire.decode_request_body(request_body):
                    bundle = state.get_bundle(bid)
                    if bundle is not None:
                        channel.send(wire.encode_bundle(bundle))
            else:
                peer_done = True
        channel.send(wire.encode_bye())
        # Bundles we asked for stream in until the peer's BYE; the reader
        # inserts them as they arrive.
        if not peer_done:
            expect(wire.FRAME_BYE)
        return peer_eid
    finally:
        # The session interval counts as contact time for routine learning.
        end = state.clock_fn()
        with state.lock:
            state.agent.end_encounter(peer_eid, end)
        reader_thread.join(timeout=1.0)


class NodeDaemon:
    """Threads: beacon sender, beacon receiver, TCP acceptor, outbox scanner."""

    def __init__(self, cfg: NodeConfig, clock_fn=time.time):
        self.cfg = cfg
        self.state = NodeState(cfg, clock_fn)
        self.eid = self.state.eid
        self.running = threading.Event()
        self._stop = threading.Event()
        self.holdoff_until: dict[str, float] = {}
        self.active_sessions: set[str] = set()
        self._session_guard = threading.Lock()
        self._threads: list[threading.Thread] = []
        self._listen_sock: socket.socket | None = None
        self._beacon_sock: socket.socket | None = None
        self._last_rolled = 0.0

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> None:
        cfg = self.cfg
        try:
            self._listen_sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            self._listen_sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            self._listen_sock.bind(("0.0.0.0", cfg.listen_port))
            self._listen_sock.listen(8)
        except OSError as e:
            raise NodeStartError(f"cannot listen on {cfg.listen_port}: {e}") from None
        try:
            self._beacon_sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            self._beacon_sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            if hasattr(socket, "SO_REUSEPORT"):
                self._beacon_sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEPORT, 1)
            self._beacon_sock.setsockopt(socket.SOL_SOCKET, socket.SO_BROADCAST, 1)
            self._beacon_sock.bind(("0.0.0.0", cfg.beacon_port))
            self._beacon_sock.settimeout(0.5)
        except OSError as e:
            self._listen_sock.close()
            raise NodeStartError(f"cannot bind beacon port {cfg.beacon_port}: {e}") from None
        now = self.state.clock_fn()
        sl = SimClock().sample_length_s
        self._last_rolled = (now // sl) * sl
        self.running.set()
        for target in (self._beacon_send_loop, self._beacon_recv_loop,
                       self._accept_loop, self._spool_loop):
            t = threading.Thread(target=target, daemon=True)
            t.start()
            self._threads.append(t)
        log.info("node %s up: session port %d, beacon port %d, router %s",
                 self.eid.uri, cfg.listen_port, cfg.beacon_port, cfg.router)

    def stop(self) -> None:
        self.running.clear()
        self._stop.set()
        if self._listen_sock is not None:
            self._listen_sock.close()
        if self._beacon_sock is not None:
            self._beacon_sock.close()
        for t in self._threads:
            t.join(timeout=2.0)
        with self.state.lock:
            self.state.persist()
        log.info("node %s stopped, store persisted", self.eid.uri)

    def run_forever(self) -> None:
        self.start()
        try:
            while self.running.is_set():
                time.sleep(0.2)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    # -- discovery ------------------------------------------------------------

    def _beacon_targets(self) -> list[tuple[str, int]]:
        if self.cfg.beacon_targets:
            return self.cfg.beacon_targets
        return [(self.cfg.beacon_addr, self.cfg.beacon_port)]

    def _beacon_send_loop(self) -> None:
        beacon = wire.encode_beacon(self.eid, self.cfg.listen_port)
        while self.running.is_set():
            for target in self._beacon_targets():
                try:
                    self._beacon_sock.sendto(beacon, target)
                except OSError as e:
                    log.debug("beacon send to %s failed: %s", target, e)
            self._housekeeping()
            self._stop.wait(self.cfg.beacon_interval_s)

    def _beacon_recv_loop(self) -> None:
        while self.running.is_set():
            try:
                data, addr = self._beacon_sock.recvfrom(2048)
            except socket.timeout:
                continue
            except OSError:
                return
            try:
                peer_eid, listen_port = wire.decode_beacon(data)
            except WireError:
                continue  # malformed beacons are ignored silently
            if peer_eid == self.eid:
                continue
            self._maybe_initiate(peer_eid, addr[0], listen_port)

    def _maybe_initiate(self, peer_eid: EndpointId, host: str, port: int) -> None:
        if self.eid.uri >= peer_eid.uri:
            return  # the lexicographically smaller endpoint initiates
        now = self.state.clock_fn()
        with self._session_guard:
            if self.holdoff_until.get(peer_eid.uri, 0.0) > now:
                return
            if peer_eid.uri in self.active_sessions:
                return
            self.active_sessions.add(peer_eid.uri)
        t = threading.Thread(target=self._initiate, args=(peer_eid, host, port),
                             daemon=True)
        t.start()

    def _initiate(self, peer_eid: EndpointId, host: str, port: int) -> None:
        log.debug("initiating session with %s at %s:%d", peer_eid.uri, host, port)
        try:
            sock = socket.create_connection((host, port),
                                            timeout=self.cfg.session_timeout_s)
        except OSError as e:
            log.debug("connect to %s failed: %s", peer_eid.uri, e)
            with self._session_guard:
                self.active_sessions.discard(peer_eid.uri)
            return
        self._run_session(sock, expected_peer=peer_eid, registered=True)

    # -- sessions ----------------------------------------------------------------

    def _accept_loop(self) -> None:
        while self.running.is_set():
            try:
                sock, _ = self._listen_sock.accept()
            except OSError:
                return
            threading.Thread(target=self._run_session, args=(sock,),
                             daemon=True).start()

    def _run_session(self, sock: socket.socket,
                     expected_peer: EndpointId | None = None,
                     registered: bool = False) -> None:
        tap = SessionTap() if self.cfg.capture_dir else None
        channel = FrameChannel(sock, self.cfg.session_timeout_s, tap)
        peer_uri = expected_peer.uri if expected_peer else None
        try:
            peer = run_session(channel, self.state, expected_peer)
            peer_uri = peer.uri
            log.info("session with %s complete", peer_uri)
        except (SessionError, WireError, ConnectionError, OSError) as e:
            log.info("session failed: %s", e)
        finally:
            channel.close()
            now = self.state.clock_fn()
            if peer_uri is not None:
                with self._session_guard:
                    self.holdoff_until[peer_uri] = now + self.cfg.holdoff_s
                    if registered or peer_uri in self.active_sessions:
                        self.active_sessions.discard(peer_uri)
            if tap is not None and peer_uri is not None:
                self._write_capture(peer_uri, tap)

    def _write_capture(self, peer_uri: str, tap: SessionTap) -> None:
        os.makedirs(self.cfg.capture_dir, exist_ok=True)
        stamp = int(self.state.clock_fn() * 1000)
        name = peer_uri.replace("dtn://", "")
        for suffix, data in (("sent", tap.sent), ("recv", tap.received)):
            path = os.path.join(self.cfg.capture_dir, f"{name}-{stamp}.{suffix}.bin")
            with open(path, "wb") as f:
                f.write(bytes(data))

    # -- application spool ---------------------------------------------------------

    def _spool_loop(self) -> None:
        outbox = self.cfg.outbox_dir
        sent_dir = os.path.join(outbox, "sent")
        rejected_dir = os.path.join(outbox, "rejected")
        os.makedirs(sent_dir, exist_ok=True)
        os.makedirs(rejected_dir, exist_ok=True)
        while self.running.is_set():
            try:
                names = sorted(os.listdir(outbox))
            except OSError:
                names = []
            for name in names:
                path = os.path.join(outbox, name)
                if not os.path.isfile(path):
                    continue
                verdict = self.state.submit_outbox_file(path)
                if verdict == "sent":
                    os.replace(path, os.path.join(sent_dir, name))
                elif verdict == "rejected":
                    os.replace(path, os.path.join(rejected_dir, name))
                    log.info("rejected outbox file %s", name)
            self._stop.wait(0.5)

    def _housekeeping(self) -> None:
        now = self.state.clock_fn()
        self._last_rolled = self.state.roll_to(now, self._last_rolled)
        with self.state.lock:
            if self.state.store.purge_expired(now):
                self.state.persist()
