"""Contact trace ingestion and export.

Two text formats, `#` comments allowed in both:

* pairwise intervals: `<idA> <idB> <start_s> <end_s>` per line;
* connection events: `<time> CONN <idA> <idB> up|down` per line.

Node ids are arbitrary tokens, compacted to dense indices in order of first
appearance; the mapping is returned (and written as a sidecar) so reports
stay traceable to the raw ids. Files written here carry a `#nodes` directive
pinning the id order, which makes write -> parse reproduce indices exactly;
third-party files without it rely on first-appearance order.
"""

from __future__ import annotations

from dataclasses import dataclass

from .types import ContactEvent, node_eid, normalize_contacts


class TraceParseError(ValueError):
    """Malformed trace input; message carries the line number."""


@dataclass
class NodeMap:
    """Original trace id <-> dense index in first-appearance order."""

    to_dense: dict[str, int]

    @property
    def count(self) -> int:
        return len(self.to_dense)

    def dense(self, original: str) -> int:
        idx = self.to_dense.get(original)
        if idx is None:
            idx = len(self.to_dense)
            self.to_dense[original] = idx
        return idx

    def originals(self) -> list[str]:
        by_idx = sorted(self.to_dense.items(), key=lambda kv: kv[1])
        return [orig for orig, _ in by_idx]

    def sidecar_text(self) -> str:
        lines = ["# original dense endpoint"]
        for orig, idx in sorted(self.to_dense.items(), key=lambda kv: kv[1]):
            lines.append(f"{orig} {idx} {node_eid(idx).uri}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def identity(count: int) -> "NodeMap":
        return NodeMap({str(i): i for i in range(count)})


def _comment_body(line: str) -> str | None:
    stripped = line.lstrip()
    if stripped.startswith("#"):
        return stripped[1:].strip()
    return None


def _handle_nodes_directive(body: str, nodemap: NodeMap, lineno: int) -> bool:
    if not body.startswith("nodes "):
        return False
    for token in body[len("nodes "):].split():
        if token in nodemap.to_dense:
            raise TraceParseError(f"line {lineno}: duplicate node {token!r} in #nodes")
        nodemap.dense(token)
    return True


def _number(token: str, lineno: int, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise TraceParseError(f"line {lineno}: bad {what} {token!r}") from None
    if value != value or value in (float("inf"), float("-inf")):
        raise TraceParseError(f"line {lineno}: non-finite {what} {token!r}")
    return value


def parse_pairwise_intervals(text: str, time_scale: float = 1.0
                             ) -> tuple[list[ContactEvent], NodeMap]:
    nodemap = NodeMap({})
    contacts: list[ContactEvent] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        comment = _comment_body(raw)
        if comment is not None:
            _handle_nodes_directive(comment, nodemap, lineno)
            continue
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise TraceParseError(f"line {lineno}: expected 'idA idB start end'")
        start = _number(parts[2], lineno, "start time") * time_scale
        end = _number(parts[3], lineno, "end time") * time_scale
        if end <= start:
            raise TraceParseError(f"line {lineno}: end {parts[3]} <= start {parts[2]}")
        if start < 0:
            raise TraceParseError(f"line {lineno}: negative start time")
        a = nodemap.dense(parts[0])
        b = nodemap.dense(parts[1])
        if a == b:
            raise TraceParseError(f"line {lineno}: contact of node {parts[0]} with itself")
        contacts.append(ContactEvent(a, b, start, end))
    return normalize_contacts(contacts), nodemap


def parse_connection_events(text: str, time_scale: float = 1.0
                            ) -> tuple[list[ContactEvent], NodeMap]:
    nodemap = NodeMap({})
    open_at: dict[tuple[int, int], float] = {}
    contacts: list[ContactEvent] = []
    max_time = 0.0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        comment = _comment_body(raw)
        if comment is not None:
            _handle_nodes_directive(comment, nodemap, lineno)
            continue
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5 or parts[1] != "CONN" or parts[4] not in ("up", "down"):
            raise TraceParseError(f"line {lineno}: expected '<time> CONN idA idB up|down'")
        t = _number(parts[0], lineno, "time") * time_scale
        if t < 0:
            raise TraceParseError(f"line {lineno}: negative time")
        max_time = max(max_time, t)
        a = nodemap.dense(parts[2])
        b = nodemap.dense(parts[3])
        if a == b:
            raise TraceParseError(f"line {lineno}: connection of node {parts[2]} with itself")
        pair = (a, b) if a < b else (b, a)
        if parts[4] == "up":
            if pair in open_at:
                raise TraceParseError(f"line {lineno}: up while already up for {parts[2]} {parts[3]}")
            open_at[pair] = t
        else:
            start = open_at.pop(pair, None)
            if start is None:
                raise TraceParseError(f"line {lineno}: down before up for {parts[2]} {parts[3]}")
            if t > start:
                contacts.append(ContactEvent(pair[0], pair[1], start, t))
    # Unmatched ups close at trace end; zero-length leftovers are dropped.
    for (a, b), start in open_at.items():
        if max_time > start:
            contacts.append(ContactEvent(a, b, start, max_time))
    return normalize_contacts(contacts), nodemap


def _fmt_time(t: float) -> str:
    if t == int(t):
        return str(int(t))
    return repr(t)


def write_pairwise_intervals(contacts: list[ContactEvent],
                             nodemap: NodeMap | None = None) -> str:
    """Inverse of parse_pairwise_intervals on normalized input.

    Without a nodemap, dense indices themselves are used as ids.
    """
    if nodemap is None:
        count = 1 + max((max(c.a, c.b) for c in contacts), default=-1)
        nodemap = NodeMap.identity(count)
    originals = nodemap.originals()
    lines = ["# pairwise-intervals: idA idB start_s end_s"]
    if originals:
        lines.append("#nodes " + " ".join(originals))
    for c in sorted(contacts, key=lambda c: (c.start_s, c.a, c.b, c.end_s)):
        lines.append(f"{originals[c.a]} {originals[c.b]} "
                     f"{_fmt_time(c.start_s)} {_fmt_time(c.end_s)}")
    return "\n".join(lines) + "\n"


def load_trace_file(path: str, time_scale: float = 1.0
                    ) -> tuple[list[ContactEvent], NodeMap]:
    """Read a pairwise-interval trace file as UTF-8."""
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise TraceParseError(f"cannot read trace {path}: {e}") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise TraceParseError(f"trace {path} is not valid UTF-8: {e}") from None
    return parse_pairwise_intervals(text, time_scale)
