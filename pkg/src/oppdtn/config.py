"""Experiment configuration: `key = value` files under [section] headers.

The key schema below is the single source of truth: the parser, the
defaults, and the documentation table are all generated from it, so they
cannot drift. Unknown sections or keys are hard errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, NamedTuple


class ConfigError(ValueError):
    """Invalid configuration; message names the offending section/key."""


class KeySpec(NamedTuple):
    section: str
    key: str
    type: str  # int | float | str | bool | ints | strs
    default: Any
    help: str


SCHEMA: list[KeySpec] = [
    KeySpec("scenario", "trace", "str", "", "pairwise-interval trace file; empty = synthetic"),
    KeySpec("scenario", "nodes", "int", 36, "node count for synthetic scenarios"),
    KeySpec("scenario", "communities", "int", 3, "balanced community count for synthetic scenarios"),
    KeySpec("scenario", "days", "int", 21, "synthetic scenario length in days"),
    KeySpec("scenario", "seed", "int", 7, "base seed for synthetic contact generation"),
    KeySpec("scenario", "lambda_in", "float", 0.127, "hourly contact rate per intra-community pair"),
    KeySpec("scenario", "lambda_out", "float", 0.0159, "hourly contact rate per inter-community pair"),
    KeySpec("scenario", "mean_contact_s", "float", 90.0, "mean synthetic contact duration, seconds"),
    KeySpec("scenario", "activity_profile", "str", "diurnal",
            "hour-of-day multipliers: diurnal, flat, or 24 comma-separated floats"),
    KeySpec("scenario", "duration_s", "float", 0.0, "simulated seconds; 0 = auto (trace end / days)"),
    KeySpec("scenario", "time_scale", "float", 1.0, "multiply trace timestamps on ingest"),
    KeySpec("router", "types", "strs", ["dlife", "prophet", "epidemic"], "router matrix axis"),
    KeySpec("router", "dlife_samples", "int", 24, "daily samples T for social weights"),
    KeySpec("router", "dlife_damping", "float", 0.8, "importance damping factor"),
    KeySpec("router", "dlife_blend", "bool", True,
            "blend average durations across samples; off = current sample only"),
    KeySpec("router", "prophet_pinit", "float", 0.75, "predictability boost on direct encounter"),
    KeySpec("router", "prophet_beta", "float", 0.25, "transitivity scaling"),
    KeySpec("router", "prophet_gamma", "float", 0.98, "aging factor per time unit"),
    KeySpec("router", "prophet_time_unit_s", "float", 30.0, "aging time unit, seconds"),
    KeySpec("traffic", "messages", "int", 6000, "messages generated per run"),
    KeySpec("traffic", "size_min", "int", 1000, "minimum message size, bytes"),
    KeySpec("traffic", "size_max", "int", 100000, "maximum message size, bytes"),
    KeySpec("traffic", "start_s", "float", 0.0, "creation window start"),
    KeySpec("traffic", "end_s", "float", 0.0, "creation window end; 0 = scenario duration"),
    KeySpec("traffic", "ttls", "ints", [86400, 172800, 345600, 604800, 1814400], "TTL matrix axis, seconds"),
    KeySpec("traffic", "workload_seed", "int", 42, "seed for sizes and src/dest pairs; independent of run seeds"),
    KeySpec("node", "capacity_bytes", "int", 10_000_000, "per-node storage capacity; 0 = unlimited"),
    KeySpec("link", "bandwidth_bps", "float", 125000.0, "link bandwidth, bytes/second"),
    KeySpec("link", "setup_s", "float", 1.0, "per-transfer setup latency, seconds"),
    KeySpec("run", "seeds", "ints", [1, 2, 3, 4, 5], "run seed matrix axis"),
    KeySpec("run", "out", "str", "out", "output directory"),
    KeySpec("run", "cost_mode", "str", "replicas",
            "replicas: delivering hop counts; overhead: it does not"),
]

_BY_SECTION_KEY = {(k.section, k.key): k for k in SCHEMA}
SECTIONS = sorted({k.section for k in SCHEMA})
ROUTER_KINDS = ("dlife", "prophet", "epidemic")
COST_MODES = ("replicas", "overhead")


def _parse_value(spec: KeySpec, raw: str) -> Any:
    try:
        if spec.type == "int":
            return int(raw)
        if spec.type == "float":
            return float(raw)
        if spec.type == "bool":
            low = raw.strip().lower()
            if low in ("true", "on", "yes", "1"):
                return True
            if low in ("false", "off", "no", "0"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if spec.type == "ints":
            return [int(p) for p in raw.split(",") if p.strip() != ""]
        if spec.type == "strs":
            return [p.strip() for p in raw.split(",") if p.strip() != ""]
        return raw.strip()
    except ValueError as e:
        raise ConfigError(f"[{spec.section}] {spec.key}: {e}") from None


@dataclass
class ExperimentConfig:
    """Typed view over the full schema, with validation."""

    values: dict[tuple[str, str], Any] = field(default_factory=dict)

    def __getitem__(self, section_key: tuple[str, str]) -> Any:
        if section_key in self.values:
            return self.values[section_key]
        return _BY_SECTION_KEY[section_key].default

    def get(self, section: str, key: str) -> Any:
        return self[(section, key)]

    def validate(self) -> None:
        g = self.get
        if g("scenario", "trace") == "":
            if g("scenario", "nodes") < 2:
                raise ConfigError("[scenario] nodes: need at least 2 nodes")
            if g("scenario", "communities") < 1 or g("scenario", "communities") > g("scenario", "nodes"):
                raise ConfigError("[scenario] communities: must be in [1, nodes]")
            if g("scenario", "days") <= 0:
                raise ConfigError("[scenario] days: must be positive")
            if g("scenario", "lambda_in") < 0 or g("scenario", "lambda_out") < 0:
                raise ConfigError("[scenario] lambda_in/lambda_out: must be >= 0")
            if g("scenario", "mean_contact_s") <= 0:
                raise ConfigError("[scenario] mean_contact_s: must be positive")
        for kind in g("router", "types"):
            if kind not in ROUTER_KINDS:
                raise ConfigError(f"[router] types: unknown router {kind!r}")
        if not g("router", "types"):
            raise ConfigError("[router] types: at least one router required")
        if g("router", "dlife_samples") <= 0:
            raise ConfigError("[router] dlife_samples: must be positive")
        if not 0 < g("router", "prophet_pinit") < 1:
            raise ConfigError("[router] prophet_pinit: must be in (0, 1)")
        if not 0 < g("router", "prophet_gamma") <= 1:
            raise ConfigError("[router] prophet_gamma: must be in (0, 1]")
        if not 0 <= g("router", "prophet_beta") <= 1:
            raise ConfigError("[router] prophet_beta: must be in [0, 1]")
        if g("router", "prophet_time_unit_s") <= 0:
            raise ConfigError("[router] prophet_time_unit_s: must be positive")
        if g("traffic", "messages") < 0:
            raise ConfigError("[traffic] messages: must be >= 0")
        if g("traffic", "size_min") <= 0:
            raise ConfigError("[traffic] size_min: must be positive")
        if g("traffic", "size_min") > g("traffic", "size_max"):
            raise ConfigError("[traffic] size_min: exceeds size_max")
        if not g("traffic", "ttls"):
            raise ConfigError("[traffic] ttls: at least one TTL required")
        if any(t <= 0 for t in g("traffic", "ttls")):
            raise ConfigError("[traffic] ttls: must be positive")
        if g("node", "capacity_bytes") < 0:
            raise ConfigError("[node] capacity_bytes: must be >= 0")
        if g("link", "bandwidth_bps") <= 0:
            raise ConfigError("[link] bandwidth_bps: must be positive")
        if g("link", "setup_s") < 0:
            raise ConfigError("[link] setup_s: must be >= 0")
        if not g("run", "seeds"):
            raise ConfigError("[run] seeds: at least one seed required")
        if g("run", "cost_mode") not in COST_MODES:
            raise ConfigError("[run] cost_mode: must be replicas or overhead")
        if g("scenario", "duration_s") < 0:
            raise ConfigError("[scenario] duration_s: must be >= 0")


def parse_config_text(text: str) -> ExperimentConfig:
    values: dict[tuple[str, str], Any] = {}
    section = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw_line!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, _, raw_value = line.partition("=")
        key = key.strip()
        spec = _BY_SECTION_KEY.get((section, key))
        if spec is None:
            raise ConfigError(f"line {lineno}: unknown key [{section}] {key}")
        values[(section, key)] = _parse_value(spec, raw_value.strip())
    cfg = ExperimentConfig(values)
    cfg.validate()
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config_text(text)


def config_docs_table() -> str:
    """Markdown table of every key, its default, and what it does."""
    lines = ["| key | default | description |", "| --- | --- | --- |"]
    for spec in SCHEMA:
        default = spec.default
        if isinstance(default, list):
            default = ",".join(str(v) for v in default)
        elif isinstance(default, bool):
            default = "true" if default else "false"
        lines.append(f"| {spec.section}.{spec.key} | `{default}` | {spec.help} |")
    return "\n".join(lines) + "\n"
