"""Opportunistic DTN toolkit.

A store-carry-and-forward bundle node with pluggable social-aware routing,
a deterministic contact-trace simulator with a delivery/cost metrics
harness, and a live-node mode over datagram discovery and stream sessions.
"""

from .config import ConfigError, ExperimentConfig, load_config, parse_config_text
from .engine import RunSetup, run
from .metrics import AggregateMetrics, MetricsAccumulator, RunMetrics, aggregate
from .routing import (DlifeAgent, EpidemicAgent, ProphetAgent, RoutingMeta,
                      plan_transfers, should_replicate)
from .store import BundleStore, InsertOutcome, StoreEntry
from .types import (Bundle, BundleId, ContactEvent, EndpointId,
                    MalformedEndpointError, SimClock, align_epoch, clock_locate,
                    node_eid, normalize_contacts, parse_endpoint)
from .workload import (SyntheticParams, TrafficSpec, generate_synthetic_contacts,
                       generate_traffic)

__version__ = "0.1.0"

__all__ = [
    "AggregateMetrics", "Bundle", "BundleId", "BundleStore", "ConfigError",
    "ContactEvent", "DlifeAgent", "EndpointId", "EpidemicAgent",
    "ExperimentConfig", "InsertOutcome", "MalformedEndpointError",
    "MetricsAccumulator", "ProphetAgent", "RoutingMeta", "RunMetrics",
    "RunSetup", "SimClock", "StoreEntry", "SyntheticParams", "TrafficSpec",
    "aggregate", "align_epoch", "clock_locate", "generate_synthetic_contacts",
    "generate_traffic", "load_config", "node_eid", "normalize_contacts",
    "parse_config_text", "parse_endpoint", "plan_transfers", "run",
    "should_replicate",
]
