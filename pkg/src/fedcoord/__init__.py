"""fedcoord: federated discrete-event coordination runtime.

Federates execute reactions in superdense-time tag order. A central
coordinator (grants) or peer-to-peer safe-to-process offsets (physical
clock waits) decide when a tag may be processed; either way every run of a
federation processes the same events at the same tags in the same order,
up to declared fault handling.
"""

from fedcoord._kernel import BACKEND as KERNEL_BACKEND
from fedcoord._kernel import available_backends
from fedcoord.clocksync import ClockState, ClockSyncConfig, SyncRound, SyncTrial
from fedcoord.exceptions import (
    ConfigError,
    DeadlockError,
    FedcoordError,
    InfeasibleConstraintsError,
    ProtocolError,
    TardyMessageError,
    WireError,
)
from fedcoord.maxplus import (
    LatencyBounds,
    MaxPlusMatrix,
    kleene_star,
    lateness_matrix,
    max_cycle_weight,
    solve_stp_offsets,
)
from fedcoord.netsim import ClockModel, LinkModel, SimNetwork
from fedcoord.rti import Rti, decide_start_tag, downstream_grants, earliest_incoming_tags
from fedcoord.runtime import Federate, Reaction, ReactionContext, Trigger
from fedcoord.tags import (
    FOREVER,
    NEVER,
    Tag,
    format_duration,
    format_tag,
    parse_duration,
    tag_add_delay,
    tag_compare,
    tag_max,
    tag_min,
    tag_pred,
)
from fedcoord.topology import (
    Connection,
    ConnectionKind,
    FederateSpec,
    FederationGraph,
    build_graph,
)
from fedcoord.wire import (
    RTI_ID,
    MsgType,
    StreamDecoder,
    WireMessage,
    decode,
    encode,
    read_capture,
    write_capture,
)

__version__ = "0.1.0"

__all__ = [
    "ClockModel",
    "ClockState",
    "ClockSyncConfig",
    "Connection",
    "ConnectionKind",
    "ConfigError",
    "DeadlockError",
    "FOREVER",
    "FedcoordError",
    "Federate",
    "FederateSpec",
    "FederationGraph",
    "InfeasibleConstraintsError",
    "KERNEL_BACKEND",
    "LatencyBounds",
    "LinkModel",
    "MaxPlusMatrix",
    "MsgType",
    "NEVER",
    "ProtocolError",
    "RTI_ID",
    "Reaction",
    "ReactionContext",
    "Rti",
    "SimNetwork",
    "StreamDecoder",
    "SyncRound",
    "SyncTrial",
    "Tag",
    "TardyMessageError",
    "Trigger",
    "WireError",
    "WireMessage",
    "available_backends",
    "build_graph",
    "decide_start_tag",
    "decode",
    "downstream_grants",
    "earliest_incoming_tags",
    "encode",
    "format_duration",
    "format_tag",
    "kleene_star",
    "lateness_matrix",
    "max_cycle_weight",
    "parse_duration",
    "read_capture",
    "solve_stp_offsets",
    "tag_add_delay",
    "tag_compare",
    "tag_max",
    "tag_min",
    "tag_pred",
    "write_capture",
]
