"""Exception types shared across the runtime."""


class FedcoordError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(FedcoordError):
    """Bad federation description: dangling endpoints, duplicate channels,
    missing latency bounds, malformed durations."""


class WireError(FedcoordError):
    """Malformed frame: unknown type code, truncation, length mismatch."""


class ProtocolError(FedcoordError):
    """A peer broke the coordination contract."""


class TardyMessageError(ProtocolError):
    """A tagged message arrived at or before the receiver's current tag
    under centralized coordination, which promises this never happens."""


class InfeasibleConstraintsError(FedcoordError):
    """The offset inequalities admit no finite solution (a positive-weight
    cycle in the lateness graph)."""


class DeadlockError(FedcoordError):
    """Simulation quiesced with live federates still waiting."""
