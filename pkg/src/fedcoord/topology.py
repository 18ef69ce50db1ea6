"""Federation topology: who talks to whom, over which kind of connection.

The derived quantity everything else consumes is the minimum-delay matrix:
entry (i, j) is the smallest `after` delay over the logical connections from
federate i to federate j, or None when no logical connection exists.
Physical connections deliberately do not appear in it; they carry no tags
and never constrain tag advancement.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from fedcoord.exceptions import ConfigError


class ConnectionKind(enum.Enum):
    LOGICAL = "logical"
    PHYSICAL = "physical"


@dataclass(frozen=True)
class FederateSpec:
    id: int
    name: str
    has_physical_action: bool = False
    # solved offsets are raised to this floor when set (decentralized mode)
    stp_offset_override: int | None = None
    # (reaction id, deadline ns) pairs applied by config-driven behaviors
    deadlines: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class Connection:
    from_federate: int
    from_channel: int
    to_federate: int
    to_channel: int
    kind: ConnectionKind = ConnectionKind.LOGICAL
    after: int = 0


@dataclass(frozen=True)
class FederationGraph:
    federates: tuple[FederateSpec, ...]
    connections: tuple[Connection, ...]
    min_delay: tuple[tuple[int | None, ...], ...] = field(compare=False)

    @property
    def n(self) -> int:
        return len(self.federates)

    def upstream(self, f: int) -> list[int]:
        """Ids with a logical connection into f."""
        return [u for u in range(self.n) if self.min_delay[u][f] is not None]

    def downstream(self, f: int) -> list[int]:
        """Ids f has a logical connection into."""
        return [d for d in range(self.n) if self.min_delay[f][d] is not None]

    def inputs_of(self, f: int) -> list[Connection]:
        return [c for c in self.connections if c.to_federate == f]

    def outputs_of(self, f: int) -> list[Connection]:
        return [c for c in self.connections if c.from_federate == f]

    def by_name(self, name: str) -> FederateSpec:
        for spec in self.federates:
            if spec.name == name:
                return spec
        raise ConfigError(f"no federate named {name!r}")

    def min_delay_flat(self) -> list[int]:
        """Kernel encoding: row-major n*n, -1 where no logical connection."""
        out = []
        for row in self.min_delay:
            out.extend(-1 if v is None else v for v in row)
        return out


def build_graph(
    federates: list[FederateSpec], connections: list[Connection]
) -> FederationGraph:
    """Validate a federation description and derive the min-delay matrix."""
    n = len(federates)
    ids = [f.id for f in federates]
    if sorted(ids) != list(range(n)):
        raise ConfigError(f"federate ids must be 0..{n - 1}, got {sorted(ids)}")
    names = [f.name for f in federates]
    if len(set(names)) != n:
        raise ConfigError("duplicate federate names")

    seen_inputs: set[tuple[int, int]] = set()
    for c in connections:
        for endpoint in (c.from_federate, c.to_federate):
            if not 0 <= endpoint < n:
                raise ConfigError(f"connection references unknown federate {endpoint}")
        if c.from_channel < 0 or c.to_channel < 0:
            raise ConfigError("negative channel index")
        if c.after < 0:
            raise ConfigError("negative connection delay")
        if c.kind is ConnectionKind.PHYSICAL and c.after != 0:
            raise ConfigError("physical connections cannot carry a delay")
        key = (c.to_federate, c.to_channel)
        if key in seen_inputs:
            raise ConfigError(
                f"duplicate binding for input channel {c.to_channel} "
                f"of federate {federates[c.to_federate].name}"
            )
        seen_inputs.add(key)

    ordered = tuple(sorted(federates, key=lambda f: f.id))
    matrix: list[list[int | None]] = [[None] * n for _ in range(n)]
    for c in connections:
        if c.kind is not ConnectionKind.LOGICAL:
            continue
        cur = matrix[c.from_federate][c.to_federate]
        if cur is None or c.after < cur:
            matrix[c.from_federate][c.to_federate] = c.after

    return FederationGraph(
        federates=ordered,
        connections=tuple(connections),
        min_delay=tuple(tuple(row) for row in matrix),
    )
