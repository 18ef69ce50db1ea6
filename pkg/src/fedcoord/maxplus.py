"""Safe-to-process offsets via max-plus linear algebra.

A receiver may handle an event tagged g once its own physical clock passes
g.time + offset. The offset must absorb, for every upstream sender: how long
the sender may sit on the tag before launching (launch lag), network
latency, and clock disagreement, minus the connection's logical delay.
Those per-edge sums form a matrix over the (max, +) semiring; the offset
vector is its Kleene-star closure applied to the zero vector, the least
nonnegative solution of

    offset[j] = max(0, max_i(offset[i] + lateness[j][i]))

which exists exactly when no directed cycle has positive total weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from fedcoord.exceptions import ConfigError, InfeasibleConstraintsError
from fedcoord.topology import FederationGraph

# Additive identity of (max, +): absent edge / unreachable pair.
NO_EDGE = None

Weight = int | None


def _wadd(a: Weight, b: Weight) -> Weight:
    if a is None or b is None:
        return None
    return a + b


def _wmax(a: Weight, b: Weight) -> Weight:
    if a is None:
        return b
    if b is None:
        return a
    return a if a >= b else b


@dataclass(frozen=True)
class LatencyBounds:
    """Declared per-pair bounds: launch lag, network latency, clock error.

    Lookup falls back to `default` when a pair has no entry; with no default
    either, the pair is an error. Clock error of a federate against itself
    is zero by definition regardless of entries.
    """

    entries: dict[tuple[int, int], tuple[int, int, int]] = field(default_factory=dict)
    default: tuple[int, int, int] | None = None

    def _get(self, i: int, j: int) -> tuple[int, int, int]:
        try:
            return self.entries[(i, j)]
        except KeyError:
            if self.default is None:
                raise ConfigError(f"no latency bounds for federate pair ({i}, {j})")
            return self.default

    def launch_lag(self, i: int, j: int) -> int:
        return self._get(i, j)[0]

    def network_latency(self, i: int, j: int) -> int:
        return self._get(i, j)[1]

    def clock_error(self, i: int, j: int) -> int:
        if i == j:
            return 0
        return self._get(i, j)[2]


class MaxPlusMatrix:
    """Square matrix over (max, +); rows[j][i] weights the edge i -> j."""

    __slots__ = ("n", "rows")

    def __init__(self, n: int, rows: list[list[Weight]] | None = None):
        self.n = n
        if rows is None:
            rows = [[NO_EDGE] * n for _ in range(n)]
        if len(rows) != n or any(len(r) != n for r in rows):
            raise ValueError("rows do not form an n x n matrix")
        self.rows = [list(r) for r in rows]

    @classmethod
    def identity(cls, n: int) -> "MaxPlusMatrix":
        m = cls(n)
        for i in range(n):
            m.rows[i][i] = 0
        return m

    def matmul(self, other: "MaxPlusMatrix") -> "MaxPlusMatrix":
        if self.n != other.n:
            raise ValueError("size mismatch")
        n = self.n
        out = MaxPlusMatrix(n)
        for j in range(n):
            srow = self.rows[j]
            orow = out.rows[j]
            for i in range(n):
                acc: Weight = None
                for k in range(n):
                    acc = _wmax(acc, _wadd(srow[k], other.rows[k][i]))
                orow[i] = acc
        return out

    def combine(self, other: "MaxPlusMatrix") -> "MaxPlusMatrix":
        """Elementwise max (the semiring sum)."""
        if self.n != other.n:
            raise ValueError("size mismatch")
        out = MaxPlusMatrix(self.n)
        for j in range(self.n):
            for i in range(self.n):
                out.rows[j][i] = _wmax(self.rows[j][i], other.rows[j][i])
        return out

    def apply(self, vec: list[Weight]) -> list[Weight]:
        """Matrix-vector product: out[j] = max_i(rows[j][i] + vec[i])."""
        if len(vec) != self.n:
            raise ValueError("size mismatch")
        out: list[Weight] = []
        for j in range(self.n):
            acc: Weight = None
            for i in range(self.n):
                acc = _wmax(acc, _wadd(self.rows[j][i], vec[i]))
            out.append(acc)
        return out

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, MaxPlusMatrix)
            and self.n == other.n
            and self.rows == other.rows
        )

    def __repr__(self) -> str:
        body = "; ".join(
            " ".join("-inf" if v is None else str(v) for v in row) for row in self.rows
        )
        return f"MaxPlusMatrix({self.n}, [{body}])"


def lateness_matrix(graph: FederationGraph, bounds: LatencyBounds) -> MaxPlusMatrix:
    """Edge weights: how much later than its tag a message may arrive.

    weight(i -> j) = launch_lag + network_latency + clock_error - min_delay,
    one entry per logically connected pair, stored at rows[j][i].
    """
    n = graph.n
    m = MaxPlusMatrix(n)
    for i in range(n):
        for j in range(n):
            a = graph.min_delay[i][j]
            if a is None:
                continue
            m.rows[j][i] = (
                bounds.launch_lag(i, j)
                + bounds.network_latency(i, j)
                + bounds.clock_error(i, j)
                - a
            )
    return m


def max_cycle_weight(m: MaxPlusMatrix) -> int | None:
    """Largest total weight over closed walks of length <= n; None if acyclic.

    Read off the diagonals of m, m^2, ..., m^n. Whenever every simple cycle
    has nonpositive weight this equals the best simple cycle exactly
    (repeating a cycle can only lose weight), and it is positive if and only
    if some simple cycle is positive, which is all the feasibility check
    needs. The exact positive maximum over simple cycles is not computed;
    that problem is hard and the value would only decorate an error message.
    """
    best: Weight = None
    power = m
    for _ in range(m.n):
        for i in range(m.n):
            best = _wmax(best, power.rows[i][i])
        power = power.matmul(m)
    return best


def kleene_star(m: MaxPlusMatrix) -> MaxPlusMatrix:
    """I + m + m^2 + ... + m^(n-1), the all-best-paths closure.

    Defined only when every cycle has weight <= 0; longer paths then never
    beat their simple sub-paths, so powers beyond n-1 add nothing.
    """
    w = max_cycle_weight(m)
    if w is not None and w > 0:
        raise InfeasibleConstraintsError(
            f"positive-weight cycle (total {w} ns): offsets do not stabilize"
        )
    acc = MaxPlusMatrix.identity(m.n)
    power = MaxPlusMatrix.identity(m.n)
    for _ in range(m.n - 1):
        power = power.matmul(m)
        acc = acc.combine(power)
    return acc


def solve_stp_offsets(graph: FederationGraph, bounds: LatencyBounds) -> list[int]:
    """Least nonnegative offset vector, with per-federate floors applied.

    Raises InfeasibleConstraintsError when the lateness graph has a
    positive-weight cycle.
    """
    star = kleene_star(lateness_matrix(graph, bounds))
    offsets = []
    for j in range(graph.n):
        # star times the zero vector; the identity's diagonal keeps it >= 0
        s = max(v for v in star.rows[j] if v is not None)
        floor = graph.federates[j].stp_offset_override
        if floor is not None and floor > s:
            s = floor
        offsets.append(s)
    return offsets
