"""Deterministic simulated transport.

A single virtual timeline drives every node. Each directed link has a base
latency plus seeded uniform jitter; with FIFO enabled (the default) a frame
never overtakes an earlier frame on the same link. Identical seeds replay
identical delivery schedules, which is what makes whole-federation runs
reproducible byte for byte.

Nodes are duck-typed: they expose

    on_frame(msg, now) -> None     handle one delivered frame
    poll(now) -> int | None        advance; return next local wake time
    done -> bool

where `now` is the node's own clock reading (virtual time plus the node's
configured offset and drift). Nodes send by calling the port handed to them
at registration.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass

from fedcoord.exceptions import DeadlockError
from fedcoord.wire import RTI_ID, WireMessage, encode, write_capture


@dataclass(frozen=True)
class LinkModel:
    base_latency: int = 0
    jitter: int = 0
    fifo: bool = True
    bandwidth_bps: int = 0  # 0 = infinite; else frames occupy the lane


@dataclass(frozen=True)
class ClockModel:
    """True (uncorrected) clock of a node: local = virtual + offset + drift."""

    offset: int = 0
    drift_ppb: int = 0

    def read(self, virtual_now: int) -> int:
        return virtual_now + self.offset + (virtual_now * self.drift_ppb) // 10**9


class SimPort:
    """Send-side handle given to a node."""

    def __init__(self, net: "SimNetwork", node_id: int):
        self._net = net
        self._node_id = node_id

    def send(self, dst: int, msg: WireMessage) -> None:
        self._net._transmit(self._node_id, dst, msg)

    def now(self) -> int:
        return self._net.local_now(self._node_id)


_DELIVER = 0
_WAKE = 1


class SimNetwork:
    def __init__(self, seed: int = 0, default_link: LinkModel | None = None):
        self.seed = seed
        self.default_link = default_link or LinkModel()
        self.virtual_now = 0
        self._nodes: dict[int, object] = {}
        self._clocks: dict[int, ClockModel] = {}
        self._links: dict[tuple[int, int], LinkModel] = {}
        self._rngs: dict[tuple, random.Random] = {}
        self._last_delivery: dict[tuple, int] = {}
        self._lane_free: dict[tuple, int] = {}
        self._heap: list[tuple[int, int, int, object]] = []
        self._seq = 0
        self._wake_gen: dict[int, int] = {}
        self._capture = None
        self.frames_sent = 0
        self.bytes_sent = 0

    def add_node(self, node_id: int, node: object, clock: ClockModel | None = None) -> SimPort:
        if node_id in self._nodes:
            raise ValueError(f"duplicate node id {node_id}")
        self._nodes[node_id] = node
        self._clocks[node_id] = clock or ClockModel()
        self._wake_gen[node_id] = 0
        return SimPort(self, node_id)

    def set_link(self, src: int, dst: int, model: LinkModel) -> None:
        self._links[(src, dst)] = model

    def capture_to(self, fp) -> None:
        """Log every transmitted frame to an open binary file."""
        self._capture = fp

    def local_now(self, node_id: int) -> int:
        return self._clocks[node_id].read(self.virtual_now)

    def _rng(self, lane: tuple) -> random.Random:
        rng = self._rngs.get(lane)
        if rng is None:
            # string seeding hashes stably, so per-lane streams are
            # independent of insertion order
            rng = random.Random(f"{self.seed}/" + "/".join(map(str, lane)))
            self._rngs[lane] = rng
        return rng

    def _transmit(self, src: int, dst: int, msg: WireMessage) -> None:
        if dst not in self._nodes:
            raise ValueError(f"frame to unknown node {dst}")
        link = (src, dst)
        model = self._links.get(link, self.default_link)
        # coordinator traffic shares one stream; peer-to-peer channels are
        # independent streams, so they can reorder against each other
        if src == RTI_ID or dst == RTI_ID:
            lane: tuple = link
        else:
            lane = (src, dst, msg.channel)
        delay = model.base_latency
        if model.jitter > 0:
            delay += self._rng(lane).randint(0, model.jitter)
        frame_len = len(encode(msg))
        depart = self.virtual_now
        if model.bandwidth_bps > 0:
            # store-and-forward: the frame occupies the lane while it
            # serializes, so floods are paced by bandwidth
            occupancy = (frame_len * 8 * 10**9) // model.bandwidth_bps
            depart = max(self.virtual_now, self._lane_free.get(lane, 0)) + occupancy
            self._lane_free[lane] = depart
        when = depart + delay
        if model.fifo:
            when = max(when, self._last_delivery.get(lane, 0))
            self._last_delivery[lane] = when
        if self._capture is not None:
            write_capture(self._capture, self.virtual_now, msg)
        self.frames_sent += 1
        self.bytes_sent += frame_len
        self._push(when, _DELIVER, (dst, msg))

    def _push(self, when: int, kind: int, data: object) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (when, self._seq, kind, data))

    def _schedule_wake(self, node_id: int, local_target: int) -> None:
        # clocks are invertible only approximately under drift; overshoot by
        # re-polling, never undershoot below +1
        local = self.local_now(node_id)
        delta = max(1, local_target - local)
        self._wake_gen[node_id] += 1
        self._push(self.virtual_now + delta, _WAKE, (node_id, self._wake_gen[node_id]))

    def _service(self, node_id: int) -> None:
        node = self._nodes[node_id]
        if getattr(node, "done", False):
            return
        wake = node.poll(self.local_now(node_id))
        if wake is not None and not getattr(node, "done", False):
            self._schedule_wake(node_id, wake)

    def run(self, until: int | None = None, max_events: int = 50_000_000) -> None:
        """Drive the federation until every node reports done.

        Raises DeadlockError if traffic quiesces first; stops silently at
        `until` (virtual ns) when given.
        """
        for node_id in list(self._nodes):
            self._service(node_id)
        count = 0
        while self._heap:
            if all(getattr(n, "done", False) for n in self._nodes.values()):
                return
            if until is not None and self._heap[0][0] > until:
                return
            when, _seq, kind, data = heapq.heappop(self._heap)
            count += 1
            if count > max_events:
                raise DeadlockError("event budget exhausted; runaway federation?")
            self.virtual_now = max(self.virtual_now, when)
            if kind == _DELIVER:
                dst, msg = data
                node = self._nodes[dst]
                if getattr(node, "done", False):
                    continue
                node.on_frame(msg, self.local_now(dst))
                self._service(dst)
            else:
                node_id, gen = data
                if gen != self._wake_gen[node_id]:
                    continue  # superseded wake
                self._service(node_id)
        if not all(getattr(n, "done", False) for n in self._nodes.values()):
            waiting = [
                nid for nid, n in self._nodes.items() if not getattr(n, "done", False)
            ]
            raise DeadlockError(f"simulation quiesced with nodes waiting: {waiting}")
