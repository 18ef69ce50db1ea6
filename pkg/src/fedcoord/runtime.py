"""Federate runtime: one logical-execution context per federation member.

The runtime is a non-blocking state machine so that a simulated federation
can drive many federates on one thread. Drivers feed it frames through
`on_frame` and call `poll` to let it advance; `poll` returns the next local
clock reading at which it wants to run again (or None when it can only be
unblocked by traffic). Reactions run inside `poll`, strictly in tag order.

Lifecycle: register with the coordinator, run clock-sync trials, propose a
start time, then advance tags under the configured coordination mode until
a stop consensus names a final tag. A shutdown event is enqueued at the
final tag, so the last processed tag always equals the final tag.

Message intake and physical-action injection may happen on other threads;
they only touch thread-safe queues that the execution context drains.
"""

from __future__ import annotations

import hashlib
import heapq
from collections import deque
from dataclasses import dataclass
from typing import Callable

from fedcoord.clocksync import ClockState, ClockSyncConfig, SyncRound
from fedcoord.exceptions import ConfigError, ProtocolError, TardyMessageError
from fedcoord.tags import (
    FOREVER,
    NEVER,
    Tag,
    format_tag,
    tag_add_delay,
    tag_max,
    tag_min,
    tag_pred,
)
from fedcoord.topology import ConnectionKind, FederationGraph
from fedcoord.wire import RTI_ID, MsgType, WireMessage

CENTRALIZED = "centralized"
DECENTRALIZED = "decentralized"

DEFAULT_NET_REFRESH = 5_000_000  # physical-action promise refresh, ns


@dataclass(frozen=True)
class Trigger:
    index: int
    kind: str  # input | timer | action | physical | shutdown
    name: str


class DeliveredEvent:
    __slots__ = ("payload", "orig_tag", "tardy")

    def __init__(self, payload: bytes, orig_tag: Tag, tardy: bool):
        self.payload = payload
        self.orig_tag = orig_tag
        self.tardy = tardy


class EventQueue:
    """Tag-ordered queue; at most one event per (tag, trigger), later
    scheduling replaces the payload."""

    def __init__(self) -> None:
        self._heap: list[tuple[Tag, int]] = []
        self._records: dict[tuple[Tag, int], DeliveredEvent] = {}

    def __len__(self) -> int:
        return len(self._records)

    def schedule(
        self, tag: Tag, trigger_index: int, payload: bytes = b"",
        tardy: bool = False, orig_tag: Tag | None = None,
    ) -> None:
        key = (tag, trigger_index)
        ev = DeliveredEvent(payload, orig_tag if orig_tag is not None else tag, tardy)
        if key not in self._records:
            heapq.heappush(self._heap, key)
        self._records[key] = ev

    def has(self, tag: Tag, trigger_index: int) -> bool:
        return (tag, trigger_index) in self._records

    def peek_tag(self) -> Tag | None:
        return self._heap[0][0] if self._heap else None

    def pop_batch(self) -> tuple[Tag, list[tuple[int, DeliveredEvent]]]:
        """Remove and return every event at the head tag, trigger-ordered."""
        if not self._heap:
            raise IndexError("empty queue")
        tag = self._heap[0][0]
        batch = []
        while self._heap and self._heap[0][0] == tag:
            key = heapq.heappop(self._heap)
            batch.append((key[1], self._records.pop(key)))
        return tag, batch


@dataclass
class Reaction:
    rid: int
    triggers: tuple[Trigger, ...]
    body: Callable
    deadline: int | None = None
    deadline_handler: Callable | None = None
    stp_handler: Callable | None = None


class ReactionContext:
    """What a reaction body sees: the tag, its events, and the runtime API."""

    __slots__ = ("_fed", "tag", "_present", "reaction")

    def __init__(self, fed: "Federate", tag: Tag, present, reaction: Reaction):
        self._fed = fed
        self.tag = tag
        self._present = present
        self.reaction = reaction

    def event(self, trigger: Trigger) -> DeliveredEvent | None:
        return self._present.get(trigger.index)

    def get(self, trigger: Trigger) -> bytes | None:
        ev = self._present.get(trigger.index)
        return ev.payload if ev is not None else None

    def triggered(self, trigger: Trigger) -> bool:
        return trigger.index in self._present

    def send(self, channel: int, payload: bytes) -> None:
        self._fed._send_output(channel, payload)

    def schedule(self, action: Trigger, delay: int = 0, payload: bytes = b"") -> Tag:
        return self._fed.schedule_logical(action, delay, payload)

    def request_stop(self) -> None:
        self._fed.request_stop()

    def physical_now(self) -> int:
        return self._fed._pnow()


# lifecycle phases
_INIT = "init"
_SYNCING = "syncing"
_PROPOSED = "proposed"
_RUNNING = "running"
_DONE = "done"


class Federate:
    def __init__(
        self,
        fid: int,
        graph: FederationGraph,
        mode: str,
        *,
        send: Callable[[int, WireMessage], None] | None = None,
        stp_offset: int = 0,
        clock_sync: ClockSyncConfig | None = None,
        chase_physical: bool = True,
        net_refresh: int = DEFAULT_NET_REFRESH,
        trace=None,
        live_clock: Callable[[], int] | None = None,
        register_payload: bytes = b"",
    ):
        if mode not in (CENTRALIZED, DECENTRALIZED):
            raise ConfigError(f"unknown coordination mode {mode!r}")
        self.fid = fid
        self.graph = graph
        self.spec = graph.federates[fid]
        self.name = self.spec.name
        self.mode = mode
        self.stp_offset = stp_offset
        self.clock_sync = clock_sync or ClockSyncConfig()
        self.chase_physical = chase_physical
        self.net_refresh = net_refresh
        self.clock_state = ClockState()
        self._send = send
        self._trace = trace
        self._live_clock = live_clock
        self._register_payload = register_payload

        self._phase = _INIT
        self._queue = EventQueue()
        self._triggers: list[Trigger] = []
        self._reactions: list[Reaction] = []
        self._timers: dict[int, tuple[int, int | None]] = {}  # idx -> (offset, period)
        self._actions: dict[int, int] = {}  # idx -> min_delay
        self._inputs: dict[int, Trigger] = {}  # channel -> trigger
        self._in_conns = graph.inputs_of(fid)
        self._out_conns = graph.outputs_of(fid)
        self._injected: deque = deque()  # (trigger_index, payload, requested time)

        for c in self._in_conns:
            trig = self._new_trigger(
                "physical" if c.kind is ConnectionKind.PHYSICAL else "input",
                f"in{c.to_channel}",
            )
            self._inputs[c.to_channel] = trig
        self._shutdown = self._new_trigger("shutdown", "shutdown")

        self.has_physical_action = self.spec.has_physical_action or any(
            c.kind is ConnectionKind.PHYSICAL for c in self._in_conns
        )
        # with no tagged inputs nothing can ever arrive late, so grants
        # would be vacuous; such a federate advances on its own
        self._self_granting = mode == CENTRALIZED and not any(
            c.kind is ConnectionKind.LOGICAL for c in self._in_conns
        )
        # rule 1 and rule 2 only ever read reports from federates someone
        # is downstream of; a pure sink owes nothing until its final tag
        self._has_logical_outputs = any(
            c.kind is ConnectionKind.LOGICAL for c in self._out_conns
        )

        self.current_tag = NEVER
        self.ltc = NEVER
        self.granted = NEVER
        self.start_tag: Tag | None = None
        self.final_tag: Tag | None = None
        self._stop_paused = False
        self._stop_requested = False
        self._reported: tuple[Tag, Tag] | None = None  # last NMR (ltc, net)
        self._next_refresh: int | None = None
        # per logical input channel: all traffic at or below this tag is in
        self._watermarks: dict[int, Tag] = {
            c.to_channel: NEVER
            for c in self._in_conns
            if c.kind is ConnectionKind.LOGICAL
        }
        # per output connection: highest tag the receiver can infer from us
        self._advertised: dict[tuple[int, int], Tag] = {}

        self._sync_round: SyncRound | None = None
        self._next_sync: int | None = None
        # peers may start flooding before our own start grant lands
        self._early_frames: list[tuple[WireMessage, int]] = []
        self._rtt: int = 0
        self._now = 0  # latest adjusted clock reading seen
        self._raw_now = 0

        self.stp_violations = 0
        self.deadline_misses = 0
        self.tardy_processed = 0
        self.dropped_events = 0
        self.data_dropped = 0  # network-delivered events never processed
        self.msgs_in = 0
        self.bytes_in = 0
        self.msgs_out = 0
        self.bytes_out = 0
        self.processed_events = 0
        self.first_data_at: int | None = None
        self.last_data_at: int | None = None
        self.shutdown_trigger = self._shutdown

    # ---------------- construction API ----------------

    def _new_trigger(self, kind: str, name: str) -> Trigger:
        trig = Trigger(len(self._triggers), kind, name)
        self._triggers.append(trig)
        return trig

    def add_timer(self, offset: int = 0, period: int | None = None, name: str | None = None) -> Trigger:
        if offset < 0 or (period is not None and period <= 0):
            raise ConfigError("timer needs offset >= 0 and period > 0")
        trig = self._new_trigger("timer", name or f"timer{len(self._timers)}")
        self._timers[trig.index] = (offset, period)
        return trig

    def add_logical_action(self, min_delay: int = 0, name: str | None = None) -> Trigger:
        if min_delay < 0:
            raise ConfigError("negative action delay")
        trig = self._new_trigger("action", name or f"action{len(self._actions)}")
        self._actions[trig.index] = min_delay
        return trig

    def add_physical_action(self, name: str | None = None) -> Trigger:
        trig = self._new_trigger("physical", name or "physical")
        self.has_physical_action = True
        return trig

    def input_trigger(self, channel: int) -> Trigger:
        try:
            return self._inputs[channel]
        except KeyError:
            raise ConfigError(f"{self.name} has no input channel {channel}")

    def input_channels(self) -> list[int]:
        return sorted(self._inputs)

    def add_reaction(
        self,
        triggers,
        body: Callable,
        *,
        deadline: int | None = None,
        deadline_handler: Callable | None = None,
        stp_handler: Callable | None = None,
    ) -> Reaction:
        if (deadline is None) != (deadline_handler is None):
            raise ConfigError("deadline and deadline_handler come together")
        if deadline is not None and deadline < 0:
            raise ConfigError("negative deadline")
        r = Reaction(
            rid=len(self._reactions),
            triggers=tuple(triggers),
            body=body,
            deadline=deadline,
            deadline_handler=deadline_handler,
            stp_handler=stp_handler,
        )
        self._reactions.append(r)
        return r

    # ---------------- driver interface ----------------

    @property
    def done(self) -> bool:
        return self._phase == _DONE

    def on_frame(self, msg: WireMessage, raw_now: int) -> None:
        if self._phase == _DONE:
            if msg.type in (MsgType.TAGGED_MSG, MsgType.PHYSICAL_MSG):
                self.dropped_events += 1
                self.data_dropped += 1
            return
        now = self._adjust(raw_now)
        t = msg.type
        if self._phase in (_SYNCING, _PROPOSED) and t in (
            MsgType.TAGGED_MSG,
            MsgType.PHYSICAL_MSG,
            MsgType.ABSENT,
        ):
            self._early_frames.append((msg, raw_now))
            return
        if t == MsgType.TAGGED_MSG:
            self._receive_tagged(msg, now)
        elif t == MsgType.PHYSICAL_MSG:
            self._receive_physical(msg, now)
        elif t == MsgType.ABSENT:
            ch = msg.channel
            if ch in self._watermarks and msg.tag > self._watermarks[ch]:
                self._watermarks[ch] = msg.tag
        elif t == MsgType.TAG_GRANT:
            self.granted = tag_max(self.granted, msg.tag)
        elif t == MsgType.CLOCK_T3:
            self._clock_reply(msg, now, raw_now)
        elif t == MsgType.START_GRANT:
            self._start(msg, now)
        elif t == MsgType.STOP_REQ:
            self._stop_query(now)
        elif t == MsgType.STOP_GRANT:
            self._stop_grant(msg.tag)
        # REGISTER/NMR/proposals/replies are coordinator-bound; ignore here

    def poll(self, raw_now: int) -> int | None:
        if self._phase == _DONE:
            return None
        now = self._adjust(raw_now)
        if self._phase == _INIT:
            self._begin_registration(now)
            return None
        if self._phase in (_SYNCING, _PROPOSED):
            return None  # driven entirely by coordinator replies
        wake = self._advance(now)
        sync_wake = self._maybe_runtime_sync(now)
        if wake is None:
            wake = sync_wake
        elif sync_wake is not None:
            wake = min(wake, sync_wake)
        if wake is None:
            return None
        # wakes are computed on the adjusted clock; the driver speaks raw
        return wake - (self._now - self._raw_now)

    def inject_physical(self, action: Trigger, payload: bytes = b"") -> None:
        """Thread-safe: hand an out-of-band event to the execution context."""
        if action.kind != "physical":
            raise ConfigError(f"{action.name} is not a physical action")
        self._injected.append((action.index, payload, None))

    def request_stop(self) -> None:
        if self._stop_requested or self.final_tag is not None:
            return
        self._stop_requested = True
        self._stop_paused = True
        self._emit(RTI_ID, WireMessage(MsgType.STOP_REQ, self.fid, RTI_ID))

    # ---------------- clocks ----------------

    def _adjust(self, raw_now: int) -> int:
        self._raw_now = raw_now
        now = self.clock_state.adjusted(raw_now)
        if now > self._now:
            self._now = now
        return self._now

    def _pnow(self) -> int:
        if self._live_clock is not None:
            return self.clock_state.adjusted(self._live_clock())
        return self._now

    # ---------------- startup ----------------

    def _begin_registration(self, now: int) -> None:
        self._phase = _SYNCING
        self._emit(
            RTI_ID,
            WireMessage(
                MsgType.REGISTER, self.fid, RTI_ID, payload=self._register_payload
            ),
        )
        trials = self.clock_sync.trials if self.clock_sync.mode != "off" else 1
        self._sync_round = SyncRound(trials)
        for _ in range(trials):
            self._emit(
                RTI_ID,
                WireMessage(MsgType.CLOCK_T1, self.fid, RTI_ID, times=(self._now,)),
            )

    def _clock_reply(self, msg: WireMessage, now: int, raw_now: int) -> None:
        if self._sync_round is None:
            return
        t1, t2, t3 = msg.times
        self._sync_round.add(t1, t2, t3, now)
        if not self._sync_round.complete:
            return
        rnd = self._sync_round
        self._sync_round = None
        error = rnd.error()
        self._rtt = min(tr.rtt for tr in rnd.trials)
        if self._phase == _SYNCING:
            if self.clock_sync.mode != "off":
                self.clock_state.apply_error(error)  # full step before start
            self._phase = _PROPOSED
            reading = self.clock_state.adjusted(raw_now)
            self._emit(
                RTI_ID,
                WireMessage(
                    MsgType.START_PROPOSE,
                    self.fid,
                    RTI_ID,
                    times=(reading, self._rtt),
                ),
            )
        else:
            self.clock_state.record_round(raw_now, error)
            self.clock_state.apply_error(error, self.clock_sync.attenuation)

    def _start(self, msg: WireMessage, now: int) -> None:
        if self._phase != _PROPOSED:
            return
        self.start_tag = msg.tag
        self._phase = _RUNNING
        for idx, (offset, _period) in self._timers.items():
            self._queue.schedule(Tag(msg.tag.time + offset, 0), idx)
        if self.clock_sync.mode == "runtime":
            self._next_sync = now + self.clock_sync.period
        early, self._early_frames = self._early_frames, []
        for early_msg, early_raw in early:
            self.on_frame(early_msg, early_raw)

    def _maybe_runtime_sync(self, now: int) -> int | None:
        if self.clock_sync.mode != "runtime" or self._next_sync is None:
            return None
        if self._sync_round is not None:
            return None  # a round is in flight; its replies drive us
        if now >= self._next_sync:
            self._next_sync = now + self.clock_sync.period
            self._sync_round = SyncRound(self.clock_sync.trials)
            for _ in range(self.clock_sync.trials):
                self._emit(
                    RTI_ID,
                    WireMessage(MsgType.CLOCK_T1, self.fid, RTI_ID, times=(now,)),
                )
        return self._next_sync

    # ---------------- receive paths ----------------

    def _receive_tagged(self, msg: WireMessage, now: int) -> None:
        if self._phase != _RUNNING:
            raise ProtocolError(f"{self.name}: tagged message before start")
        tag = msg.tag
        ch = msg.channel
        trig = self._inputs.get(ch)
        if trig is None:
            raise ProtocolError(f"{self.name}: no input channel {ch}")
        self.msgs_in += 1
        self.bytes_in += len(msg.payload)
        if ch in self._watermarks and tag > self._watermarks[ch]:
            self._watermarks[ch] = tag
        if self.final_tag is not None and tag > self.final_tag:
            self.dropped_events += 1
            self.data_dropped += 1
            return
        if tag <= self.current_tag:
            if self.mode == CENTRALIZED:
                raise TardyMessageError(
                    f"{self.name}: message on channel {ch} tagged "
                    f"{format_tag(tag)} arrived at current tag "
                    f"{format_tag(self.current_tag)} under centralized "
                    f"coordination"
                )
            self.stp_violations += 1
            adjusted = self._free_slot(tag_add_delay(self.current_tag, 0), trig.index)
            if self.final_tag is not None and adjusted > self.final_tag:
                self.dropped_events += 1
                self.data_dropped += 1
                return
            self._queue.schedule(adjusted, trig.index, msg.payload, tardy=True, orig_tag=tag)
            return
        self._queue.schedule(tag, trig.index, msg.payload)
        if self.mode == CENTRALIZED and self._reported is not None:
            rep_ltc, rep_net = self._reported
            if tag < rep_net:
                # an earlier event appeared; refresh the promise downward
                self._send_nmr(rep_ltc, self._net_report(), now)

    def _receive_physical(self, msg: WireMessage, now: int) -> None:
        if self._phase != _RUNNING:
            self.dropped_events += 1  # racing startup; untagged, so droppable
            self.data_dropped += 1
            return
        trig = self._inputs.get(msg.channel)
        if trig is None:
            raise ProtocolError(f"{self.name}: no input channel {msg.channel}")
        self.msgs_in += 1
        self.bytes_in += len(msg.payload)
        tag = self._free_slot(
            tag_max(Tag(now, 0), tag_add_delay(self.current_tag, 0)), trig.index
        )
        if self.final_tag is not None and tag > self.final_tag:
            self.dropped_events += 1
            self.data_dropped += 1
            return
        self._queue.schedule(tag, trig.index, msg.payload, orig_tag=tag)

    # ---------------- advancement ----------------

    def _free_slot(self, tag: Tag, trigger_index: int) -> Tag:
        # never displace a queued event; distinct arrivals keep distinct tags
        while self._queue.has(tag, trigger_index):
            tag = tag_add_delay(tag, 0)
        return tag

    def _drain_injected(self, now: int) -> None:
        while self._injected:
            idx, payload, _ = self._injected.popleft()
            tag = self._free_slot(
                tag_max(Tag(now, 0), tag_add_delay(self.current_tag, 0)), idx
            )
            if self.final_tag is not None and tag > self.final_tag:
                self.dropped_events += 1
                continue
            self._queue.schedule(tag, idx, payload, orig_tag=tag)

    def _advance(self, now: int) -> int | None:
        while True:
            if self._phase != _RUNNING:
                return None
            self._drain_injected(now)
            if self._stop_paused:
                return None
            head = self._queue.peek_tag()
            if head is None:
                if self.mode == CENTRALIZED:
                    return self._report_idle(now)
                return None
            if self.final_tag is not None and head > self.final_tag:
                _tag, batch = self._queue.pop_batch()
                for idx, _ev in batch:
                    self.dropped_events += 1
                    if self._triggers[idx].kind in ("input", "physical"):
                        self.data_dropped += 1
                continue
            if self.chase_physical and now < head.time:
                return head.time
            if self.mode == CENTRALIZED:
                if self._self_granting or self.granted >= head:
                    self._process_tag(head, now)
                    continue
                self._send_nmr(self.ltc, self._net_report(), now)
                return self._refresh_wake(now)
            # decentralized: known-status shortcut, else the offset wait
            if self._watermarks_cover(head):
                self._process_tag(head, now)
                continue
            target = head.time + self.stp_offset
            if now >= target:
                self._process_tag(head, now)
                continue
            return target

    def _watermarks_cover(self, tag: Tag) -> bool:
        if not self._watermarks:
            return True
        return all(w >= tag for w in self._watermarks.values())

    def _net_report(self) -> Tag:
        head = self._queue.peek_tag()
        net = head if head is not None else FOREVER
        if self.has_physical_action and self._has_logical_outputs:
            promise = tag_max(Tag(self._now, 0), tag_add_delay(self.ltc, 0))
            net = tag_min(net, promise)
        return net

    def _report_idle(self, now: int) -> int | None:
        if not self._has_logical_outputs:
            return None
        self._send_nmr(self.ltc, self._net_report(), now)
        return self._refresh_wake(now)

    def _refresh_wake(self, now: int) -> int | None:
        if not (self.has_physical_action and self._has_logical_outputs):
            return None
        return now + self.net_refresh

    def _send_nmr(self, ltc: Tag, net: Tag, now: int) -> None:
        if ltc >= net:
            return  # nothing new to promise (e.g. final tag reached)
        if self._reported == (ltc, net):
            return
        self._reported = (ltc, net)
        self._emit(
            RTI_ID,
            WireMessage(MsgType.NMR, self.fid, RTI_ID, tag=ltc, tag2=net),
        )

    def _process_tag(self, g: Tag, now: int) -> None:
        self.current_tag = g
        _tag, batch = self._queue.pop_batch()
        present: dict[int, DeliveredEvent] = {}
        for idx, ev in batch:
            present[idx] = ev
            self.processed_events += 1
            trig = self._triggers[idx]
            if trig.kind in ("input", "physical"):
                stamp = self._pnow()
                if self.first_data_at is None:
                    self.first_data_at = stamp
                self.last_data_at = stamp
            if ev.tardy:
                self.tardy_processed += 1
            if self._trace is not None:
                digest = hashlib.blake2b(ev.payload, digest_size=8).hexdigest()
                self._trace.write(f"{g.time}:{g.microstep} {trig.name} {digest}\n")
            if trig.kind == "timer":
                offset, period = self._timers[idx]
                if period is not None:
                    nxt = Tag(g.time + period, 0)
                    if self.final_tag is None or nxt <= self.final_tag:
                        self._queue.schedule(nxt, idx)
        ready = [
            r
            for r in self._reactions
            if any(t.index in present for t in r.triggers)
        ]
        ready.sort(key=lambda r: (r.deadline if r.deadline is not None else 2**63, r.rid))
        for r in ready:
            ctx = ReactionContext(self, g, present, r)
            if r.deadline is not None and self._pnow() > g.time + r.deadline:
                self.deadline_misses += 1
                r.deadline_handler(ctx)
            elif r.stp_handler is not None and any(
                t.index in present and present[t.index].tardy for t in r.triggers
            ):
                r.stp_handler(ctx)
            else:
                r.body(ctx)
        self.ltc = g
        if self.mode == CENTRALIZED:
            if self._has_logical_outputs:
                self._send_nmr(g, self._net_report(), now)
        else:
            self._send_watermarks(g)
        if self.final_tag is not None and g >= self.final_tag:
            self._finish()

    def _send_watermarks(self, g: Tag) -> None:
        nxt = tag_add_delay(g, 0)
        for c in self._out_conns:
            if c.kind is not ConnectionKind.LOGICAL:
                continue
            wm = tag_pred(tag_add_delay(nxt, c.after))
            key = (c.to_federate, c.to_channel)
            if wm <= self._advertised.get(key, NEVER):
                continue
            self._advertised[key] = wm
            self._emit(
                c.to_federate,
                WireMessage(
                    MsgType.ABSENT, self.fid, c.to_federate,
                    channel=c.to_channel, tag=wm,
                ),
            )

    # ---------------- reaction-facing API ----------------

    def schedule_logical(self, action: Trigger, delay: int = 0, payload: bytes = b"") -> Tag:
        if action.index not in self._actions:
            raise ConfigError(f"{action.name} is not a logical action")
        if delay < 0:
            raise ConfigError("negative delay")
        tag = tag_add_delay(self.current_tag, self._actions[action.index] + delay)
        if self.final_tag is not None and tag > self.final_tag:
            self.dropped_events += 1
            return tag
        self._queue.schedule(tag, action.index, payload)
        return tag

    def _send_output(self, channel: int, payload: bytes) -> None:
        sent_any = False
        for c in self._out_conns:
            if c.from_channel != channel:
                continue
            sent_any = True
            if c.kind is ConnectionKind.PHYSICAL:
                msg = WireMessage(
                    MsgType.PHYSICAL_MSG, self.fid, c.to_federate,
                    channel=c.to_channel, payload=payload,
                )
                self._emit(c.to_federate, msg)  # never through the coordinator
                continue
            wire_tag = tag_add_delay(self.current_tag, c.after)
            msg = WireMessage(
                MsgType.TAGGED_MSG, self.fid, c.to_federate,
                channel=c.to_channel, tag=wire_tag, payload=payload,
            )
            if self.mode == CENTRALIZED:
                self._emit(RTI_ID, msg)
            else:
                self._emit(c.to_federate, msg)
            key = (c.to_federate, c.to_channel)
            if wire_tag > self._advertised.get(key, NEVER):
                self._advertised[key] = wire_tag
        if not sent_any:
            raise ConfigError(f"{self.name} has no connection on channel {channel}")

    # ---------------- shutdown ----------------

    def _stop_query(self, now: int) -> None:
        if self._phase != _RUNNING or self.final_tag is not None:
            return
        self._stop_paused = True
        if self.current_tag == NEVER:
            proposal = self.start_tag if self.start_tag is not None else Tag(0, 0)
        else:
            proposal = tag_add_delay(self.current_tag, 0)
        self._emit(
            RTI_ID,
            WireMessage(MsgType.STOP_REPLY, self.fid, RTI_ID, tag=proposal),
        )

    def _stop_grant(self, final: Tag) -> None:
        if self.final_tag is not None:
            return
        self.final_tag = final
        self._stop_paused = False
        self._queue.schedule(final, self._shutdown.index)

    def _finish(self) -> None:
        self._phase = _DONE
        # anything still queued is past the final tag and will never run;
        # count it so delivered data always reconciles
        while len(self._queue):
            _tag, batch = self._queue.pop_batch()
            for idx, _ev in batch:
                self.dropped_events += 1
                if self._triggers[idx].kind in ("input", "physical"):
                    self.data_dropped += 1
        if self.mode == CENTRALIZED:
            # last word: completion of the final tag, nothing after
            self._reported = None
            self._send_nmr(self.ltc, FOREVER, self._now)
        if self._trace is not None:
            self._trace.flush()

    # ---------------- plumbing ----------------

    def _emit(self, dst: int, msg: WireMessage) -> None:
        if msg.type in (MsgType.TAGGED_MSG, MsgType.PHYSICAL_MSG):
            self.msgs_out += 1
            self.bytes_out += len(msg.payload)
        if self._send is None:
            raise ConfigError(f"{self.name} has no transport")
        self._send(dst, msg)

    def bind_transport(self, send: Callable[[int, WireMessage], None]) -> None:
        self._send = send
