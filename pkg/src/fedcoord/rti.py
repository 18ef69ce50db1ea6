"""Central coordinator: startup consensus, tag grants, relay, stop consensus.

The coordinator is passive; drivers feed it frames through `on_frame`. Under
centralized coordination it stores each federate's progress report (latest
completed tag and earliest possible future message tag), relays all tagged
traffic, and issues tag grants:

- downstream grant: when a federate completes a tag, each of its downstream
  peers may be granted the smallest delay-shifted completed tag over all of
  its upstream peers.
- fixpoint grant: a federate whose pending tag is strictly below the
  earliest tag that could still reach it (the greatest fixpoint of the
  delay-shifted future-message bounds over the whole graph) is granted that
  pending tag.

Under decentralized coordination the coordinator only runs startup, clock
probes, and the stop consensus; data flows between peers directly.
"""

from __future__ import annotations

from typing import Callable

from fedcoord import _kernel
from fedcoord.exceptions import ProtocolError
from fedcoord.tags import FOREVER, NEVER, Tag, format_tag, tag_max, tag_min
from fedcoord.topology import FederationGraph
from fedcoord.wire import RTI_ID, MsgType, WireMessage

CENTRALIZED = "centralized"
DECENTRALIZED = "decentralized"

DEFAULT_MIN_MARGIN = 10_000_000  # 10 ms floor on the start margin


def decide_start_tag(
    readings: list[int], rtts: list[int], margin_override: int | None = None
) -> Tag:
    """Start tag from the clock readings proposed at registration."""
    if margin_override is not None:
        margin = margin_override
    else:
        margin = max(DEFAULT_MIN_MARGIN, 2 * max(rtts, default=0) * len(readings))
    return Tag(max(readings) + margin, 0)


def earliest_incoming_tags(graph: FederationGraph, nets: list[Tag]) -> list[Tag]:
    """Greatest fixpoint of the delay-shifted future-message bounds."""
    flat = []
    for t in nets:
        flat.extend((t.time, t.microstep))
    out = _kernel.eimt_solve(graph.n, graph.min_delay_flat(), flat)
    return [Tag(out[2 * i], out[2 * i + 1]) for i in range(graph.n)]


def downstream_grants(
    graph: FederationGraph, ltcs: list[Tag], completed: int
) -> dict[int, Tag]:
    """Grants enabled for peers downstream of `completed` by its new LTC."""
    flat = []
    for t in ltcs:
        flat.extend((t.time, t.microstep))
    out = _kernel.rule1_grants(graph.n, graph.min_delay_flat(), flat, completed)
    return {d: Tag(t, m) for d, t, m in out}


class Rti:
    def __init__(
        self,
        graph: FederationGraph,
        mode: str = CENTRALIZED,
        *,
        margin_override: int | None = None,
        send: Callable[[int, WireMessage], None] | None = None,
        log=None,
        peer_payload: Callable[[int], bytes] | None = None,
    ):
        if mode not in (CENTRALIZED, DECENTRALIZED):
            raise ProtocolError(f"unknown coordination mode {mode!r}")
        self.graph = graph
        self.mode = mode
        self.margin_override = margin_override
        self._send = send
        self._logf = log
        self._peer_payload = peer_payload

        n = graph.n
        self.n = n
        self._alpha = graph.min_delay_flat()
        self.registered: set[int] = set()
        self.peer_info: dict[int, bytes] = {}
        self.proposals: dict[int, tuple[int, int]] = {}  # fid -> (reading, rtt)
        self.start_tag: Tag | None = None
        self.ltc: list[Tag] = [NEVER] * n
        self.net: list[Tag] = [NEVER] * n
        self.granted: list[Tag] = [NEVER] * n
        self.final_tag: Tag | None = None
        self._stop_replies: dict[int, Tag] = {}
        self._stopping = False
        self._done = False

        self.grants_sent = 0
        self.msgs_relayed = 0
        self.bytes_relayed = 0
        self.violations = 0
        self.violation_log: list[str] = []

    # ---------------- driver interface ----------------

    @property
    def done(self) -> bool:
        return self._done

    def poll(self, raw_now: int) -> int | None:
        return None  # purely reactive

    def bind_transport(self, send: Callable[[int, WireMessage], None]) -> None:
        self._send = send

    def on_frame(self, msg: WireMessage, raw_now: int) -> None:
        f = msg.src
        if not (0 <= f < self.n):
            self._violation(f"frame from unknown federate {f}")
            return
        t = msg.type
        if t == MsgType.REGISTER:
            self.registered.add(f)
            self.peer_info[f] = msg.payload
            self._log(raw_now, f"register fed={f}")
        elif t == MsgType.CLOCK_T1:
            self._emit(
                f,
                WireMessage(
                    MsgType.CLOCK_T3, RTI_ID, f,
                    times=(msg.times[0], raw_now, raw_now),
                ),
            )
        elif t == MsgType.START_PROPOSE:
            self._propose(f, msg, raw_now)
        elif t == MsgType.NMR:
            self._progress_report(f, msg, raw_now)
        elif t == MsgType.TAGGED_MSG:
            self._relay(f, msg, raw_now)
        elif t == MsgType.STOP_REQ:
            self._stop_request(f, raw_now)
        elif t == MsgType.STOP_REPLY:
            self._stop_reply(f, msg, raw_now)
        else:
            self._violation(f"unexpected {t.name} from federate {f}")

    # ---------------- startup ----------------

    def _propose(self, f: int, msg: WireMessage, raw_now: int) -> None:
        if f not in self.registered or self.start_tag is not None:
            self._violation(f"stray start proposal from federate {f}")
            return
        reading, rtt = msg.times
        self.proposals[f] = (reading, rtt)
        if len(self.proposals) < self.n:
            return
        readings = [self.proposals[i][0] for i in range(self.n)]
        rtts = [self.proposals[i][1] for i in range(self.n)]
        self.start_tag = decide_start_tag(readings, rtts, self.margin_override)
        self._log(raw_now, f"start {format_tag(self.start_tag)}")
        for i in range(self.n):
            payload = self._peer_payload(i) if self._peer_payload else b""
            self._emit(
                i,
                WireMessage(
                    MsgType.START_GRANT, RTI_ID, i,
                    tag=self.start_tag, payload=payload,
                ),
            )

    # ---------------- centralized progress ----------------

    def _progress_report(self, f: int, msg: WireMessage, raw_now: int) -> None:
        if self.mode != CENTRALIZED:
            self._violation(f"progress report from federate {f} without coordination")
            return
        ltc, net = msg.tag, msg.tag2
        if not (ltc < net):
            self._violation(
                f"federate {f} reported completed {format_tag(ltc)} "
                f">= promised {format_tag(net)}"
            )
            return
        if ltc < self.ltc[f] or net < self.net[f]:
            self._violation(
                f"federate {f} regressed to ltc={format_tag(ltc)} "
                f"net={format_tag(net)}"
            )
            return
        changed_ltc = ltc > self.ltc[f]
        self.ltc[f] = ltc
        self.net[f] = net
        self._log(
            raw_now,
            f"report fed={f} ltc={format_tag(ltc)} net={format_tag(net)}",
        )
        self._evaluate(f if changed_ltc else None, raw_now)
        if self.final_tag is not None and not self._done:
            if all(l >= self.final_tag for l in self.ltc):
                self._done = True
                self._log(raw_now, "all federates drained; coordinator done")

    def _evaluate(self, ltc_changed: int | None, raw_now: int) -> None:
        """Run both grant rules and emit any newly justified grants."""
        grants: dict[int, Tag] = {}
        if ltc_changed is not None:
            for d, g in downstream_grants(self.graph, self.ltc, ltc_changed).items():
                if g > self.granted[d]:
                    grants[d] = tag_max(grants.get(d, NEVER), g)
        eimt = earliest_incoming_tags(self.graph, self.net)
        for w in range(self.n):
            pending = self.net[w]
            if pending == FOREVER or pending <= self.granted[w]:
                continue
            if eimt[w] > pending:
                grants[w] = tag_max(grants.get(w, NEVER), pending)
        for d, g in sorted(grants.items()):
            if g <= self.granted[d]:
                continue
            if self.final_tag is not None and self.ltc[d] >= self.final_tag:
                continue
            self.granted[d] = g
            self.grants_sent += 1
            self._log(raw_now, f"grant fed={d} tag={format_tag(g)}")
            self._emit(d, WireMessage(MsgType.TAG_GRANT, RTI_ID, d, tag=g))

    def _relay(self, f: int, msg: WireMessage, raw_now: int) -> None:
        if self.mode != CENTRALIZED:
            self._violation(f"tagged relay from federate {f} without coordination")
            return
        d = msg.dst
        if not (0 <= d < self.n):
            self._violation(f"federate {f} addressed unknown federate {d}")
            return
        self.msgs_relayed += 1
        self.bytes_relayed += len(msg.payload)
        self._emit(d, msg)
        # the receiver may legitimately promise down to this tag next
        if msg.tag < self.net[d]:
            self.net[d] = msg.tag
            self._evaluate(None, raw_now)

    # ---------------- stop consensus ----------------

    def _stop_request(self, f: int, raw_now: int) -> None:
        if self.start_tag is None or self.final_tag is not None:
            self._violation(f"stop request from federate {f} outside run")
            return
        if self._stopping:
            return  # first request wins; duplicates are harmless
        self._stopping = True
        self._log(raw_now, f"stop requested by fed={f}")
        for i in range(self.n):
            self._emit(i, WireMessage(MsgType.STOP_REQ, RTI_ID, i))

    def _stop_reply(self, f: int, msg: WireMessage, raw_now: int) -> None:
        if not self._stopping or self.final_tag is not None:
            self._violation(f"stray stop reply from federate {f}")
            return
        self._stop_replies[f] = msg.tag
        if len(self._stop_replies) < self.n:
            return
        final = NEVER
        for t in self._stop_replies.values():
            final = tag_max(final, t)
        self.final_tag = final
        self._log(raw_now, f"stop granted at {format_tag(final)}")
        for i in range(self.n):
            self._emit(i, WireMessage(MsgType.STOP_GRANT, RTI_ID, i, tag=final))
        if self.mode == CENTRALIZED:
            # the shutdown event pulls every promise down to the final tag
            for i in range(self.n):
                self.net[i] = tag_min(self.net[i], final)
            self._evaluate(None, raw_now)
        else:
            self._done = True

    # ---------------- plumbing ----------------

    def _violation(self, text: str) -> None:
        self.violations += 1
        self.violation_log.append(text)
        if self._logf is not None:
            self._logf.write(f"violation: {text}\n")

    def _log(self, raw_now: int, text: str) -> None:
        if self._logf is not None:
            self._logf.write(f"{raw_now} {text}\n")

    def _emit(self, dst: int, msg: WireMessage) -> None:
        if self._send is None:
            raise ProtocolError("coordinator has no transport")
        self._send(dst, msg)
