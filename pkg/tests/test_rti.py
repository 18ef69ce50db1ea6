"""Central coordinator: startup, grant rules, relay, stop consensus, violations."""

import itertools
import random

import pytest

from fedcoord.rti import (
    CENTRALIZED,
    DECENTRALIZED,
    DEFAULT_MIN_MARGIN,
    Rti,
    decide_start_tag,
    downstream_grants,
    earliest_incoming_tags,
)
from fedcoord.exceptions import ProtocolError
from fedcoord.tags import FOREVER, NEVER, Tag, tag_add_delay, tag_min
from fedcoord.topology import Connection, FederateSpec, build_graph
from fedcoord.wire import RTI_ID, MsgType, WireMessage

MS = 1_000_000


def _graph(n, edges):
    """edges: {(src, dst): after_delay_ns}; input channels auto-assigned"""
    feds = [FederateSpec(id=i, name=f"f{i}") for i in range(n)]
    next_in = [0] * n
    conns = []
    for (u, d), a in edges.items():
        conns.append(Connection(u, 0, d, next_in[d], after=a))
        next_in[d] += 1
    return build_graph(feds, conns)


def make_rti(graph, mode=CENTRALIZED, **kw):
    sent = []
    rti = Rti(graph, mode, send=lambda dst, msg: sent.append((dst, msg)), **kw)
    return rti, sent


def start(rti, readings=None, rtts=None):
    """Register every federate and drive the start consensus."""
    n = rti.n
    readings = readings or [0] * n
    rtts = rtts or [0] * n
    for f in range(n):
        rti.on_frame(WireMessage(MsgType.REGISTER, f, RTI_ID), 0)
    for f in range(n):
        rti.on_frame(
            WireMessage(
                MsgType.START_PROPOSE, f, RTI_ID, times=(readings[f], rtts[f])
            ),
            0,
        )
    assert rti.start_tag is not None


def nmr(rti, f, ltc, net, now=0):
    rti.on_frame(WireMessage(MsgType.NMR, f, RTI_ID, tag=ltc, tag2=net), now)


def grants_in(sent):
    return [(dst, m.tag) for dst, m in sent if m.type == MsgType.TAG_GRANT]


class TestDecideStart:
    def test_override_margin(self):
        assert decide_start_tag([100, 50], [1, 2], 15) == Tag(115, 0)
        assert decide_start_tag([50], [0], 5) == Tag(55, 0)
        assert decide_start_tag([3], [9], 5) == Tag(8, 0)

    def test_default_margin_floor(self):
        # tiny round trips: the 10ms floor dominates
        assert decide_start_tag([7], [100]) == Tag(7 + DEFAULT_MIN_MARGIN, 0)

    def test_default_margin_scales_with_rtt(self):
        t = decide_start_tag([0, 0, 0], [2 * MS, 8 * MS, MS])
        assert t == Tag(2 * 8 * MS * 3, 0)

    def test_dominates_every_reading(self):
        rng = random.Random(7)
        for _ in range(200):
            n = rng.randrange(1, 6)
            readings = [rng.randrange(0, 10**9) for _ in range(n)]
            rtts = [rng.randrange(0, 10**7) for _ in range(n)]
            t = decide_start_tag(readings, rtts)
            assert all(t.time >= r + DEFAULT_MIN_MARGIN for r in readings)
            assert t.microstep == 0


class TestDownstreamGrants:
    def test_zero_delay_bumps_microstep(self):
        # completing (3ms, 0) over an undelayed link entitles the consumer
        # to one microstep past it, not to the same tag
        g = _graph(2, {(0, 1): 0})
        out = downstream_grants(g, [Tag(3 * MS, 0), NEVER], 0)
        assert out == {1: Tag(3 * MS, 1)}

    def test_positive_delay_resets_microstep(self):
        g = _graph(2, {(0, 1): 2 * MS})
        out = downstream_grants(g, [Tag(3 * MS, 4), NEVER], 0)
        assert out == {1: Tag(5 * MS, 0)}

    def test_fan_in_takes_minimum_over_upstreams(self):
        g = _graph(3, {(0, 2): 0, (1, 2): 0})
        out = downstream_grants(g, [Tag(9 * MS, 0), Tag(4 * MS, 0), NEVER], 0)
        assert out == {2: Tag(4 * MS, 1)}

    def test_unstarted_upstream_pins_grant_at_bottom(self):
        g = _graph(3, {(0, 2): MS, (1, 2): MS})
        out = downstream_grants(g, [Tag(9 * MS, 0), NEVER, NEVER], 0)
        assert out == {2: NEVER}


class TestEarliestIncoming:
    def test_no_upstream_is_unbounded(self):
        g = _graph(2, {(0, 1): MS})
        eimt = earliest_incoming_tags(g, [Tag(5 * MS, 0), Tag(9 * MS, 0)])
        assert eimt[0] == FOREVER
        assert eimt[1] == Tag(6 * MS, 0)

    def test_two_cycle_fixpoint(self):
        # 0 <-> 1 with 1ms each way, promises (5ms,0) and (7ms,0):
        # the mutual bound settles at (7ms,0) for 0 and (6ms,0) for 1
        g = _graph(2, {(0, 1): MS, (1, 0): MS})
        eimt = earliest_incoming_tags(g, [Tag(5 * MS, 0), Tag(7 * MS, 0)])
        assert eimt == [Tag(7 * MS, 0), Tag(6 * MS, 0)]

    def test_zero_delay_cycle_still_descends_to_fixpoint(self):
        g = _graph(2, {(0, 1): 0, (1, 0): 0})
        eimt = earliest_incoming_tags(g, [Tag(5 * MS, 0), Tag(5 * MS, 0)])
        assert eimt == [Tag(5 * MS, 1), Tag(5 * MS, 1)]

    def _oracle_operator(self, g, nets, vec):
        out = []
        for f in range(g.n):
            ups = g.upstream(f)
            if not ups:
                out.append(FOREVER)
                continue
            best = FOREVER
            for u in ups:
                seed = tag_min(vec[u], nets[u])
                best = min(best, tag_add_delay(seed, g.min_delay[u][f]))
            out.append(best)
        return out

    def test_result_is_a_fixpoint(self):
        rng = random.Random(11)
        for _ in range(100):
            n = rng.randrange(2, 5)
            edges = {}
            for u in range(n):
                for d in range(n):
                    if u != d and rng.random() < 0.5:
                        edges[(u, d)] = rng.choice([0, MS, 2 * MS])
            if not edges:
                continue
            g = _graph(n, edges)
            nets = [Tag(rng.randrange(0, 10) * MS, rng.randrange(0, 2)) for _ in range(n)]
            eimt = earliest_incoming_tags(g, nets)
            assert self._oracle_operator(g, nets, eimt) == eimt

    def test_dominates_grid_fixpoints(self):
        # any other vector satisfying the equations sits below the answer
        rng = random.Random(13)
        for _ in range(30):
            n = rng.randrange(2, 4)
            edges = {}
            for u in range(n):
                for d in range(n):
                    if u != d and rng.random() < 0.6:
                        edges[(u, d)] = rng.choice([0, MS])
            if not edges:
                continue
            g = _graph(n, edges)
            nets = [Tag(rng.randrange(0, 4) * MS, 0) for _ in range(n)]
            eimt = earliest_incoming_tags(g, nets)
            candidates = set([NEVER, FOREVER] + nets)
            for t in list(candidates):
                for a in (0, MS):
                    candidates.add(tag_add_delay(t, a))
            for vec in itertools.product(sorted(candidates), repeat=n):
                vec = list(vec)
                if self._oracle_operator(g, nets, vec) == vec:
                    assert all(v <= e for v, e in zip(vec, eimt))


class TestStartupProtocol:
    def test_grant_broadcast_after_last_proposal(self):
        g = _graph(2, {(0, 1): MS})
        rti, sent = make_rti(g, margin_override=10)
        start(rti, readings=[100, 300])
        starts = [(dst, m) for dst, m in sent if m.type == MsgType.START_GRANT]
        assert [dst for dst, _ in starts] == [0, 1]
        assert all(m.tag == Tag(310, 0) for _, m in starts)
        assert rti.start_tag == Tag(310, 0)

    def test_proposal_before_register_is_flagged(self):
        g = _graph(1, {})
        rti, _ = make_rti(g)
        rti.on_frame(WireMessage(MsgType.START_PROPOSE, 0, RTI_ID, times=(0, 0)), 0)
        assert rti.violations == 1
        assert rti.start_tag is None

    def test_peer_payload_attached(self):
        g = _graph(1, {})
        rti, sent = make_rti(g, peer_payload=lambda i: b"addr%d" % i)
        start(rti)
        (dst, m), = [(d, m) for d, m in sent if m.type == MsgType.START_GRANT]
        assert m.payload == b"addr0"

    def test_clock_probe_echo(self):
        g = _graph(1, {})
        rti, sent = make_rti(g)
        rti.on_frame(WireMessage(MsgType.CLOCK_T1, 0, RTI_ID, times=(42,)), 1234)
        (dst, m), = sent
        assert dst == 0 and m.type == MsgType.CLOCK_T3
        assert m.times == (42, 1234, 1234)


class TestGrantFlow:
    def test_chain_completion_grant(self):
        g = _graph(2, {(0, 1): 0})
        rti, sent = make_rti(g, margin_override=0)
        start(rti)
        sent.clear()
        nmr(rti, 1, NEVER, Tag(3 * MS, 0))
        assert grants_in(sent) == []  # nothing granted on a bare promise
        nmr(rti, 0, Tag(3 * MS, 0), Tag(9 * MS, 0))
        assert (1, Tag(3 * MS, 1)) in grants_in(sent)

    def test_fixpoint_grant_without_completion(self):
        # mutual 1ms cycle: both promises sit below what could arrive, but
        # only federate 0's pending tag is strictly dominated
        g = _graph(2, {(0, 1): MS, (1, 0): MS})
        rti, sent = make_rti(g, margin_override=0)
        start(rti)
        sent.clear()
        nmr(rti, 0, NEVER, Tag(5 * MS, 0))
        nmr(rti, 1, NEVER, Tag(7 * MS, 0))
        assert grants_in(sent) == [(0, Tag(5 * MS, 0))]

    def test_no_grant_when_pending_not_dominated(self):
        g = _graph(2, {(0, 1): MS, (1, 0): MS})
        rti, sent = make_rti(g, margin_override=0)
        start(rti)
        sent.clear()
        nmr(rti, 0, NEVER, Tag(5 * MS, 0))
        nmr(rti, 1, NEVER, Tag(6 * MS, 0))
        # eimt = [(7ms,0), (6ms,0)]: federate 1 pends exactly at its bound
        assert grants_in(sent) == [(0, Tag(5 * MS, 0))]

    def test_grants_never_regress(self):
        g = _graph(2, {(0, 1): 0})
        rti, sent = make_rti(g, margin_override=0)
        start(rti)
        nmr(rti, 0, Tag(5 * MS, 0), Tag(20 * MS, 0))
        nmr(rti, 1, Tag(5 * MS, 1), Tag(30 * MS, 0))
        sent.clear()
        # the downstream rule re-derives (5ms,1) but it was already granted
        nmr(rti, 1, Tag(5 * MS, 2), Tag(30 * MS, 0))
        assert grants_in(sent) == []

    def test_grant_counter(self):
        g = _graph(2, {(0, 1): 0})
        rti, sent = make_rti(g, margin_override=0)
        start(rti)
        nmr(rti, 1, NEVER, Tag(3 * MS, 0))
        nmr(rti, 0, Tag(3 * MS, 0), Tag(9 * MS, 0))
        assert rti.grants_sent == len(grants_in(sent))


class TestRelay:
    def test_relay_forwards_and_counts(self):
        g = _graph(2, {(0, 1): MS})
        rti, sent = make_rti(g, margin_override=0)
        start(rti)
        sent.clear()
        msg = WireMessage(
            MsgType.TAGGED_MSG, 0, 1, tag=Tag(4 * MS, 0), payload=b"xyz"
        )
        rti.on_frame(msg, 0)
        assert sent == [(1, msg)]
        assert rti.msgs_relayed == 1
        assert rti.bytes_relayed == 3

    def test_relay_lowers_receiver_promise(self):
        g = _graph(2, {(0, 1): MS})
        rti, sent = make_rti(g, margin_override=0)
        start(rti)
        nmr(rti, 1, NEVER, Tag(9 * MS, 0))
        rti.on_frame(
            WireMessage(MsgType.TAGGED_MSG, 0, 1, tag=Tag(4 * MS, 0)), 0
        )
        assert rti.net[1] == Tag(4 * MS, 0)

    def test_relay_to_unknown_destination(self):
        g = _graph(2, {(0, 1): MS})
        rti, _ = make_rti(g, margin_override=0)
        start(rti)
        rti.on_frame(WireMessage(MsgType.TAGGED_MSG, 0, 7, tag=Tag(MS, 0)), 0)
        assert rti.violations == 1

    def test_relay_rejected_in_decentralized_mode(self):
        g = _graph(2, {(0, 1): MS})
        rti, _ = make_rti(g, DECENTRALIZED, margin_override=0)
        start(rti)
        rti.on_frame(WireMessage(MsgType.TAGGED_MSG, 0, 1, tag=Tag(MS, 0)), 0)
        assert rti.violations == 1
        assert rti.msgs_relayed == 0


class TestStopConsensus:
    def _running(self, n=3):
        g = _graph(n, {(i, i + 1): MS for i in range(n - 1)})
        rti, sent = make_rti(g, margin_override=0)
        start(rti)
        sent.clear()
        return rti, sent

    def test_request_broadcasts(self):
        rti, sent = self._running()
        rti.on_frame(WireMessage(MsgType.STOP_REQ, 1, RTI_ID), 0)
        reqs = [(d, m) for d, m in sent if m.type == MsgType.STOP_REQ]
        assert [d for d, _ in reqs] == [0, 1, 2]

    def test_final_is_max_reply(self):
        rti, sent = self._running()
        rti.on_frame(WireMessage(MsgType.STOP_REQ, 0, RTI_ID), 0)
        sent.clear()
        for f, t in [(0, Tag(10 * MS, 0)), (1, Tag(12 * MS, 1)), (2, Tag(9 * MS, 0))]:
            rti.on_frame(WireMessage(MsgType.STOP_REPLY, f, RTI_ID, tag=t), 0)
        assert rti.final_tag == Tag(12 * MS, 1)
        gs = [(d, m.tag) for d, m in sent if m.type == MsgType.STOP_GRANT]
        assert gs == [(0, Tag(12 * MS, 1)), (1, Tag(12 * MS, 1)), (2, Tag(12 * MS, 1))]

    def test_stop_grant_lowers_promises_and_grants(self):
        # once the final tag is set, a federate promising past it is granted
        # the final tag so it can drain
        g = _graph(2, {(0, 1): MS, (1, 0): MS})
        rti, sent = make_rti(g, margin_override=0)
        start(rti)
        nmr(rti, 0, NEVER, Tag(50 * MS, 0))
        nmr(rti, 1, NEVER, Tag(60 * MS, 0))
        sent.clear()
        rti.on_frame(WireMessage(MsgType.STOP_REQ, 0, RTI_ID), 0)
        for f in range(2):
            rti.on_frame(
                WireMessage(MsgType.STOP_REPLY, f, RTI_ID, tag=Tag(5 * MS, 0)), 0
            )
        assert rti.net == [Tag(5 * MS, 0), Tag(5 * MS, 0)]
        # federate 0 was already granted (50ms,0) by the fixpoint rule when
        # the promises landed, which covers the final tag; only federate 1
        # still needs a fresh grant to reach it
        assert rti.granted[0] >= Tag(5 * MS, 0)
        assert grants_in(sent) == [(1, Tag(5 * MS, 0))]

    def test_done_when_all_drained(self):
        rti, _ = self._running(2)
        rti.on_frame(WireMessage(MsgType.STOP_REQ, 0, RTI_ID), 0)
        for f in range(2):
            rti.on_frame(
                WireMessage(MsgType.STOP_REPLY, f, RTI_ID, tag=Tag(5 * MS, 0)), 0
            )
        assert not rti.done
        nmr(rti, 0, Tag(5 * MS, 0), Tag(6 * MS, 0))
        assert not rti.done
        nmr(rti, 1, Tag(5 * MS, 0), Tag(6 * MS, 0))
        assert rti.done

    def test_decentralized_done_at_grant(self):
        g = _graph(2, {(0, 1): MS})
        rti, _ = make_rti(g, DECENTRALIZED, margin_override=0)
        start(rti)
        rti.on_frame(WireMessage(MsgType.STOP_REQ, 0, RTI_ID), 0)
        for f in range(2):
            rti.on_frame(
                WireMessage(MsgType.STOP_REPLY, f, RTI_ID, tag=Tag(MS, 0)), 0
            )
        assert rti.done

    def test_duplicate_request_ignored(self):
        rti, sent = self._running()
        rti.on_frame(WireMessage(MsgType.STOP_REQ, 0, RTI_ID), 0)
        count = len(sent)
        rti.on_frame(WireMessage(MsgType.STOP_REQ, 1, RTI_ID), 0)
        assert len(sent) == count
        assert rti.violations == 0

    def test_stray_reply_is_flagged(self):
        rti, _ = self._running()
        rti.on_frame(
            WireMessage(MsgType.STOP_REPLY, 0, RTI_ID, tag=Tag(MS, 0)), 0
        )
        assert rti.violations == 1


class TestViolations:
    def test_completed_must_precede_promise(self):
        g = _graph(2, {(0, 1): MS})
        rti, _ = make_rti(g, margin_override=0)
        start(rti)
        nmr(rti, 0, Tag(5 * MS, 0), Tag(5 * MS, 0))
        assert rti.violations == 1
        assert rti.ltc[0] == NEVER  # report discarded

    def test_progress_cannot_regress(self):
        g = _graph(2, {(0, 1): MS})
        rti, _ = make_rti(g, margin_override=0)
        start(rti)
        nmr(rti, 0, Tag(5 * MS, 0), Tag(9 * MS, 0))
        nmr(rti, 0, Tag(4 * MS, 0), Tag(9 * MS, 0))
        assert rti.violations == 1
        assert rti.ltc[0] == Tag(5 * MS, 0)

    def test_unknown_source(self):
        g = _graph(2, {(0, 1): MS})
        rti, _ = make_rti(g)
        rti.on_frame(WireMessage(MsgType.REGISTER, 9, RTI_ID), 0)
        assert rti.violations == 1

    def test_progress_report_rejected_in_decentralized_mode(self):
        g = _graph(2, {(0, 1): MS})
        rti, _ = make_rti(g, DECENTRALIZED, margin_override=0)
        start(rti)
        nmr(rti, 0, Tag(MS, 0), Tag(2 * MS, 0))
        assert rti.violations == 1

    def test_unexpected_type(self):
        g = _graph(1, {})
        rti, _ = make_rti(g)
        rti.on_frame(WireMessage(MsgType.TAG_GRANT, 0, RTI_ID, tag=Tag(MS, 0)), 0)
        assert rti.violations == 1
        assert "TAG_GRANT" in rti.violation_log[0]

    def test_violations_logged_to_sink(self, tmp_path):
        log = (tmp_path / "rti.log").open("w")
        g = _graph(1, {})
        rti, _ = make_rti(g)
        rti._logf = log
        rti.on_frame(WireMessage(MsgType.REGISTER, 5, RTI_ID), 0)
        log.close()
        assert "violation" in (tmp_path / "rti.log").read_text()


class TestConstruction:
    def test_bad_mode(self):
        with pytest.raises(ProtocolError):
            Rti(_graph(1, {}), "peer-to-peer")

    def test_no_transport(self):
        rti = Rti(_graph(1, {}))
        with pytest.raises(ProtocolError):
            rti.on_frame(WireMessage(MsgType.CLOCK_T1, 0, RTI_ID, times=(1,)), 0)

    def test_poll_is_passive(self):
        rti, _ = make_rti(_graph(1, {}))
        assert rti.poll(12345) is None
