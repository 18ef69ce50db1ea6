"""Scenario runner: consistency, error-rate sweep, and throughput benches.

Scenarios:

- permutation: a source emits a four-message sequence each period, messages
  1 and 3 on one channel and 2 and 4 on another, all into one sink. The sink
  records the order it processes them; any order other than 1,2,3,4 is an
  ordering error. Centralized coordination must never produce one;
  decentralized coordination produces them exactly when a message arrives
  after its tag was already passed (a counted violation).
- s1: source -> sink. s2: source -> worker -> sink. s3: a diamond
  source -> {a, b} -> sink where the sink requires both same-tag inputs to
  be logically simultaneous. All three flood fixed-size payloads and report
  receiver-side throughput.

Runs use the simulated transport by default (deterministic, seeded); the
throughput scenarios can also run over localhost sockets with one thread
per federate, which is the configuration the directional performance
comparisons are defined on.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field, replace

from fedcoord.exceptions import FedcoordError
from fedcoord.netsim import ClockModel, LinkModel, SimNetwork
from fedcoord.rti import Rti
from fedcoord.runtime import Federate
from fedcoord.tags import Tag
from fedcoord.topology import (
    Connection,
    ConnectionKind,
    FederateSpec,
    build_graph,
)
from fedcoord.wire import RTI_ID

CSV_HEADER = (
    "scenario, coordination, kind, period_ns, stp_ns, msg_bytes, runs, "
    "errors, violations, msgs, bytes, elapsed_ns, mbps"
)

EXPECTED_ORDER = (1, 2, 3, 4)


@dataclass
class ScenarioConfig:
    scenario: str = "permutation"
    coordination: str = "centralized"
    kind: str = "logical"
    period: int = 1_000_000
    stp_offset: int = 0
    message_size: int = 32
    duration: int | None = None  # logical ns; defaults to sequences * period
    sequences: int = 1_000
    runs: int = 1
    seed: int = 1
    link_base: int = 100_000
    link_jitter: int = 0
    link_bandwidth_bps: int = 1_000_000_000
    transport: str = "sim"
    chase_physical: bool | None = None  # None = scenario default
    margin: int | None = None
    trace_dir: str | None = None

    def __post_init__(self):
        if self.runs < 1:
            raise FedcoordError("runs must be >= 1")
        if self.scenario not in ("permutation", "s1", "s2", "s3"):
            raise FedcoordError(f"unknown scenario {self.scenario!r}")
        if self.kind not in ("logical", "physical"):
            raise FedcoordError(f"unknown connection kind {self.kind!r}")
        if self.duration is not None and self.duration <= 0:
            raise FedcoordError("duration must be > 0")

    @property
    def message_count(self) -> int:
        if self.duration is not None:
            return max(1, self.duration // self.period)
        return self.sequences


@dataclass
class RunReport:
    scenario: str
    coordination: str
    kind: str
    period_ns: int
    stp_ns: int
    msg_bytes: int
    runs: int
    errors: int = 0
    violations: int = 0
    msgs: int = 0
    bytes: int = 0
    elapsed_ns: int = 0
    mbps: float = 0.0
    order_histogram: dict[tuple, int] = field(default_factory=dict)
    out_of_order: int = 0
    data_dropped: int = 0
    tardy_aborts: int = 0
    alignment_checks: int = 0
    alignment_violations: int = 0
    final_tags_consistent: bool = True
    per_run: list[dict] = field(default_factory=list)

    def order_percentages(self) -> dict[tuple, float]:
        total = sum(self.order_histogram.values())
        if total == 0:
            return {}
        return {k: 100.0 * v / total for k, v in self.order_histogram.items()}

    def row(self) -> dict:
        return {
            "scenario": self.scenario,
            "coordination": self.coordination,
            "kind": self.kind,
            "period_ns": self.period_ns,
            "stp_ns": self.stp_ns,
            "msg_bytes": self.msg_bytes,
            "runs": self.runs,
            "errors": self.errors,
            "violations": self.violations,
            "msgs": self.msgs,
            "bytes": self.bytes,
            "elapsed_ns": self.elapsed_ns,
            "mbps": round(self.mbps, 4),
        }


def _mbps(total_bytes: int, elapsed_ns: int) -> float:
    if elapsed_ns <= 0 or total_bytes <= 0:
        return 0.0
    return (total_bytes * 8) / (elapsed_ns / 1e9) / 1e6


class _RunState:
    """Receiver-side observations collected by the sink behaviors."""

    def __init__(self) -> None:
        self.records: list[tuple[int, int, Tag, Tag, bool]] = []
        self.msgs = 0
        self.bytes = 0
        self.alignment_checks = 0
        self.alignment_violations = 0


# ---------------- behaviors ----------------


def _permutation_source(fed: Federate, period: int, count: int, size: int) -> None:
    timer = fed.add_timer(0, period, name="burst")
    chain = fed.add_logical_action(0, name="chain")
    size = max(size, 8)
    state = {"burst": 0, "idx": 0}

    def emit(ctx):
        payload = struct.pack("<II", state["burst"], state["idx"]).ljust(size, b"\0")
        ctx.send(0 if state["idx"] % 2 == 1 else 1, payload)
        if state["idx"] < 4:
            state["idx"] += 1
            ctx.schedule(chain)
        else:
            state["burst"] += 1

    def on_timer(ctx):
        if state["burst"] >= count:
            ctx.request_stop()
            return
        state["idx"] = 1
        emit(ctx)

    fed.add_reaction([timer], on_timer)
    fed.add_reaction([chain], lambda ctx: emit(ctx))


def _record_sink(fed: Federate, channels: list[int], state: _RunState) -> None:
    ins = [fed.input_trigger(ch) for ch in channels]

    def on_msg(ctx):
        for trig in ins:
            ev = ctx.event(trig)
            if ev is None:
                continue
            burst, idx = struct.unpack_from("<II", ev.payload)
            state.records.append((burst, idx, ctx.tag, ev.orig_tag, ev.tardy))
            state.msgs += 1
            state.bytes += len(ev.payload)

    fed.add_reaction(ins, on_msg)


def _flood_source(fed: Federate, period: int, count: int, size: int) -> None:
    # quiesces after the last burst; the receiving side ends the run once
    # everything has arrived, so shutdown never races the data in flight
    kick = fed.add_timer(0, None, name="flood")
    chain = fed.add_logical_action(period, name="next")
    payload = bytes(size)
    state = {"sent": 0}

    def burst(ctx):
        state["sent"] += 1
        ctx.send(0, payload)
        if state["sent"] < count:
            ctx.schedule(chain)

    fed.add_reaction([kick], burst)
    fed.add_reaction([chain], burst)


def _relay(fed: Federate) -> None:
    inp = fed.input_trigger(0)

    def on_msg(ctx):
        ctx.send(0, ctx.get(inp))

    fed.add_reaction([inp], on_msg)


def _counting_sink(
    fed: Federate,
    channels: list[int],
    state: _RunState,
    aligned: bool,
    expected: int | None = None,
) -> None:
    ins = [fed.input_trigger(ch) for ch in channels]

    def on_msg(ctx):
        if aligned:
            state.alignment_checks += 1
            if not all(ctx.triggered(t) for t in ins):
                state.alignment_violations += 1
        for trig in ins:
            ev = ctx.event(trig)
            if ev is not None:
                state.msgs += 1
                state.bytes += len(ev.payload)
        if expected is not None and state.msgs >= expected:
            ctx.request_stop()

    fed.add_reaction(ins, on_msg)


# ---------------- federation assembly ----------------


def _build(cfg: ScenarioConfig):
    """Graph plus per-federate behavior builders; sink is the last id."""
    kind = ConnectionKind(cfg.kind)
    count = cfg.message_count
    state = _RunState()

    def spec(i, name):
        return FederateSpec(id=i, name=name)

    if cfg.scenario == "permutation":
        graph = build_graph(
            [spec(0, "source"), spec(1, "sink")],
            [
                Connection(0, 0, 1, 0, kind, 0),
                Connection(0, 1, 1, 1, kind, 0),
            ],
        )
        builders = {
            0: lambda f: _permutation_source(f, cfg.period, count, cfg.message_size),
            1: lambda f: _record_sink(f, [0, 1], state),
        }
    elif cfg.scenario == "s1":
        graph = build_graph(
            [spec(0, "source"), spec(1, "sink")],
            [Connection(0, 0, 1, 0, kind, 0)],
        )
        builders = {
            0: lambda f: _flood_source(f, cfg.period, count, cfg.message_size),
            1: lambda f: _counting_sink(f, [0], state, aligned=False, expected=count),
        }
    elif cfg.scenario == "s2":
        graph = build_graph(
            [spec(0, "source"), spec(1, "worker"), spec(2, "sink")],
            [
                Connection(0, 0, 1, 0, kind, 0),
                Connection(1, 0, 2, 0, kind, 0),
            ],
        )
        builders = {
            0: lambda f: _flood_source(f, cfg.period, count, cfg.message_size),
            1: lambda f: _relay(f),
            2: lambda f: _counting_sink(f, [0], state, aligned=False, expected=count),
        }
    else:  # s3
        graph = build_graph(
            [spec(0, "source"), spec(1, "a"), spec(2, "b"), spec(3, "sink")],
            [
                Connection(0, 0, 1, 0, kind, 0),
                Connection(0, 0, 2, 0, kind, 0),
                Connection(1, 0, 3, 0, kind, 0),
                Connection(2, 0, 3, 1, kind, 0),
            ],
        )
        # receiver-stamped inputs carry no tags, so alignment is only
        # defined for logical connections
        aligned = kind is ConnectionKind.LOGICAL
        builders = {
            0: lambda f: _flood_source(f, cfg.period, count, cfg.message_size),
            1: lambda f: _relay(f),
            2: lambda f: _relay(f),
            3: lambda f: _counting_sink(
                f, [0, 1], state, aligned=aligned, expected=2 * count
            ),
        }
    return graph, builders, state


def _default_chase(cfg: ScenarioConfig) -> bool:
    if cfg.chase_physical is not None:
        return cfg.chase_physical
    # floods want protocol-bound rates; consistency runs want paced sources
    return cfg.scenario == "permutation"


def _run_once(cfg: ScenarioConfig, seed: int, run_index: int):
    """One simulated federation run; returns (state, federates, aborted)."""
    from fedcoord.exceptions import TardyMessageError

    graph, builders, state = _build(cfg)
    chase = _default_chase(cfg)
    net = SimNetwork(
        seed=seed,
        default_link=LinkModel(
            base_latency=cfg.link_base,
            jitter=cfg.link_jitter,
            bandwidth_bps=cfg.link_bandwidth_bps,
        ),
    )
    rti = Rti(graph, cfg.coordination, margin_override=cfg.margin)
    rti.bind_transport(net.add_node(RTI_ID, rti).send)
    feds = []
    traces = []
    for i in range(graph.n):
        trace = None
        if cfg.trace_dir is not None:
            path = f"{cfg.trace_dir}/{graph.federates[i].name}-run{run_index}.trace"
            trace = open(path, "w", encoding="utf-8")
            traces.append(trace)
        fed = Federate(
            i,
            graph,
            cfg.coordination,
            stp_offset=cfg.stp_offset,
            chase_physical=chase,
            trace=trace,
        )
        builders[i](fed)
        fed.bind_transport(net.add_node(i, fed).send)
        feds.append(fed)
    aborted = False
    try:
        net.run()
    except TardyMessageError:
        if cfg.coordination != "centralized":
            raise
        aborted = True
    finally:
        for t in traces:
            t.close()
    return state, feds, aborted


def _order_key(records_for_burst: list[tuple]) -> tuple:
    return tuple(idx for _burst, idx, _pt, _ot, _tardy in records_for_burst)


def run_permutation_scenario(cfg: ScenarioConfig) -> RunReport:
    if cfg.scenario != "permutation":
        cfg = replace(cfg, scenario="permutation")
    report = RunReport(
        scenario="permutation",
        coordination=cfg.coordination,
        kind=cfg.kind,
        period_ns=cfg.period,
        stp_ns=cfg.stp_offset,
        msg_bytes=max(cfg.message_size, 8),
        runs=cfg.runs,
    )
    for r in range(cfg.runs):
        state, feds, aborted = _run_once(cfg, cfg.seed + r, r)
        by_burst: dict[int, list] = {}
        for rec in state.records:
            by_burst.setdefault(rec[0], []).append(rec)
        errors = 0
        for burst in sorted(by_burst):
            order = _order_key(by_burst[burst])
            report.order_histogram[order] = report.order_histogram.get(order, 0) + 1
            if order != EXPECTED_ORDER:
                errors += 1
        violations = sum(f.stp_violations for f in feds)
        sink = feds[-1]
        elapsed = (
            sink.last_data_at - sink.first_data_at
            if sink.first_data_at is not None and sink.last_data_at is not None
            else 0
        )
        report.errors += errors
        report.violations += violations
        report.msgs += state.msgs
        report.bytes += state.bytes
        report.elapsed_ns += elapsed
        report.out_of_order += sum(
            1 for _b, _i, ptag, otag, _t in state.records if ptag != otag
        )
        report.data_dropped += sum(f.data_dropped for f in feds)
        report.tardy_aborts += 1 if aborted else 0
        if any(f.final_tag is None or f.ltc != f.final_tag for f in feds):
            report.final_tags_consistent = False
        report.per_run.append(
            {
                **report.row(),
                "runs": 1,
                "errors": errors,
                "violations": violations,
                "msgs": state.msgs,
                "bytes": state.bytes,
                "elapsed_ns": elapsed,
                "mbps": round(_mbps(state.bytes, elapsed), 4),
            }
        )
    report.mbps = _mbps(report.bytes, report.elapsed_ns)
    return report


def run_throughput_scenario(cfg: ScenarioConfig) -> RunReport:
    if cfg.scenario not in ("s1", "s2", "s3"):
        raise FedcoordError("throughput scenarios are s1, s2, s3")
    report = RunReport(
        scenario=cfg.scenario,
        coordination=cfg.coordination,
        kind=cfg.kind,
        period_ns=cfg.period,
        stp_ns=cfg.stp_offset,
        msg_bytes=cfg.message_size,
        runs=cfg.runs,
    )
    for r in range(cfg.runs):
        if cfg.transport == "socket":
            from fedcoord.sockets import run_federation_threads

            graph, builders, state = _build(cfg)
            feds = run_federation_threads(
                graph,
                builders,
                coordination=cfg.coordination,
                stp_offset=cfg.stp_offset,
                chase_physical=_default_chase(cfg),
                margin=cfg.margin,
            )
        else:
            state, feds, _aborted = _run_once(cfg, cfg.seed + r, r)
        sink = feds[-1]
        elapsed = (
            sink.last_data_at - sink.first_data_at
            if sink.first_data_at is not None and sink.last_data_at is not None
            else 0
        )
        violations = sum(f.stp_violations for f in feds)
        report.violations += violations
        report.msgs += state.msgs
        report.bytes += state.bytes
        report.elapsed_ns += elapsed
        report.alignment_checks += state.alignment_checks
        report.alignment_violations += state.alignment_violations
        report.errors += state.alignment_violations
        report.data_dropped += sum(f.data_dropped for f in feds)
        if any(f.final_tag is None or f.ltc != f.final_tag for f in feds):
            report.final_tags_consistent = False
        report.per_run.append(
            {
                **report.row(),
                "runs": 1,
                "errors": state.alignment_violations,
                "violations": violations,
                "msgs": state.msgs,
                "bytes": state.bytes,
                "elapsed_ns": elapsed,
                "mbps": round(_mbps(state.bytes, elapsed), 4),
            }
        )
    report.mbps = _mbps(report.bytes, report.elapsed_ns)
    if cfg.scenario == "s3" and cfg.kind == "logical" and report.alignment_violations:
        raise FedcoordError(
            f"s3 sink saw {report.alignment_violations} misaligned firings"
        )
    return report


def run_scenario(cfg: ScenarioConfig) -> RunReport:
    if cfg.scenario == "permutation":
        return run_permutation_scenario(cfg)
    return run_throughput_scenario(cfg)


def run_stp_sweep(cfg: ScenarioConfig, offsets: list[int]) -> list[tuple[int, RunReport]]:
    """Permutation error rate per safe-to-process offset.

    Asserts the sufficiency bound: an offset at or above the worst link
    latency (base plus jitter, clocks here are exact) must yield zero
    violations.
    """
    if cfg.coordination != "decentralized":
        raise FedcoordError("the offset sweep is a decentralized experiment")
    out = []
    bound = cfg.link_base + cfg.link_jitter
    for offset in offsets:
        rep = run_permutation_scenario(replace(cfg, stp_offset=offset))
        if offset >= bound and (rep.violations or rep.errors):
            raise FedcoordError(
                f"offset {offset} >= bound {bound} but saw "
                f"{rep.violations} violations, {rep.errors} errors"
            )
        out.append((offset, rep))
    return out


def _fmt_value(v) -> str:
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def emit_report(reports, path: str) -> None:
    """Write aggregate rows (plus per-run and per-order rows) as CSV."""
    if isinstance(reports, RunReport):
        reports = [reports]
    with open(path, "w", encoding="utf-8") as fp:
        fp.write(CSV_HEADER + "\n")
        for rep in reports:
            if rep.runs > 1:
                for row in rep.per_run:
                    fp.write(", ".join(_fmt_value(row[c]) for c in _COLUMNS) + "\n")
            fp.write(", ".join(_fmt_value(rep.row()[c]) for c in _COLUMNS) + "\n")
            for order, n in sorted(rep.order_histogram.items()):
                row = rep.row()
                row["scenario"] = "permutation[" + "-".join(map(str, order)) + "]"
                row["runs"] = n
                row["msgs"] = n * len(order)
                fp.write(", ".join(_fmt_value(row[c]) for c in _COLUMNS) + "\n")


_COLUMNS = [c.strip() for c in CSV_HEADER.split(",")]


def seeded_clock(seed: int, fid: int, error_bound: int) -> ClockModel:
    """Deterministic per-federate true-clock model within an error bound."""
    if error_bound <= 0:
        return ClockModel()
    rng = random.Random(f"{seed}/clock/{fid}")
    return ClockModel(offset=rng.randint(-error_bound, error_bound))


# ---------------- config-driven runs ----------------


def apply_behavior(fed: Federate, name: str, params: dict) -> _RunState:
    """Attach a registered behavior to a federate; returns its observations."""
    from fedcoord.tags import parse_duration

    state = _RunState()
    period = parse_duration(params.get("period", 1_000_000))
    count = int(params.get("count", 1_000))
    size = int(params.get("message_size", 32))
    if name == "permutation_source":
        _permutation_source(fed, period, count, size)
    elif name in ("periodic_source", "flood_source"):
        _flood_source(fed, period, count, size)
    elif name == "relay":
        _relay(fed)
    elif name == "record_sink":
        _record_sink(fed, fed.input_channels(), state)
    elif name == "sink":
        stop_after = params.get("stop_after")
        _counting_sink(
            fed,
            fed.input_channels(),
            state,
            aligned=bool(params.get("aligned", False)),
            expected=None if stop_after is None else int(stop_after),
        )
    else:
        raise FedcoordError(f"unknown behavior {name!r}")
    return state


def run_config_sim(
    cfg,
    seed: int | None = None,
    traces: dict[int, object] | None = None,
    capture=None,
):
    """Simulate a whole config-described federation; returns (rti, federates,
    per-federate observations)."""
    graph = cfg.graph
    net = SimNetwork(
        seed=cfg.seed if seed is None else seed, default_link=cfg.default_link
    )
    if capture is not None:
        net.capture_to(capture)

    def node_id(name: str) -> int:
        return RTI_ID if name == "rti" else graph.by_name(name).id

    for (a, b), model in cfg.link_overrides.items():
        net.set_link(node_id(a), node_id(b), model)
    rti = Rti(graph, cfg.coordination, margin_override=cfg.start_margin)
    rti.bind_transport(net.add_node(RTI_ID, rti).send)
    offsets = cfg.stp_offsets() if cfg.coordination == "decentralized" else [0] * graph.n
    feds, states = [], {}
    for i in range(graph.n):
        kwargs = {}
        if cfg.net_refresh is not None:
            kwargs["net_refresh"] = cfg.net_refresh
        fed = Federate(
            i,
            graph,
            cfg.coordination,
            stp_offset=offsets[i],
            clock_sync=cfg.clock_sync,
            chase_physical=cfg.chase_physical,
            trace=(traces or {}).get(i),
            **kwargs,
        )
        if i in cfg.behaviors:
            name, params = cfg.behaviors[i]
            states[i] = apply_behavior(fed, name, params)
        fed.bind_transport(net.add_node(i, fed, clock=cfg.clocks.get(i)).send)
        feds.append(fed)
    net.run()
    return rti, feds, states
