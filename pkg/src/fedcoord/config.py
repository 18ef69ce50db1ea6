"""Declarative federation configuration (YAML).

A federation is described by a single file: federate list, connection list,
coordination mode, latency-bound table, transport selection, and seed. The
runtime is a library; the only thing a config cannot express is reaction
code, so each federate names a registered behavior plus its parameters.

Durations accept either bare integers (nanoseconds) or strings with units,
e.g. "5ms", "100us", "1s".

Example:

    name: demo
    coordination: decentralized
    transport: sim
    seed: 7
    federates:
      - name: source
        behavior: periodic_source
        params: {period: 10ms, count: 100}
      - name: sink
        behavior: sink
    connections:
      - {from: source.0, to: sink.0, kind: logical, after: 0}
    latency_bounds:
      default: {launch: 100us, network: 2ms, clock: 0}
    links:
      default: {base: 500us, jitter: 1ms}
      pairs:
        - {from: source, to: rti, base: 100us, jitter: 0}
    clocks:
      - {federate: source, offset: 500us, drift_ppb: 20000}
"""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from fedcoord.clocksync import ClockSyncConfig
from fedcoord.exceptions import ConfigError
from fedcoord.maxplus import LatencyBounds, solve_stp_offsets
from fedcoord.netsim import ClockModel, LinkModel
from fedcoord.tags import parse_duration
from fedcoord.topology import (
    Connection,
    ConnectionKind,
    FederateSpec,
    FederationGraph,
    build_graph,
)

RTI_NAME = "rti"


@dataclass
class FederationConfig:
    name: str
    coordination: str
    graph: FederationGraph
    transport: str = "sim"
    seed: int = 0
    start_margin: int | None = None
    net_refresh: int | None = None
    chase_physical: bool = True
    clock_sync: ClockSyncConfig = field(default_factory=ClockSyncConfig)
    bounds: LatencyBounds | None = None
    behaviors: dict[int, tuple[str, dict]] = field(default_factory=dict)
    default_link: LinkModel = field(default_factory=LinkModel)
    link_overrides: dict[tuple[str, str], LinkModel] = field(default_factory=dict)
    clocks: dict[int, ClockModel] = field(default_factory=dict)

    def stp_offsets(self) -> list[int]:
        """Per-federate safe-to-process offsets for decentralized runs."""
        if self.bounds is not None:
            return solve_stp_offsets(self.graph, self.bounds)
        return [f.stp_offset_override or 0 for f in self.graph.federates]


def _dur(value, where: str) -> int:
    try:
        return parse_duration(value)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"{where}: {e}")


def _endpoint(text, where: str) -> tuple[str, int]:
    if not isinstance(text, str) or "." not in text:
        raise ConfigError(f"{where}: expected 'federate.channel', got {text!r}")
    name, _, chan = text.rpartition(".")
    if not chan.isdigit():
        raise ConfigError(f"{where}: channel in {text!r} is not a number")
    return name, int(chan)


def parse_config(doc: dict) -> FederationConfig:
    if not isinstance(doc, dict):
        raise ConfigError("top level of the config must be a mapping")
    known = {
        "name", "coordination", "transport", "seed", "start_margin",
        "net_refresh", "chase_physical", "clock_sync", "federates",
        "connections", "latency_bounds", "links", "clocks",
    }
    for key in doc:
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")

    coordination = doc.get("coordination", "centralized")
    if coordination not in ("centralized", "decentralized"):
        raise ConfigError("coordination must be centralized or decentralized")
    transport = doc.get("transport", "sim")
    if transport not in ("sim", "socket"):
        raise ConfigError("transport must be sim or socket")

    fed_docs = doc.get("federates")
    if not fed_docs:
        raise ConfigError("config needs at least one federate")
    specs: list[FederateSpec] = []
    behaviors: dict[int, tuple[str, dict]] = {}
    index: dict[str, int] = {}
    for i, fd in enumerate(fed_docs):
        if not isinstance(fd, dict) or "name" not in fd:
            raise ConfigError(f"federates[{i}] needs a name")
        name = str(fd["name"])
        if name == RTI_NAME:
            raise ConfigError(f"federate name {RTI_NAME!r} is reserved")
        index[name] = i
        override = fd.get("stp_offset")
        specs.append(
            FederateSpec(
                id=i,
                name=name,
                has_physical_action=bool(fd.get("has_physical_action", False)),
                stp_offset_override=(
                    None if override is None else _dur(override, f"federates[{i}].stp_offset")
                ),
            )
        )
        if "behavior" in fd:
            params = fd.get("params", {}) or {}
            if not isinstance(params, dict):
                raise ConfigError(f"federates[{i}].params must be a mapping")
            behaviors[i] = (str(fd["behavior"]), params)

    conns: list[Connection] = []
    for i, cd in enumerate(doc.get("connections", []) or []):
        where = f"connections[{i}]"
        src_name, src_ch = _endpoint(cd.get("from"), where)
        dst_name, dst_ch = _endpoint(cd.get("to"), where)
        for nm in (src_name, dst_name):
            if nm not in index:
                raise ConfigError(f"{where}: unknown federate {nm!r}")
        kind = cd.get("kind", "logical")
        try:
            kind = ConnectionKind(kind)
        except ValueError:
            raise ConfigError(f"{where}: kind must be logical or physical")
        conns.append(
            Connection(
                from_federate=index[src_name],
                from_channel=src_ch,
                to_federate=index[dst_name],
                to_channel=dst_ch,
                kind=kind,
                after=_dur(cd.get("after", 0), f"{where}.after"),
            )
        )
    graph = build_graph(specs, conns)

    bounds = None
    bd = doc.get("latency_bounds")
    if bd is not None:
        def triple(d, where):
            return (
                _dur(d.get("launch", 0), f"{where}.launch"),
                _dur(d.get("network", 0), f"{where}.network"),
                _dur(d.get("clock", 0), f"{where}.clock"),
            )

        default = triple(bd["default"], "latency_bounds.default") if "default" in bd else None
        entries = {}
        for i, pd in enumerate(bd.get("pairs", []) or []):
            where = f"latency_bounds.pairs[{i}]"
            a, b = pd.get("from"), pd.get("to")
            if a not in index or b not in index:
                raise ConfigError(f"{where}: unknown federate pair ({a}, {b})")
            entries[(index[a], index[b])] = triple(pd, where)
        bounds = LatencyBounds(entries=entries, default=default)

    sync = ClockSyncConfig()
    sd = doc.get("clock_sync")
    if sd is not None:
        sync = ClockSyncConfig(
            mode=sd.get("mode", "off"),
            period=_dur(sd.get("period", 5_000_000), "clock_sync.period"),
            trials=int(sd.get("trials", 10)),
            attenuation=int(sd.get("attenuation", 10)),
        )

    default_link = LinkModel()
    link_overrides: dict[tuple[str, str], LinkModel] = {}
    ld = doc.get("links")
    if ld is not None:
        def link(d, where):
            return LinkModel(
                base_latency=_dur(d.get("base", 0), f"{where}.base"),
                jitter=_dur(d.get("jitter", 0), f"{where}.jitter"),
                fifo=bool(d.get("fifo", True)),
                bandwidth_bps=int(d.get("bandwidth_bps", 0)),
            )

        if "default" in ld:
            default_link = link(ld["default"], "links.default")
        for i, pd in enumerate(ld.get("pairs", []) or []):
            where = f"links.pairs[{i}]"
            a, b = str(pd.get("from")), str(pd.get("to"))
            for nm in (a, b):
                if nm != RTI_NAME and nm not in index:
                    raise ConfigError(f"{where}: unknown endpoint {nm!r}")
            link_overrides[(a, b)] = link(pd, where)

    clocks: dict[int, ClockModel] = {}
    for i, cd in enumerate(doc.get("clocks", []) or []):
        where = f"clocks[{i}]"
        nm = cd.get("federate")
        if nm not in index:
            raise ConfigError(f"{where}: unknown federate {nm!r}")
        clocks[index[nm]] = ClockModel(
            offset=_dur(cd.get("offset", 0), f"{where}.offset"),
            drift_ppb=int(cd.get("drift_ppb", 0)),
        )

    margin = doc.get("start_margin")
    refresh = doc.get("net_refresh")
    return FederationConfig(
        name=str(doc.get("name", "federation")),
        coordination=coordination,
        graph=graph,
        transport=transport,
        seed=int(doc.get("seed", 0)),
        start_margin=None if margin is None else _dur(margin, "start_margin"),
        net_refresh=None if refresh is None else _dur(refresh, "net_refresh"),
        chase_physical=bool(doc.get("chase_physical", True)),
        clock_sync=sync,
        bounds=bounds,
        behaviors=behaviors,
        default_link=default_link,
        link_overrides=link_overrides,
        clocks=clocks,
    )


def load_config(path: str) -> FederationConfig:
    with open(path, "r", encoding="utf-8") as fp:
        doc = yaml.safe_load(fp)
    return parse_config(doc)
