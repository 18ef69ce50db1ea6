"""YAML federation configs: parsing, validation, derived offsets, and a
whole-config simulated run."""

import textwrap

import pytest

from fedcoord.config import load_config, parse_config
from fedcoord.exceptions import ConfigError
from fedcoord.harness import run_config_sim
from fedcoord.netsim import LinkModel
from fedcoord.topology import ConnectionKind

MS = 1_000_000
US = 1_000

FULL = """
name: demo
coordination: decentralized
transport: sim
seed: 7
start_margin: 2ms
net_refresh: 10ms
chase_physical: false
clock_sync: {mode: runtime, period: 3ms, trials: 4, attenuation: 5}
federates:
  - name: source
    behavior: periodic_source
    params: {period: 10ms, count: 100}
    has_physical_action: true
  - name: sink
    behavior: sink
    params: {stop_after: 100}
    stp_offset: 800us
connections:
  - {from: source.0, to: sink.0, kind: logical, after: 250us}
latency_bounds:
  default: {launch: 100us, network: 2ms, clock: 0}
  pairs:
    - {from: source, to: sink, launch: 50us, network: 1ms, clock: 10us}
links:
  default: {base: 500us, jitter: 1ms, bandwidth_bps: 1000000}
  pairs:
    - {from: source, to: rti, base: 100us, jitter: 0, fifo: false}
clocks:
  - {federate: source, offset: 500us, drift_ppb: 20000}
"""


def parse(text):
    import yaml

    return parse_config(yaml.safe_load(textwrap.dedent(text)))


class TestFullConfig:
    def setup_method(self):
        self.cfg = parse(FULL)

    def test_scalars(self):
        cfg = self.cfg
        assert cfg.name == "demo"
        assert cfg.coordination == "decentralized"
        assert cfg.transport == "sim"
        assert cfg.seed == 7
        assert cfg.start_margin == 2 * MS
        assert cfg.net_refresh == 10 * MS
        assert cfg.chase_physical is False

    def test_clock_sync(self):
        sync = self.cfg.clock_sync
        assert (sync.mode, sync.period, sync.trials, sync.attenuation) == (
            "runtime", 3 * MS, 4, 5,
        )

    def test_graph(self):
        g = self.cfg.graph
        assert [f.name for f in g.federates] == ["source", "sink"]
        assert g.federates[0].has_physical_action
        assert g.federates[1].stp_offset_override == 800 * US
        (c,) = g.connections
        assert (c.from_federate, c.from_channel, c.to_federate, c.to_channel) == (
            0, 0, 1, 0,
        )
        assert c.kind is ConnectionKind.LOGICAL
        assert c.after == 250 * US

    def test_behaviors(self):
        assert self.cfg.behaviors[0] == ("periodic_source", {"period": "10ms", "count": 100})
        assert self.cfg.behaviors[1][0] == "sink"

    def test_latency_bounds(self):
        b = self.cfg.bounds
        assert b.default == (100 * US, 2 * MS, 0)
        assert b.entries[(0, 1)] == (50 * US, MS, 10 * US)

    def test_links(self):
        assert self.cfg.default_link == LinkModel(
            base_latency=500 * US, jitter=MS, fifo=True, bandwidth_bps=1_000_000
        )
        override = self.cfg.link_overrides[("source", "rti")]
        assert override.base_latency == 100 * US
        assert override.fifo is False

    def test_clocks(self):
        clock = self.cfg.clocks[0]
        assert clock.offset == 500 * US
        assert clock.drift_ppb == 20_000

    def test_offsets_solved_from_bounds(self):
        # with explicit bounds the solver result wins over the override
        offsets = self.cfg.stp_offsets()
        assert len(offsets) == 2
        assert offsets[0] == 0  # no upstream
        assert offsets[1] > 0


class TestOffsetFallback:
    def test_override_used_without_bounds(self):
        cfg = parse(
            """
            name: x
            coordination: decentralized
            federates:
              - {name: a}
              - {name: b, stp_offset: 3ms}
            connections:
              - {from: a.0, to: b.0}
            """
        )
        assert cfg.stp_offsets() == [0, 3 * MS]


class TestDefaults:
    def test_minimal(self):
        cfg = parse("federates: [{name: only}]")
        assert cfg.name == "federation"
        assert cfg.coordination == "centralized"
        assert cfg.transport == "sim"
        assert cfg.seed == 0
        assert cfg.start_margin is None
        assert cfg.bounds is None
        assert cfg.clock_sync.mode == "off"
        assert cfg.graph.n == 1


class TestValidation:
    @pytest.mark.parametrize(
        "text,fragment",
        [
            ("[]", "mapping"),
            ("federates: [{name: a}]\nbogus: 1", "unknown config key"),
            ("federates: [{name: a}]\ncoordination: loose", "coordination"),
            ("federates: [{name: a}]\ntransport: pigeon", "transport"),
            ("name: x", "at least one federate"),
            ("federates: [{behavior: sink}]", "needs a name"),
            ("federates: [{name: rti}]", "reserved"),
            ("federates: [{name: a, params: 3, behavior: sink}]", "params"),
            (
                "federates: [{name: a}]\nconnections: [{from: a, to: a.0}]",
                "federate.channel",
            ),
            (
                "federates: [{name: a}]\nconnections: [{from: a.x, to: a.0}]",
                "not a number",
            ),
            (
                "federates: [{name: a}]\nconnections: [{from: b.0, to: a.0}]",
                "unknown federate",
            ),
            (
                "federates: [{name: a}, {name: b}]\n"
                "connections: [{from: a.0, to: b.0, kind: psychic}]",
                "kind",
            ),
            (
                "federates: [{name: a}, {name: b}]\n"
                "connections: [{from: a.0, to: b.0, after: -1ms}]",
                "negative connection delay",
            ),
            (
                "federates: [{name: a}]\n"
                "latency_bounds: {pairs: [{from: a, to: zz}]}",
                "unknown federate pair",
            ),
            (
                "federates: [{name: a}]\nlinks: {pairs: [{from: a, to: zz}]}",
                "unknown endpoint",
            ),
            (
                "federates: [{name: a}]\nclocks: [{federate: zz}]",
                "unknown federate",
            ),
            ("federates: [{name: a}]\nstart_margin: soon", "start_margin"),
        ],
    )
    def test_rejects(self, text, fragment):
        with pytest.raises(ConfigError) as err:
            parse(text)
        assert fragment in str(err.value)

    def test_duplicate_names_rejected(self):
        with pytest.raises(ConfigError):
            parse("federates: [{name: a}, {name: a}]")


class TestLoadAndRun:
    def test_load_from_file(self, tmp_path):
        p = tmp_path / "fed.yaml"
        p.write_text(FULL)
        cfg = load_config(str(p))
        assert cfg.name == "demo"

    def test_shipped_pipeline_config_runs(self):
        cfg = load_config("configs/pipeline.yaml")
        rti, feds, states = run_config_sim(cfg)
        assert all(f.done for f in feds)
        assert all(f.ltc == f.final_tag for f in feds)
        sink_state = states[max(states)]
        assert sink_state.msgs > 0

    def test_config_run_is_seed_deterministic(self):
        cfg = load_config("configs/fanin.yaml")
        _, feds_a, states_a = run_config_sim(cfg, seed=5)
        _, feds_b, states_b = run_config_sim(cfg, seed=5)
        assert [f.ltc for f in feds_a] == [f.ltc for f in feds_b]
        a = {i: (s.msgs, s.bytes) for i, s in states_a.items()}
        b = {i: (s.msgs, s.bytes) for i, s in states_b.items()}
        assert a == b
