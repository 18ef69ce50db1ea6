"""Command line entry points.

Subcommands:
  stp           solve and print safe-to-process offsets for a config
  rti           run the coordinator as a socket server
  federate      run one federate against a coordinator (or a whole
                simulated federation when the config says transport: sim)
  bench         scenario benchmarks with CSV output
  decode-trace  pretty-print a captured frame log
"""

from __future__ import annotations

import sys
import time

import click

from fedcoord.config import load_config
from fedcoord.exceptions import FedcoordError
from fedcoord.tags import format_duration, format_tag, parse_duration
from fedcoord.wire import read_capture


@click.group()
@click.version_option(package_name="fedcoord")
def main() -> None:
    """Federated discrete-event coordination runtime."""


@main.command("stp")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--machine", is_flag=True, help="machine-readable rows only")
def stp_cmd(config_path: str, machine: bool) -> None:
    """Print the lateness matrix, max cycle weight, and offsets."""
    from fedcoord.maxplus import lateness_matrix, max_cycle_weight, solve_stp_offsets

    cfg = load_config(config_path)
    if cfg.bounds is None:
        raise click.ClickException("config has no latency_bounds section")
    graph = cfg.graph
    matrix = lateness_matrix(graph, cfg.bounds)
    cycle = max_cycle_weight(matrix)
    offsets = solve_stp_offsets(graph, cfg.bounds)
    names = [f.name for f in graph.federates]
    if not machine:
        click.echo("lateness matrix (row = receiver, ns):")
        width = max(len(n) for n in names) + 2
        click.echo(" " * width + "  ".join(f"{n:>12}" for n in names))
        for j, name in enumerate(names):
            cells = [
                f"{matrix.rows[j][i]:>12}" if matrix.rows[j][i] is not None else f"{'-':>12}"
                for i in range(graph.n)
            ]
            click.echo(f"{name:<{width}}" + "  ".join(cells))
        click.echo(
            "max cycle weight: " + ("none (acyclic)" if cycle is None else f"{cycle} ns")
        )
        click.echo("offsets:")
    for j, name in enumerate(names):
        click.echo(f"stp {name} {offsets[j]} {format_duration(offsets[j])}")


@main.command("rti")
@click.option("--port", default=15045, show_default=True)
@click.option("--federation-config", "config_path", required=True, type=click.Path(exists=True))
@click.option(
    "--log-level",
    type=click.Choice(["quiet", "info"]),
    default="info",
    show_default=True,
)
def rti_cmd(port: int, config_path: str, log_level: str) -> None:
    """Run the coordinator; one log line per protocol message."""
    from fedcoord.sockets import RtiServer

    cfg = load_config(config_path)
    log = sys.stdout if log_level == "info" else None
    server = RtiServer(
        cfg.graph, cfg.coordination, port=port, margin=cfg.start_margin, log=log
    )
    server.start()
    click.echo(f"coordinator listening on {server.address[0]}:{server.address[1]}")
    try:
        while not server.rti.done:
            time.sleep(0.1)
    except KeyboardInterrupt:
        pass
    finally:
        server.close()


@main.command("federate")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--federate-name", default=None, help="required for socket transport")
@click.option("--coordination", type=click.Choice(["centralized", "decentralized"]))
@click.option("--rti-address", default="127.0.0.1:15045", show_default=True)
@click.option("--seed", type=int, default=None, help="simulated transport only")
@click.option("--trace-out", type=click.Path(), default=None)
@click.option(
    "--capture-out",
    type=click.Path(),
    default=None,
    help="write every simulated frame to a binary capture (sim transport)",
)
def federate_cmd(
    config_path, federate_name, coordination, rti_address, seed, trace_out, capture_out
):
    """Run one federate (socket transport) or simulate the whole federation
    in-process (sim transport)."""
    import dataclasses

    from fedcoord.harness import apply_behavior, run_config_sim

    cfg = load_config(config_path)
    if coordination:
        cfg = dataclasses.replace(cfg, coordination=coordination)
    if cfg.transport == "sim":
        spec = cfg.graph.by_name(federate_name) if federate_name else None
        traces = {}
        if trace_out:
            if spec is None:
                raise click.ClickException("--trace-out needs --federate-name")
            traces[spec.id] = open(trace_out, "w", encoding="utf-8")
        capture = open(capture_out, "wb") if capture_out else None
        try:
            _rti, feds, _states = run_config_sim(
                cfg, seed=seed, traces=traces, capture=capture
            )
        finally:
            for fp in traces.values():
                fp.close()
            if capture is not None:
                capture.close()
        for fed in feds if spec is None else [feds[spec.id]]:
            _summary(fed)
        return
    else:
        if not federate_name:
            raise click.ClickException("socket transport needs --federate-name")
        if capture_out:
            raise click.ClickException("--capture-out is for the sim transport")
        spec = cfg.graph.by_name(federate_name)
        from fedcoord.runtime import Federate
        from fedcoord.sockets import FederateRunner

        host, _, port = rti_address.rpartition(":")
        offsets = (
            cfg.stp_offsets()
            if cfg.coordination == "decentralized"
            else [0] * cfg.graph.n
        )
        trace_fp = open(trace_out, "w", encoding="utf-8") if trace_out else None

        def factory(payload):
            kwargs = {}
            if cfg.net_refresh is not None:
                kwargs["net_refresh"] = cfg.net_refresh
            fed = Federate(
                spec.id,
                cfg.graph,
                cfg.coordination,
                stp_offset=offsets[spec.id],
                clock_sync=cfg.clock_sync,
                chase_physical=cfg.chase_physical,
                live_clock=time.monotonic_ns,
                register_payload=payload,
                trace=trace_fp,
                **kwargs,
            )
            if spec.id in cfg.behaviors:
                name, params = cfg.behaviors[spec.id]
                apply_behavior(fed, name, params)
            return fed

        runner = FederateRunner(factory, (host or "127.0.0.1", int(port)))
        runner.start()
        try:
            while runner.thread.is_alive():
                runner.thread.join(0.25)
        except KeyboardInterrupt:
            pass
        finally:
            if trace_fp:
                trace_fp.close()
        if runner.error is not None:
            raise click.ClickException(f"federate failed: {runner.error}")
        _summary(runner.fed)


def _summary(fed) -> None:
    click.echo(
        f"{fed.name}: processed={fed.processed_events} "
        f"last_tag={format_tag(fed.ltc)} violations={fed.stp_violations} "
        f"deadline_misses={fed.deadline_misses} dropped={fed.dropped_events}"
    )


@main.command("bench")
@click.option(
    "--scenario",
    type=click.Choice(["permutation", "s1", "s2", "s3"]),
    default="permutation",
    show_default=True,
)
@click.option(
    "--coordination",
    type=click.Choice(["centralized", "decentralized"]),
    default="centralized",
    show_default=True,
)
@click.option("--kind", type=click.Choice(["logical", "physical"]), default="logical")
@click.option("--period", default="1ms", show_default=True)
@click.option("--stp", default="0", show_default=True)
@click.option("--sweep", default=None, help="comma-separated offsets, e.g. 0,1ms,5ms")
@click.option("--runs", default=1, show_default=True)
@click.option("--seed", default=1, show_default=True)
@click.option("--msg-size", default=32, show_default=True)
@click.option("--duration", default=None, help="logical duration, e.g. 100ms")
@click.option("--sequences", default=1000, show_default=True)
@click.option("--link-base", default="100us", show_default=True)
@click.option("--link-jitter", default="0", show_default=True)
@click.option(
    "--transport", type=click.Choice(["sim", "socket"]), default="sim", show_default=True
)
@click.option("--out", "out_path", type=click.Path(), default=None)
def bench_cmd(
    scenario, coordination, kind, period, stp, sweep, runs, seed, msg_size,
    duration, sequences, link_base, link_jitter, transport, out_path,
):
    """Run a scenario (or an offset sweep) and print/emit the report."""
    from fedcoord.harness import (
        ScenarioConfig,
        emit_report,
        run_scenario,
        run_stp_sweep,
    )

    cfg = ScenarioConfig(
        scenario=scenario,
        coordination=coordination,
        kind=kind,
        period=parse_duration(period),
        stp_offset=parse_duration(stp),
        message_size=msg_size,
        duration=None if duration is None else parse_duration(duration),
        sequences=sequences,
        runs=runs,
        seed=seed,
        link_base=parse_duration(link_base),
        link_jitter=parse_duration(link_jitter),
        transport=transport,
    )
    try:
        if sweep:
            offsets = [parse_duration(tok.strip()) for tok in sweep.split(",")]
            results = run_stp_sweep(cfg, offsets)
            reports = [rep for _off, rep in results]
            for off, rep in results:
                total = max(1, sum(rep.order_histogram.values()))
                click.echo(
                    f"offset={format_duration(off):>8}  errors={rep.errors}  "
                    f"violations={rep.violations}  "
                    f"error_rate={100.0 * rep.errors / total:.2f}%"
                )
        else:
            rep = run_scenario(cfg)
            reports = [rep]
            click.echo(
                f"{rep.scenario} {rep.coordination}/{rep.kind}: "
                f"msgs={rep.msgs} errors={rep.errors} violations={rep.violations} "
                f"elapsed={format_duration(rep.elapsed_ns)} mbps={rep.mbps:.3f}"
            )
            for order, pct in sorted(rep.order_percentages().items()):
                label = "-".join(map(str, order))
                click.echo(f"  order {label}: {pct:.2f}%")
    except FedcoordError as e:
        raise click.ClickException(str(e))
    if out_path:
        emit_report(reports, out_path)
        click.echo(f"wrote {out_path}")


@main.command("decode-trace")
@click.argument("path", type=click.Path(exists=True))
def decode_trace_cmd(path: str) -> None:
    """Pretty-print a captured frame log (binary capture format)."""
    def fed(x: int) -> str:
        return "rti" if x == 0xFFFF else str(x)

    with open(path, "rb") as fp:
        for stamp, msg in read_capture(fp):
            parts = [
                f"{stamp:>15}",
                f"{fed(msg.src)}->{fed(msg.dst)}",
                msg.type.name,
            ]
            if msg.channel:
                parts.append(f"ch={msg.channel}")
            if msg.tag is not None:
                parts.append(f"tag={format_tag(msg.tag)}")
            if msg.tag2 is not None:
                parts.append(f"tag2={format_tag(msg.tag2)}")
            if msg.times:
                parts.append("times=" + ",".join(str(t) for t in msg.times))
            if msg.payload:
                parts.append(f"payload={len(msg.payload)}B")
            click.echo(" ".join(parts))


if __name__ == "__main__":
    main()
