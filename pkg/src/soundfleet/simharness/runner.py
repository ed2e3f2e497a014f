"""End-to-end scenario execution: generator, player fleet, virtual network,
scripted weather and overrides, all on one deterministic event kernel.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

from .. import fixtures
from ..composer import waterfall_target
from ..environment import EnvironmentState, VirtualClock, WeatherReading
from ..scheduler import GeneratorState, SchedulerConfig
from ..wire import encode, format_dispatch_line
from .kernel import SimKernel
from .network import AssetChannel, DatagramNetwork
from .nodes import SimPlayerNode, SyncController, ZoneLevelBoard
from .scenario import Scenario, ScenarioInputs, load_inputs
from .tracefile import Trace, TraceWriter


@dataclass
class RunArtifacts:
    scenario: Scenario
    dispatch_records: list
    datagrams_sent: int
    datagrams_dropped: int
    duplicates: int
    sync_rounds: dict = field(default_factory=dict)
    sync_converged: bool = True
    transfer_failures: int = 0
    zones: list = field(default_factory=list)
    catalog: object = None


def run(scenario: Scenario, trace_path: str | None = None,
        inputs: ScenarioInputs | None = None) -> tuple:
    """Execute a scenario; returns (Trace, RunArtifacts)."""
    if inputs is None:
        inputs = load_inputs(scenario)
    kernel = SimKernel()
    writer = TraceWriter(trace_path)

    def trace(t_ms, node, kind, fields_):
        writer.write(t_ms, node, kind, fields_)

    trace(0, "harness", "scenario", {
        "name": scenario.name,
        "seed": scenario.seed,
        "start": scenario.start.isoformat(),
        "duration_h": scenario.duration_h,
        "loss_pct": scenario.loss_pct,
        "reorder_s": scenario.reorder_s,
        "digest": scenario.digest(),
    })

    # Environment: initial weather is the first at-or-before-start reading,
    # falling back to the seasonal default table.
    from ..environment import season_of

    season = season_of(scenario.start.date())
    temp, hum, precip, wind = inputs.weather_defaults[season]
    initial = WeatherReading(scenario.start, temp, hum, precip, wind)
    future_readings = []
    for reading in inputs.weather_trace:
        if reading.timestamp <= scenario.start:
            initial = reading
        else:
            future_readings.append(reading)

    env = EnvironmentState(
        clock=VirtualClock(scenario.start, scenario.acceleration),
        weather=initial,
        schedule=inputs.schedule,
        ethology=inputs.ethology,
        seasonal_defaults=inputs.weather_defaults,
        room_consent={},
    )

    config = SchedulerConfig(
        tick_period_s=scenario.tick_s,
        lookahead_s=scenario.lookahead_s,
        stagger_s=scenario.stagger_s,
        retransmit_interval_s=scenario.retransmit_s,
        sequence_lead_s=scenario.sequence_lead_s,
    )
    generator = GeneratorState(
        env=env,
        zones=inputs.topology,
        catalog=inputs.catalog,
        rng_root=scenario.seed,
        config=config,
        profiles=inputs.profiles,
        anchor=scenario.start,
        trace=trace,
    )

    network = DatagramNetwork(
        kernel, scenario.seed,
        loss_pct=scenario.loss_pct, reorder_s=scenario.reorder_s, trace=trace,
    )
    assets = fixtures.build_asset_store(inputs.catalog)
    board = ZoneLevelBoard([z.zone_id for z in inputs.topology], trace)

    presync_inv = fixtures.presync_inventory(inputs.catalog, assets) if scenario.presync else {}
    presync_meta = fixtures.sample_meta(inputs.catalog) if scenario.presync else {}
    players = []
    for zone in inputs.topology:
        for pid in zone.player_ids:
            node = SimPlayerNode(
                kernel, pid, zone.zone_id, inputs.catalog, board, trace,
                presync_inventory=dict(presync_inv), presync_meta=dict(presync_meta),
            )
            network.register(pid, node.receive)
            players.append(node)

    board.init_lines(0)

    # Waterfall points boot with the fall already sounding: it never stops.
    boot_params = waterfall_target(env)
    for zone in inputs.topology:
        if zone.landmark == "waterfall":
            wf_body = {
                "rate_mhz": round(boot_params.grain_rate_hz * 1000),
                "dur_ms": round(boot_params.grain_dur_ms),
                "level_mdba": round(boot_params.level_dba * 1000),
                "tilt_milli": round(boot_params.spectral_tilt * 1000),
                "enabled": 1,
            }
            for node in players:
                if node.state.player_id in zone.player_ids:
                    node.boot_waterfall(wf_body, boot_params.level_dba, 0)

    end_ms = scenario.duration_ms()

    # Scripted weather and console overrides feed the generator inbox.
    for reading in future_readings:
        t_ms = generator.to_ms(reading.timestamp)
        if 0 < t_ms <= end_ms:
            kernel.schedule(t_ms, lambda t, r=reading: generator.submit(r))
    for t_ms, override in inputs.override_events:
        if 0 <= t_ms <= end_ms:
            kernel.schedule(t_ms, lambda t, o=override: generator.submit(o))

    sync = None
    channel = AssetChannel(kernel, transfer_failures=scenario.transfer_failures, trace=trace)
    if not scenario.presync:
        sync = SyncController(
            kernel, channel, players, inputs.catalog, assets, trace,
            interval_s=scenario.sync_interval_s,
        )
        sync.start(0)

    tick_ms = scenario.tick_s * 1000

    def do_tick(t_ms: int):
        actions = generator.tick(t_ms)
        for action in actions:
            datagram = encode(action.message)
            network.send(t_ms, action.target_player, datagram, action.message.digest())
        nxt = t_ms + tick_ms
        if nxt <= end_ms:
            kernel.schedule(nxt, do_tick)

    kernel.schedule(0, do_tick)
    kernel.run_until(end_ms)

    trace(end_ms, "harness", "scenario_end", {
        "sent": network.sent,
        "dropped": network.dropped,
    })
    trace_obj = writer.close()
    artifacts = RunArtifacts(
        scenario=scenario,
        dispatch_records=list(generator.dispatch_records),
        datagrams_sent=network.sent,
        datagrams_dropped=network.dropped,
        duplicates=sum(p.duplicates for p in players),
        sync_rounds=dict(sync.rounds) if sync else {},
        sync_converged=sync.all_converged() if sync else True,
        transfer_failures=channel.failed,
        zones=inputs.topology,
        catalog=inputs.catalog,
    )
    return trace_obj, artifacts


def write_dispatch_log(artifacts: RunArtifacts, path: str) -> None:
    """The append-only `epoch;virtual_time;player;msg_type;msg_digest` file."""
    with open(path, "w", encoding="utf-8") as fh:
        for epoch, t_ms, player, msg_type, digest in artifacts.dispatch_records:
            fh.write(format_dispatch_line(epoch, t_ms, player, msg_type, digest))
            fh.write("\n")


def verify_replay(trace: Trace, artifacts: RunArtifacts) -> bool:
    """Reconstruct the dispatch schedule from the trace; it must match the
    generator's in-memory record exactly (log completeness)."""
    reconstructed = []
    for t_ms, node, kind, fields_ in trace:
        if kind == "dispatch":
            reconstructed.append((
                int(fields_["epoch"]), t_ms, fields_["player"],
                fields_["type"], fields_["digest"],
            ))
    return reconstructed == artifacts.dispatch_records


def run_twice_identical(scenario: Scenario, out_dir: str | None = None) -> tuple:
    """Run a scenario twice; returns (identical: bool, digest_a, digest_b)."""
    paths = (None, None)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        paths = (os.path.join(out_dir, "run_a.log"), os.path.join(out_dir, "run_b.log"))
    trace_a, _ = run(scenario, trace_path=paths[0])
    trace_b, _ = run(scenario, trace_path=paths[1])
    da, db = trace_a.content_digest(), trace_b.content_digest()
    return da == db, da, db
