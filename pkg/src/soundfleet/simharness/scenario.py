"""Scenario configuration: one `key=value` per line, resolving `fixture:`
paths against the bundled fixture directory. Two runs of one scenario must
produce identical traces, so everything an experiment needs lives here.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, fields
from datetime import datetime

from .. import fixtures
from ..catalog import load_manifest
from ..composer import load_room_profiles, load_topology
from ..environment import (
    load_ethology,
    load_schedule,
    load_weather_defaults,
    load_weather_trace,
)
from ..scheduler import ConsoleOverride


class ScenarioError(Exception):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    start: datetime
    duration_h: float
    seed: int
    acceleration: float = 600.0
    topology: str = "fixture:topology.txt"
    catalog: str = "fixture:manifest.txt"
    schedule: str = "fixture:schedule.txt"
    ethology: str = "fixture:ethology.txt"
    weather_defaults: str = "fixture:weather_defaults.txt"
    weather: str = "fixture:mild_day.txt"
    rooms: str = "fixture:rooms.txt"
    overrides: str | None = None
    loss_pct: float = 0.0
    reorder_s: float = 0.0
    transfer_failures: int = 0
    presync: bool = True
    tick_s: int = 10
    lookahead_s: int = 120
    stagger_s: int = 60
    retransmit_s: int = 60
    sequence_lead_s: int = 15
    sync_interval_s: int = 60

    def duration_ms(self) -> int:
        return int(self.duration_h * 3600 * 1000)

    def digest(self) -> str:
        parts = []
        for f in fields(self):
            parts.append(f"{f.name}={getattr(self, f.name)}")
        return hashlib.sha256("\n".join(parts).encode("utf-8")).hexdigest()[:16]

    def without_faults(self) -> "Scenario":
        from dataclasses import replace

        return replace(self, loss_pct=0.0, reorder_s=0.0, transfer_failures=0)


def resolve_path(ref: str, base_dir: str | None = None) -> str:
    if ref.startswith("fixture:"):
        return fixtures.fixture_path(ref[len("fixture:"):])
    if base_dir and not os.path.isabs(ref):
        return os.path.join(base_dir, ref)
    return ref


_BOOLS = {"true": True, "false": False, "1": True, "0": False}


def load_scenario(path) -> Scenario:
    base_dir = os.path.dirname(os.path.abspath(path))
    kv = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ScenarioError(f"line {line_no}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            kv[key.strip()] = value.strip()
    try:
        scenario = Scenario(
            name=kv.get("name", os.path.splitext(os.path.basename(path))[0]),
            start=datetime.fromisoformat(kv["start"]),
            duration_h=float(kv["duration_h"]),
            seed=int(kv["seed"]),
            acceleration=float(kv.get("acceleration", 600)),
            topology=kv.get("topology", "fixture:topology.txt"),
            catalog=kv.get("catalog", "fixture:manifest.txt"),
            schedule=kv.get("schedule", "fixture:schedule.txt"),
            ethology=kv.get("ethology", "fixture:ethology.txt"),
            weather_defaults=kv.get("weather_defaults", "fixture:weather_defaults.txt"),
            weather=kv.get("weather", "fixture:mild_day.txt"),
            rooms=kv.get("rooms", "fixture:rooms.txt"),
            overrides=kv.get("overrides"),
            loss_pct=float(kv.get("loss_pct", 0)),
            reorder_s=float(kv.get("reorder_s", 0)),
            transfer_failures=int(kv.get("transfer_failures", 0)),
            presync=_BOOLS.get(kv.get("presync", "true").lower(), True),
            tick_s=int(kv.get("tick_s", 10)),
            lookahead_s=int(kv.get("lookahead_s", 120)),
            stagger_s=int(kv.get("stagger_s", 60)),
            retransmit_s=int(kv.get("retransmit_s", 60)),
            sequence_lead_s=int(kv.get("sequence_lead_s", 15)),
            sync_interval_s=int(kv.get("sync_interval_s", 60)),
        )
    except KeyError as exc:
        raise ScenarioError(f"missing required key {exc}") from None
    _validate(scenario, base_dir)
    return scenario


def _validate(s: Scenario, base_dir: str | None) -> None:
    if s.duration_h <= 0:
        raise ScenarioError("duration_h must be positive")
    if not 0 <= s.loss_pct < 100:
        raise ScenarioError("loss_pct outside [0, 100)")
    if s.acceleration < 1:
        raise ScenarioError("acceleration must be >= 1")
    for ref in (s.topology, s.catalog, s.schedule, s.ethology,
                s.weather_defaults, s.weather, s.rooms):
        p = resolve_path(ref, base_dir)
        if not os.path.exists(p):
            raise ScenarioError(f"input not found: {ref} -> {p}")


@dataclass
class ScenarioInputs:
    topology: list
    catalog: object
    schedule: object
    ethology: object
    weather_defaults: dict
    weather_trace: list
    profiles: dict
    override_events: list = field(default_factory=list)  # (t_ms, ConsoleOverride)


def load_inputs(s: Scenario, base_dir: str | None = None) -> ScenarioInputs:
    inputs = ScenarioInputs(
        topology=load_topology(resolve_path(s.topology, base_dir)),
        catalog=load_manifest(resolve_path(s.catalog, base_dir)),
        schedule=load_schedule(resolve_path(s.schedule, base_dir)),
        ethology=load_ethology(resolve_path(s.ethology, base_dir)),
        weather_defaults=load_weather_defaults(resolve_path(s.weather_defaults, base_dir)),
        weather_trace=load_weather_trace(resolve_path(s.weather, base_dir)),
        profiles=load_room_profiles(resolve_path(s.rooms, base_dir)),
    )
    if s.overrides:
        inputs.override_events = load_override_script(resolve_path(s.overrides, base_dir))
    return inputs


def load_override_script(path) -> list:
    """Override script: `offset_s;kind;target;value;author` per line."""
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            offset_s, kind, target, value, author = line.split(";")
            t_ms = int(float(offset_s) * 1000)
            events.append((t_ms, ConsoleOverride(
                kind=kind,
                target=target,
                value=_parse_value(kind, value),
                author=author,
                timestamp_ms=t_ms,
            )))
    return sorted(events, key=lambda e: e[0])


def _parse_value(kind: str, raw: str):
    if kind == "consent_set":
        return raw.lower() in ("true", "1", "yes")
    if kind == "trim":
        return float(raw)
    if kind == "trigger_sequence":
        return raw or "default"
    return None
