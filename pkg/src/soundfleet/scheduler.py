"""Generator tick loop: decides which zones need fresh sequences, keeps the
landmark tracks (bells, waterfall, pendulum) fed, and dispatches lookahead
commands to players with redundant transmission.

Ticks are idempotent: re-ticking at the same instant emits nothing new,
which makes at-least-once dispatch safe end to end.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, replace
from datetime import datetime, timedelta

from .catalog import Catalog
from .composer import (
    GrainParams,
    Sequence,
    ZoneConfig,
    bell_schedule,
    bell_timbre,
    compose_sequence,
    in_bedtime,
    waterfall_params,
)
from .environment import (
    EnvironmentState,
    StaleReadingError,
    VirtualClock,
    effective_weather,
    ingest_weather,
)
from .wire import ControlMessage

OVERRIDE_KINDS = ("mute", "unmute", "trim", "consent_set", "trigger_sequence", "stop_sequence")
CONSOLE_TRIM_LIMIT_DB = 12.0

# Trigger templates thin the composed event list; "calm" keeps ~60 % of events.
SEQUENCE_TEMPLATES = {
    "default": 1.0,
    "calm": 0.6,
}


class ClockRegressionError(Exception):
    pass


class OverrideError(Exception):
    pass


@dataclass(frozen=True)
class ConsoleOverride:
    kind: str
    target: str  # zone or room id
    value: object = None
    author: str = "console"
    timestamp_ms: int = 0

    def __post_init__(self):
        if self.kind not in OVERRIDE_KINDS:
            raise OverrideError(f"unknown override kind {self.kind!r}")


@dataclass(frozen=True)
class DispatchAction:
    target_player: str
    message: ControlMessage
    due_ms: int
    emitted_ms: int
    epoch: int


@dataclass(frozen=True)
class SchedulerConfig:
    tick_period_s: int = 10
    lookahead_s: int = 120
    stagger_s: int = 60
    retransmit_interval_s: int = 60
    time_sync_interval_s: int = 600
    waterfall_refresh_s: int = 60
    sequence_lead_s: int = 15
    bell_stroke_gap_ms: int = 3000


@dataclass
class _PendingMsg:
    message: ControlMessage
    player: str
    due_ms: int
    sends: int = 0
    last_sent_ms: int | None = None


@dataclass
class _ZoneRuntime:
    zone: ZoneConfig
    sequence: Sequence | None = None
    seq_start_ms: int = 0
    seq_idle_at_ms: int = 0  # start + duration + tail
    emitted_events: int = 0
    never_started: bool = True
    muted: bool = False
    trim_db: float = 0.0
    waterfall: GrainParams | None = None
    waterfall_sent_ms: int | None = None
    pendulum_on: bool = False


def zone_seed(rng_root: int, zone_id: str, epoch: int) -> int:
    """Stable per-(zone, epoch) seed; adding zones never perturbs the others."""
    digest = hashlib.sha256(f"{rng_root}:{zone_id}:{epoch}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class GeneratorState:
    """Single logical owner of the tick loop; overrides and weather arrive
    through a serialized inbox applied between ticks."""

    def __init__(
        self,
        env: EnvironmentState,
        zones: list,
        catalog: Catalog,
        rng_root: int,
        config: SchedulerConfig | None = None,
        profiles: dict | None = None,
        anchor: datetime | None = None,
        trace=None,
    ):
        self.env = env
        self.zones = sorted(zones, key=lambda z: z.zone_id)
        self.catalog = catalog
        self.rng_root = rng_root
        self.config = config or SchedulerConfig()
        self.profiles = dict(profiles or {})
        self.anchor = anchor or env.clock.now
        self.trace = trace or (lambda t, node, kind, fields: None)
        self.epoch = 0
        self.last_tick_ms: int | None = None
        self.msg_seq = 0
        self.pending: list = []
        self.inbox: list = []
        self.bell_horizon_ms = 0
        self.runtime = {z.zone_id: _ZoneRuntime(zone=z) for z in self.zones}
        self.dispatch_records: list = []
        self.override_log: list = []

    # -- time helpers -----------------------------------------------------

    def to_ms(self, dt: datetime) -> int:
        return int((dt - self.anchor).total_seconds() * 1000)

    def to_dt(self, t_ms: int) -> datetime:
        return self.anchor + timedelta(milliseconds=t_ms)

    # -- message creation ---------------------------------------------------

    def _next_seq(self) -> int:
        seq = self.msg_seq
        self.msg_seq += 1
        return seq

    def _queue(self, kind: str, player: str, due_ms: int, body: dict, now_ms: int) -> None:
        msg = ControlMessage(kind=kind, msg_seq=self._next_seq(), sent_at_ms=now_ms, body=body)
        self.pending.append(_PendingMsg(message=msg, player=player, due_ms=due_ms))

    def submit(self, item) -> None:
        """Inbox entry point for weather readings and console overrides."""
        self.inbox.append(item)

    # -- overrides -----------------------------------------------------------

    def _zone_runtime(self, zone_id: str) -> _ZoneRuntime:
        if zone_id not in self.runtime:
            raise OverrideError(f"unknown zone {zone_id!r}")
        return self.runtime[zone_id]

    def apply_override(self, override: ConsoleOverride, now_ms: int) -> None:
        """Validate and apply one console override before the next tick."""
        rt = None
        if override.kind != "consent_set":
            rt = self._zone_runtime(override.target)
        if override.kind == "trim":
            trim = float(override.value)
            if not -CONSOLE_TRIM_LIMIT_DB <= trim <= CONSOLE_TRIM_LIMIT_DB:
                raise OverrideError(f"trim {trim:+.1f} dB outside +/-12")
        self.override_log.append(override)
        self.trace(now_ms, "generator", "override", {
            "kind": override.kind, "target": override.target,
            "value": override.value, "author": override.author,
        })

        if override.kind == "mute":
            self._cancel_zone_output(rt, now_ms, fade_ms=2000)
            rt.muted = True
        elif override.kind == "unmute":
            rt.muted = False
        elif override.kind == "trim":
            rt.trim_db = float(override.value)
            for player in rt.zone.player_ids:
                self._queue("GAIN", player, now_ms + 1000,
                            {"trim_mdb": round(rt.trim_db * 1000)}, now_ms)
        elif override.kind == "consent_set":
            consent = dict(self.env.room_consent)
            consent[override.target] = bool(override.value)
            self.env = replace(self.env, room_consent=consent)
            if not override.value and override.target in self.runtime:
                rt = self.runtime[override.target]
                if rt.pendulum_on:
                    self._pendulum_off(rt, now_ms)
        elif override.kind == "trigger_sequence":
            template = str(override.value or "default")
            if template not in SEQUENCE_TEMPLATES:
                raise OverrideError(f"unknown sequence template {template!r}")
            self._cancel_zone_output(rt, now_ms, fade_ms=2000)
            self._plan_ambient(rt, now_ms, density_scale=SEQUENCE_TEMPLATES[template])
        elif override.kind == "stop_sequence":
            self._cancel_zone_output(rt, now_ms, fade_ms=2000)
            rt.seq_idle_at_ms = now_ms + 60_000

    def _cancel_zone_output(self, rt: _ZoneRuntime, now_ms: int, fade_ms: int) -> None:
        """Stop at the next 1 s boundary with a fade; drop undispatched events."""
        players = set(rt.zone.player_ids)
        self.pending = [p for p in self.pending if p.player not in players]
        rt.sequence = None
        rt.seq_idle_at_ms = now_ms
        rt.emitted_events = 0
        due = int(math.ceil(now_ms / 1000.0) * 1000)
        for player in sorted(players):
            self._queue("STOP", player, due, {"selector": "all", "fade_out_ms": fade_ms}, now_ms)
        if rt.pendulum_on:
            rt.pendulum_on = False
        if rt.waterfall is not None:
            rt.waterfall = None
            rt.waterfall_sent_ms = None

    def _pendulum_off(self, rt: _ZoneRuntime, now_ms: int) -> None:
        rt.pendulum_on = False
        for player in rt.zone.player_ids:
            self._queue(
                "SYNTH_PARAM", player, now_ms + 1000,
                {"synth": "pendulum", "due_ms": now_ms + 1000,
                 "params": {"enabled": 0, "period_ms": 2000}},
                now_ms,
            )

    # -- planning --------------------------------------------------------------

    def _env_at(self, t_ms: int) -> EnvironmentState:
        return replace(
            self.env,
            clock=VirtualClock(self.to_dt(t_ms), self.env.clock.acceleration),
        )

    def plan_zone(self, zone: ZoneConfig, now_ms: int,
                  density_scale: float = 1.0) -> Sequence | None:
        """Compose the zone's next sequence with a staggered start."""
        rt = self.runtime[zone.zone_id]
        if rt.muted:
            return None
        if zone.zone_class == "bedroom_point" and not self.env.consent(zone.zone_id):
            return None
        start_ms = now_ms + self.config.sequence_lead_s * 1000
        if not rt.never_started:
            stagger_ms = self.config.stagger_s * 1000
            for _ in range(len(zone.neighbor_zones) + 1):
                moved = False
                for nid in zone.neighbor_zones:
                    nrt = self.runtime.get(nid)
                    if nrt is None or nrt.sequence is None:
                        continue
                    if abs(start_ms - nrt.seq_start_ms) < stagger_ms:
                        start_ms = nrt.seq_start_ms + stagger_ms
                        moved = True
                if not moved:
                    break
        rng = random.Random(zone_seed(self.rng_root, zone.zone_id, self.epoch))
        env_at_start = self._env_at(start_ms)
        seq = compose_sequence(zone, env_at_start, self.catalog, rng)
        if density_scale != 1.0 and seq.events:
            keep = []
            for i, ev in enumerate(seq.events):
                if density_scale >= 1.0 or rng.random() < density_scale:
                    keep.append(ev)
            seq = replace(seq, events=tuple(keep))
        return seq

    def _plan_ambient(self, rt: _ZoneRuntime, now_ms: int, density_scale: float = 1.0) -> None:
        seq = self.plan_zone(rt.zone, now_ms, density_scale=density_scale)
        if seq is None:
            return
        start_ms = self.to_ms(seq.start_time)
        rt.sequence = seq
        rt.seq_start_ms = start_ms
        rt.seq_idle_at_ms = start_ms + int((seq.duration_s + seq.tail_silence_s) * 1000)
        rt.emitted_events = 0
        rt.never_started = False
        self.trace(now_ms, "generator", "sequence", {
            "zone": rt.zone.zone_id,
            "id": seq.sequence_id,
            "start_ms": start_ms,
            "duration_ms": int(seq.duration_s * 1000),
            "tail_ms": int(seq.tail_silence_s * 1000),
            "events": len(seq.events),
            "shape": seq.envelope.shape,
        })

    # -- per-tick production ----------------------------------------------------

    def _produce_bells(self, now_ms: int) -> None:
        horizon = now_ms + self.config.lookahead_s * 1000
        if self.bell_horizon_ms >= horizon:
            return
        bell_zones = [z for z in self.zones if z.landmark == "bells"]
        if not bell_zones:
            self.bell_horizon_ms = horizon
            return
        weather = effective_weather(self.env)
        timbre = bell_timbre(weather)
        day = self.to_dt(max(self.bell_horizon_ms, 0)).date()
        last_day = self.to_dt(horizon).date()
        while day <= last_day:
            for group in bell_schedule(day):
                due = self.to_ms(group.at)
                if due <= self.bell_horizon_ms or due > horizon or due <= now_ms:
                    continue
                for zone in bell_zones:
                    if self.runtime[zone.zone_id].muted:
                        continue
                    level = zone.budget.active_dba - 2.0
                    for player in zone.player_ids:
                        self._queue(
                            "SYNTH_PARAM", player, due,
                            {
                                "synth": "bell",
                                "due_ms": due,
                                "params": {
                                    "strokes": group.strokes,
                                    "stroke_gap_ms": self.config.bell_stroke_gap_ms,
                                    "decay_ms": round(timbre.decay_s * 1000),
                                    "brightness_milli": round(timbre.brightness * 1000),
                                    "detune_cents_milli": round(timbre.detune_cents * 1000),
                                    "level_mdba": round(level * 1000),
                                },
                            },
                            now_ms,
                        )
            day = day + timedelta(days=1)
        self.bell_horizon_ms = horizon

    def _produce_waterfall(self, rt: _ZoneRuntime, now_ms: int) -> None:
        params = waterfall_params(self._env_at(now_ms), rt.waterfall)
        refresh_ms = self.config.waterfall_refresh_s * 1000
        changed = rt.waterfall is None or params != rt.waterfall
        stale = rt.waterfall_sent_ms is None or now_ms - rt.waterfall_sent_ms >= refresh_ms
        rt.waterfall = params
        if not (changed or stale):
            return
        rt.waterfall_sent_ms = now_ms
        body_params = {
            "rate_mhz": round(params.grain_rate_hz * 1000),
            "dur_ms": round(params.grain_dur_ms),
            "level_mdba": round(params.level_dba * 1000),
            "tilt_milli": round(params.spectral_tilt * 1000),
            "enabled": 1,
        }
        for player in rt.zone.player_ids:
            self._queue(
                "SYNTH_PARAM", player, now_ms + 2000,
                {"synth": "waterfall", "due_ms": now_ms + 2000, "params": body_params},
                now_ms,
            )
        self.trace(now_ms, "generator", "waterfall_params", {
            "zone": rt.zone.zone_id,
            "level": round(params.level_dba, 3),
            "rate": round(params.grain_rate_hz, 3),
        })

    def _produce_pendulum(self, rt: _ZoneRuntime, now_ms: int) -> None:
        profile = self.profiles.get(rt.zone.zone_id)
        if profile is None or not profile.pendulum:
            return
        consented = self.env.consent(rt.zone.zone_id)
        in_window = in_bedtime(profile, self.to_dt(now_ms).time())
        if consented and in_window and not rt.pendulum_on and not rt.muted:
            anchor = int(math.ceil((now_ms + self.config.sequence_lead_s * 1000) / 2000.0) * 2000)
            rt.pendulum_on = True
            level = min(44.0, rt.zone.budget.active_dba)
            for even, player in enumerate(rt.zone.player_ids):
                self._queue(
                    "SYNTH_PARAM", player, anchor,
                    {
                        "synth": "pendulum",
                        "due_ms": anchor,
                        "params": {
                            "enabled": 1,
                            "period_ms": 4000,  # each player strikes every other beat
                            "anchor_ms": anchor + even * 2000,
                            "level_mdba": round(level * 1000),
                        },
                    },
                    now_ms,
                )
            self.trace(now_ms, "generator", "pendulum_on", {
                "zone": rt.zone.zone_id, "anchor_ms": anchor,
            })
        elif rt.pendulum_on and (not consented or not in_window):
            self._pendulum_off(rt, now_ms)
            self.trace(now_ms, "generator", "pendulum_off", {"zone": rt.zone.zone_id})

    def _produce_events(self, rt: _ZoneRuntime, now_ms: int) -> None:
        seq = rt.sequence
        if seq is None:
            return
        horizon = now_ms + self.config.lookahead_s * 1000
        base = rt.seq_start_ms
        events = seq.events
        headroom = 10.0 * math.log10(rt.zone.max_voices)
        cap = rt.zone.budget.peak_dba - headroom
        while rt.emitted_events < len(events):
            ev = events[rt.emitted_events]
            due = base + int(ev.onset_s * 1000)
            if due > horizon:
                break
            rec = self.catalog.get(ev.sample_id)
            if rec is None:
                rt.emitted_events += 1
                continue
            wire_gain = ev.level_dba - rec.ref_level_dba
            # Keep trim + this event under the zone peak even at full overlap.
            wire_gain = min(wire_gain, cap - rt.trim_db - rec.ref_level_dba)
            self._queue(
                "PLAY", ev.target_player, due,
                {
                    "sample_id": ev.sample_id,
                    "due_ms": due,
                    "gain_mdb": round(wire_gain * 1000),
                    "fade_in_ms": int(ev.fade_in_s * 1000),
                    "fade_out_ms": int(ev.fade_out_s * 1000),
                },
                now_ms,
            )
            rt.emitted_events += 1

    def _produce_time_sync(self, now_ms: int) -> None:
        interval = self.config.time_sync_interval_s * 1000
        if now_ms % interval != 0:
            return
        for zone in self.zones:
            for player in zone.player_ids:
                self._queue("TIME_SYNC", player, now_ms + 1000, {"clock_ms": now_ms}, now_ms)

    # -- the tick -------------------------------------------------------------

    def tick(self, now_ms: int) -> list:
        """One scheduler pass; returns the DispatchActions emitted this tick."""
        if self.last_tick_ms is not None and now_ms < self.last_tick_ms:
            raise ClockRegressionError(f"tick at {now_ms} before {self.last_tick_ms}")
        if self.last_tick_ms is not None and now_ms == self.last_tick_ms:
            return []
        self.last_tick_ms = now_ms
        self.env.clock.advance_to(self.to_dt(now_ms))

        inbox, self.inbox = self.inbox, []
        for item in inbox:
            if isinstance(item, ConsoleOverride):
                try:
                    self.apply_override(item, now_ms)
                except OverrideError as exc:
                    self.trace(now_ms, "generator", "override_rejected", {
                        "kind": item.kind, "target": item.target, "reason": str(exc),
                    })
            else:  # WeatherReading
                try:
                    self.env = ingest_weather(self.env, item)
                    self.trace(now_ms, "generator", "weather", {
                        "precip": item.precipitation,
                        "temp": item.temperature_c,
                    })
                except StaleReadingError as exc:
                    self.trace(now_ms, "generator", "weather_rejected", {"reason": str(exc)})

        self.epoch += 1
        self._produce_bells(now_ms)
        for zone_id in sorted(self.runtime):
            rt = self.runtime[zone_id]
            if rt.zone.landmark == "waterfall" and not rt.muted:
                self._produce_waterfall(rt, now_ms)
            if rt.zone.zone_class == "bedroom_point":
                self._produce_pendulum(rt, now_ms)
                continue
            if rt.muted:
                continue
            if rt.sequence is None or now_ms >= rt.seq_idle_at_ms:
                self._plan_ambient(rt, now_ms)
            self._produce_events(rt, now_ms)
        self._produce_time_sync(now_ms)

        return self._flush(now_ms)

    def _flush(self, now_ms: int) -> list:
        """Send due-window traffic; every command goes out at least once and
        pending ones at least twice (redundancy instead of ACKs)."""
        actions = []
        interval_ms = self.config.retransmit_interval_s * 1000
        for p in self.pending:
            send = False
            if p.sends == 0:
                send = True
            elif p.due_ms > now_ms:
                if p.sends < 2:
                    send = True
                elif p.last_sent_ms is not None and now_ms - p.last_sent_ms >= interval_ms:
                    send = True
            if send:
                p.sends += 1
                p.last_sent_ms = now_ms
                action = DispatchAction(
                    target_player=p.player,
                    message=p.message,
                    due_ms=p.due_ms,
                    emitted_ms=now_ms,
                    epoch=self.epoch,
                )
                actions.append(action)
                digest = p.message.digest()
                self.dispatch_records.append(
                    (self.epoch, now_ms, p.player, p.message.kind, digest)
                )
                self.trace(now_ms, "generator", "dispatch", {
                    "epoch": self.epoch,
                    "player": p.player,
                    "type": p.message.kind,
                    "digest": digest,
                })
        self.pending = [p for p in self.pending if p.due_ms > now_ms]
        return actions
