"""Sequence composition: turns (zone, environment, catalog, rng) into timed
sound programs, plus the deterministic landmark generators (bells, waterfall,
grandfather-clock pendulum).

All functions are pure over immutable snapshots; randomness comes only from
the rng argument, so a fixed seed reproduces a sequence bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date, datetime, timedelta

from . import levels
from .catalog import Catalog, SampleRecord
from .environment import (
    EnvironmentState,
    WeatherReading,
    activity_level,
    effective_weather,
    hour_band_of,
    season_of,
    weather_tags_of,
)

ZONE_CLASSES = (
    "landmark_point",
    "outdoor_point",
    "human_activity_point",
    "bedroom_point",
)
ENVELOPE_SHAPES = ("U", "inverted_J", "ABA")

# Common-space ambient sequences must span 15..25 minutes.
MIN_SEQUENCE_S = 15 * 60
MAX_SEQUENCE_S = 25 * 60

# Silence gap bounds (seconds) between event onsets.
GAP_MIN_S = 2.0
GAP_MAX_S = 180.0

PENDULUM_PERIOD_S = 2.0

# Events per minute at envelope amplitude 1 and routine activity.
BASE_DENSITY = {
    "landmark_point": 1.2,
    "outdoor_point": 1.6,
    "human_activity_point": 1.8,
    "bedroom_point": 0.8,
}

ACTIVITY_DENSITY = {
    "quiet": 0.5,
    "night_round": 0.35,
    "routine": 1.0,
    "meal_prep": 1.35,
    "meal": 1.15,
    "visit": 1.25,
}

# Share of each category per zone class; renormalized over available pools.
CATEGORY_MIX = {
    "landmark_point": (("biophony", 0.55), ("geophony", 0.45)),
    "outdoor_point": (("biophony", 0.55), ("geophony", 0.45)),
    "human_activity_point": (
        ("anthropophony", 0.6),
        ("geophony", 0.25),
        ("biophony", 0.15),
    ),
    "bedroom_point": (("biophony", 0.5), ("geophony", 0.5)),
}

MEAL_RAMP_LOOKAHEAD_MIN = 30
MEAL_RAMP_FACTOR = 1.5


class ZoneConfigError(Exception):
    pass


@dataclass(frozen=True)
class LevelBudget:
    silence_floor_dba: float
    active_dba: float
    peak_dba: float
    min_dba: float | None = None

    def __post_init__(self):
        lo = self.min_dba if self.min_dba is not None else self.silence_floor_dba
        if not (self.silence_floor_dba <= lo <= self.active_dba <= self.peak_dba <= 90.0):
            raise ZoneConfigError(
                f"budget not ordered: floor={self.silence_floor_dba} min={self.min_dba} "
                f"active={self.active_dba} peak={self.peak_dba}"
            )


@dataclass(frozen=True)
class ZoneConfig:
    zone_id: str
    zone_class: str
    player_ids: tuple
    max_voices: int
    budget: LevelBudget
    neighbor_zones: tuple = ()
    landmark: str | None = None
    position: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.zone_class not in ZONE_CLASSES:
            raise ZoneConfigError(f"unknown zone class {self.zone_class!r}")
        if self.zone_class == "bedroom_point" and len(self.player_ids) != 2:
            raise ZoneConfigError(
                f"{self.zone_id}: bedrooms need exactly 2 players, got {len(self.player_ids)}"
            )
        if not self.player_ids:
            raise ZoneConfigError(f"{self.zone_id}: no players")
        if not 1 <= self.max_voices <= 4:
            raise ZoneConfigError(f"{self.zone_id}: max_voices {self.max_voices} outside [1, 4]")

    @property
    def ambient_voice_cap(self) -> int:
        """Voices left for ambient events after landmark tracks reserve theirs."""
        reserved = 1 if (self.landmark or self.zone_class == "bedroom_point") else 0
        return max(1, self.max_voices - reserved)

    @property
    def is_common_space(self) -> bool:
        return self.zone_class != "bedroom_point"


@dataclass(frozen=True)
class Envelope:
    shape: str
    duration_s: float
    breakpoints: tuple
    sections: tuple = ()

    def amplitude_at_frac(self, frac: float) -> float:
        """Piecewise-linear interpolation over (t_fraction, amplitude) breakpoints."""
        pts = self.breakpoints
        if frac <= pts[0][0]:
            return pts[0][1]
        for (t0, a0), (t1, a1) in zip(pts, pts[1:]):
            if frac <= t1:
                if t1 == t0:
                    return a1
                w = (frac - t0) / (t1 - t0)
                return a0 + w * (a1 - a0)
        return pts[-1][1]

    def amplitude_at(self, t_s: float) -> float:
        return self.amplitude_at_frac(t_s / self.duration_s)


@dataclass(frozen=True)
class SoundEvent:
    sample_id: str
    onset_s: float
    duration_s: float
    gain_db: float
    fade_in_s: float
    fade_out_s: float
    target_player: str
    level_dba: float


@dataclass(frozen=True)
class Sequence:
    sequence_id: str
    zone_id: str
    start_time: datetime
    events: tuple
    envelope: Envelope
    tail_silence_s: float

    @property
    def duration_s(self) -> float:
        return self.envelope.duration_s

    @property
    def total_span_s(self) -> float:
        return self.duration_s + self.tail_silence_s


@dataclass(frozen=True)
class BellEvent:
    at: datetime
    strokes: int
    stroke_gap_s: float = 3.0

    @property
    def span_s(self) -> float:
        return self.strokes * self.stroke_gap_s


@dataclass(frozen=True)
class BellParams:
    decay_s: float
    brightness: float
    detune_cents: float


@dataclass(frozen=True)
class GrainParams:
    grain_rate_hz: float
    grain_dur_ms: float
    level_dba: float
    spectral_tilt: float


@dataclass(frozen=True)
class RoomProfile:
    zone_id: str
    pendulum: bool = False
    bedtime: tuple | None = None  # (start minute, end minute), may wrap midnight
    tick_sample: str = "pendulum_tick"
    tock_sample: str = "pendulum_tock"
    gain_db: float = 0.0


# --- envelopes ---------------------------------------------------------------

def make_envelope(shape: str, duration_s: float, rng) -> Envelope:
    """Seeded, jittered intensity envelope of the requested shape."""
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    u = rng.uniform
    if shape == "U":
        a0 = u(0.6, 0.9)
        a1 = u(0.6, 0.9)
        amin = u(0.1, 0.28)
        mid = u(0.42, 0.58)
        shoulder_l = (a0 + amin) / 2 * u(0.9, 1.05)
        shoulder_r = (a1 + amin) / 2 * u(0.9, 1.05)
        pts = (
            (0.0, a0),
            (mid / 2, min(a0, shoulder_l)),
            (mid, amin),
            ((1 + mid) / 2, min(a1, shoulder_r)),
            (1.0, a1),
        )
        return Envelope(shape="U", duration_s=duration_s, breakpoints=pts)
    if shape == "inverted_J":
        a0 = u(0.72, 0.95)
        amin = u(0.15, 0.3)
        mid = u(0.45, 0.6)
        a1 = u(0.4, min(0.65, a0 - 0.05))
        pts = ((0.0, a0), (mid, amin), (1.0, a1))
        return Envelope(shape="inverted_J", duration_s=duration_s, breakpoints=pts)
    if shape == "ABA":
        a_level = u(0.62, 0.9)
        b_level = u(0.3, min(0.5, a_level - 0.08))
        a2_level = min(1.0, max(0.6, a_level + u(-0.05, 0.05)))
        pts = (
            (0.0, a_level),
            (0.3, a_level),
            (0.35, b_level),
            (0.65, b_level),
            (0.7, a2_level),
            (1.0, a2_level),
        )
        sections = (("A", 0.0, 0.3), ("B", 0.3, 0.7), ("A'", 0.7, 1.0))
        return Envelope(shape="ABA", duration_s=duration_s, breakpoints=pts, sections=sections)
    raise ValueError(f"unknown envelope shape {shape!r}")


# --- silences ----------------------------------------------------------------

def draw_gap(density_per_min: float, rng, prev_gap_s: float | None = None) -> float:
    """One silence gap: bounded exponential, never equal to the previous gap (ms)."""
    mean = max(60.0 / density_per_min, 2.5)
    while True:
        gap = min(GAP_MIN_S + rng.expovariate(1.0 / (mean - GAP_MIN_S)), GAP_MAX_S)
        if prev_gap_s is None or round(gap * 1000) != round(prev_gap_s * 1000):
            return gap


def silence_gaps(density_per_min: float, duration_s: float, rng) -> list[float]:
    """Irregular gap lengths filling duration_s at the given event density."""
    if density_per_min <= 0:
        raise ValueError("density must be positive")
    gaps: list[float] = []
    total = 0.0
    prev = None
    while total < duration_s:
        gap = draw_gap(density_per_min, rng, prev)
        gaps.append(gap)
        total += gap
        prev = gap
    return gaps


# --- ambient sequence composition ---------------------------------------------

def zone_matches(rec: SampleRecord, zone: ZoneConfig) -> bool:
    return zone.zone_id in rec.zone_affinity or zone.zone_class in rec.zone_affinity


def _weather_ok(rec: SampleRecord, active_tags: set) -> bool:
    return "any" in rec.weather_tags or bool(rec.weather_tags & active_tags)


def candidate_pool(
    zone: ZoneConfig, catalog: Catalog, season: str, band: str, active_tags: set
) -> dict:
    """Per-category candidate lists for this zone and context, id-ordered."""
    pool: dict[str, list[SampleRecord]] = {}
    for rid in sorted(catalog.records):
        rec = catalog.records[rid]
        if rec.category == "landmark":
            continue
        if season not in rec.seasons or band not in rec.hour_bands:
            continue
        if not zone_matches(rec, zone) or not _weather_ok(rec, active_tags):
            continue
        pool.setdefault(rec.category, []).append(rec)
    return pool


def event_target_level(zone: ZoneConfig) -> float:
    """Per-event level cap so max_voices simultaneous events stay within peak."""
    headroom = 10.0 * math.log10(zone.max_voices)
    return min(zone.budget.active_dba, zone.budget.peak_dba - headroom)


def _pick_record(
    pool: dict,
    mix: tuple,
    env: EnvironmentState,
    season: str,
    band: str,
    precip: str,
    rng,
) -> SampleRecord | None:
    """Category by mix share, then a weighted pick inside the category."""
    shares = [(cat, share) for cat, share in mix if pool.get(cat)]
    if not shares:
        return None
    total = sum(s for _, s in shares)
    point = rng.random() * total
    acc = 0.0
    chosen = shares[-1][0]
    for cat, share in shares:
        acc += share
        if point < acc:
            chosen = cat
            break
    records = pool[chosen]
    if chosen == "biophony":
        weights = [
            env.ethology.weight(r.species, season, band, precip) if r.species else 0.0
            for r in records
        ]
        if sum(weights) <= 0:
            # Nothing ethologically active: retry without biophony.
            rest = tuple((c, s) for c, s in mix if c != "biophony")
            if not rest:
                return None
            return _pick_record(pool, rest, env, season, band, precip, rng)
    else:
        weights = [1.0] * len(records)
    point = rng.random() * sum(weights)
    acc = 0.0
    for rec, w in zip(records, weights):
        acc += w
        if point < acc:
            return rec
    return records[-1]


def _meal_ramp(zone: ZoneConfig, env: EnvironmentState, at: datetime) -> float:
    if zone.zone_class != "human_activity_point":
        return 1.0
    probe = at + timedelta(minutes=MEAL_RAMP_LOOKAHEAD_MIN)
    if env.schedule.level_at(probe.time()) == "meal":
        return MEAL_RAMP_FACTOR
    return 1.0


def _make_event(
    rec: SampleRecord, zone: ZoneConfig, onset: float, amp: float, rng
) -> SoundEvent:
    target = event_target_level(zone)
    gain = min(0.0, target - rec.ref_level_dba)
    fade_in = min(rng.uniform(0.3, 2.5), rec.duration_s * 0.4)
    fade_out = min(rng.uniform(0.5, 3.0), rec.duration_s * 0.4)
    player = zone.player_ids[rng.randrange(len(zone.player_ids))]
    return SoundEvent(
        sample_id=rec.id,
        onset_s=onset,
        duration_s=rec.duration_s,
        gain_db=gain,
        fade_in_s=fade_in,
        fade_out_s=fade_out,
        target_player=player,
        level_dba=levels.event_level_dba(rec.ref_level_dba, gain, amp),
    )


def _active_events_at(events: list, t: float) -> int:
    return sum(1 for e in events if e.onset_s <= t < e.onset_s + e.duration_s)


def _section_of(envelope: Envelope, frac: float) -> str | None:
    for name, lo, hi in envelope.sections:
        if lo <= frac < hi or (hi == 1.0 and frac == 1.0):
            return name
    return None


def compose_sequence(
    zone: ZoneConfig, env: EnvironmentState, catalog: Catalog, rng
) -> Sequence:
    """Compose one ambient program for a zone under the current environment.

    Degrades to a silent (event-free) sequence when the consent gate is
    closed or no catalog record fits the context.
    """
    now = env.clock.now
    duration = 1200.0 * rng.uniform(0.87, 1.13)
    shape = _pick_shape(rng)
    envelope = make_envelope(shape, duration, rng)
    tail = rng.uniform(45.0, 240.0)
    seq_id = f"{zone.zone_id}@{now:%Y%m%dT%H%M%S}"

    if zone.zone_class == "bedroom_point" and not env.consent(zone.zone_id):
        return Sequence(seq_id, zone.zone_id, now, (), envelope, tail)

    season = season_of(now.date())
    band = hour_band_of(now.time(), now.date())
    weather = effective_weather(env)
    active_tags = weather_tags_of(weather)
    pool = candidate_pool(zone, catalog, season, band, active_tags)
    if not pool:
        return Sequence(seq_id, zone.zone_id, now, (), envelope, tail)

    mix = CATEGORY_MIX[zone.zone_class]
    if weather.precipitation in ("rain", "storm"):
        mix = tuple(
            (cat, share * (1.5 if cat == "geophony" else 1.0)) for cat, share in mix
        )

    base = BASE_DENSITY[zone.zone_class]
    cap = zone.ambient_voice_cap
    events: list[SoundEvent] = []
    t = rng.uniform(2.0, 12.0)
    prev_gap = None
    while t < duration - 5.0:
        amp = envelope.amplitude_at(t)
        at = now + timedelta(seconds=t)
        act = ACTIVITY_DENSITY[env.schedule.level_at(at.time())]
        density = base * act * max(amp, 0.2) * _meal_ramp(zone, env, at)
        rec = _pick_record(pool, mix, env, season, band, weather.precipitation, rng)
        if rec is not None and _active_events_at(events, t) < cap:
            events.append(_make_event(rec, zone, t, amp, rng))
        gap = draw_gap(density, rng, prev_gap)
        prev_gap = gap
        t += gap

    if shape == "ABA" and events:
        _ensure_recall(events, envelope, zone, rng)

    return Sequence(seq_id, zone.zone_id, now, tuple(events), envelope, tail)


def _pick_shape(rng) -> str:
    point = rng.random()
    if point < 0.6:
        return "U"
    if point < 0.8:
        return "inverted_J"
    return "ABA"


def _ensure_recall(events: list, envelope: Envelope, zone: ZoneConfig, rng) -> None:
    """ABA' sequences restate at least one sample id from section A in A'."""
    dur = envelope.duration_s
    a_ids = [e.sample_id for e in events if _section_of(envelope, e.onset_s / dur) == "A"]
    a_prime = [i for i, e in enumerate(events) if _section_of(envelope, e.onset_s / dur) == "A'"]
    if not a_ids:
        return
    donor = next(e for e in events if e.sample_id == a_ids[0])
    donor_ref = donor.level_dba - donor.gain_db - levels.amplitude_gain_db(
        envelope.amplitude_at(donor.onset_s)
    )
    if a_prime and not any(events[i].sample_id in a_ids for i in a_prime):
        i = a_prime[0]
        old = events[i]
        events[i] = SoundEvent(
            sample_id=donor.sample_id,
            onset_s=old.onset_s,
            duration_s=donor.duration_s,
            gain_db=donor.gain_db,
            fade_in_s=old.fade_in_s,
            fade_out_s=old.fade_out_s,
            target_player=old.target_player,
            level_dba=levels.event_level_dba(
                donor_ref, donor.gain_db, envelope.amplitude_at(old.onset_s)
            ),
        )
    elif not a_prime:
        # Low density left A' empty: restate A's opening sample late in the piece.
        onset = dur * rng.uniform(0.75, 0.92)
        if _active_events_at(events, onset) < zone.ambient_voice_cap:
            events.append(
                SoundEvent(
                    sample_id=donor.sample_id,
                    onset_s=onset,
                    duration_s=donor.duration_s,
                    gain_db=donor.gain_db,
                    fade_in_s=donor.fade_in_s,
                    fade_out_s=donor.fade_out_s,
                    target_player=donor.target_player,
                    level_dba=levels.event_level_dba(
                        donor_ref, donor.gain_db, envelope.amplitude_at(onset)
                    ),
                )
            )
            events.sort(key=lambda e: e.onset_s)


# --- landmarks -----------------------------------------------------------------

def bell_schedule(clock_day: date) -> list[BellEvent]:
    """The day's strike-groups: each hour struck at H:00 and repeated at H:02.

    Stroke counts follow 12-hour convention (1..12), so counting stays a
    feasible game at any hour.
    """
    groups = []
    for hour in range(24):
        strokes = ((hour + 11) % 12) + 1
        base = datetime.combine(clock_day, datetime.min.time()) + timedelta(hours=hour)
        groups.append(BellEvent(at=base, strokes=strokes))
        groups.append(BellEvent(at=base + timedelta(minutes=2), strokes=strokes))
    return groups


def bell_timbre(weather: WeatherReading) -> BellParams:
    """Weather-coupled bell voicing: warmer is brighter, damper decays faster."""
    temp = min(max(weather.temperature_c, -10.0), 35.0)
    brightness = (temp + 10.0) / 45.0
    decay = 8.0 - 6.0 * (weather.humidity_pct / 100.0)
    detune = min(weather.wind_mps, 20.0) / 20.0 * 8.0
    return BellParams(decay_s=decay, brightness=brightness, detune_cents=detune)


WATERFALL_ACTIVITY_OFFSET = {
    "quiet": -1.5,
    "night_round": -1.8,
    "routine": 0.0,
    "meal_prep": 1.5,
    "meal": 1.0,
    "visit": 0.8,
}

WATERFALL_PRECIP_RATE = {"none": 0.0, "drizzle": 8.0, "rain": 15.0, "storm": 25.0}

# Per-tick slew bounds keep the waterfall drifting, never jumping.
WATERFALL_MAX_STEP_DB = 0.9
WATERFALL_MAX_STEP_HZ = 6.0
WATERFALL_MAX_STEP_MS = 5.0
WATERFALL_MAX_STEP_TILT = 0.1

WATERFALL_MIN_LEVEL_DBA = 40.2


def waterfall_target(env: EnvironmentState) -> GrainParams:
    """Steady-state waterfall parameters for the current environment."""
    weather = effective_weather(env)
    act = activity_level(env)
    level = 42.0 + WATERFALL_ACTIVITY_OFFSET[act]
    level += weather.humidity_pct * 0.01 + min(weather.wind_mps, 10.0) * 0.05
    level = min(max(level, WATERFALL_MIN_LEVEL_DBA), 48.0)
    rate = 60.0 + WATERFALL_PRECIP_RATE[weather.precipitation] + weather.wind_mps * 0.5
    rate = min(max(rate, 30.0), 120.0)
    dur = min(max(40.0 + (120.0 - rate) * 0.5, 40.0), 110.0)
    tilt = min(max((weather.temperature_c - 10.0) / 25.0, -1.0), 1.0)
    return GrainParams(grain_rate_hz=rate, grain_dur_ms=dur, level_dba=level, spectral_tilt=tilt)


def _slew(current: float, target: float, max_step: float) -> float:
    step = min(max(target - current, -max_step), max_step)
    return current + step


def waterfall_params(env: EnvironmentState, prev: GrainParams | None = None) -> GrainParams:
    """Next waterfall parameters; bounded step per call from prev keeps
    the sound continuous. The level never drops below the patio minimum."""
    target = waterfall_target(env)
    if prev is None:
        return target
    return GrainParams(
        grain_rate_hz=_slew(prev.grain_rate_hz, target.grain_rate_hz, WATERFALL_MAX_STEP_HZ),
        grain_dur_ms=_slew(prev.grain_dur_ms, target.grain_dur_ms, WATERFALL_MAX_STEP_MS),
        level_dba=_slew(prev.level_dba, target.level_dba, WATERFALL_MAX_STEP_DB),
        spectral_tilt=_slew(prev.spectral_tilt, target.spectral_tilt, WATERFALL_MAX_STEP_TILT),
    )


def pendulum_track(
    room: ZoneConfig,
    consent: bool,
    window_s: tuple,
    profile: RoomProfile,
    pendulum_level_dba: float = 44.0,
) -> list[SoundEvent]:
    """Impulses every 2.000 s on the absolute grid, alternating the room's
    two players (tick on even beats, tock on odd)."""
    if room.zone_class != "bedroom_point":
        raise ValueError(f"pendulum refused for non-bedroom zone {room.zone_id}")
    if not consent or not profile.pendulum:
        return []
    t0, t1 = window_s
    first = math.ceil(t0 / PENDULUM_PERIOD_S)
    events = []
    k = first
    while k * PENDULUM_PERIOD_S < t1:
        onset = k * PENDULUM_PERIOD_S
        even = k % 2 == 0
        events.append(
            SoundEvent(
                sample_id=profile.tick_sample if even else profile.tock_sample,
                onset_s=onset,
                duration_s=0.4,
                gain_db=profile.gain_db,
                fade_in_s=0.0,
                fade_out_s=0.1,
                target_player=room.player_ids[0] if even else room.player_ids[1],
                level_dba=pendulum_level_dba + profile.gain_db,
            )
        )
        k += 1
    return events


# --- topology / profiles ---------------------------------------------------

def load_topology(path) -> list[ZoneConfig]:
    """Zone layout file: one `key=value;...` zone per line; ids unique."""
    zones = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            kv = dict(part.split("=", 1) for part in line.split(";") if part)
            zid = kv["zone"]
            if zid in seen:
                raise ZoneConfigError(f"line {line_no}: duplicate zone id {zid!r}")
            seen.add(zid)
            budget = LevelBudget(
                silence_floor_dba=float(kv.get("floor", 30.0)),
                min_dba=float(kv["min"]) if "min" in kv else None,
                active_dba=float(kv["active"]),
                peak_dba=float(kv["peak"]),
            )
            pos = (0.0, 0.0)
            if "pos" in kv:
                x, y = kv["pos"].split(",")
                pos = (float(x), float(y))
            zones.append(
                ZoneConfig(
                    zone_id=zid,
                    zone_class=kv["class"],
                    player_ids=tuple(kv["players"].split(",")),
                    max_voices=int(kv.get("max_voices", 4)),
                    budget=budget,
                    neighbor_zones=tuple(v for v in kv.get("neighbors", "").split(",") if v),
                    landmark=kv.get("landmark"),
                    position=pos,
                )
            )
    return sorted(zones, key=lambda z: z.zone_id)


def load_room_profiles(path) -> dict:
    """Bedroom personalization file: `zone=room_4;pendulum=true;bedtime=21:00-07:00`."""
    profiles = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            kv = dict(part.split("=", 1) for part in line.split(";") if part)
            bedtime = None
            if "bedtime" in kv:
                start_s, end_s = kv["bedtime"].split("-")
                bedtime = (_minutes(start_s), _minutes(end_s))
            profiles[kv["zone"]] = RoomProfile(
                zone_id=kv["zone"],
                pendulum=kv.get("pendulum", "false").lower() == "true",
                bedtime=bedtime,
                tick_sample=kv.get("tick", "pendulum_tick"),
                tock_sample=kv.get("tock", "pendulum_tock"),
                gain_db=float(kv.get("gain", 0.0)),
            )
    return profiles


def _minutes(hhmm: str) -> int:
    h, m = hhmm.strip().split(":")
    return int(h) * 60 + int(m)


def in_bedtime(profile: RoomProfile, t) -> bool:
    """True when time-of-day t falls in the profile's (possibly wrapping) window."""
    if profile.bedtime is None:
        return False
    start, end = profile.bedtime
    minutes = t.hour * 60 + t.minute
    if start <= end:
        return start <= minutes < end
    return minutes >= start or minutes < end
