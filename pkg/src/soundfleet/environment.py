"""World model driving the generator: virtual clock, season, weather,
care-activity rhythm, and per-species activity weights.

Weather arrives from a trace file or API push; a reading older than two
virtual hours falls back to the per-season default table.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import date, datetime, time, timedelta

PRECIPITATIONS = ("none", "drizzle", "rain", "storm")
ACTIVITY_LEVELS = ("quiet", "routine", "meal_prep", "meal", "visit", "night_round")

WEATHER_STALE_AFTER = timedelta(hours=2)

# Fixed per-season sunrise/sunset, northern hemisphere; adequate for
# scheduling semantics without an ephemeris.
SUN_TABLE = {
    "winter": (time(8, 0), time(17, 0)),
    "spring": (time(7, 0), time(20, 0)),
    "summer": (time(6, 0), time(21, 30)),
    "autumn": (time(7, 30), time(19, 0)),
}


class StaleReadingError(Exception):
    """Raised when a weather reading arrives out of order."""


class ScheduleError(Exception):
    """Care schedule does not partition the 24 h day."""


def season_of(day: date) -> str:
    """Meteorological season: Dec-Feb winter, Mar-May spring, and so on."""
    m = day.month
    if m in (12, 1, 2):
        return "winter"
    if m in (3, 4, 5):
        return "spring"
    if m in (6, 7, 8):
        return "summer"
    return "autumn"


def hour_band_of(t: time, day: date) -> str:
    """Partition of the day into night/dawn/day/dusk around the season's sun times."""
    sunrise, sunset = SUN_TABLE[season_of(day)]
    minutes = t.hour * 60 + t.minute
    rise = sunrise.hour * 60 + sunrise.minute
    set_ = sunset.hour * 60 + sunset.minute
    if rise - 60 <= minutes < rise + 60:
        return "dawn"
    if set_ - 60 <= minutes < set_ + 60:
        return "dusk"
    if rise + 60 <= minutes < set_ - 60:
        return "day"
    return "night"


class VirtualClock:
    """Monotonic virtual time; advancing by wall dt moves now by dt x acceleration."""

    def __init__(self, start: datetime, acceleration: float = 1.0):
        if acceleration < 1.0:
            raise ValueError("acceleration must be >= 1")
        self.now = start
        self.acceleration = acceleration

    def advance_wall(self, wall_seconds: float) -> datetime:
        if wall_seconds < 0:
            raise ValueError("cannot advance by negative time")
        self.now = self.now + timedelta(seconds=wall_seconds * self.acceleration)
        return self.now

    def advance_to(self, t: datetime) -> datetime:
        if t < self.now:
            raise ValueError(f"clock regression: {t} < {self.now}")
        self.now = t
        return self.now


@dataclass(frozen=True)
class WeatherReading:
    timestamp: datetime
    temperature_c: float
    humidity_pct: float
    precipitation: str
    wind_mps: float

    def __post_init__(self):
        if not 0 <= self.humidity_pct <= 100:
            raise ValueError(f"humidity {self.humidity_pct} outside [0, 100]")
        if self.precipitation not in PRECIPITATIONS:
            raise ValueError(f"unknown precipitation {self.precipitation!r}")
        if self.wind_mps < 0:
            raise ValueError("negative wind speed")


@dataclass(frozen=True)
class CareActivitySchedule:
    """Half-open daily windows (start minute, end minute, level) covering 24 h."""

    windows: tuple

    def __post_init__(self):
        spans = sorted(self.windows)
        cursor = 0
        for start, end, level in spans:
            if level not in ACTIVITY_LEVELS:
                raise ScheduleError(f"unknown activity level {level!r}")
            if start != cursor:
                raise ScheduleError(f"gap or overlap at minute {cursor}")
            if end <= start:
                raise ScheduleError(f"empty window at minute {start}")
            cursor = end
        if cursor != 24 * 60:
            raise ScheduleError(f"day not covered: ends at minute {cursor}")

    def level_at(self, t: time) -> str:
        minutes = t.hour * 60 + t.minute
        for start, end, level in self.windows:
            if start <= minutes < end:
                return level
        raise ScheduleError(f"no window for minute {minutes}")


@dataclass(frozen=True)
class EthologyTable:
    """Per-species activity weight keyed by (season, hour band, precipitation)."""

    weights: dict

    def __post_init__(self):
        alive = set()
        for (species, _season, _band, _precip), w in self.weights.items():
            if w < 0:
                raise ValueError(f"negative weight for {species}")
            if w > 0:
                alive.add(species)
        dead = self.species() - alive
        if dead:
            raise ValueError(f"species with no positive weight: {sorted(dead)}")

    def species(self) -> set:
        return {key[0] for key in self.weights}

    def weight(self, species: str, season: str, band: str, precip: str) -> float:
        return self.weights.get((species, season, band, precip), 0.0)


@dataclass(frozen=True)
class EnvironmentState:
    clock: VirtualClock
    weather: WeatherReading
    schedule: CareActivitySchedule
    ethology: EthologyTable
    seasonal_defaults: dict
    room_consent: dict = field(default_factory=dict)

    def consent(self, room_id: str) -> bool:
        # Consent is opt-in: absent rooms read as False.
        return self.room_consent.get(room_id, False)


def ingest_weather(state: EnvironmentState, reading: WeatherReading) -> EnvironmentState:
    """Replace the current reading; out-of-order readings are rejected."""
    if reading.timestamp < state.weather.timestamp:
        raise StaleReadingError(
            f"reading at {reading.timestamp} older than current {state.weather.timestamp}"
        )
    return replace(state, weather=reading)


def effective_weather(state: EnvironmentState) -> WeatherReading:
    """Current reading, or the seasonal default once the feed has gone stale."""
    now = state.clock.now
    if now - state.weather.timestamp <= WEATHER_STALE_AFTER:
        return state.weather
    season = season_of(now.date())
    temp, hum, precip, wind = state.seasonal_defaults[season]
    return WeatherReading(
        timestamp=now,
        temperature_c=temp,
        humidity_pct=hum,
        precipitation=precip,
        wind_mps=wind,
    )


def activity_level(state: EnvironmentState) -> str:
    return state.schedule.level_at(state.clock.now.time())


def species_weight(state: EnvironmentState, species: str) -> float:
    """Activity weight for a species under the current season/band/precipitation.

    Unknown species yield 0 so composition degrades instead of aborting.
    """
    now = state.clock.now
    weather = effective_weather(state)
    return state.ethology.weight(
        species,
        season_of(now.date()),
        hour_band_of(now.time(), now.date()),
        weather.precipitation,
    )


def weather_tags_of(reading: WeatherReading) -> set:
    """Catalog weather tags a reading activates, for sample matching."""
    tags = set()
    if reading.precipitation == "none":
        tags.add("dry")
    elif reading.precipitation == "storm":
        tags.update(("rain", "wind"))
    else:
        tags.add("rain")
    if reading.wind_mps >= 8.0:
        tags.add("wind")
    if reading.humidity_pct >= 75.0:
        tags.add("humid")
    if reading.temperature_c <= 8.0:
        tags.add("cold")
    if reading.temperature_c >= 18.0:
        tags.add("warm")
    return tags


# --- fixture/trace file loaders -------------------------------------------

def load_schedule(path) -> CareActivitySchedule:
    """Windows file: one `HH:MM-HH:MM;level` per line."""
    windows = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            span, level = line.split(";")
            start_s, end_s = span.split("-")
            windows.append((_parse_minutes(start_s), _parse_minutes(end_s), level))
    return CareActivitySchedule(windows=tuple(sorted(windows)))


def _parse_minutes(hhmm: str) -> int:
    h, m = hhmm.strip().split(":")
    total = int(h) * 60 + int(m)
    if hhmm.strip() == "24:00":
        return 24 * 60
    return total


def load_ethology(path) -> EthologyTable:
    """Table file: `species=crow;season=winter;band=day;precip=none;w=5.0` per line."""
    weights = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            kv = dict(part.split("=", 1) for part in line.split(";"))
            key = (kv["species"], kv["season"], kv["band"], kv["precip"])
            weights[key] = float(kv["w"])
    return EthologyTable(weights=weights)


def load_weather_defaults(path) -> dict:
    """Season -> (temp_c, humidity, precip, wind_mps) fallback table."""
    defaults = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            kv = dict(part.split("=", 1) for part in line.split(";"))
            defaults[kv["season"]] = (
                float(kv["temp_c"]),
                float(kv["humidity"]),
                kv["precip"],
                float(kv["wind_mps"]),
            )
    return defaults


def load_weather_trace(path) -> list[WeatherReading]:
    """Trace file: `iso_timestamp;temp_c;humidity;precip;wind_mps` per line."""
    readings = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            ts, temp, hum, precip, wind = line.split(";")
            readings.append(
                WeatherReading(
                    timestamp=datetime.fromisoformat(ts),
                    temperature_c=float(temp),
                    humidity_pct=float(hum),
                    precipitation=precip,
                    wind_mps=float(wind),
                )
            )
    return readings
