"""Indexed sound-sample catalog: manifest ingest, validation, and tag queries.

The manifest is a human-editable line format, one record per line:

    id=crow_03;path=bio/crow_03.wav;dur=12.5;cat=biophony;species=crow;
    seasons=winter,autumn;weather=any;hours=day,dawn;zones=north_room,garden;lvl=62

(shown wrapped; real records are a single line). Optional keys: era, emo.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

CATEGORIES = ("geophony", "biophony", "anthropophony", "landmark")
SEASONS = ("winter", "spring", "summer", "autumn")
WEATHER_TAGS = ("rain", "wind", "dry", "humid", "cold", "warm", "any")
HOUR_BANDS = ("night", "dawn", "day", "dusk")

MIN_DURATION_S = 1.0
MAX_DURATION_S = 120.0
MIN_REF_LEVEL_DBA = 20.0
MAX_REF_LEVEL_DBA = 90.0


class ManifestError(Exception):
    """Base error for manifest ingest problems."""


class ManifestParseError(ManifestError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class DuplicateIdError(ManifestError):
    def __init__(self, sample_id: str, line_no: int):
        self.sample_id = sample_id
        self.line_no = line_no
        super().__init__(f"line {line_no}: duplicate id {sample_id!r}")


class ManifestValidationError(ManifestError):
    """Carries every violating record, not just the first."""

    def __init__(self, violations: list[tuple[str, str]]):
        self.violations = violations
        detail = "; ".join(f"{rid}: {why}" for rid, why in violations)
        super().__init__(f"{len(violations)} invalid record(s): {detail}")


@dataclass(frozen=True)
class SampleRecord:
    id: str
    path: str
    duration_s: float
    category: str
    seasons: frozenset[str]
    weather_tags: frozenset[str]
    hour_bands: frozenset[str]
    zone_affinity: frozenset[str]
    ref_level_dba: float
    species: str | None = None
    era_tags: frozenset[str] = frozenset()
    emotion_tags: frozenset[str] = frozenset()

    def violations(self) -> list[str]:
        problems = []
        if not (MIN_DURATION_S <= self.duration_s <= MAX_DURATION_S):
            problems.append(f"duration_s {self.duration_s} outside [1, 120]")
        if self.category not in CATEGORIES:
            problems.append(f"unknown category {self.category!r}")
        if not self.seasons:
            problems.append("empty seasons")
        if not self.seasons <= set(SEASONS):
            problems.append(f"unknown season in {sorted(self.seasons)}")
        if not self.weather_tags <= set(WEATHER_TAGS):
            problems.append(f"unknown weather tag in {sorted(self.weather_tags)}")
        if not self.hour_bands:
            problems.append("empty hour_bands")
        if not self.hour_bands <= set(HOUR_BANDS):
            problems.append(f"unknown hour band in {sorted(self.hour_bands)}")
        if not self.zone_affinity:
            problems.append("empty zone_affinity")
        if not (MIN_REF_LEVEL_DBA <= self.ref_level_dba <= MAX_REF_LEVEL_DBA):
            problems.append(f"ref_level_dba {self.ref_level_dba} outside [20, 90]")
        return problems


@dataclass(frozen=True)
class TagFilter:
    """All-None filter matches every record; set fields constrain conjunctively."""

    category: str | None = None
    species: str | None = None
    season: str | None = None
    weather_tag: str | None = None
    hour_band: str | None = None
    zone: str | None = None
    era_tag: str | None = None
    emotion_tag: str | None = None
    max_duration_s: float | None = None

    def matches(self, rec: SampleRecord) -> bool:
        if self.category is not None and rec.category != self.category:
            return False
        if self.species is not None and rec.species != self.species:
            return False
        if self.season is not None and self.season not in rec.seasons:
            return False
        if self.weather_tag is not None and not (
            "any" in rec.weather_tags or self.weather_tag in rec.weather_tags
        ):
            return False
        if self.hour_band is not None and self.hour_band not in rec.hour_bands:
            return False
        if self.zone is not None and self.zone not in rec.zone_affinity:
            return False
        if self.era_tag is not None and self.era_tag not in rec.era_tags:
            return False
        if self.emotion_tag is not None and self.emotion_tag not in rec.emotion_tags:
            return False
        if self.max_duration_s is not None and rec.duration_s > self.max_duration_s:
            return False
        return True


@dataclass(frozen=True)
class Catalog:
    records: dict = field(default_factory=dict)

    @property
    def manifest_hash(self) -> str:
        """Content digest over id-sorted canonical records (reorder-stable)."""
        h = hashlib.sha256()
        for rid in sorted(self.records):
            h.update(format_record(self.records[rid]).encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()

    def __len__(self) -> int:
        return len(self.records)

    def get(self, sample_id: str) -> SampleRecord | None:
        return self.records.get(sample_id)

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self.records


def _fmt_num(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def _ordered(values: frozenset[str], order: tuple[str, ...]) -> list[str]:
    return [v for v in order if v in values]


def format_record(rec: SampleRecord) -> str:
    """Canonical one-line manifest form of a record."""
    parts = [
        f"id={rec.id}",
        f"path={rec.path}",
        f"dur={_fmt_num(rec.duration_s)}",
        f"cat={rec.category}",
    ]
    if rec.species is not None:
        parts.append(f"species={rec.species}")
    parts.append("seasons=" + ",".join(_ordered(rec.seasons, SEASONS)))
    parts.append("weather=" + ",".join(_ordered(rec.weather_tags, WEATHER_TAGS)))
    parts.append("hours=" + ",".join(_ordered(rec.hour_bands, HOUR_BANDS)))
    parts.append("zones=" + ",".join(sorted(rec.zone_affinity)))
    parts.append(f"lvl={_fmt_num(rec.ref_level_dba)}")
    if rec.era_tags:
        parts.append("era=" + ",".join(sorted(rec.era_tags)))
    if rec.emotion_tags:
        parts.append("emo=" + ",".join(sorted(rec.emotion_tags)))
    return ";".join(parts)


_REQUIRED_KEYS = ("id", "path", "dur", "cat", "seasons", "weather", "hours", "zones", "lvl")


def parse_record(line: str, line_no: int = 0) -> SampleRecord:
    fields_ = {}
    for chunk in line.strip().split(";"):
        if not chunk:
            continue
        if "=" not in chunk:
            raise ManifestParseError(line_no, f"malformed field {chunk!r}")
        key, value = chunk.split("=", 1)
        if key in fields_:
            raise ManifestParseError(line_no, f"repeated key {key!r}")
        fields_[key] = value
    missing = [k for k in _REQUIRED_KEYS if k not in fields_]
    if missing:
        raise ManifestParseError(line_no, f"missing key(s) {', '.join(missing)}")
    unknown = set(fields_) - set(_REQUIRED_KEYS) - {"species", "era", "emo"}
    if unknown:
        raise ManifestParseError(line_no, f"unknown key(s) {', '.join(sorted(unknown))}")
    try:
        duration = float(fields_["dur"])
        level = float(fields_["lvl"])
    except ValueError as exc:
        raise ManifestParseError(line_no, f"bad number: {exc}") from None

    def split(key: str) -> frozenset[str]:
        raw = fields_.get(key, "")
        return frozenset(v for v in raw.split(",") if v)

    return SampleRecord(
        id=fields_["id"],
        path=fields_["path"],
        duration_s=duration,
        category=fields_["cat"],
        species=fields_.get("species"),
        seasons=split("seasons"),
        weather_tags=split("weather"),
        hour_bands=split("hours"),
        zone_affinity=split("zones"),
        ref_level_dba=level,
        era_tags=split("era"),
        emotion_tags=split("emo"),
    )


def load_manifest(path) -> Catalog:
    """Parse and validate a manifest file into an immutable Catalog."""
    records: dict[str, SampleRecord] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            rec = parse_record(stripped, line_no)
            if rec.id in records:
                raise DuplicateIdError(rec.id, line_no)
            records[rec.id] = rec
    violations = []
    for rid in sorted(records):
        for why in records[rid].violations():
            violations.append((rid, why))
    if violations:
        raise ManifestValidationError(violations)
    return Catalog(records=records)


def save_manifest(catalog: Catalog, path) -> None:
    """Write the canonical manifest; load_manifest round-trips it bit-exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        for rid in sorted(catalog.records):
            fh.write(format_record(catalog.records[rid]))
            fh.write("\n")


def query(catalog: Catalog, flt: TagFilter) -> list[SampleRecord]:
    """Records matching every filter constraint, in ascending id order."""
    return [catalog.records[rid] for rid in sorted(catalog.records) if flt.matches(catalog.records[rid])]


def weighted_pick(candidates: list[SampleRecord], weights: list[float], rng) -> SampleRecord:
    """Draw one candidate with probability proportional to its weight.

    Uses only rng.random() so picks are reproducible across platforms.
    """
    if not candidates:
        raise ValueError("weighted_pick: empty candidates")
    if len(candidates) != len(weights):
        raise ValueError("weighted_pick: candidates/weights length mismatch")
    if any(w < 0 for w in weights):
        raise ValueError("weighted_pick: negative weight")
    total = sum(weights)
    if total <= 0:
        raise ValueError("weighted_pick: all weights zero")
    point = rng.random() * total
    acc = 0.0
    for cand, w in zip(candidates, weights):
        acc += w
        if point < acc:
            return cand
    return candidates[-1]
