"""Trace checker: replays a run's event log against the quantitative
invariant battery (bells, sequence timing, level budgets, voice limits,
consent silence) and reports pass/fail with first counterexamples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta

from .tracefile import Trace

COMMON_CLASSES = ("landmark_point", "outdoor_point", "human_activity_point")
ONSET_KINDS = ("voice_on", "bell_group", "waterfall_start", "pendulum_start")

PEAK_TOLERANCE_DB = 0.5
FLOOR_TOLERANCE_DB = 0.5
PATIO_MIN_TOLERANCE_DB = 1.0
UNMUTE_SETTLE_MS = 15_000
SEQ_MIN_MS = 15 * 60 * 1000
SEQ_MAX_MS = 25 * 60 * 1000
BELL_PAIR_SPACING_MS = 120_000
RENDER_QUANTUM_MS = 50


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    first_fail_t_ms: int | None = None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.detail}"


@dataclass
class Report:
    checks: list = field(default_factory=list)
    species_counts: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_text(self) -> str:
        lines = [c.line() for c in self.checks]
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)

    def to_summary(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {
                    "name": c.name,
                    "passed": c.passed,
                    "detail": c.detail,
                    "first_fail_t_ms": c.first_fail_t_ms,
                }
                for c in self.checks
            ],
            "species_counts": self.species_counts,
        }


@dataclass
class _TraceDigest:
    """Everything the battery needs, collected in one pass."""

    start: datetime | None = None
    end_ms: int = 0
    bell_onsets: dict = field(default_factory=dict)  # t_ms -> strokes
    sequences: list = field(default_factory=list)  # (t, zone, dur_ms, tail_ms, events)
    level_minmax: dict = field(default_factory=dict)  # zone -> [min, max]
    level_series: dict = field(default_factory=dict)  # zone -> [(t, db)]
    onsets: list = field(default_factory=list)  # (t, zone, kind)
    offs: list = field(default_factory=list)  # (t, zone)
    species_counts: dict = field(default_factory=dict)
    mute_spans: dict = field(default_factory=dict)  # zone -> [(t0, t1|None)]
    consent_true: set = field(default_factory=set)
    pendulum_onsets: dict = field(default_factory=dict)  # (zone) -> [t]
    voice_events: dict = field(default_factory=dict)  # zone -> [(t, +1/-1)]
    sync_done: dict = field(default_factory=dict)  # player -> rounds
    transfer_failures: int = 0


def scan(trace: Trace) -> _TraceDigest:
    d = _TraceDigest()
    for t_ms, node, kind, fields_ in trace:
        d.end_ms = max(d.end_ms, t_ms)
        if kind == "scenario":
            d.start = datetime.fromisoformat(fields_["start"])
        elif kind == "bell_group":
            d.bell_onsets[t_ms] = int(fields_["strokes"])
            zone = fields_["zone"]
            d.voice_events.setdefault(zone, []).append((t_ms, 1))
        elif kind == "sequence":
            d.sequences.append((
                t_ms, fields_["zone"], int(fields_["duration_ms"]),
                int(fields_["tail_ms"]), int(fields_["events"]),
            ))
        elif kind == "level":
            zone = fields_["zone"]
            db = float(fields_["db"])
            mm = d.level_minmax.setdefault(zone, [db, db])
            mm[0] = min(mm[0], db)
            mm[1] = max(mm[1], db)
            d.level_series.setdefault(zone, []).append((t_ms, db))
        elif kind in ("voice_on", "waterfall_start", "pendulum_start"):
            zone = fields_["zone"]
            d.voice_events.setdefault(zone, []).append((t_ms, 1))
            species = fields_.get("species")
            if species:
                d.species_counts[species] = d.species_counts.get(species, 0) + 1
        elif kind == "voice_off":
            zone = fields_["zone"]
            d.voice_events.setdefault(zone, []).append((t_ms, -1))
        elif kind == "pendulum_onset":
            d.pendulum_onsets.setdefault(fields_["zone"], []).append(t_ms)
        elif kind == "override":
            target = fields_["target"]
            okind = fields_["kind"]
            if okind == "mute":
                d.mute_spans.setdefault(target, []).append([t_ms, None])
            elif okind == "unmute":
                spans = d.mute_spans.get(target, [])
                if spans and spans[-1][1] is None:
                    spans[-1][1] = t_ms
            elif okind == "consent_set" and fields_.get("value", "").lower() == "true":
                d.consent_true.add(target)
        elif kind == "sync_done":
            d.sync_done[node] = int(fields_["rounds"])
        elif kind == "transfer_failed":
            d.transfer_failures += 1
    return d


def _full_days(d: _TraceDigest) -> list:
    """Calendar dates entirely covered by the trace."""
    if d.start is None:
        return []
    end_dt = d.start + timedelta(milliseconds=d.end_ms)
    days = []
    day = (d.start + timedelta(days=1)).date() if d.start.time() != datetime.min.time() else d.start.date()
    while True:
        day_end = datetime.combine(day, datetime.min.time()) + timedelta(days=1)
        if day_end > end_dt:
            break
        days.append(day)
        day = day + timedelta(days=1)
    return days


def expected_strokes(hour: int) -> int:
    return ((hour + 11) % 12) + 1


def check_bells(d: _TraceDigest) -> list:
    results = []
    days = _full_days(d)
    per_day: dict = {day: [] for day in days}
    for t_ms in sorted(d.bell_onsets):
        at = d.start + timedelta(milliseconds=t_ms)
        if at.date() in per_day:
            per_day[at.date()].append((t_ms, at))
    bad_day = next((day for day in days if len(per_day[day]) != 48), None)
    if days:
        detail = f"{len(days)} full day(s), counts " + (
            "all 48" if bad_day is None else
            f"day {bad_day} has {len(per_day[bad_day])}"
        )
        results.append(CheckResult("bells_daily_count", bad_day is None, detail))
    else:
        results.append(CheckResult("bells_daily_count", True, "no full day in trace"))

    pair_fail = None
    stroke_fail = None
    onsets = sorted(d.bell_onsets)
    by_time = {t: d.bell_onsets[t] for t in onsets}
    for t_ms in onsets:
        at = d.start + timedelta(milliseconds=t_ms)
        if at.minute == 0 and at.second == 0:
            partner = t_ms + BELL_PAIR_SPACING_MS
            if partner <= d.end_ms:
                if partner not in by_time or by_time[partner] != by_time[t_ms]:
                    pair_fail = pair_fail or t_ms
        if at.minute in (0, 2) and by_time[t_ms] != expected_strokes(at.hour):
            stroke_fail = stroke_fail or t_ms
    results.append(CheckResult(
        "bells_pair_spacing", pair_fail is None,
        "every H:00 group repeats at H:02 exactly" if pair_fail is None
        else f"first unpaired group at t={pair_fail}",
        pair_fail,
    ))
    results.append(CheckResult(
        "bells_stroke_convention", stroke_fail is None,
        "stroke counts follow the 12-hour convention" if stroke_fail is None
        else f"wrong stroke count at t={stroke_fail}",
        stroke_fail,
    ))
    return results


def check_sequences(d: _TraceDigest, topology: list) -> list:
    common = {z.zone_id for z in topology if z.zone_class in COMMON_CLASSES}
    bad = None
    count = 0
    for t_ms, zone, dur_ms, tail_ms, _events in d.sequences:
        if zone not in common:
            continue
        count += 1
        if not (SEQ_MIN_MS <= dur_ms <= SEQ_MAX_MS) or tail_ms <= 0:
            bad = bad or t_ms
    detail = (f"{count} ambient sequence(s), all in [15, 25] min with tail silence"
              if bad is None else f"violation at t={bad}")
    return [CheckResult("sequence_timing", bad is None, detail, bad)]


def _muted_at(spans: list, t_ms: int, end_ms: int) -> bool:
    for t0, t1 in spans:
        hi = (t1 if t1 is not None else end_ms) + UNMUTE_SETTLE_MS
        if t0 <= t_ms < hi:
            return True
    return False


def check_levels(d: _TraceDigest, topology: list) -> list:
    results = []
    peak_fail = None
    peak_detail = "all zones within peak budget + 0.5 dB"
    for zone in topology:
        mm = d.level_minmax.get(zone.zone_id)
        if mm is None:
            continue
        if mm[1] > zone.budget.peak_dba + PEAK_TOLERANCE_DB:
            series = d.level_series[zone.zone_id]
            t_bad = next(t for t, db in series if db > zone.budget.peak_dba + PEAK_TOLERANCE_DB)
            peak_fail = t_bad
            peak_detail = f"{zone.zone_id} reached {mm[1]:.2f} dBA (peak {zone.budget.peak_dba})"
            break
    results.append(CheckResult("levels_peak", peak_fail is None, peak_detail, peak_fail))

    min_fail = None
    min_detail = "continuous landmark minimum held"
    for zone in topology:
        if zone.landmark != "waterfall" or zone.budget.min_dba is None:
            continue
        floor_limit = zone.budget.min_dba - PATIO_MIN_TOLERANCE_DB
        spans = d.mute_spans.get(zone.zone_id, [])
        for t_ms, db in d.level_series.get(zone.zone_id, []):
            if _muted_at(spans, t_ms, d.end_ms):
                continue
            if db < floor_limit:
                min_fail = t_ms
                min_detail = f"{zone.zone_id} fell to {db:.2f} dBA at t={t_ms}"
                break
        if min_fail is not None:
            break
    results.append(CheckResult("levels_landmark_min", min_fail is None, min_detail, min_fail))

    silent_fail = None
    silent_detail = "silent zones hold the 30 dBA floor"
    active_zones = set(d.voice_events)
    for zone in topology:
        zid = zone.zone_id
        if zid in active_zones:
            continue
        mm = d.level_minmax.get(zid)
        if mm is None:
            continue
        if abs(mm[0] - 30.0) > FLOOR_TOLERANCE_DB or abs(mm[1] - 30.0) > FLOOR_TOLERANCE_DB:
            series = d.level_series[zid]
            silent_fail = series[0][0]
            silent_detail = f"{zid} reported {mm[0]:.2f}..{mm[1]:.2f} dBA while silent"
            break
    results.append(CheckResult("levels_silent_floor", silent_fail is None,
                               silent_detail, silent_fail))

    consent_fail = None
    consent_detail = "bedrooms silent without consent"
    for zone in topology:
        if zone.zone_class != "bedroom_point" or zone.zone_id in d.consent_true:
            continue
        mm = d.level_minmax.get(zone.zone_id)
        if mm is None:
            continue
        if mm[1] > 30.0 + FLOOR_TOLERANCE_DB:
            consent_fail = next(
                t for t, db in d.level_series[zone.zone_id]
                if db > 30.0 + FLOOR_TOLERANCE_DB
            )
            consent_detail = f"{zone.zone_id} sounded ({mm[1]:.2f} dBA) without consent"
            break
    results.append(CheckResult("bedroom_consent_silence", consent_fail is None,
                               consent_detail, consent_fail))
    return results


def check_voice_limit(d: _TraceDigest, topology: list) -> list:
    limits = {z.zone_id: z.max_voices for z in topology}
    fail = None
    detail = "no instant exceeds zone max_voices"
    for zone_id, events in sorted(d.voice_events.items()):
        limit = limits.get(zone_id)
        if limit is None:
            continue
        # Off-before-on at equal timestamps matches half-open event spans.
        ordered = sorted(events, key=lambda e: (e[0], e[1]))
        active = 0
        for t_ms, delta in ordered:
            active += delta
            if active > limit:
                fail = t_ms
                detail = f"{zone_id} had {active} voices (limit {limit}) at t={t_ms}"
                break
        if fail is not None:
            break
    return [CheckResult("voice_limit", fail is None, detail, fail)]


def check_pendulum(d: _TraceDigest, period_ms: int = 2000) -> list:
    """Within a continuous pendulum span, every inter-onset gap is exactly
    the period; gaps >= 10 periods are bedtime-window boundaries."""
    fail = None
    detail = "no pendulum activity"
    pairs = 0
    for zone_id, onsets in sorted(d.pendulum_onsets.items()):
        ts = sorted(onsets)
        for a, b in zip(ts, ts[1:]):
            gap = b - a
            if gap >= 10 * period_ms:
                continue  # separate enablement window
            pairs += 1
            if gap != period_ms:
                fail = b
                detail = f"{zone_id} inter-onset {gap} ms at t={b}"
                break
        if fail is not None:
            break
    if pairs and fail is None:
        detail = f"{pairs} consecutive pair(s) all exactly {period_ms} ms"
    return [CheckResult("pendulum_period", fail is None, detail, fail)]


def check(trace: Trace, topology: list) -> Report:
    """Run the full battery over one trace."""
    d = scan(trace)
    report = Report()
    report.checks.extend(check_bells(d))
    report.checks.extend(check_sequences(d, topology))
    report.checks.extend(check_levels(d, topology))
    report.checks.extend(check_voice_limit(d, topology))
    report.checks.extend(check_pendulum(d))
    report.species_counts = dict(sorted(d.species_counts.items()))
    return report


# --- cross-trace comparisons -------------------------------------------------

@dataclass
class SeasonalComparison:
    winter_crow: int
    winter_tit: int
    spring_crow: int
    spring_tit: int
    factor: float
    passed: bool

    def detail(self) -> str:
        return (
            f"january crow={self.winter_crow} tit={self.winter_tit}; "
            f"april crow={self.spring_crow} tit={self.spring_tit} (factor >= {self.factor})"
        )


def compare_seasonal(winter_trace: Trace, spring_trace: Trace,
                     factor: float = 2.0) -> SeasonalComparison:
    """Crows must dominate the winter week and tits the spring week."""
    wd = scan(winter_trace)
    sd = scan(spring_trace)
    w_crow = wd.species_counts.get("crow", 0)
    w_tit = wd.species_counts.get("tit", 0)
    s_crow = sd.species_counts.get("crow", 0)
    s_tit = sd.species_counts.get("tit", 0)
    ok = (w_crow >= factor * max(w_tit, 1)) and (s_tit >= factor * max(s_crow, 1))
    return SeasonalComparison(w_crow, w_tit, s_crow, s_tit, factor, ok)


@dataclass
class EquivalenceResult:
    only_in_a: int
    only_in_b: int
    common: int
    passed: bool

    def detail(self) -> str:
        return f"common={self.common} only_faulty={self.only_in_a} only_clean={self.only_in_b}"


def _onset_signature(trace: Trace, quantum_ms: int) -> set:
    sig = set()
    for t_ms, node, kind, fields_ in trace:
        if kind == "voice_on":
            sig.add((node, fields_["sample"], t_ms // quantum_ms))
        elif kind == "bell_group":
            sig.add((node, f"bell:{fields_['strokes']}", t_ms // quantum_ms))
        elif kind == "pendulum_onset":
            sig.add((node, "pendulum", t_ms // quantum_ms))
    return sig


def compare_fault_equivalence(faulty: Trace, clean: Trace,
                              quantum_ms: int = RENDER_QUANTUM_MS) -> EquivalenceResult:
    """Audible-outcome equivalence: same samples on the same players with
    onsets matching within one render quantum."""
    a = _onset_signature(faulty, quantum_ms)
    b = _onset_signature(clean, quantum_ms)
    return EquivalenceResult(
        only_in_a=len(a - b),
        only_in_b=len(b - a),
        common=len(a & b),
        passed=(a == b and len(a) > 0),
    )


@dataclass
class SyncResult:
    players: int
    converged: int
    max_rounds: int
    bound: int
    failures: int
    passed: bool

    def detail(self) -> str:
        return (f"{self.converged}/{self.players} converged, max rounds "
                f"{self.max_rounds} (bound {self.bound}), {self.failures} failed transfer(s)")


def sync_convergence(trace: Trace, catalog_size: int, batch: int = 8,
                     injected_failures: int = 0, player_count: int | None = None) -> SyncResult:
    """Every player reaches the target inventory within the round bound."""
    d = scan(trace)
    players = player_count if player_count is not None else len(d.sync_done)
    converged = len(d.sync_done)
    max_rounds = max(d.sync_done.values()) if d.sync_done else 0
    bound = math.ceil(catalog_size / batch) + injected_failures + 1
    passed = (
        players > 0
        and converged == players
        and max_rounds <= bound
        and d.transfer_failures == injected_failures
    )
    return SyncResult(players, converged, max_rounds, bound, d.transfer_failures, passed)
