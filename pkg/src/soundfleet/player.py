"""On-board player node: receives control messages, maintains voices,
realizes gains/fades and synth stubs, renders PCM windows, and estimates
its emitted level under the declarative model.

Message handling never raises toward the network; every abnormal condition
is logged and degraded (a missing sample skips, a stale PLAY drops).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from . import levels
from .wire import ControlMessage, LogRecord, ReplayWindow

RENDER_RATE = 44100
RENDER_QUANTUM_S = 0.05
RENDER_QUANTUM_MS = 50
MAX_VOICES = 8
STALE_PLAY_GRACE_MS = 5_000
TIME_SYNC_MAX_STEP_MS = 100.0
TRIM_MIN_DB = -60.0
TRIM_MAX_DB = 12.0
LEVEL_HISTORY_S = 600
EXECUTED_RETENTION_MS = 60_000

BELL_PARTIAL_RATIOS = (1.0, 2.756, 5.404, 8.933)


@dataclass
class Voice:
    voice_id: str
    source: str  # sample | bell | waterfall | pendulum
    start_ms: int
    duration_ms: int | None  # None = open-ended (continuous synths)
    gain_db: float
    level_dba: float
    sample_id: str | None = None
    fade_in_ms: int = 0
    fade_out_ms: int = 0
    params: dict = field(default_factory=dict)
    state: str = "scheduled"  # scheduled -> playing -> releasing -> done
    release_start_ms: int | None = None

    def end_ms(self) -> int | None:
        if self.release_start_ms is not None:
            return self.release_start_ms + self.fade_out_ms
        if self.duration_ms is None:
            return None
        return self.start_ms + self.duration_ms

    def is_live(self) -> bool:
        return self.state in ("scheduled", "playing", "releasing")


class PlayerState:
    """One player = one owner; messages are applied between render quanta."""

    def __init__(
        self,
        player_id: str,
        zone_id: str = "",
        inventory: dict | None = None,
        sample_meta: dict | None = None,
    ):
        self.player_id = player_id
        self.zone_id = zone_id
        self.clock_offset_ms = 0.0
        self.trim_db = 0.0
        self.voices: list[Voice] = []
        self.inventory: dict = dict(inventory or {})
        # Sample metadata travels on the asset channel with the PCM:
        # id -> (duration_ms, ref_level_mdba).
        self.sample_meta: dict = dict(sample_meta or {})
        self.replay = ReplayWindow()
        self.executed: dict = {}
        self.level_history: list = []  # (t_s, level_dba), >= 600 s retained
        self.clip_count = 0

    # -- voice bookkeeping ----------------------------------------------

    def live_voices(self) -> list:
        return [v for v in self.voices if v.is_live()]

    def _prune(self, now_ms: int) -> None:
        self.voices = [v for v in self.voices if v.is_live()]
        expired = [k for k, t in self.executed.items() if t < now_ms]
        for k in expired:
            del self.executed[k]

    def step_to(self, now_ms: int) -> list:
        """Advance voice states to now; returns (transition, voice) pairs.

        Transitions: "onset" when a scheduled voice reaches its due time,
        "finished" when a voice's span or release completes.
        """
        transitions = []
        for v in self.voices:
            if v.state == "scheduled" and v.start_ms <= now_ms:
                v.state = "playing"
                transitions.append(("onset", v))
            end = v.end_ms()
            if v.state in ("playing", "releasing") and end is not None and end <= now_ms:
                v.state = "done"
                transitions.append(("finished", v))
        self._prune(now_ms)
        return transitions

    def record_level(self, t_s: int, level_dba: float) -> None:
        self.level_history.append((t_s, level_dba))
        cutoff = t_s - LEVEL_HISTORY_S
        while self.level_history and self.level_history[0][0] < cutoff:
            self.level_history.pop(0)

    def level_estimate(self, now_ms: int) -> float:
        """Declarative emitted level: silence floor plus active voice levels."""
        active = [
            v.level_dba + self.trim_db
            for v in self.voices
            if v.state in ("playing", "releasing")
        ]
        return levels.zone_level(active)


def _command_key(msg: ControlMessage) -> str:
    """Semantic idempotence key: kind + canonical body, independent of seq."""
    body = ";".join(f"{k}={msg.body[k]}" for k in sorted(msg.body))
    return hashlib.sha256(f"{msg.kind};{body}".encode("utf-8")).hexdigest()[:16]


def _log(state: PlayerState, now_ms: int, kind: str, digest: str, summary: str) -> LogRecord:
    return LogRecord(
        timestamp_ms=now_ms,
        node_id=state.player_id,
        event_kind=kind,
        payload_digest=digest,
        summary=summary,
    )


def handle_message(
    state: PlayerState, msg: ControlMessage, now_ms: int
) -> list:
    """Apply one decoded, dedupe-checked message; returns log records.

    Idempotent across the replay window and beyond: a duplicate command body
    is a no-op even when the transport window has already expired.
    """
    logs: list[LogRecord] = []
    key = _command_key(msg)
    digest = msg.digest()

    if msg.kind == "PLAY":
        if key in state.executed:
            return logs
        due = msg.body["due_ms"]
        state.executed[key] = max(due, now_ms) + EXECUTED_RETENTION_MS
        if due < now_ms - STALE_PLAY_GRACE_MS:
            logs.append(_log(state, now_ms, "stale_play", digest,
                             f"dropped PLAY {msg.body['sample_id']} due {due}"))
            return logs
        sample_id = msg.body["sample_id"]
        if sample_id not in state.inventory or sample_id not in state.sample_meta:
            logs.append(_log(state, now_ms, "missing_asset", digest,
                             f"no asset {sample_id}; skipped"))
            return logs
        if len(state.live_voices()) >= MAX_VOICES:
            logs.append(_log(state, now_ms, "voice_overflow", digest,
                             f"dropped PLAY {sample_id}: {MAX_VOICES} voices busy"))
            return logs
        gain_db = msg.body["gain_mdb"] / 1000.0
        duration_ms, ref_level_mdba = state.sample_meta[sample_id]
        voice = Voice(
            voice_id=key,
            source="sample",
            sample_id=sample_id,
            start_ms=due,
            duration_ms=duration_ms,
            gain_db=gain_db,
            level_dba=ref_level_mdba / 1000.0 + gain_db,
            fade_in_ms=msg.body["fade_in_ms"],
            fade_out_ms=msg.body["fade_out_ms"],
        )
        state.voices.append(voice)
        logs.append(_log(state, now_ms, "play_scheduled", digest,
                         f"{sample_id} due {due} gain {gain_db:.1f}dB"))
        return logs

    if msg.kind == "STOP":
        selector = msg.body["selector"]
        fade = msg.body["fade_out_ms"]
        stopped = 0
        for v in state.voices:
            if selector != "all" and v.sample_id != selector and v.voice_id != selector:
                continue
            if v.state == "scheduled":
                v.state = "done"
                stopped += 1
            elif v.state == "playing":
                v.state = "releasing"
                v.fade_out_ms = fade
                v.release_start_ms = now_ms
                stopped += 1
        logs.append(_log(state, now_ms, "stop", digest,
                         f"selector {selector}: {stopped} voice(s)"))
        return logs

    if msg.kind == "GAIN":
        trim = msg.body["trim_mdb"] / 1000.0
        state.trim_db = min(max(trim, TRIM_MIN_DB), TRIM_MAX_DB)
        logs.append(_log(state, now_ms, "gain", digest, f"trim {state.trim_db:+.1f}dB"))
        return logs

    if msg.kind == "TIME_SYNC":
        target = msg.body["clock_ms"] - now_ms
        step = min(max(target - state.clock_offset_ms, -TIME_SYNC_MAX_STEP_MS),
                   TIME_SYNC_MAX_STEP_MS)
        state.clock_offset_ms += step
        logs.append(_log(state, now_ms, "time_sync", digest,
                         f"offset {state.clock_offset_ms:+.0f}ms"))
        return logs

    if msg.kind == "PING":
        logs.append(_log(state, now_ms, "pong", digest, "alive"))
        return logs

    if msg.kind == "SYNTH_PARAM":
        return _handle_synth(state, msg, now_ms, key, digest)

    logs.append(_log(state, now_ms, "unknown_kind", digest, msg.kind))
    return logs


def _find_continuous(state: PlayerState, source: str) -> Voice | None:
    for v in state.voices:
        if v.source == source and v.is_live():
            return v
    return None


def _handle_synth(
    state: PlayerState, msg: ControlMessage, now_ms: int, key: str, digest: str
) -> list:
    logs: list[LogRecord] = []
    synth = msg.body["synth"]
    due = msg.body["due_ms"]
    params = dict(msg.body["params"])

    if synth == "bell":
        if key in state.executed:
            return logs
        state.executed[key] = max(due, now_ms) + EXECUTED_RETENTION_MS
        if due < now_ms - STALE_PLAY_GRACE_MS:
            logs.append(_log(state, now_ms, "stale_play", digest, f"dropped bell due {due}"))
            return logs
        strokes = params.get("strokes", 1)
        gap_ms = params.get("stroke_gap_ms", 3000)
        decay_ms = params.get("decay_ms", 4000)
        voice = Voice(
            voice_id=key,
            source="bell",
            start_ms=due,
            duration_ms=int((strokes - 1) * gap_ms + decay_ms),
            gain_db=0.0,
            level_dba=params.get("level_mdba", 68_000) / 1000.0,
            params=params,
        )
        state.voices.append(voice)
        logs.append(_log(state, now_ms, "bell_group", digest,
                         f"{strokes} stroke(s) due {due}"))
        return logs

    if synth == "waterfall":
        voice = _find_continuous(state, "waterfall")
        level = params.get("level_mdba", 42_000) / 1000.0
        if params.get("enabled", 1) == 0:
            if voice is not None:
                voice.state = "done"
                logs.append(_log(state, now_ms, "waterfall_off", digest, "disabled"))
            return logs
        if voice is None:
            voice = Voice(
                voice_id=key,
                source="waterfall",
                start_ms=max(due, now_ms),
                duration_ms=None,
                gain_db=0.0,
                level_dba=level,
                params=params,
            )
            state.voices.append(voice)
            logs.append(_log(state, now_ms, "waterfall_on", digest, f"level {level:.1f}"))
        else:
            voice.params = params
            voice.level_dba = level
            logs.append(_log(state, now_ms, "waterfall_update", digest, f"level {level:.1f}"))
        return logs

    if synth == "pendulum":
        voice = _find_continuous(state, "pendulum")
        if params.get("enabled", 1) == 0:
            if voice is not None:
                voice.state = "done"
                logs.append(_log(state, now_ms, "pendulum_off", digest, "disabled"))
            return logs
        if voice is None:
            voice = Voice(
                voice_id=key,
                source="pendulum",
                start_ms=max(due, now_ms),
                duration_ms=None,
                gain_db=0.0,
                level_dba=params.get("level_mdba", 44_000) / 1000.0,
                params=params,
            )
            state.voices.append(voice)
            logs.append(_log(state, now_ms, "pendulum_on", digest,
                             f"period {params.get('period_ms', 2000)}ms"))
        else:
            voice.params = params
        return logs

    logs.append(_log(state, now_ms, "unknown_synth", digest, synth))
    return logs


def pendulum_impulses(voice: Voice, from_ms: int, to_ms: int) -> list:
    """Impulse onsets of a pendulum voice inside [from_ms, to_ms); exact grid."""
    period = voice.params.get("period_ms", 2000)
    anchor = voice.params.get("anchor_ms", voice.start_ms)
    start = max(from_ms, voice.start_ms)
    k = max(0, math.ceil((start - anchor) / period))
    onsets = []
    while anchor + k * period < to_ms:
        t = anchor + k * period
        if t >= start:
            onsets.append((k, t))
        k += 1
    return onsets


# --- PCM rendering -----------------------------------------------------------

def _fade_gain(voice: Voice, t_ms: np.ndarray) -> np.ndarray:
    """Linear gain automation: fade-in from start, fade-out to the end."""
    gain = np.ones_like(t_ms, dtype=np.float64)
    if voice.fade_in_ms > 0:
        ramp = (t_ms - voice.start_ms) / voice.fade_in_ms
        gain = np.minimum(gain, np.clip(ramp, 0.0, 1.0))
    end = voice.end_ms()
    if end is not None and voice.fade_out_ms > 0:
        ramp = (end - t_ms) / voice.fade_out_ms
        gain = np.minimum(gain, np.clip(ramp, 0.0, 1.0))
    return gain


def render_window(
    state: PlayerState, t0_ms: int, assets: dict, synth_cache: dict | None = None
) -> tuple:
    """Render one quantum starting at t0_ms.

    assets maps sample id -> float32 mono frames at 44.1 kHz. Returns
    (frames, level_estimate_dba); pure given the player state.
    """
    n = int(RENDER_RATE * RENDER_QUANTUM_S)
    t1_ms = t0_ms + RENDER_QUANTUM_MS
    out = np.zeros(n, dtype=np.float64)
    trim_lin = 10.0 ** (state.trim_db / 20.0)
    cache = synth_cache if synth_cache is not None else {}

    for voice in state.voices:
        end = voice.end_ms()
        if voice.start_ms >= t1_ms or (end is not None and end <= t0_ms):
            continue
        if voice.state == "done":
            continue
        frames = _voice_frames(voice, t0_ms, n, assets, cache)
        if frames is None:
            continue
        t_ms = t0_ms + np.arange(n) * (1000.0 / RENDER_RATE)
        gain = _fade_gain(voice, t_ms) * (10.0 ** (voice.gain_db / 20.0))
        out += frames * gain

    out *= trim_lin
    clipped = np.abs(out) > 1.0
    if clipped.any():
        state.clip_count += int(clipped.sum())
        out = np.clip(out, -1.0, 1.0)

    active = [
        v.level_dba + state.trim_db
        for v in state.voices
        if v.is_live() and v.start_ms < t1_ms and (v.end_ms() is None or v.end_ms() > t0_ms)
        and v.state != "scheduled"
    ]
    return out, levels.zone_level(active)


def _voice_frames(
    voice: Voice, t0_ms: int, n: int, assets: dict, cache: dict
) -> np.ndarray | None:
    offset_frames = int(round((t0_ms - voice.start_ms) * RENDER_RATE / 1000.0))
    if voice.source == "sample":
        data = assets.get(voice.sample_id)
        if data is None:
            return None
        return _slice_frames(data, offset_frames, n)
    if voice.source == "bell":
        key = ("bell", voice.voice_id)
        if key not in cache:
            cache[key] = render_bell_group(voice.params)
        return _slice_frames(cache[key], offset_frames, n)
    if voice.source == "waterfall":
        # Chunked generation seeded by absolute window index keeps it endless.
        window_index = t0_ms // RENDER_QUANTUM_MS
        return synth_stub(
            "waterfall_grain",
            voice.params,
            seed=window_index,
            duration_s=RENDER_QUANTUM_S,
        )
    if voice.source == "pendulum":
        key = ("pendulum", voice.voice_id)
        if key not in cache:
            cache[key] = synth_stub("pendulum", voice.params, duration_s=4.0)
        period_ms = voice.params.get("period_ms", 2000)
        anchor = voice.params.get("anchor_ms", voice.start_ms)
        cycle_offset = int(round(((t0_ms - anchor) % (2 * period_ms)) * RENDER_RATE / 1000.0))
        return _slice_frames(cache[key], cycle_offset, n)
    return None


def _slice_frames(data: np.ndarray, offset: int, n: int) -> np.ndarray:
    out = np.zeros(n, dtype=np.float64)
    if offset < 0:
        dest0 = -offset
        src0 = 0
    else:
        dest0 = 0
        src0 = offset
    if src0 >= len(data) or dest0 >= n:
        return out
    count = min(n - dest0, len(data) - src0)
    out[dest0 : dest0 + count] = data[src0 : src0 + count]
    return out


# --- synth stubs -------------------------------------------------------------

def synth_stub(kind: str, params: dict, seed: int = 0, duration_s: float | None = None,
               rate: int = RENDER_RATE) -> np.ndarray:
    """Parameter-correct synthesis stand-ins; out-of-range params clamp.

    Kinds: bell (4 decaying partials), waterfall_grain (filtered noise
    grains), pendulum (two alternating transients, 2.000 s period).
    """
    if kind == "bell":
        return render_bell_group(params, rate=rate)
    if kind == "waterfall_grain":
        return _render_waterfall(params, seed, duration_s or 1.0, rate)
    if kind == "pendulum":
        return _render_pendulum(params, duration_s or 4.0, rate)
    raise ValueError(f"unknown synth kind {kind!r}")


def render_bell_group(params: dict, rate: int = RENDER_RATE) -> np.ndarray:
    """One strike-group: N strokes, each four exponentially decaying partials.

    All partials share the stroke's time constant, so the -60 dB point of a
    stroke lands at decay_s by construction.
    """
    strokes = int(min(max(params.get("strokes", 1), 1), 12))
    gap_ms = params.get("stroke_gap_ms", 3000)
    decay_s = min(max(params.get("decay_ms", 4000) / 1000.0, 2.0), 8.0)
    brightness = min(max(params.get("brightness_milli", 500) / 1000.0, 0.0), 1.0)
    detune_cents = params.get("detune_cents_milli", 0) / 1000.0
    f0 = 392.0  # G4 strike tone

    total_s = (strokes - 1) * gap_ms / 1000.0 + decay_s
    n = int(total_s * rate) + 1
    out = np.zeros(n, dtype=np.float64)
    tau = decay_s / math.log(1000.0)  # e-folding for a -60 dB fall at decay_s
    t_one = np.arange(int(decay_s * rate)) / rate
    env = np.exp(-t_one / tau)
    bright = 0.35 + 0.65 * brightness
    amps = (1.0, 0.55 * bright, 0.30 * bright**2, 0.18 * bright**3)
    stroke = np.zeros_like(t_one)
    for k, (ratio, amp) in enumerate(zip(BELL_PARTIAL_RATIOS, amps)):
        detune = 2.0 ** (detune_cents * k / 1200.0)
        stroke += amp * np.sin(2.0 * math.pi * f0 * ratio * detune * t_one)
    stroke *= env
    peak = np.abs(stroke).max()
    if peak > 0:
        stroke /= peak
    for s in range(strokes):
        i0 = int(s * gap_ms / 1000.0 * rate)
        out[i0 : i0 + len(stroke)] += stroke
    peak = np.abs(out).max()
    if peak > 1.0:
        out /= peak
    return out


def _render_waterfall(params: dict, seed: int, duration_s: float, rate: int) -> np.ndarray:
    grain_rate = min(max(params.get("rate_mhz", 60_000) / 1000.0, 5.0), 200.0)
    grain_dur_ms = min(max(params.get("dur_ms", 60), 5), 200)
    tilt = min(max(params.get("tilt_milli", 0) / 1000.0, -1.0), 1.0)
    rng = np.random.default_rng(seed)
    n = int(duration_s * rate)
    out = np.zeros(n + int(0.25 * rate), dtype=np.float64)
    glen = int(grain_dur_ms / 1000.0 * rate)
    window = np.hanning(max(glen, 8))
    period = 1.0 / grain_rate
    k = 0
    while k * period < duration_s:
        jitter = (rng.random() - 0.5) * 0.4 * period
        i0 = int((k * period + max(jitter, -k * period)) * rate)
        grain = rng.standard_normal(len(window)) * window
        out[i0 : i0 + len(grain)] += grain
        k += 1
    out = out[:n]
    # One-pole low-pass voiced by the spectral tilt: warmer when negative.
    cutoff = 1500.0 * (2.0 ** (2.0 * tilt))
    alpha = math.exp(-2.0 * math.pi * cutoff / rate)
    out = lfilter([1.0 - alpha], [1.0, -alpha], out)
    peak = np.abs(out).max()
    if peak > 0:
        out = out / peak * 0.7
    return out


def _render_pendulum(params: dict, duration_s: float, rate: int) -> np.ndarray:
    """Alternating tick/tock transients, onset period exactly period_ms."""
    period_s = params.get("period_ms", 2000) / 1000.0
    n = int(duration_s * rate)
    out = np.zeros(n, dtype=np.float64)
    t_hit = np.arange(int(0.12 * rate)) / rate
    tick = np.sin(2 * math.pi * 1200.0 * t_hit) * np.exp(-t_hit / 0.025)
    tock = np.sin(2 * math.pi * 820.0 * t_hit) * np.exp(-t_hit / 0.035)
    k = 0
    while k * period_s < duration_s:
        i0 = int(k * period_s * rate)
        hit = tick if k % 2 == 0 else tock
        end = min(i0 + len(hit), n)
        out[i0:end] += hit[: end - i0]
        k += 1
    peak = np.abs(out).max()
    if peak > 0:
        out /= peak
    return out
