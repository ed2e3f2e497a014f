"""Bundled fixtures: the 24-record test catalog, the floor topology, care
schedule, ethology table, weather traces, and deterministic stand-in audio.

Assets are synthesized (tones and noise bursts in place of recorded birds,
water, and kitchens) so nothing copyrighted ships with the repo. Asset
bytes are capped at a few seconds; they stand in for the full-length
recordings on the sync channel.
"""

from __future__ import annotations

import hashlib
import io
import math
import wave
from importlib import resources

import numpy as np

from .catalog import Catalog, load_manifest
from .wire import AssetStore

SAMPLE_RATE = 44100
ASSET_CAP_S = 2.0


def fixture_path(name: str) -> str:
    """Absolute path of a bundled fixture file."""
    return str(resources.files("soundfleet").joinpath("fixtures", name))


def load_fixture_catalog() -> Catalog:
    return load_manifest(fixture_path("manifest.txt"))


def _record_seed(sample_id: str) -> int:
    return int.from_bytes(hashlib.sha256(sample_id.encode()).digest()[:8], "little")


def synthesize_asset(record) -> np.ndarray:
    """Deterministic mono float frames standing in for the indexed recording."""
    rng = np.random.default_rng(_record_seed(record.id))
    dur = min(record.duration_s, ASSET_CAP_S)
    n = int(dur * SAMPLE_RATE)
    t = np.arange(n) / SAMPLE_RATE
    if record.category == "biophony":
        # Chirp bursts: a handful of short rising sweeps.
        out = np.zeros(n)
        for _ in range(4):
            f0 = rng.uniform(1200, 3200)
            f1 = f0 * rng.uniform(1.1, 1.6)
            start = rng.uniform(0, max(dur - 0.3, 0.01))
            i0 = int(start * SAMPLE_RATE)
            span = min(int(0.25 * SAMPLE_RATE), n - i0)
            tt = np.arange(span) / SAMPLE_RATE
            sweep = np.sin(2 * math.pi * (f0 * tt + (f1 - f0) / (2 * 0.25) * tt**2))
            out[i0 : i0 + span] += sweep * np.hanning(span)
        peak = np.abs(out).max()
        return out / peak * 0.6 if peak > 0 else out
    if record.category == "geophony":
        noise = rng.standard_normal(n)
        lfo = 0.5 + 0.5 * np.sin(2 * math.pi * rng.uniform(0.1, 0.5) * t)
        out = noise * lfo
        return out / np.abs(out).max() * 0.5
    if record.category == "anthropophony":
        out = np.zeros(n)
        for _ in range(6):
            start = rng.uniform(0, max(dur - 0.1, 0.01))
            i0 = int(start * SAMPLE_RATE)
            span = min(int(0.08 * SAMPLE_RATE), n - i0)
            burst = rng.standard_normal(span) * np.hanning(span)
            out[i0 : i0 + span] += burst
        tone = 0.2 * np.sin(2 * math.pi * rng.uniform(300, 700) * t)
        out += tone
        return out / np.abs(out).max() * 0.55
    # landmark: steady filtered-ish noise or a transient pair
    if record.id.startswith("pendulum"):
        out = np.zeros(n)
        freq = 1200.0 if record.id.endswith("tick") else 820.0
        span = min(int(0.12 * SAMPLE_RATE), n)
        tt = np.arange(span) / SAMPLE_RATE
        out[:span] = np.sin(2 * math.pi * freq * tt) * np.exp(-tt / 0.03)
        return out * 0.8
    noise = rng.standard_normal(n)
    kernel = np.ones(8) / 8.0
    out = np.convolve(noise, kernel, mode="same")
    return out / np.abs(out).max() * 0.5


def frames_to_wav_bytes(frames: np.ndarray, rate: int = SAMPLE_RATE) -> bytes:
    pcm = np.clip(frames, -1.0, 1.0)
    data = (pcm * 32767.0).astype("<i2").tobytes()
    buf = io.BytesIO()
    with wave.open(buf, "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(rate)
        wf.writeframes(data)
    return buf.getvalue()


def wav_bytes_to_frames(data: bytes) -> np.ndarray:
    with wave.open(io.BytesIO(data), "rb") as wf:
        raw = wf.readframes(wf.getnframes())
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32767.0


def build_asset_store(catalog: Catalog) -> AssetStore:
    """In-memory asset bytes for every catalog record, reproducible run-to-run."""
    blobs = {}
    for rid in sorted(catalog.records):
        rec = catalog.records[rid]
        blobs[rid] = frames_to_wav_bytes(synthesize_asset(rec))
    return AssetStore(blobs)


def presync_inventory(catalog: Catalog, assets: AssetStore) -> dict:
    return {rid: assets.digest(rid) for rid in sorted(catalog.records)}


def sample_meta(catalog: Catalog) -> dict:
    return {
        rid: (int(rec.duration_s * 1000), round(rec.ref_level_dba * 1000))
        for rid, rec in catalog.records.items()
    }
