"""Virtual network: a lossy, reordering datagram channel for control traffic
and a reliable chunked asset channel that can fail whole transfers.

Datagrams are never corrupted (codec robustness is the codec tests' job);
they are dropped or delayed, which the idempotent protocol must absorb.
"""

from __future__ import annotations

import hashlib
import random

from ..wire import chunk_asset, parse_chunk

BASE_DELAY_MS = 5
ASSET_BANDWIDTH_BPS = 1_000_000


def derived_rng(seed: int, label: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "little"))


class DatagramNetwork:
    """Delivers encoded datagrams to player nodes with seeded loss/reorder."""

    def __init__(self, kernel, seed: int, loss_pct: float = 0.0,
                 reorder_s: float = 0.0, trace=None):
        self.kernel = kernel
        self.loss_pct = loss_pct
        self.reorder_ms = int(reorder_s * 1000)
        self.rng = derived_rng(seed, "network")
        self.trace = trace or (lambda t, node, kind, fields: None)
        self.endpoints: dict = {}
        self.sent = 0
        self.dropped = 0

    def register(self, player_id: str, receive_fn) -> None:
        self.endpoints[player_id] = receive_fn

    def send(self, now_ms: int, player_id: str, datagram: bytes, digest: str) -> None:
        receive = self.endpoints.get(player_id)
        if receive is None:
            return
        self.sent += 1
        if self.loss_pct > 0 and self.rng.random() < self.loss_pct / 100.0:
            self.dropped += 1
            self.trace(now_ms, "net", "net_drop", {"player": player_id, "digest": digest})
            return
        delay = BASE_DELAY_MS
        if self.reorder_ms > 0:
            delay += int(self.rng.random() * self.reorder_ms)
        self.kernel.schedule(now_ms + delay, lambda t, d=datagram, r=receive: r(d, t))


class AssetChannel:
    """Reliable in-order byte stream standing in for the bulk-transfer path.

    Transfers take size/bandwidth virtual time; the fault plan may fail the
    first N transfer attempts outright (never corrupt silently).
    """

    def __init__(self, kernel, transfer_failures: int = 0, trace=None):
        self.kernel = kernel
        self.failures_left = transfer_failures
        self.trace = trace or (lambda t, node, kind, fields: None)
        self.attempts = 0
        self.failed = 0

    def transfer(self, now_ms: int, player_id: str, sample_id: str,
                 data: bytes, on_done) -> int:
        """Start one transfer; calls on_done(sample_id, data|None, t) at completion.

        Returns the completion time so callers can serialize their queue.
        """
        self.attempts += 1
        duration_ms = max(1, int(len(data) * 1000 / ASSET_BANDWIDTH_BPS))
        done_at = now_ms + duration_ms
        if self.failures_left > 0:
            self.failures_left -= 1
            self.failed += 1
            self.trace(now_ms, "net", "transfer_failed", {
                "player": player_id, "sample": sample_id,
            })
            self.kernel.schedule(done_at, lambda t, s=sample_id: on_done(s, None, t))
            return done_at
        # Round-trip the real chunk framing so the wire format is exercised.
        frames = chunk_asset(sample_id, data)
        buf = bytearray(len(data))
        for frame in frames:
            sid, offset, payload = parse_chunk(frame)
            buf[offset : offset + len(payload)] = payload
        out = bytes(buf)
        self.kernel.schedule(done_at, lambda t, s=sample_id, d=out: on_done(s, d, t))
        return done_at
