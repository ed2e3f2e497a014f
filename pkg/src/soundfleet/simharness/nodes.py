"""Simulation-side node wrappers: player nodes that log voice onsets and
feed the per-zone level board, and the asset-sync controller.

Rendering PCM is not part of fleet simulation; levels come from the
declarative model, which is the same path the console serves.
"""

from __future__ import annotations

from .. import levels
from ..catalog import Catalog
from ..player import PlayerState, handle_message, pendulum_impulses
from ..wire import AssetStore, DecodeError, asset_digest, decode, plan_sync

SYNC_BATCH = 8


class ZoneLevelBoard:
    """Piecewise-constant per-zone level series under the energetic-sum model."""

    def __init__(self, zone_ids, trace):
        self.trace = trace
        self._voices: dict = {zid: {} for zid in zone_ids}
        self._last: dict = {zid: None for zid in zone_ids}

    def init_lines(self, t_ms: int) -> None:
        for zid in sorted(self._voices):
            self._emit(t_ms, zid)

    def _emit(self, t_ms: int, zone_id: str) -> None:
        level = levels.zone_level(self._voices[zone_id].values())
        rounded = round(level, 3)
        if self._last[zone_id] != rounded:
            self._last[zone_id] = rounded
            self.trace(t_ms, "board", "level", {"zone": zone_id, "db": level})

    def voice_on(self, t_ms: int, zone_id: str, key, level_dba: float) -> None:
        self._voices[zone_id][key] = level_dba
        self._emit(t_ms, zone_id)

    def voice_update(self, t_ms: int, zone_id: str, key, level_dba: float) -> None:
        if key in self._voices[zone_id]:
            self._voices[zone_id][key] = level_dba
            self._emit(t_ms, zone_id)

    def voice_off(self, t_ms: int, zone_id: str, key) -> None:
        if self._voices[zone_id].pop(key, None) is not None:
            self._emit(t_ms, zone_id)

    def level_of(self, zone_id: str) -> float:
        return levels.zone_level(self._voices[zone_id].values())


class SimPlayerNode:
    """One on-board computer: decode, dedupe, apply, and log transitions."""

    def __init__(
        self,
        kernel,
        player_id: str,
        zone_id: str,
        catalog: Catalog,
        board: ZoneLevelBoard,
        trace,
        presync_inventory: dict | None = None,
        presync_meta: dict | None = None,
    ):
        self.kernel = kernel
        self.catalog = catalog
        self.board = board
        self.trace = trace
        self.state = PlayerState(
            player_id, zone_id=zone_id,
            inventory=presync_inventory, sample_meta=presync_meta,
        )
        self.duplicates = 0
        self.decode_errors = 0
        self._wakes: set = set()
        self._impulse_chain = 0

    # -- ingress ------------------------------------------------------------

    def receive(self, datagram: bytes, now_ms: int) -> None:
        try:
            msg = decode(datagram)
        except DecodeError as exc:
            self.decode_errors += 1
            self.trace(now_ms, self.state.player_id, "decode_error", {"reason": str(exc)})
            return
        if self.state.replay.observe("generator", msg.msg_seq, now_ms) == "duplicate":
            self.duplicates += 1
            return
        logs = handle_message(self.state, msg, now_ms)
        for record in logs:
            self.trace(now_ms, self.state.player_id, record.event_kind, {
                "digest": record.payload_digest, "note": record.summary,
            })
        self._after_message(msg, now_ms)

    def _after_message(self, msg, now_ms: int) -> None:
        for voice in self.state.voices:
            if voice.state == "scheduled":
                self._wake_at(max(voice.start_ms, now_ms))
            elif voice.state == "releasing":
                end = voice.end_ms()
                if end is not None:
                    self._wake_at(max(end, now_ms))
        if msg.kind == "SYNTH_PARAM" and msg.body.get("synth") == "waterfall":
            for voice in self.state.voices:
                if voice.source == "waterfall" and voice.state == "playing":
                    self.board.voice_update(
                        now_ms, self.state.zone_id,
                        (self.state.player_id, voice.voice_id),
                        voice.level_dba + self.state.trim_db,
                    )
        self._step(now_ms)

    def _wake_at(self, t_ms: int) -> None:
        if t_ms in self._wakes:
            return
        self._wakes.add(t_ms)
        self.kernel.schedule(t_ms, self._on_wake)

    def _on_wake(self, t_ms: int) -> None:
        self._wakes.discard(t_ms)
        self._step(t_ms)

    # -- voice transitions -----------------------------------------------------

    def _step(self, now_ms: int) -> None:
        for transition, voice in self.state.step_to(now_ms):
            key = (self.state.player_id, voice.voice_id)
            if transition == "onset":
                self._log_onset(now_ms, voice)
                self.board.voice_on(
                    now_ms, self.state.zone_id, key,
                    voice.level_dba + self.state.trim_db,
                )
                end = voice.end_ms()
                if end is not None:
                    self._wake_at(end)
                if voice.source == "pendulum":
                    self._impulse_chain += 1
                    self._schedule_impulses(voice, now_ms, self._impulse_chain)
            else:  # finished
                self.trace(now_ms, self.state.player_id, "voice_off", {
                    "zone": self.state.zone_id,
                    "source": voice.source,
                    "sample": voice.sample_id or "-",
                })
                self.board.voice_off(now_ms, self.state.zone_id, key)

    def _log_onset(self, now_ms: int, voice) -> None:
        fields = {
            "zone": self.state.zone_id,
            "source": voice.source,
            "level": voice.level_dba + self.state.trim_db,
        }
        if voice.source == "sample":
            fields["sample"] = voice.sample_id
            fields["dur_ms"] = voice.duration_ms
            rec = self.catalog.get(voice.sample_id)
            if rec is not None:
                fields["cat"] = rec.category
                if rec.species:
                    fields["species"] = rec.species
            self.trace(now_ms, self.state.player_id, "voice_on", fields)
        elif voice.source == "bell":
            fields["strokes"] = voice.params.get("strokes", 0)
            self.trace(now_ms, self.state.player_id, "bell_group", fields)
        else:
            self.trace(now_ms, self.state.player_id, f"{voice.source}_start", fields)

    def _schedule_impulses(self, voice, from_ms: int, chain: int) -> None:
        period = voice.params.get("period_ms", 2000)
        onsets = pendulum_impulses(voice, from_ms, from_ms + period + 1)
        next_t = onsets[0][1] if onsets else from_ms + period

        def impulse(t_ms: int):
            if chain != self._impulse_chain or not voice.is_live():
                return
            self.trace(t_ms, self.state.player_id, "pendulum_onset", {
                "zone": self.state.zone_id,
            })
            self.kernel.schedule(t_ms + period, impulse)

        self.kernel.schedule(next_t, impulse)

    # -- boot helpers -----------------------------------------------------------

    def boot_waterfall(self, params: dict, level_dba: float, t_ms: int) -> None:
        """Waterfall zones boot with the fall already sounding (it never stops)."""
        from ..player import Voice

        voice = Voice(
            voice_id="boot_waterfall",
            source="waterfall",
            start_ms=t_ms,
            duration_ms=None,
            gain_db=0.0,
            level_dba=level_dba,
            params=params,
            state="playing",
        )
        self.state.voices.append(voice)
        self.board.voice_on(t_ms, self.state.zone_id,
                            (self.state.player_id, voice.voice_id), level_dba)
        self.trace(t_ms, self.state.player_id, "waterfall_start", {
            "zone": self.state.zone_id, "source": "waterfall", "level": level_dba,
        })


class SyncController:
    """Cold-start asset distribution: plan, transfer in batches, retry on
    failure, converge to the catalog's expected inventory."""

    def __init__(self, kernel, channel, players, catalog: Catalog,
                 assets: AssetStore, trace, interval_s: int = 60):
        self.kernel = kernel
        self.channel = channel
        self.players = sorted(players, key=lambda p: p.state.player_id)
        self.catalog = catalog
        self.assets = assets
        self.trace = trace
        self.interval_ms = interval_s * 1000
        self.rounds: dict = {p.state.player_id: 0 for p in self.players}
        self.converged: dict = {p.state.player_id: False for p in self.players}
        self.in_flight: dict = {p.state.player_id: 0 for p in self.players}

    def start(self, t_ms: int = 0) -> None:
        self.kernel.schedule(t_ms, self._round)

    def all_converged(self) -> bool:
        return all(self.converged.values())

    def _round(self, now_ms: int) -> None:
        for node in self.players:
            pid = node.state.player_id
            if self.converged[pid] or self.in_flight[pid] > 0:
                continue
            plan = plan_sync(node.state.inventory, self.catalog, self.assets)
            if plan.empty:
                self.converged[pid] = True
                self.trace(now_ms, pid, "sync_done", {
                    "rounds": self.rounds[pid],
                    "hash": plan.target_hash[:16],
                })
                continue
            self.rounds[pid] += 1
            self.trace(now_ms, pid, "sync_plan", {
                "missing": len(plan.missing), "stale": len(plan.stale),
            })
            for sample_id in plan.stale:
                node.state.inventory.pop(sample_id, None)
                node.state.sample_meta.pop(sample_id, None)
            busy_at = now_ms
            for sample_id, digest, _size in plan.missing[:SYNC_BATCH]:
                self.in_flight[pid] += 1
                busy_at = self.channel.transfer(
                    busy_at, pid, sample_id, self.assets.data(sample_id),
                    lambda sid, data, t, n=node: self._apply(n, sid, data, t),
                )
        if not self.all_converged():
            self.kernel.schedule(now_ms + self.interval_ms, self._round)

    def _apply(self, node, sample_id: str, data, t_ms: int) -> None:
        pid = node.state.player_id
        self.in_flight[pid] -= 1
        if data is None:
            return  # failed transfer; next round retries
        node.state.inventory[sample_id] = asset_digest(data)
        rec = self.catalog.get(sample_id)
        if rec is not None:
            node.state.sample_meta[sample_id] = (
                int(rec.duration_s * 1000),
                round(rec.ref_level_dba * 1000),
            )
