"""Two-channel network contract: an idempotent datagram control protocol
(single datagram per command, canonical little-endian encoding) and a
reliable chunked asset-sync channel.

Every control kind is idempotent by design: duplicates and reorders within
the replay window, or even beyond it, must not change player outcome.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

MAGIC = b"\x4d\x53"
VERSION = 1
MAX_DATAGRAM = 512
HEADER_LEN = 20
REPLAY_WINDOW_MS = 30_000

KINDS = ("PLAY", "STOP", "GAIN", "SYNTH_PARAM", "PING", "TIME_SYNC")
_KIND_CODE = {name: i + 1 for i, name in enumerate(KINDS)}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}

SYNTH_KINDS = ("bell", "waterfall", "pendulum")
_SYNTH_CODE = {name: i + 1 for i, name in enumerate(SYNTH_KINDS)}
_CODE_SYNTH = {v: k for k, v in _SYNTH_CODE.items()}

CHUNK_SIZE = 4096


class WireError(Exception):
    pass


class EncodeError(WireError):
    pass


class DecodeError(WireError):
    pass


@dataclass(frozen=True)
class ControlMessage:
    kind: str
    msg_seq: int
    sent_at_ms: int
    body: dict = field(default_factory=dict)
    version: int = VERSION

    def digest(self) -> str:
        return hashlib.sha256(encode(self)).hexdigest()[:16]


def _pack_u48(value: int) -> bytes:
    if not 0 <= value < 1 << 48:
        raise EncodeError(f"u48 out of range: {value}")
    return struct.pack("<Q", value)[:6]


def _unpack_u48(data: bytes) -> int:
    return struct.unpack("<Q", data + b"\x00\x00")[0]


def _pack_str8(text: str) -> bytes:
    raw = text.encode("utf-8")
    if len(raw) > 255:
        raise EncodeError(f"string too long for str8: {len(raw)} bytes")
    return bytes([len(raw)]) + raw


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError("truncated body")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def i32(self) -> int:
        return struct.unpack("<i", self.take(4))[0]

    def i64(self) -> int:
        return struct.unpack("<q", self.take(8))[0]

    def u48(self) -> int:
        return _unpack_u48(self.take(6))

    def str8(self) -> str:
        n = self.u8()
        return self.take(n).decode("utf-8")

    def done(self) -> bool:
        return self.pos == len(self.data)


def _encode_body(kind: str, body: dict) -> bytes:
    if kind == "PLAY":
        return b"".join(
            (
                _pack_str8(body["sample_id"]),
                _pack_u48(body["due_ms"]),
                struct.pack("<i", body["gain_mdb"]),
                struct.pack("<I", body["fade_in_ms"]),
                struct.pack("<I", body["fade_out_ms"]),
            )
        )
    if kind == "STOP":
        return _pack_str8(body["selector"]) + struct.pack("<I", body["fade_out_ms"])
    if kind == "GAIN":
        return struct.pack("<i", body["trim_mdb"])
    if kind == "SYNTH_PARAM":
        synth = body["synth"]
        if synth not in _SYNTH_CODE:
            raise EncodeError(f"unknown synth kind {synth!r}")
        params = body["params"]
        if len(params) > 255:
            raise EncodeError("too many synth params")
        out = [bytes([_SYNTH_CODE[synth]]), _pack_u48(body["due_ms"]), bytes([len(params)])]
        for key in sorted(params):
            out.append(_pack_str8(key))
            out.append(struct.pack("<q", params[key]))
        return b"".join(out)
    if kind == "PING":
        return b""
    if kind == "TIME_SYNC":
        return _pack_u48(body["clock_ms"])
    raise EncodeError(f"unknown message kind {kind!r}")


def _decode_body(kind: str, data: bytes) -> dict:
    r = _Reader(data)
    if kind == "PLAY":
        body = {
            "sample_id": r.str8(),
            "due_ms": r.u48(),
            "gain_mdb": r.i32(),
            "fade_in_ms": r.u32(),
            "fade_out_ms": r.u32(),
        }
    elif kind == "STOP":
        body = {"selector": r.str8(), "fade_out_ms": r.u32()}
    elif kind == "GAIN":
        body = {"trim_mdb": r.i32()}
    elif kind == "SYNTH_PARAM":
        code = r.u8()
        if code not in _CODE_SYNTH:
            raise DecodeError(f"unknown synth code {code}")
        due = r.u48()
        count = r.u8()
        params = {}
        for _ in range(count):
            key = r.str8()
            params[key] = r.i64()
        body = {"synth": _CODE_SYNTH[code], "due_ms": due, "params": params}
    elif kind == "PING":
        body = {}
    elif kind == "TIME_SYNC":
        body = {"clock_ms": r.u48()}
    else:
        raise DecodeError(f"unknown kind {kind!r}")
    if not r.done():
        raise DecodeError("trailing bytes in body")
    return body


def encode(msg: ControlMessage) -> bytes:
    """Canonical datagram: 20-byte header + length-prefixed body, <= 512 bytes."""
    if msg.kind not in _KIND_CODE:
        raise EncodeError(f"unknown message kind {msg.kind!r}")
    if not 0 <= msg.msg_seq < 1 << 64:
        raise EncodeError(f"msg_seq out of range: {msg.msg_seq}")
    body = _encode_body(msg.kind, msg.body)
    datagram = b"".join(
        (
            MAGIC,
            bytes([msg.version]),
            bytes([_KIND_CODE[msg.kind]]),
            struct.pack("<Q", msg.msg_seq),
            _pack_u48(msg.sent_at_ms),
            struct.pack("<H", len(body)),
            body,
        )
    )
    if len(datagram) > MAX_DATAGRAM:
        raise EncodeError(f"datagram {len(datagram)} bytes exceeds {MAX_DATAGRAM}")
    return datagram


def decode(data: bytes) -> ControlMessage:
    """Inverse of encode; any framing violation raises, never a partial message."""
    if len(data) < HEADER_LEN:
        raise DecodeError(f"datagram too short: {len(data)} bytes")
    if data[:2] != MAGIC:
        raise DecodeError("bad magic")
    version = data[2]
    code = data[3]
    if code not in _CODE_KIND:
        raise DecodeError(f"unknown kind code {code}")
    msg_seq = struct.unpack("<Q", data[4:12])[0]
    sent_at = _unpack_u48(data[12:18])
    body_len = struct.unpack("<H", data[18:20])[0]
    if len(data) != HEADER_LEN + body_len:
        raise DecodeError(
            f"length mismatch: header says {body_len}, got {len(data) - HEADER_LEN}"
        )
    kind = _CODE_KIND[code]
    body = _decode_body(kind, data[HEADER_LEN:])
    return ControlMessage(
        kind=kind, msg_seq=msg_seq, sent_at_ms=sent_at, body=body, version=version
    )


class ReplayWindow:
    """Tracks (sender, seq) pairs for 30 s; exact re-receipts are duplicates.

    Sequence gaps are expected (datagram loss); replays after expiry come
    back as fresh, which is safe because every kind is idempotent.
    """

    def __init__(self, window_ms: int = REPLAY_WINDOW_MS):
        self.window_ms = window_ms
        self._seen: dict = {}

    def observe(self, sender: str, seq: int, now_ms: int) -> str:
        self._prune(now_ms)
        key = (sender, seq)
        if key in self._seen:
            return "duplicate"
        self._seen[key] = now_ms
        return "fresh"

    def _prune(self, now_ms: int) -> None:
        cutoff = now_ms - self.window_ms
        stale = [k for k, t in self._seen.items() if t < cutoff]
        for k in stale:
            del self._seen[k]


# --- asset sync ---------------------------------------------------------------

def asset_digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def inventory_hash(inventory: dict) -> str:
    """Order-independent digest of an id -> asset-digest inventory."""
    h = hashlib.sha256()
    for sample_id in sorted(inventory):
        h.update(f"{sample_id}:{inventory[sample_id]}\n".encode("utf-8"))
    return h.hexdigest()


@dataclass(frozen=True)
class AssetSyncPlan:
    missing: tuple  # (sample_id, digest, size) triples
    stale: tuple  # sample ids to delete
    target_hash: str

    @property
    def empty(self) -> bool:
        return not self.missing and not self.stale


class AssetStore:
    """Generator-side asset bytes keyed by sample id."""

    def __init__(self, blobs: dict):
        self._blobs = dict(blobs)
        self._digests = {sid: asset_digest(data) for sid, data in self._blobs.items()}

    def ids(self) -> list:
        return sorted(self._blobs)

    def data(self, sample_id: str) -> bytes:
        return self._blobs[sample_id]

    def digest(self, sample_id: str) -> str:
        return self._digests[sample_id]

    def size(self, sample_id: str) -> int:
        return len(self._blobs[sample_id])

    def expected_inventory(self, catalog) -> dict:
        return {rid: self.digest(rid) for rid in sorted(catalog.records) if rid in self._digests}


def plan_sync(player_inventory: dict, catalog, assets: AssetStore) -> AssetSyncPlan:
    """Diff a player's inventory against the catalog's expected assets.

    missing = absent or digest-mismatched ids; stale = ids no longer in the
    catalog. The plan is empty iff the inventory hash equals the target.
    """
    expected = assets.expected_inventory(catalog)
    missing = []
    for sample_id in sorted(expected):
        have = player_inventory.get(sample_id)
        if have != expected[sample_id]:
            missing.append((sample_id, expected[sample_id], assets.size(sample_id)))
    stale = tuple(sid for sid in sorted(player_inventory) if sid not in expected)
    return AssetSyncPlan(
        missing=tuple(missing), stale=stale, target_hash=inventory_hash(expected)
    )


def chunk_asset(sample_id: str, data: bytes) -> list:
    """Frames for the reliable channel: `id;offset;len;digest;` + payload."""
    frames = []
    for offset in range(0, len(data), CHUNK_SIZE):
        payload = data[offset : offset + CHUNK_SIZE]
        header = f"{sample_id};{offset};{len(payload)};{asset_digest(payload)};"
        frames.append(header.encode("utf-8") + payload)
    if not data:
        header = f"{sample_id};0;0;{asset_digest(b'')};"
        frames.append(header.encode("utf-8"))
    return frames


def parse_chunk(frame: bytes) -> tuple:
    """(sample_id, offset, payload) from a chunk frame; digest is verified."""
    parts = frame.split(b";", 4)
    if len(parts) != 5:
        raise DecodeError("malformed chunk frame")
    sample_id = parts[0].decode("utf-8")
    offset = int(parts[1])
    length = int(parts[2])
    digest = parts[3].decode("utf-8")
    payload = parts[4]
    if len(payload) != length:
        raise DecodeError(f"chunk length mismatch: {len(payload)} != {length}")
    if asset_digest(payload) != digest:
        raise DecodeError("chunk digest mismatch")
    return sample_id, offset, payload


# --- logging ---------------------------------------------------------------

@dataclass(frozen=True)
class LogRecord:
    timestamp_ms: int
    node_id: str
    event_kind: str
    payload_digest: str
    summary: str

    def to_line(self) -> str:
        return f"{self.timestamp_ms};{self.node_id};{self.event_kind};{self.payload_digest};{self.summary}"

    @classmethod
    def from_line(cls, line: str) -> "LogRecord":
        t, node, kind, digest, summary = line.rstrip("\n").split(";", 4)
        return cls(int(t), node, kind, digest, summary)


def format_dispatch_line(epoch: int, t_ms: int, player: str, msg_type: str, digest: str) -> str:
    return f"{epoch};{t_ms};{player};{msg_type};{digest}"


def parse_dispatch_line(line: str) -> tuple:
    epoch, t, player, msg_type, digest = line.rstrip("\n").split(";")
    return int(epoch), int(t), player, msg_type, digest
