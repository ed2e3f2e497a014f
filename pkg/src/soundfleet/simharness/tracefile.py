"""Merged, time-ordered event log of every node, one line per event:

    t_ms;node;kind;key=value;key=value...

Keys are sorted so the same run always serializes to the same bytes.
Week-long traces stream to disk; short ones can live in memory.
"""

from __future__ import annotations

import hashlib
import io


def format_value(value) -> str:
    if isinstance(value, float):
        return f"{value:.3f}"
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def format_line(t_ms: int, node: str, kind: str, fields: dict) -> str:
    body = ";".join(f"{k}={format_value(fields[k])}" for k in sorted(fields))
    if body:
        return f"{t_ms};{node};{kind};{body}"
    return f"{t_ms};{node};{kind}"


def parse_line(line: str) -> tuple:
    parts = line.rstrip("\n").split(";")
    t_ms = int(parts[0])
    node = parts[1]
    kind = parts[2]
    fields = {}
    for chunk in parts[3:]:
        if "=" in chunk:
            key, value = chunk.split("=", 1)
            fields[key] = value
    return t_ms, node, kind, fields


class TraceWriter:
    """Append-only, time-ordered writer backing a Trace."""

    def __init__(self, path=None):
        self.path = path
        self._last_t = -1
        if path is None:
            self._fh = io.StringIO()
        else:
            self._fh = open(path, "w", encoding="utf-8")

    def write(self, t_ms: int, node: str, kind: str, fields: dict | None = None) -> None:
        if t_ms < self._last_t:
            raise ValueError(f"trace regression: {t_ms} after {self._last_t}")
        self._last_t = t_ms
        self._fh.write(format_line(t_ms, node, kind, fields or {}))
        self._fh.write("\n")

    def close(self) -> "Trace":
        if self.path is None:
            lines = self._fh.getvalue().splitlines()
            return Trace(lines=lines)
        self._fh.close()
        return Trace(path=self.path)


class Trace:
    """Replayable event log; iterate to get (t_ms, node, kind, fields) tuples."""

    def __init__(self, path=None, lines=None):
        if (path is None) == (lines is None):
            raise ValueError("exactly one of path/lines required")
        self.path = path
        self._lines = lines

    def __iter__(self):
        if self._lines is not None:
            for line in self._lines:
                if line:
                    yield parse_line(line)
            return
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    yield parse_line(line)

    def raw_lines(self):
        if self._lines is not None:
            yield from self._lines
            return
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                yield line.rstrip("\n")

    def content_digest(self) -> str:
        h = hashlib.sha256()
        for line in self.raw_lines():
            h.update(line.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()

    def select(self, kind: str):
        for t_ms, node, k, fields in self:
            if k == kind:
                yield t_ms, node, fields
