"""Append-only operation log plus periodic snapshots.

Both files start with a magic string and a format version byte.  The body
is one JSON operation per line; a torn final line (crash mid-append) is
ignored on recovery.
"""
from __future__ import annotations

import json
import logging
import os
import threading
from pathlib import Path
from typing import Callable, Iterable, Iterator

log = logging.getLogger(__name__)

LOG_MAGIC = b"ONTOSTORE-LOG"
SNAPSHOT_MAGIC = b"ONTOSTORE-SNAP"
FORMAT_VERSION = 1


class PersistenceError(Exception):
    pass


def _header(magic: bytes) -> bytes:
    return magic + bytes([FORMAT_VERSION]) + b"\n"


def _read_ops(path: Path, magic: bytes) -> Iterator[dict]:
    with open(path, "rb") as fh:
        head = fh.readline()
        if not head.startswith(magic):
            raise PersistenceError(f"{path}: bad magic header")
        version = head[len(magic)]
        if version != FORMAT_VERSION:
            raise PersistenceError(f"{path}: unsupported format version {version}")
        for raw in fh:
            if not raw.endswith(b"\n"):
                log.warning("%s: ignoring torn trailing record", path)
                return
            try:
                yield json.loads(raw)
            except json.JSONDecodeError:
                log.warning("%s: ignoring corrupt record", path)
                return


class OpLog:
    def __init__(self, directory: str | os.PathLike, snapshot_every: int = 50_000, fsync: bool = False):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.dir / "ops.log"
        self.snapshot_path = self.dir / "snapshot.dat"
        self.snapshot_every = snapshot_every
        self.fsync = fsync
        self._lock = threading.Lock()
        self._since_snapshot = 0
        self._fh = None

    def recover(self) -> Iterator[dict]:
        """Operations needed to rebuild state: snapshot first, then the log tail."""
        if self.snapshot_path.exists():
            yield from _read_ops(self.snapshot_path, SNAPSHOT_MAGIC)
        if self.log_path.exists():
            for op in _read_ops(self.log_path, LOG_MAGIC):
                self._since_snapshot += 1
                yield op

    def _open(self):
        if self._fh is None:
            fresh = not self.log_path.exists() or self.log_path.stat().st_size == 0
            self._fh = open(self.log_path, "ab")
            if fresh:
                self._fh.write(_header(LOG_MAGIC))
        return self._fh

    def append(self, op: dict) -> bool:
        """Append one operation; returns True when a snapshot is due."""
        line = json.dumps(op, ensure_ascii=False, separators=(",", ":")).encode() + b"\n"
        with self._lock:
            fh = self._open()
            fh.write(line)
            fh.flush()
            if self.fsync:
                os.fsync(fh.fileno())
            self._since_snapshot += 1
            return self._since_snapshot >= self.snapshot_every

    def snapshot(self, state_ops: Callable[[], Iterable[dict]]) -> None:
        """Write the full state and truncate the log.  Caller must block writers."""
        with self._lock:
            tmp = self.snapshot_path.with_suffix(".tmp")
            with open(tmp, "wb") as fh:
                fh.write(_header(SNAPSHOT_MAGIC))
                for op in state_ops():
                    fh.write(json.dumps(op, ensure_ascii=False, separators=(",", ":")).encode() + b"\n")
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, self.snapshot_path)
            if self._fh is not None:
                self._fh.close()
                self._fh = None
            with open(self.log_path, "wb") as fh:
                fh.write(_header(LOG_MAGIC))
            self._since_snapshot = 0

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None
