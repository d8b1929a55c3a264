"""Sharded, deduplicated, append-only object persistence.

Each object kind gets 2^object_shard_bits shards; each shard is a trio of
files under ``<root>/<kind>/<NNN>/``:

* ``log.bin``      -- concatenated zlib-compressed payloads, append only
* ``offsets.idx``  -- flat (20-byte id, u64le offset, u64le length) records
                      in insertion order
* ``presence.idx`` -- flat 20-byte ids in insertion order; a record's
                      position is the object's ordinal

``<root>/manifest`` is JSON holding shard bits, codec, per-shard counts,
and a monotonically increasing version number. The manifest is the commit
point: log appends happen first, index records next, manifest last, and
opening a store truncates any trailing records the manifest never saw.
"""

from __future__ import annotations

import enum
import json
import os
import zlib
from dataclasses import dataclass
from pathlib import Path

from .errors import DecompressFailed, NotFound, PreconditionFailed, StoreCorrupt
from .gitcore import OBJECT_KINDS, ObjectId, roundtrip_error

_OFFSET_REC = 36  # 20-byte id + u64le offset + u64le length
_PRESENCE_REC = 20


@dataclass(frozen=True)
class ShardConfig:
    object_shard_bits: int = 7
    map_shard_bits: int = 5

    def __post_init__(self):
        for bits in (self.object_shard_bits, self.map_shard_bits):
            if not 0 <= bits <= 8:
                raise ValueError("shard bits must be in 0..8, got %d" % bits)

    @property
    def object_shards(self) -> int:
        return 1 << self.object_shard_bits

    @property
    def map_shards(self) -> int:
        return 1 << self.map_shard_bits


def shard_of_object(id: ObjectId, cfg: ShardConfig) -> int:
    """Top ``object_shard_bits`` bits of the first id byte."""
    return id[0] >> (8 - cfg.object_shard_bits) if cfg.object_shard_bits else 0


class PutResult(enum.Enum):
    INSERTED = "inserted"
    DUPLICATE = "duplicate"


class _ShardState:
    """In-memory view of one (kind, shard): presence dict, offset list,
    and index records appended since the last flush."""

    __slots__ = ("presence", "offsets", "pending", "log_size", "log_fh")

    def __init__(self):
        self.presence = {}
        self.offsets = []  # (offset, length) by ordinal
        self.pending = []  # (id, offset, length) not yet in the index files
        self.log_size = 0
        self.log_fh = None


class ObjectStore:
    """Content-addressed store for the four git object kinds."""

    def __init__(self, root, manifest, writable):
        self.root = Path(root)
        self._manifest = manifest
        self._cfg = ShardConfig(manifest["object_shard_bits"],
                                manifest["map_shard_bits"])
        self.writable = writable
        self._states: dict[tuple[str, int], _ShardState] = {}
        self._dirty = False
        self._closed = False

    # -- lifecycle ---------------------------------------------------

    @classmethod
    def create(cls, root, cfg: ShardConfig = ShardConfig()) -> "ObjectStore":
        root = Path(root)
        if (root / "manifest").exists():
            raise StoreCorrupt("store already exists at %s" % root)
        root.mkdir(parents=True, exist_ok=True)
        manifest = {
            "object_shard_bits": cfg.object_shard_bits,
            "map_shard_bits": cfg.map_shard_bits,
            "codec": "zlib",
            "version": 0,
            "shards": {kind: {} for kind in OBJECT_KINDS},
        }
        store = cls(root, manifest, writable=True)
        store._write_manifest()
        return store

    @classmethod
    def open(cls, root, writable=False) -> "ObjectStore":
        root = Path(root)
        path = root / "manifest"
        try:
            manifest = json.loads(path.read_text())
        except FileNotFoundError:
            raise StoreCorrupt("no manifest at %s" % path)
        except (OSError, ValueError) as exc:
            raise StoreCorrupt("unreadable manifest at %s: %s" % (path, exc))
        if manifest.get("codec") != "zlib":
            raise StoreCorrupt("unsupported codec %r" % manifest.get("codec"))
        return cls(root, manifest, writable=writable)

    @classmethod
    def create_or_open(cls, root, cfg: ShardConfig = ShardConfig(), writable=True):
        if (Path(root) / "manifest").exists():
            return cls.open(root, writable=writable)
        return cls.create(root, cfg)

    def close(self):
        if self._closed:
            return
        if self.writable:
            self.flush()
        for state in self._states.values():
            if state.log_fh is not None:
                state.log_fh.close()
                state.log_fh = None
        self._closed = True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- core accessors ----------------------------------------------

    @property
    def config(self) -> ShardConfig:
        return self._cfg

    @property
    def version(self) -> int:
        return self._manifest["version"]

    def _shard_dir(self, kind, shard) -> Path:
        return self.root / kind / ("%03d" % shard)

    def _state(self, kind, shard) -> _ShardState:
        key = (kind, shard)
        state = self._states.get(key)
        if state is None:
            state = self._load_shard(kind, shard)
            self._states[key] = state
        return state

    def _load_shard(self, kind, shard) -> _ShardState:
        state = _ShardState()
        count, log_bytes = self._manifest["shards"][kind].get("%03d" % shard, (0, 0))
        sdir = self._shard_dir(kind, shard)
        off_path = sdir / "offsets.idx"
        pres_path = sdir / "presence.idx"
        log_path = sdir / "log.bin"
        disk_off = off_path.stat().st_size // _OFFSET_REC if off_path.exists() else 0
        disk_pres = pres_path.stat().st_size // _PRESENCE_REC if pres_path.exists() else 0
        disk_log = log_path.stat().st_size if log_path.exists() else 0
        if disk_off < count or disk_pres < count or disk_log < log_bytes:
            raise StoreCorrupt(
                "%s shard %03d shorter than manifest (count %d)" % (kind, shard, count))
        if self.writable and (disk_off > count or disk_pres > count or disk_log > log_bytes):
            # Trailing records the manifest never committed: truncate.
            if disk_off > count:
                _truncate(off_path, count * _OFFSET_REC)
            if disk_pres > count:
                _truncate(pres_path, count * _PRESENCE_REC)
            if disk_log > log_bytes:
                _truncate(log_path, log_bytes)
        if count:
            with open(off_path, "rb") as fh:
                raw = fh.read(count * _OFFSET_REC)
            for i in range(count):
                rec = raw[i * _OFFSET_REC:(i + 1) * _OFFSET_REC]
                oid = rec[:20]
                state.presence[oid] = i
                state.offsets.append((
                    int.from_bytes(rec[20:28], "little"),
                    int.from_bytes(rec[28:36], "little"),
                ))
            if len(state.presence) != count:
                raise StoreCorrupt("%s shard %03d has duplicate index ids" % (kind, shard))
        state.log_size = log_bytes
        return state

    # -- operations ---------------------------------------------------

    def contains(self, kind: str, id: ObjectId) -> bool:
        self._check(kind)
        shard = shard_of_object(id, self.config)
        return bytes(id) in self._state(kind, shard).presence

    def contains_batch(self, kind: str, ids) -> list[bool]:
        return [self.contains(kind, i) for i in ids]

    def put(self, kind: str, id: ObjectId, payload: bytes, *,
            prevalidated: bool = False) -> PutResult:
        self._check(kind)
        if not self.writable:
            raise StoreCorrupt("store opened read-only")
        if not prevalidated:
            reason = roundtrip_error(id, kind, payload)
            if reason is not None:
                raise PreconditionFailed("%s %s: %s" % (kind, id.hex(), reason))
        shard = shard_of_object(id, self.config)
        state = self._state(kind, shard)
        raw = bytes(id)
        if raw in state.presence:
            return PutResult.DUPLICATE
        comp = zlib.compress(payload)
        if state.log_fh is None:
            sdir = self._shard_dir(kind, shard)
            sdir.mkdir(parents=True, exist_ok=True)
            state.log_fh = open(sdir / "log.bin", "ab", buffering=0)
        state.log_fh.write(comp)
        offset = state.log_size
        state.log_size += len(comp)
        state.presence[raw] = len(state.offsets)
        state.offsets.append((offset, len(comp)))
        state.pending.append((raw, offset, len(comp)))
        self._dirty = True
        return PutResult.INSERTED

    def get(self, kind: str, id: ObjectId) -> bytes:
        self._check(kind)
        shard = shard_of_object(id, self.config)
        state = self._state(kind, shard)
        ordinal = state.presence.get(bytes(id))
        if ordinal is None:
            raise NotFound("%s %s" % (kind, id.hex()))
        offset, length = state.offsets[ordinal]
        with open(self._shard_dir(kind, shard) / "log.bin", "rb") as fh:
            fh.seek(offset)
            comp = fh.read(length)
        if len(comp) != length:
            raise StoreCorrupt("short read in %s shard %03d" % (kind, shard))
        try:
            return zlib.decompress(comp)
        except zlib.error as exc:
            raise DecompressFailed("%s %s: %s" % (kind, id.hex(), exc))

    def ordinal(self, kind: str, id: ObjectId) -> int:
        self._check(kind)
        shard = shard_of_object(id, self.config)
        ordinal = self._state(kind, shard).presence.get(bytes(id))
        if ordinal is None:
            raise NotFound("%s %s" % (kind, id.hex()))
        return ordinal

    def sweep(self, kind: str, shard: int):
        """Yield (id, payload) for every object of the shard in insertion
        order. Insertion order is the reproducibility anchor: it is
        preserved across reopen and never reorders."""
        self._check(kind)
        state = self._state(kind, shard)
        if not state.offsets:
            return
        ids = [None] * len(state.offsets)
        for raw, ordinal in state.presence.items():
            ids[ordinal] = raw
        log_path = self._shard_dir(kind, shard) / "log.bin"
        with open(log_path, "rb") as fh:
            for ordinal, (offset, length) in enumerate(state.offsets):
                fh.seek(offset)
                comp = fh.read(length)
                if len(comp) != length:
                    raise StoreCorrupt("short read in %s shard %03d" % (kind, shard))
                try:
                    yield ObjectId(ids[ordinal]), zlib.decompress(comp)
                except zlib.error as exc:
                    raise DecompressFailed("%s shard %03d ordinal %d: %s"
                                           % (kind, shard, ordinal, exc))

    def sweep_all(self, kind: str):
        for shard in range(self.config.object_shards):
            yield from self.sweep(kind, shard)

    def count(self, kind: str) -> int:
        self._check(kind)
        total = sum(count for count, _ in self._manifest["shards"][kind].values())
        for (k, shard), state in self._states.items():
            if k == kind:
                committed, _ = self._manifest["shards"][kind].get("%03d" % shard, (0, 0))
                total += len(state.offsets) - committed
        return total

    # -- durability ----------------------------------------------------

    def flush(self):
        """Append pending index records, then commit counts and a new
        version to the manifest. One version bump per dirty flush."""
        if not self.writable:
            return
        wrote = False
        for (kind, shard), state in self._states.items():
            if not state.pending:
                continue
            if state.log_fh is not None:
                state.log_fh.flush()
            sdir = self._shard_dir(kind, shard)
            with open(sdir / "offsets.idx", "ab") as fh:
                for raw, offset, length in state.pending:
                    fh.write(raw + offset.to_bytes(8, "little") + length.to_bytes(8, "little"))
            with open(sdir / "presence.idx", "ab") as fh:
                for raw, _, _ in state.pending:
                    fh.write(raw)
            self._manifest["shards"][kind]["%03d" % shard] = [
                len(state.offsets), state.log_size]
            state.pending.clear()
            wrote = True
        if wrote or self._dirty:
            self._manifest["version"] += 1
            self._dirty = False
        self._write_manifest()

    def snapshot(self) -> dict:
        """Deep copy of the manifest; feed to ``rollback`` to restore."""
        return json.loads(json.dumps(self._manifest))

    def rollback(self, snapshot: dict):
        """Truncate logs and indexes back to a snapshot's counts. The
        store returns to exactly the state the snapshot was taken in."""
        if not self.writable:
            raise StoreCorrupt("store opened read-only")
        for state in self._states.values():
            if state.log_fh is not None:
                state.log_fh.close()
                state.log_fh = None
        self._states.clear()
        for kind in OBJECT_KINDS:
            current = self._manifest["shards"][kind]
            target = snapshot["shards"][kind]
            for shard_name in current:
                count, log_bytes = target.get(shard_name, (0, 0))
                sdir = self.root / kind / shard_name
                _truncate(sdir / "offsets.idx", count * _OFFSET_REC)
                _truncate(sdir / "presence.idx", count * _PRESENCE_REC)
                _truncate(sdir / "log.bin", log_bytes)
        self._manifest = json.loads(json.dumps(snapshot))
        self._dirty = False
        self._write_manifest()

    def _write_manifest(self):
        path = self.root / "manifest"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self._manifest, indent=1, sort_keys=True))
        os.replace(tmp, path)

    @staticmethod
    def _check(kind):
        if kind not in OBJECT_KINDS:
            raise ValueError("unknown object kind: %r" % (kind,))


def _truncate(path: Path, size: int):
    if not path.exists():
        if size:
            raise StoreCorrupt("missing file %s" % path)
        return
    with open(path, "rb+") as fh:
        fh.truncate(size)
