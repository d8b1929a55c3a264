"""Analytic cross-reference maps derived from the object store.

Five first-class entities are related by directed multimaps: author (a),
blob (b), commit (c), file name (f), and project (p). The commit sits at
the center: per-commit changed files and blobs come from recursive tree
diffs against the first parent (with identical-subtree pruning), project
membership comes from the ingest journal, and author maps come straight
from commit headers. Author-side maps are materialized by composition.

Maps are sharded: id keys by the top bits of the first byte, string keys
by the top bits of the most significant byte of their 32-bit FNV-1a
hash. Each shard has a random-lookup file (``NNN.kv``) and a key-sorted
gzip text dump (``NNN.s.gz``) of ``key;value`` lines. Every map carries
the store version it was built from, and mixing versions is refused.
"""

from __future__ import annotations

import gzip
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (MapUnavailable, MissingObject, NotFound, SchemaMismatch,
                     StaleJournal, VersionMismatch)
from .gitcore import CommitRecord, ObjectId, parse_object
from .lineformat import decode_field, encode_field
from .store import ObjectStore, ShardConfig

ENTITIES = ("a", "b", "c", "f", "p")
_ID_ENTITIES = ("b", "c")

# The instantiated basemap set. Commit time and author are properties of
# the commit object itself; c2a is still materialized for sweep symmetry.
BASEMAP_NAMES = frozenset([
    "a2b", "a2c", "a2f", "a2p",
    "b2a", "b2c", "b2f",
    "c2a", "c2b", "c2f", "c2p",
    "f2a", "f2b", "f2c",
    "p2a", "p2c",
])

FNV32_OFFSET = 0x811C9DC5
FNV32_PRIME = 0x01000193


def fnv1a_32(data: bytes) -> int:
    h = FNV32_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV32_PRIME) & 0xFFFFFFFF
    return h


@dataclass(frozen=True)
class MapName:
    source: str
    target: str

    def __post_init__(self):
        if self.source not in ENTITIES or self.target not in ENTITIES:
            raise ValueError("unknown entity in map name %s2%s" % (self.source, self.target))

    @classmethod
    def parse(cls, text: str) -> "MapName":
        if len(text) != 3 or text[1] != "2":
            raise ValueError("bad map name: %r" % text)
        return cls(text[0], text[2])

    def __str__(self):
        return "%s2%s" % (self.source, self.target)

    @property
    def inverted(self) -> "MapName":
        return MapName(self.target, self.source)


def map_shard_of(key, name: MapName, cfg: ShardConfig) -> int:
    """Shard index for a map key: id keys use their first byte, string
    keys the most significant byte of their 32-bit FNV-1a hash."""
    bits = cfg.map_shard_bits
    if name.source in _ID_ENTITIES:
        first = key[0]
    else:
        first = fnv1a_32(key.encode("utf-8", "surrogateescape")) >> 24
    return first >> (8 - bits) if bits else 0


def _enc(value) -> str:
    return value.hex() if isinstance(value, bytes) else encode_field(value)


def _sort_key(value) -> bytes:
    return _enc(value).encode("utf-8", "surrogateescape")


def _dec(text: str, entity: str):
    if entity in _ID_ENTITIES:
        return ObjectId.from_hex(text)
    return decode_field(text)


class MultiMap:
    """One directed basemap: key -> sorted, deduplicated value set,
    split into 2^map_shard_bits shards."""

    def __init__(self, name: MapName, shard_bits: int, store_version: int,
                 root: Path | None = None, truncated_keys: frozenset = frozenset()):
        self.name = name
        self.shard_bits = shard_bits
        self.store_version = store_version
        self.truncated_keys = truncated_keys
        self._root = Path(root) if root is not None else None
        self._shards: list[dict | None] = [None] * (1 << shard_bits)
        if self._root is None:
            for i in range(len(self._shards)):
                self._shards[i] = {}

    # -- construction ---------------------------------------------------

    def add(self, key, value):
        shard = self._shard_for(key)
        bucket = shard.get(key)
        if bucket is None:
            shard[key] = {value}
        else:
            bucket.add(value)

    def _shard_for(self, key) -> dict:
        idx = map_shard_of(key, self.name, ShardConfig(map_shard_bits=self.shard_bits))
        return self._load(idx)

    # -- access -----------------------------------------------------------

    def get(self, key) -> tuple:
        values = self._shard_for(key).get(key)
        if values is None:
            return ()
        return tuple(sorted(values, key=_sort_key))

    def __contains__(self, key) -> bool:
        return key in self._shard_for(key)

    def __len__(self) -> int:
        return sum(len(self._load(i)) for i in range(len(self._shards)))

    def shard_count(self) -> int:
        return len(self._shards)

    def keys(self):
        for i in range(len(self._shards)):
            for key in sorted(self._load(i), key=_sort_key):
                yield key

    def items(self):
        """Sweep: (key, sorted values) per shard, keys sorted within."""
        for i in range(len(self._shards)):
            shard = self._load(i)
            for key in sorted(shard, key=_sort_key):
                yield key, tuple(sorted(shard[key], key=_sort_key))

    def invert(self) -> "MultiMap":
        out = MultiMap(self.name.inverted, self.shard_bits, self.store_version)
        for i in range(len(self._shards)):
            for key, values in self._load(i).items():
                for value in values:
                    out.add(value, key)
        return out

    # -- persistence -----------------------------------------------------

    def _load(self, idx) -> dict:
        shard = self._shards[idx]
        if shard is None:
            shard = {}
            path = self._root / ("%03d.kv" % idx)
            if path.exists():
                with open(path, "r", encoding="utf-8", errors="surrogateescape") as fh:
                    for line in fh:
                        fields = line.rstrip("\n").split(";")
                        key = _dec(fields[0], self.name.source)
                        shard[key] = {_dec(v, self.name.target) for v in fields[1:]}
            self._shards[idx] = shard
        return shard

    def write(self, maps_root):
        """Persist meta, per-shard .kv files, and .s.gz dumps."""
        out = Path(maps_root) / str(self.name)
        out.mkdir(parents=True, exist_ok=True)
        meta = {
            "name": str(self.name),
            "shard_bits": self.shard_bits,
            "store_version": self.store_version,
            "truncated_keys": sorted(_enc(k) for k in self.truncated_keys),
        }
        (out / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))
        for i in range(len(self._shards)):
            shard = self._load(i)
            lines = []
            for key in sorted(shard, key=_sort_key):
                values = sorted(shard[key], key=_sort_key)
                lines.append(";".join([_enc(key)] + [_enc(v) for v in values]))
            text = "".join(line + "\n" for line in lines)
            (out / ("%03d.kv" % i)).write_bytes(text.encode("utf-8", "surrogateescape"))
            (out / ("%03d.s.gz" % i)).write_bytes(export_dump(self, i))
        self._root = out

    @classmethod
    def open(cls, maps_root, name: str) -> "MultiMap":
        root = Path(maps_root) / name
        meta_path = root / "meta.json"
        if not meta_path.exists():
            raise MapUnavailable("map %s not built under %s" % (name, maps_root))
        meta = json.loads(meta_path.read_text())
        mapname = MapName.parse(meta["name"])
        truncated = frozenset(_dec(k, mapname.source) for k in meta.get("truncated_keys", []))
        return cls(mapname, meta["shard_bits"], meta["store_version"],
                   root=root, truncated_keys=truncated)


@dataclass(frozen=True)
class LookupResult:
    key: object
    values: tuple
    found: bool


def lookup(map: MultiMap, keys):
    """Per-key value sets in input order; absent keys are flagged."""
    for key in keys:
        values = map.get(key)
        yield LookupResult(key, values, found=key in map)


def compose(ab: MultiMap, bc: MultiMap) -> MultiMap:
    """ac[k] = union of bc over ab[k], deduplicated and sorted."""
    if ab.name.target != bc.name.source:
        raise SchemaMismatch("cannot compose %s with %s" % (ab.name, bc.name))
    if ab.store_version != bc.store_version:
        raise VersionMismatch("map versions differ: %d vs %d"
                              % (ab.store_version, bc.store_version))
    out = MultiMap(MapName(ab.name.source, bc.name.target),
                   ab.shard_bits, ab.store_version)
    for key, mids in ab.items():
        for mid in mids:
            for value in bc.get(mid):
                out.add(key, value)
    return out


def export_dump(map: MultiMap, shard: int) -> bytes:
    """Canonical dump: gzip of ``key;value`` lines, one value per line,
    keys byte-sorted within the shard. Stable across runs for one
    store version."""
    shard_dict = map._load(shard)
    buf = io.BytesIO()
    with gzip.GzipFile(fileobj=buf, mode="wb", mtime=0) as gz:
        for key in sorted(shard_dict, key=_sort_key):
            enc_key = _enc(key)
            for value in sorted(shard_dict[key], key=_sort_key):
                gz.write(("%s;%s\n" % (enc_key, _enc(value))).encode("utf-8", "surrogateescape"))
    return buf.getvalue()


def load_dump_lines(name: MapName, shard_bits: int, store_version: int, lines) -> MultiMap:
    """Rebuild a MultiMap from ``key;value`` dump lines."""
    out = MultiMap(name, shard_bits, store_version)
    for line in lines:
        line = line.rstrip("\n")
        if not line:
            continue
        key_text, _, value_text = line.partition(";")
        out.add(_dec(key_text, name.source), _dec(value_text, name.target))
    return out


# -- commit traversal ---------------------------------------------------


@dataclass(frozen=True)
class ChangeRecord:
    commit: ObjectId
    path: str
    blob: ObjectId
    kind: str  # added | modified | deleted; deleted carries the pre-image blob


class TreeWalker:
    """Tree traversal with per-tree memoization shared across commits."""

    def __init__(self, store: ObjectStore):
        self.store = store
        self._pairs: dict[bytes, tuple] = {}
        self._trees: dict[bytes, tuple] = {}

    def entries(self, tree_id: ObjectId):
        cached = self._trees.get(bytes(tree_id))
        if cached is None:
            try:
                payload = self.store.get("tree", tree_id)
            except NotFound:
                raise MissingObject("tree %s absent from store" % tree_id.hex(),
                                    referencing_id=tree_id)
            cached = parse_object("tree", payload).entries
            self._trees[bytes(tree_id)] = cached
        return cached

    def pairs(self, tree_id: ObjectId) -> tuple:
        """All (path, blob id) pairs under a tree, paths slash-joined."""
        cached = self._pairs.get(bytes(tree_id))
        if cached is None:
            out = []
            for entry in self.entries(tree_id):
                if entry.is_gitlink:
                    continue
                name = entry.name.decode("utf-8", "surrogateescape")
                if entry.is_tree:
                    out.extend((name + "/" + sub, blob)
                               for sub, blob in self.pairs(entry.id))
                else:
                    out.append((name, entry.id))
            cached = tuple(out)
            self._pairs[bytes(tree_id)] = cached
        return cached

    def commit(self, commit_id: ObjectId) -> CommitRecord:
        try:
            payload = self.store.get("commit", commit_id)
        except NotFound:
            raise MissingObject("commit %s absent from store" % commit_id.hex(),
                                referencing_id=commit_id)
        return parse_object("commit", payload)

    def diff(self, new_tree: ObjectId, old_tree: ObjectId, prefix: str = ""):
        """Pair-level tree diff: (only-in-new, only-in-old) sets of
        (path, blob). Identical subtree ids are skipped without descent."""
        only_new: set = set()
        only_old: set = set()
        self._diff(new_tree, old_tree, prefix, only_new, only_old)
        return only_new, only_old

    def _diff(self, new_tree, old_tree, prefix, only_new, only_old):
        if new_tree == old_tree:
            return
        new_entries = {e.name: e for e in self.entries(new_tree)}
        old_entries = {e.name: e for e in self.entries(old_tree)}
        for name in set(new_entries) | set(old_entries):
            ne, oe = new_entries.get(name), old_entries.get(name)
            path = prefix + name.decode("utf-8", "surrogateescape")
            if ne is not None and oe is not None:
                if ne.id == oe.id and ne.is_tree == oe.is_tree:
                    continue
                if ne.is_tree and oe.is_tree:
                    self._diff(ne.id, oe.id, path + "/", only_new, only_old)
                    continue
            if ne is not None:
                self._expand(ne, path, only_new)
            if oe is not None:
                self._expand(oe, path, only_old)

    def _expand(self, entry, path, out: set):
        if entry.is_gitlink:
            return
        if entry.is_tree:
            out.update((path + "/" + sub, blob) for sub, blob in self.pairs(entry.id))
        else:
            out.add((path, entry.id))


def snapshot_blobs(commit: ObjectId, store: ObjectStore,
                   walker: TreeWalker | None = None) -> set:
    """All (path, blob id) pairs of the commit's root tree."""
    walker = walker or TreeWalker(store)
    record = walker.commit(commit)
    return set(walker.pairs(record.tree))


def changed_blobs(commit: ObjectId, store: ObjectStore,
                  walker: TreeWalker | None = None) -> list[ChangeRecord]:
    """ChangeRecords for one commit.

    A (path, blob) pair counts as new only if no parent snapshot holds
    it; whether the path itself is new or replaced is judged against the
    first parent, as is deletion. Root commits report every pair added.
    """
    walker = walker or TreeWalker(store)
    record = walker.commit(commit)
    if not record.parents:
        return [ChangeRecord(commit, path, blob, "added")
                for path, blob in sorted(snapshot_blobs(commit, store, walker))]
    first_parent = walker.commit(record.parents[0])
    only_new, only_old = walker.diff(record.tree, first_parent.tree)
    # Paths present in the commit side of the diff, captured before the
    # other-parent filter: a path is deleted only if the commit truly
    # lacks it, not merely because a merge adopted another parent's pair.
    new_paths = {path for path, _ in only_new}
    if len(record.parents) > 1:
        other = set()
        for parent_id in record.parents[1:]:
            parent = walker.commit(parent_id)
            other.update(walker.pairs(parent.tree))
        only_new -= other
    old_paths = {path for path, _ in only_old}
    records = [ChangeRecord(commit, path, blob,
                            "modified" if path in old_paths else "added")
               for path, blob in only_new]
    records.extend(ChangeRecord(commit, path, blob, "deleted")
                   for path, blob in only_old if path not in new_paths)
    records.sort(key=lambda r: r.path)
    return records


def commit_time_author(commit: ObjectId, store: ObjectStore) -> tuple[int, str]:
    """Author time and composite author id, straight off the commit."""
    try:
        payload = store.get("commit", commit)
    except NotFound:
        raise NotFound("commit %s" % commit.hex())
    record = parse_object("commit", payload)
    return record.author.time, record.author.ident


# -- basemap building ----------------------------------------------------


@dataclass
class MapSet:
    maps: dict[str, MultiMap]
    store_version: int
    excluded_commits: list[ObjectId] = field(default_factory=list)
    truncated_blobs: list[ObjectId] = field(default_factory=list)

    def __getitem__(self, name: str) -> MultiMap:
        try:
            return self.maps[name]
        except KeyError:
            raise MapUnavailable("map %s not built" % name)

    def __contains__(self, name):
        return name in self.maps


def build_basemaps(store: ObjectStore, journal_entries, *,
                   change_cap: int = 10000,
                   blob_commit_cap: int = 10000) -> MapSet:
    """Materialize the full basemap set from one store state.

    ``journal_entries`` is an iterable of (project, commit id) pairs
    covering every ingested project. Commits whose change-record count
    exceeds ``change_cap`` stay in c2p/a2c but are excluded from the
    file/blob cross maps; blobs touched by more than ``blob_commit_cap``
    commits are truncated in b2c and flagged.
    """
    version = store.version
    bits = store.config.map_shard_bits

    def new_map(name):
        return MultiMap(MapName.parse(name), bits, version)

    c2p = new_map("c2p")
    for project, commit in journal_entries:
        if not store.contains("commit", commit):
            raise StaleJournal("journal references %s absent from store" % commit.hex())
        c2p.add(commit, project)

    c2a, c2f, c2b, f2b = new_map("c2a"), new_map("c2f"), new_map("c2b"), new_map("f2b")
    excluded: list[ObjectId] = []
    walker = TreeWalker(store)
    for commit_id, payload in store.sweep_all("commit"):
        record = parse_object("commit", payload)
        c2a.add(commit_id, record.author.ident)
        records = changed_blobs(commit_id, store, walker)
        touched = [r for r in records if r.kind in ("added", "modified")]
        for rec in touched:
            f2b.add(rec.path, rec.blob)
        if len(records) > change_cap:
            excluded.append(commit_id)
            continue
        for rec in touched:
            c2f.add(commit_id, rec.path)
            c2b.add(commit_id, rec.blob)

    b2c = c2b.invert()
    truncated: list[ObjectId] = []
    for i in range(b2c.shard_count()):
        shard = b2c._load(i)
        for blob in list(shard):
            if len(shard[blob]) > blob_commit_cap:
                shard[blob] = set(sorted(shard[blob], key=_sort_key)[:blob_commit_cap])
                truncated.append(blob)
    b2c.truncated_keys = frozenset(truncated)

    a2c = c2a.invert()
    maps = {
        "c2p": c2p, "p2c": c2p.invert(),
        "c2a": c2a, "a2c": a2c,
        "c2f": c2f, "f2c": c2f.invert(),
        "c2b": c2b, "b2c": b2c,
        "f2b": f2b, "b2f": f2b.invert(),
        "a2b": compose(a2c, c2b),
        "a2f": compose(a2c, c2f),
        "a2p": compose(a2c, c2p),
    }
    maps["f2a"] = maps["a2f"].invert()
    maps["b2a"] = maps["a2b"].invert()
    maps["p2a"] = maps["a2p"].invert()
    return MapSet(maps=maps, store_version=version,
                  excluded_commits=sorted(excluded),
                  truncated_blobs=sorted(truncated))


def write_mapset(mapset: MapSet, maps_root):
    """Persist every map plus the build report."""
    maps_root = Path(maps_root)
    maps_root.mkdir(parents=True, exist_ok=True)
    for m in mapset.maps.values():
        m.write(maps_root)
    report = {
        "store_version": mapset.store_version,
        "excluded_commits": [c.hex() for c in mapset.excluded_commits],
        "truncated_b2c_keys": [b.hex() for b in mapset.truncated_blobs],
    }
    (maps_root / "build.json").write_text(json.dumps(report, indent=1, sort_keys=True))


def open_mapset(maps_root, names=None) -> MapSet:
    maps_root = Path(maps_root)
    names = list(names) if names is not None else sorted(BASEMAP_NAMES)
    maps = {}
    version = None
    for name in names:
        m = MultiMap.open(maps_root, name)
        if version is None:
            version = m.store_version
        elif m.store_version != version:
            raise VersionMismatch("map %s has store_version %d, expected %d"
                                  % (name, m.store_version, version))
        maps[name] = m
    return MapSet(maps=maps, store_version=version if version is not None else -1)
