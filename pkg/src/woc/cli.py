"""Operator surface: `woc <verb>` commands.

Commands follow the Unix filter convention: keys arrive on standard
input, data leaves on standard output as semicolon-joined lines, and
every diagnostic goes to standard error so the data stream stays
machine-parseable. Exit codes: 0 ok, 1 partial (per-key misses),
2 fatal.

String keys and values on the data streams use the dump escaping
(``;``/``%``/newlines percent-encoded), so command chains compose
without re-quoting.
"""

from __future__ import annotations

import argparse
import gzip
import heapq
import io
import random
import sys
import tempfile
import time
from collections import Counter, defaultdict
from datetime import datetime, timezone
from pathlib import Path

from . import augment, ingest, langmaps, xref
from .config import WocConfig, load_config
from .errors import NotFound, WocError
from .gitcore import OBJECT_KINDS, ObjectId, parse_object
from .lineformat import decode_field, encode_field
from .store import ObjectStore, ShardConfig

OK, PARTIAL, FATAL = 0, 1, 2


def _writeln(out, text: str):
    out.write((text + "\n").encode("utf-8", "surrogateescape"))


def _input_lines(stdin):
    for raw in stdin:
        line = raw.decode("utf-8", "surrogateescape") if isinstance(raw, bytes) else raw
        line = line.rstrip("\n")
        if line:
            yield line


def _open_store(cfg: WocConfig, writable=False) -> ObjectStore:
    if writable:
        return ObjectStore.create_or_open(
            cfg.store_root,
            ShardConfig(cfg.object_shard_bits, cfg.map_shard_bits),
            writable=True)
    return ObjectStore.open(cfg.store_root, writable=False)


def _open_maps(cfg: WocConfig, names, version_pin=None):
    maps = [xref.MultiMap.open(cfg.resolved_maps_root(), n) for n in names]
    versions = {m.store_version for m in maps}
    if version_pin is not None:
        versions.add(version_pin)
    if len(versions) > 1:
        raise xref.VersionMismatch(
            "refusing mixed-version maps: %s" % sorted(versions))
    return maps


def _stoplist(cfg: WocConfig):
    if not cfg.stoplist_file:
        return augment.DEFAULT_STOPLIST
    lines = Path(cfg.stoplist_file).read_text(encoding="utf-8").splitlines()
    return frozenset(l.strip().lower() for l in lines if l.strip() and not l.startswith("#"))


# -- pipeline verbs ------------------------------------------------------


def cmd_ingest(cfg, args, stdin, out, err):
    refs, diags = ingest.discover(cfg.corpus_list)
    for diag in diags:
        print("warning: %s" % diag, file=err)
    store = _open_store(cfg, writable=True)
    known = {project for project, _ in ingest.read_journal(store.root)}
    try:
        for repo in refs:
            if not ingest.needs_update(repo, store):
                if repo.name in known:
                    _writeln(out, "%s;current;0;0;0" % encode_field(repo.name))
                else:
                    n = ingest.record_membership_only(repo, store)
                    _writeln(out, "%s;linked;0;%d;0" % (encode_field(repo.name), n))
                continue
            report = ingest.extract_all(repo, store)
            for kind, oid, reason in report.rejected:
                print("rejected %s %s: %s" % (kind, oid.hex(), reason), file=err)
            _writeln(out, "%s;ingested;%d;%d;%d" % (
                encode_field(repo.name), sum(report.inserted.values()),
                sum(report.duplicates.values()), len(report.rejected)))
            known.add(repo.name)
    finally:
        store.close()
    return OK


def cmd_update(cfg, args, stdin, out, err):
    refs, diags = ingest.discover(cfg.corpus_list)
    for diag in diags:
        print("warning: %s" % diag, file=err)
    store = _open_store(cfg, writable=True)
    try:
        for repo in refs:
            if not ingest.needs_update(repo, store):
                _writeln(out, "%s;current;0" % encode_field(repo.name))
                continue
            report = ingest.fetch_incremental(repo, store)
            for kind, oid, reason in report.rejected:
                print("rejected %s %s: %s" % (kind, oid.hex(), reason), file=err)
            _writeln(out, "%s;updated;%d" % (encode_field(repo.name),
                                             sum(report.inserted.values())))
    finally:
        store.close()
    return OK


def cmd_build_maps(cfg, args, stdin, out, err):
    store = _open_store(cfg)
    mapset = xref.build_basemaps(store, ingest.read_journal(store.root),
                                 change_cap=cfg.change_cap,
                                 blob_commit_cap=cfg.blob_commit_cap)
    xref.write_mapset(mapset, cfg.resolved_maps_root())
    _writeln(out, "store_version;%d" % mapset.store_version)
    for name in sorted(mapset.maps):
        _writeln(out, "%s;%d" % (name, len(mapset.maps[name])))
    for c in mapset.excluded_commits:
        print("excluded oversized commit %s" % c.hex(), file=err)
    for b in mapset.truncated_blobs:
        print("truncated ubiquitous blob %s in b2c" % b.hex(), file=err)
    store.close()
    return OK


def cmd_defork(cfg, args, stdin, out, err):
    c2p, p2c = _open_maps(cfg, ["c2p", "p2c"], args.version)
    partition = augment.defork(c2p, p2c, min_shared_commits=cfg.min_shared_commits)
    p2p = partition.to_multimap("p2p", c2p.shard_bits)
    p2p.write(cfg.resolved_maps_root())
    _writeln(out, "projects;%d" % len(partition.class_of))
    _writeln(out, "classes;%d" % len(partition))
    return OK


def cmd_identities(cfg, args, stdin, out, err):
    a2c, c2f = _open_maps(cfg, ["a2c", "c2f"], args.version)
    stoplist = _stoplist(cfg)
    thresholds = augment.Thresholds(email=cfg.tau_email, name=cfg.tau_name,
                                    file=cfg.tau_file)
    authors = [a for a, _ in a2c.items()]
    signals = [augment.identity_signals(a1, a2, a2c, c2f)
               for a1, a2 in augment.candidate_pairs(a2c, c2f, stoplist=stoplist)]
    partition = augment.resolve_identities(authors, signals, thresholds,
                                           stoplist=stoplist)
    partition.store_version = a2c.store_version
    a2a = partition.to_multimap("a2a", a2c.shard_bits)
    a2a.write(cfg.resolved_maps_root())
    _writeln(out, "authors;%d" % len(partition.class_of))
    _writeln(out, "classes;%d" % len(partition))
    return OK


def cmd_langmap(cfg, args, stdin, out, err):
    store = _open_store(cfg)
    mapset = xref.MapSet(
        maps={n: m for n, m in zip(["f2c", "c2p"],
                                   _open_maps(cfg, ["f2c", "c2p"], args.version))},
        store_version=store.version)
    partition = None
    try:
        p2p = xref.MultiMap.open(cfg.resolved_maps_root(), "p2p")
        partition = augment.Partition.from_canonical_map(p2p)
    except xref.MapUnavailable:
        pass
    records = langmaps.build_langmap(args.language, mapset, store, partition)
    if args.output:
        path = Path(args.output)
        path.parent.mkdir(parents=True, exist_ok=True)
        count = 0
        with open(path, "wb") as raw:
            with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as gz:
                for rec in records:
                    gz.write((rec.line() + "\n").encode("utf-8", "surrogateescape"))
                    count += 1
        print("wrote %d records to %s" % (count, path), file=err)
    else:
        for rec in records:
            _writeln(out, rec.line())
    store.close()
    return OK


# -- query verbs ---------------------------------------------------------


def cmd_show_content(cfg, args, stdin, out, err):
    store = _open_store(cfg)
    kind = args.kind
    misses = 0
    for line in _input_lines(stdin):
        try:
            oid = ObjectId.from_hex(line.strip())
            payload = store.get(kind, oid)
        except (ValueError, NotFound):
            print("not found: %s %s" % (kind, line.strip()), file=err)
            misses += 1
            continue
        record = parse_object(kind, payload)
        if kind == "commit":
            _writeln(out, ";".join([
                oid.hex(),
                record.tree.hex(),
                ":".join(p.hex() for p in record.parents),
                record.author.ident,
                record.committer.ident,
                "%d %s" % (record.author.time, record.author.tz),
                "%d %s" % (record.committer.time, record.committer.tz),
            ]))
        elif kind == "tree":
            for entry in record.entries:
                out.write(("%s " % entry.mode).encode("ascii"))
                out.write(entry.name)
                out.write((" %s\n" % entry.id.hex()).encode("ascii"))
        elif kind == "blob":
            out.write(record.payload)
        else:
            _writeln(out, ";".join([oid.hex(), record.object.hex(),
                                    record.obj_kind, encode_field(record.tag)]))
    store.close()
    return PARTIAL if misses else OK


def _parse_key(text: str, entity: str):
    if entity in ("b", "c"):
        return ObjectId.from_hex(text)
    return decode_field(text)


def cmd_get_values(cfg, args, stdin, out, err):
    name = xref.MapName.parse(args.map)
    (mm,) = _open_maps(cfg, [args.map], args.version)
    misses = 0
    for line in _input_lines(stdin):
        try:
            key = _parse_key(line, name.source)
        except ValueError:
            print("bad key for %s: %s" % (args.map, line), file=err)
            misses += 1
            _writeln(out, line)
            continue
        values = mm.get(key)
        if not values:
            print("no values for key: %s" % line, file=err)
            misses += 1
            _writeln(out, line)
            continue
        _writeln(out, ";".join([line] + [xref._enc(v) for v in values]))
    return PARTIAL if misses else OK


def _year_of(timestamp: int) -> int:
    return datetime.fromtimestamp(timestamp, tz=timezone.utc).year


def _trend_lines(commit_info):
    """(time, author) pairs per deduplicated commit -> trend rows."""
    commits_by_year = Counter()
    authors_by_year = defaultdict(set)
    for timestamp, author in commit_info:
        year = _year_of(timestamp)
        commits_by_year[year] += 1
        authors_by_year[year].add(author)
    for year in sorted(commits_by_year):
        n_commits = commits_by_year[year]
        n_authors = len(authors_by_year[year])
        yield "%d;%d;%d;%g" % (year, n_commits, n_authors, n_commits / n_authors)


def cmd_trend(cfg, args, stdin, out, err):
    if args.bucket != "year":
        raise WocError("unsupported trend bucket: %s" % args.bucket)
    if args.source == "langmap":
        path = args.langmap_file or (cfg.resolved_langmap_root() / (args.language + ".gz"))
        seen = {}
        with gzip.open(path, "rt", encoding="utf-8", errors="surrogateescape") as fh:
            for line in fh:
                fields = line.rstrip("\n").split(";")
                seen[fields[0]] = (int(fields[2]), decode_field(fields[3]))
        info = seen.values()
    else:
        store = _open_store(cfg)
        (f2c,) = _open_maps(cfg, ["f2c"], args.version)
        commits = set()
        for path, path_commits in f2c.items():
            if langmaps.classify_path(path) == args.language:
                commits.update(path_commits)
        info = [xref.commit_time_author(c, store) for c in sorted(commits)]
    for line in _trend_lines(info):
        _writeln(out, line)
    return OK


def cmd_sort_merge(cfg, args, stdin, out, err):
    budget = args.budget
    chunks = []
    buf = []
    size = 0

    def spill():
        nonlocal buf, size
        if not buf:
            return
        buf.sort()
        tmp = tempfile.TemporaryFile()
        with gzip.GzipFile(fileobj=tmp, mode="wb") as gz:
            for item in buf:
                gz.write(item + b"\n")
        tmp.seek(0)
        chunks.append(tmp)
        buf = []
        size = 0

    def read_chunk(fh):
        with gzip.GzipFile(fileobj=fh, mode="rb") as gz:
            for line in gz:
                yield line.rstrip(b"\n")
        fh.close()

    for source in _open_line_sources(args.inputs, stdin):
        for line in source:
            line = line.rstrip(b"\n")
            buf.append(line)
            size += len(line)
            if size >= budget:
                spill()
    if chunks:
        spill()
        merged = heapq.merge(*(read_chunk(fh) for fh in chunks))
    else:
        buf.sort()
        merged = iter(buf)

    sink, closer = _open_sink(args.output, out)
    try:
        previous = None
        for line in merged:
            if args.unique and line == previous:
                continue
            sink.write(line + b"\n")
            previous = line
    finally:
        closer()
    return OK


def _open_line_sources(paths, stdin):
    if not paths:
        yield stdin
        return
    for path in paths:
        if path == "-":
            yield stdin
            continue
        fh = open(path, "rb")
        magic = fh.read(2)
        fh.seek(0)
        if magic == b"\x1f\x8b":
            yield _closing_lines(gzip.GzipFile(fileobj=fh, mode="rb"), fh)
        else:
            yield _closing_lines(fh, fh)


def _closing_lines(stream, underlying):
    try:
        yield from stream
    finally:
        underlying.close()


def _open_sink(output, out):
    if not output:
        return out, lambda: None
    path = Path(output)
    if path.suffix == ".gz":
        raw = open(path, "wb")
        gz = gzip.GzipFile(fileobj=raw, mode="wb", mtime=0)
        return gz, lambda: (gz.close(), raw.close())
    fh = open(path, "wb")
    return fh, fh.close


def cmd_bench(cfg, args, stdin, out, err):
    (mm,) = _open_maps(cfg, [args.map], args.version)
    keys = list(mm.keys())  # warms every shard
    if not keys:
        raise WocError("map %s is empty" % args.map)
    rng = random.Random(args.seed)
    sizes = [int(s) for s in args.sizes.split(",")]
    points = []
    for size in sizes:
        batch = rng.choices(keys, k=size) if size else []
        best = None
        for _ in range(args.reps):
            started = time.perf_counter()
            for key in batch:
                mm.get(key)
            elapsed = time.perf_counter() - started
            best = elapsed if best is None else min(best, elapsed)
        points.append((size, best))
        _writeln(out, "%d;%.6f" % (size, best))
    slope, r2 = _linear_fit(points)
    _writeln(out, "slope_sec_per_lookup;%.9f" % slope)
    _writeln(out, "r2;%.4f" % r2)

    started = time.perf_counter()
    for _ in mm.items():
        pass
    _writeln(out, "sweep_seconds;%.6f" % (time.perf_counter() - started))

    probe = rng.choices(keys, k=min(100000, max(sizes) if sizes else 1000) or 1000)
    started = time.perf_counter()
    for key in probe:
        key in mm
    elapsed = time.perf_counter() - started
    rate = len(probe) / elapsed if elapsed > 0 else float("inf")
    _writeln(out, "membership_lookups_per_sec;%d" % int(rate))
    return OK


def _linear_fit(points):
    """Least squares y = a + b*x; returns (slope, r_squared)."""
    n = len(points)
    mean_x = sum(x for x, _ in points) / n
    mean_y = sum(y for _, y in points) / n
    sxx = sum((x - mean_x) ** 2 for x, _ in points)
    sxy = sum((x - mean_x) * (y - mean_y) for x, y in points)
    if sxx == 0:
        return 0.0, 1.0
    slope = sxy / sxx
    intercept = mean_y - slope * mean_x
    ss_res = sum((y - (intercept + slope * x)) ** 2 for x, y in points)
    ss_tot = sum((y - mean_y) ** 2 for _, y in points)
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return slope, r2


def cmd_stats(cfg, args, stdin, out, err):
    store = _open_store(cfg)
    _writeln(out, "store_version;%d" % store.version)
    _writeln(out, "object_shard_bits;%d" % store.config.object_shard_bits)
    _writeln(out, "map_shard_bits;%d" % store.config.map_shard_bits)
    for kind in OBJECT_KINDS:
        _writeln(out, "%s;%d" % (kind, store.count(kind)))
    maps_root = cfg.resolved_maps_root()
    if maps_root.exists():
        for meta in sorted(maps_root.glob("*/meta.json")):
            name = meta.parent.name
            mm = xref.MultiMap.open(maps_root, name)
            _writeln(out, "map;%s;%d" % (name, mm.store_version))
    store.close()
    return OK


# -- entry point ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="woc",
        description="Mine git repositories into a deduplicated object store "
                    "with cross-reference maps.")
    parser.add_argument("-c", "--config", help="config file (key = value lines)")
    parser.add_argument("--version", type=int, default=None,
                        help="require this store version on every map consumed")
    sub = parser.add_subparsers(dest="verb", required=True)

    sub.add_parser("ingest", help="extract the whole corpus into the store")
    sub.add_parser("update", help="fetch incremental objects for changed repos")
    sub.add_parser("build-maps", help="derive all basemaps from the store")
    sub.add_parser("defork", help="build the project de-fork partition (p2p)")
    sub.add_parser("identities", help="merge author identities (a2a)")

    p = sub.add_parser("langmap", help="emit language dependency records")
    p.add_argument("language")
    p.add_argument("-o", "--output", help="gzip output file (default: stdout, plain)")

    p = sub.add_parser("show-content", help="render objects named on stdin")
    p.add_argument("kind", choices=OBJECT_KINDS)

    p = sub.add_parser("get-values", help="look up map values for keys on stdin")
    p.add_argument("map")

    p = sub.add_parser("trend", help="commits/authors per year for a language")
    p.add_argument("language")
    p.add_argument("--bucket", default="year")
    p.add_argument("--source", choices=["f2c", "langmap"], default="f2c")
    p.add_argument("--langmap-file", default=None)

    p = sub.add_parser("sort-merge", help="external merge sort of line streams")
    p.add_argument("inputs", nargs="*")
    p.add_argument("-u", "--unique", action="store_true")
    p.add_argument("--budget", type=int, default=64 * 1024 * 1024,
                   help="in-memory bytes before spilling a sorted chunk")
    p.add_argument("-o", "--output", help="output file (.gz compresses)")

    p = sub.add_parser("bench", help="lookup scaling benchmark on one map")
    p.add_argument("map")
    p.add_argument("--sizes", default="100,1000,10000,100000")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--seed", type=int, default=42)

    sub.add_parser("stats", help="store and map summary")
    return parser


_COMMANDS = {
    "ingest": cmd_ingest,
    "update": cmd_update,
    "build-maps": cmd_build_maps,
    "defork": cmd_defork,
    "identities": cmd_identities,
    "langmap": cmd_langmap,
    "show-content": cmd_show_content,
    "get-values": cmd_get_values,
    "trend": cmd_trend,
    "sort-merge": cmd_sort_merge,
    "bench": cmd_bench,
    "stats": cmd_stats,
}


def main(argv=None, stdin=None, stdout=None, stderr=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    stdin = stdin if stdin is not None else sys.stdin.buffer
    out = stdout if stdout is not None else sys.stdout.buffer
    err = stderr if stderr is not None else sys.stderr
    cfg = load_config(args.config)
    try:
        code = _COMMANDS[args.verb](cfg, args, stdin, out, err)
    except WocError as exc:
        print("error: %s" % exc, file=err)
        return FATAL
    except OSError as exc:
        print("error: %s" % exc, file=err)
        return FATAL
    try:
        out.flush()
    except (ValueError, OSError):
        pass
    return code


if __name__ == "__main__":
    sys.exit(main())
