"""Turn a list of repositories into validated objects in the store.

Extraction delegates to the reference git client for clone/read and
object enumeration; everything that enters the store passes round-trip
validation first. Each repository also journals its project membership
(``project;commit-hex`` lines, gzip) for the map-building stage.

Incremental updates are modeled at the object-set level: a repository
whose branch heads are all present in the store is skipped outright, and
an updated repository contributes exactly the reachable objects the
store does not yet hold.
"""

from __future__ import annotations

import gzip
import re
import subprocess
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import PreconditionFailed, RepoUnreachable, UnreadableList, DuplicateName
from .gitcore import OBJECT_KINDS, ObjectId, roundtrip_error
from .lineformat import decode_field, encode_field
from .store import ObjectStore, PutResult

JOURNAL_NAME = "membership.gz"

_URL_RE = re.compile(r"^[a-z][a-z0-9+.-]*://|^[^/\s]+@[^/\s]+:")


@dataclass
class RepoRef:
    """One corpus entry: a forge-style ``owner_repo`` name plus where to
    read it from."""

    name: str
    source: str
    last_seen_heads: frozenset[tuple[str, ObjectId]] = frozenset()


@dataclass
class IngestReport:
    repo: RepoRef
    seen: dict[str, int] = field(default_factory=lambda: dict.fromkeys(OBJECT_KINDS, 0))
    inserted: dict[str, int] = field(default_factory=lambda: dict.fromkeys(OBJECT_KINDS, 0))
    duplicates: dict[str, int] = field(default_factory=lambda: dict.fromkeys(OBJECT_KINDS, 0))
    rejected: list[tuple[str, ObjectId, str]] = field(default_factory=list)
    elapsed: float = 0.0

    def rejected_count(self, kind: str) -> int:
        return sum(1 for k, _, _ in self.rejected if k == kind)

    def total_inserted(self) -> int:
        return sum(self.inserted.values())

    def check_balance(self):
        for kind in OBJECT_KINDS:
            assert self.seen[kind] == (self.inserted[kind] + self.duplicates[kind]
                                       + self.rejected_count(kind))


def project_name_for(source: str) -> str:
    """Forge-style name: the final two path segments joined by ``_``."""
    trimmed = source.rstrip("/")
    if trimmed.endswith(".git"):
        trimmed = trimmed[:-4].rstrip("/")
    segments = [s for s in re.split(r"[/:]+", trimmed) if s]
    return "_".join(segments[-2:]) if len(segments) >= 2 else (segments[0] if segments else source)


def discover(corpus_list) -> tuple[list[RepoRef], list[DuplicateName]]:
    """Parse a corpus list into deduplicated, order-preserving RepoRefs.

    One ``name<TAB>source`` or bare ``source`` per line; ``#`` starts a
    comment. Later entries that collide on name are dropped and reported
    as diagnostics.
    """
    if isinstance(corpus_list, (str, Path)):
        try:
            with open(corpus_list, "r", encoding="utf-8", errors="surrogateescape") as fh:
                lines = fh.readlines()
        except OSError as exc:
            raise UnreadableList(str(exc))
    else:
        lines = list(corpus_list)
    refs: list[RepoRef] = []
    names: set[str] = set()
    diagnostics: list[DuplicateName] = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "\t" in line:
            name, source = line.split("\t", 1)
            name, source = name.strip(), source.strip()
        else:
            name, source = project_name_for(line), line
        if name in names:
            diagnostics.append(DuplicateName("line %d: duplicate project name %r" % (lineno, name)))
            continue
        names.add(name)
        refs.append(RepoRef(name=name, source=source))
    return refs, diagnostics


# -- git plumbing ------------------------------------------------------


def _run_git(args, input=None) -> bytes:
    try:
        proc = subprocess.run(["git", *args], input=input,
                              capture_output=True, check=False)
    except OSError as exc:
        raise RepoUnreachable("git unavailable: %s" % exc)
    if proc.returncode != 0:
        raise RepoUnreachable("git %s failed: %s"
                              % (" ".join(args[:3]), proc.stderr.decode(errors="replace").strip()))
    return proc.stdout


def resolve_local(repo: RepoRef, store_root) -> Path:
    """Local directory to read objects from: the source itself when it is
    a path, otherwise a mirror clone cached under the store root."""
    src = Path(repo.source)
    if src.exists():
        return src
    if not _URL_RE.match(repo.source):
        raise RepoUnreachable("no such repository path: %s" % repo.source)
    clone = Path(store_root) / "clones" / repo.name
    if clone.exists():
        _run_git(["-C", str(clone), "remote", "update", "--prune"])
    else:
        clone.parent.mkdir(parents=True, exist_ok=True)
        _run_git(["clone", "--quiet", "--mirror", repo.source, str(clone)])
    return clone


def heads_of(repo: RepoRef) -> frozenset[tuple[str, ObjectId]]:
    """(branch, head commit) for every branch, via ref listing only."""
    out = _run_git(["ls-remote", "--heads", repo.source])
    heads = set()
    for line in out.decode("utf-8", "surrogateescape").splitlines():
        sha, _, ref = line.partition("\t")
        if ref.startswith("refs/heads/"):
            heads.add((ref[len("refs/heads/"):], ObjectId.from_hex(sha)))
    return frozenset(heads)


def needs_update(repo: RepoRef, store: ObjectStore) -> bool:
    """False iff every branch head commit is already stored."""
    return not all(store.contains("commit", head) for _, head in heads_of(repo))


def _reachable_ids(gitdir: Path) -> list[str]:
    """Hex ids of every object reachable from any branch head."""
    out = _run_git(["-C", str(gitdir), "rev-list", "--objects", "--branches"])
    return [line[:40].decode("ascii") for line in out.splitlines() if len(line) >= 40]


def commit_ids(gitdir: Path) -> list[ObjectId]:
    out = _run_git(["-C", str(gitdir), "rev-list", "--branches"])
    return [ObjectId.from_hex(line.decode("ascii")) for line in out.splitlines()]


def _cat_objects(gitdir: Path, hex_ids):
    """Stream (hex, kind, payload) for the requested ids via one
    ``cat-file --batch`` process; a writer thread avoids pipe deadlock."""
    ids = list(hex_ids)
    if not ids:
        return
    proc = subprocess.Popen(
        ["git", "-C", str(gitdir), "cat-file", "--batch"],
        stdin=subprocess.PIPE, stdout=subprocess.PIPE)

    def feed():
        try:
            for h in ids:
                proc.stdin.write(h.encode("ascii") + b"\n")
            proc.stdin.close()
        except BrokenPipeError:
            pass

    writer = threading.Thread(target=feed, daemon=True)
    writer.start()
    try:
        for _ in ids:
            header = proc.stdout.readline()
            if not header:
                raise RepoUnreachable("cat-file stream ended early in %s" % gitdir)
            parts = header.rstrip(b"\n").split(b" ")
            if len(parts) == 2 and parts[1] == b"missing":
                raise RepoUnreachable("object %s missing from %s"
                                      % (parts[0].decode("ascii", "replace"), gitdir))
            sha, kind, size = parts[0].decode("ascii"), parts[1].decode("ascii"), int(parts[2])
            payload = proc.stdout.read(size)
            proc.stdout.read(1)  # trailing newline
            yield sha, kind, payload
    finally:
        writer.join()
        proc.stdout.close()
        proc.wait()


# -- membership journal ------------------------------------------------


def journal_path(store_root) -> Path:
    return Path(store_root) / JOURNAL_NAME


def append_journal(store_root, entries):
    """Append ``project;commit-hex`` lines as a new gzip member."""
    path = journal_path(store_root)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "ab") as raw:
        with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as gz:
            for project, commit in entries:
                gz.write(("%s;%s\n" % (encode_field(project), commit.hex())).encode("utf-8"))


def read_journal(store_root):
    """Yield (project, commit ObjectId) pairs in journal order."""
    path = journal_path(store_root)
    if not path.exists():
        return
    with gzip.open(path, "rt", encoding="utf-8") as fh:
        for line in fh:
            project, _, commit = line.rstrip("\n").partition(";")
            yield decode_field(project), ObjectId.from_hex(commit)


# -- extraction ---------------------------------------------------------


def _ingest_objects(repo: RepoRef, gitdir: Path, store: ObjectStore, hex_ids,
                    report: IngestReport):
    """Validate and store each listed object, journaling admitted commits."""
    admitted_commits = []
    for sha, kind, payload in _cat_objects(gitdir, hex_ids):
        if kind not in OBJECT_KINDS:
            continue
        report.seen[kind] += 1
        oid = ObjectId.from_hex(sha)
        reason = roundtrip_error(oid, kind, payload)
        if reason is not None:
            report.rejected.append((kind, oid, reason))
            continue
        result = store.put(kind, oid, payload, prevalidated=True)
        if result is PutResult.INSERTED:
            report.inserted[kind] += 1
        else:
            report.duplicates[kind] += 1
        if kind == "commit":
            admitted_commits.append(oid)
    return admitted_commits


def extract_all(repo: RepoRef, store: ObjectStore, store_root=None) -> IngestReport:
    """Bulk-extract every object reachable from any branch head."""
    started = time.monotonic()
    root = Path(store_root) if store_root is not None else store.root
    gitdir = resolve_local(repo, root)
    heads = heads_of(repo)
    report = IngestReport(repo=repo)
    commits = _ingest_objects(repo, gitdir, store, _reachable_ids(gitdir), report)
    append_journal(root, ((repo.name, c) for c in commits))
    repo.last_seen_heads = heads
    report.elapsed = time.monotonic() - started
    return report


def fetch_incremental(repo: RepoRef, store: ObjectStore, store_root=None) -> IngestReport:
    """Insert exactly the reachable objects the store does not hold yet.

    Requires ``needs_update`` to be true; the membership journal is
    extended with the newly admitted commits only.
    """
    started = time.monotonic()
    root = Path(store_root) if store_root is not None else store.root
    heads = heads_of(repo)
    if all(store.contains("commit", head) for _, head in heads):
        raise PreconditionFailed("repository %s has no new head commits" % repo.name)
    gitdir = resolve_local(repo, root)
    report = IngestReport(repo=repo)
    absent = []
    for sha in _reachable_ids(gitdir):
        oid = ObjectId.from_hex(sha)
        for kind in OBJECT_KINDS:
            if store.contains(kind, oid):
                report.seen[kind] += 1
                report.duplicates[kind] += 1
                break
        else:
            absent.append(sha)
    commits = _ingest_objects(repo, gitdir, store, absent, report)
    append_journal(root, ((repo.name, c) for c in commits))
    repo.last_seen_heads = heads
    report.elapsed = time.monotonic() - started
    return report


def record_membership_only(repo: RepoRef, store: ObjectStore, store_root=None) -> int:
    """Journal a known-content repository (a fork whose heads are all
    stored) as a project without re-extracting objects."""
    root = Path(store_root) if store_root is not None else store.root
    gitdir = resolve_local(repo, root)
    commits = commit_ids(gitdir)
    append_journal(root, ((repo.name, c) for c in commits))
    return len(commits)
