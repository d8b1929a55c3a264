"""Language classification and per-blob dependency extraction.

Files are classified by extension; each classified blob runs through a
per-language extractor that pulls the modules it imports. The output is
a stream of semicolon-delimited records::

    commit;repository_name;timestamp;author;blob;module1;module2;...

one record per (commit, blob) pair of the language, with the repository
name adjusted for forking through the project partition.

The shipped extractors are line-based heuristics, not parsers: an import
statement inside a multiline string will be picked up. That trade-off is
deliberate; the rules stay cheap enough to run over every blob version.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import VersionMismatch
from .lineformat import encode_field
from .store import ObjectStore
from .xref import MapSet, ObjectId, TreeWalker, changed_blobs, commit_time_author


@dataclass(frozen=True)
class LangRule:
    language: str
    extensions: tuple[str, ...]
    extractor: str


DEFAULT_RULES = (
    LangRule("python", (".py",), "python"),
    LangRule("java", (".java",), "java"),
)

_PY_IMPORT_RE = re.compile(r"^\s*import\s+(.*)", re.ASCII)
_PY_FROM_RE = re.compile(r"^\s*from\s+(\w[\w.]*)\s+import\s+(\w*)", re.ASCII)
_PY_MODULE_RE = re.compile(r"\w[\w.]*", re.ASCII)
_JAVA_IMPORT_RE = re.compile(r"^\s*import\s+(?:static\s+)?([A-Za-z_][\w.]*)\s*(?:\.\*)?\s*;",
                             re.ASCII)


def classify_path(path: str, rules=DEFAULT_RULES) -> str | None:
    """Longest-suffix extension match, case-insensitive on the suffix."""
    lowered = path.lower()
    best = None
    best_len = 0
    for rule in rules:
        for ext in rule.extensions:
            if lowered.endswith(ext.lower()) and len(ext) > best_len:
                best, best_len = rule.language, len(ext)
    return best


def extract_python_imports(payload: bytes) -> list[str]:
    """Module names imported by a python blob, line-rule based.

    ``import A as x`` keeps A and discards the rest of the line;
    ``import A, B`` keeps both; ``from A import B`` yields ``A.B`` and a
    bare ``from A import`` yields ``A``. Binary content yields nothing.
    """
    if b"\x00" in payload:
        return []
    text = payload.decode("utf-8", "replace")
    modules = set()
    for line in text.split("\n"):
        m = _PY_IMPORT_RE.match(line)
        if m:
            rest = re.sub(r"\s+as\s+.*$", "", m.group(1))
            for part in rest.split(","):
                name = _PY_MODULE_RE.match(part.strip())
                if name:
                    modules.add(name.group(0))
        m = _PY_FROM_RE.match(line)
        if m:
            base, member = m.group(1), m.group(2)
            modules.add("%s.%s" % (base, member) if member else base)
    return sorted(modules)


def extract_java_imports(payload: bytes) -> list[str]:
    """Package names from ``import a.b.C;`` statements; wildcard imports
    drop the trailing ``.*``."""
    if b"\x00" in payload:
        return []
    text = payload.decode("utf-8", "replace")
    modules = set()
    for line in text.split("\n"):
        m = _JAVA_IMPORT_RE.match(line)
        if m:
            modules.add(m.group(1))
    return sorted(modules)


EXTRACTORS = {
    "python": extract_python_imports,
    "java": extract_java_imports,
}


@dataclass(frozen=True)
class DepRecord:
    commit: ObjectId
    repository_name: str
    timestamp: int
    author: str
    blob: ObjectId
    modules: tuple[str, ...]

    def line(self) -> str:
        fields = [self.commit.hex(), encode_field(self.repository_name),
                  str(self.timestamp), encode_field(self.author), self.blob.hex()]
        fields.extend(encode_field(m) for m in self.modules)
        return ";".join(fields)


def build_langmap(language: str, maps: MapSet, store: ObjectStore,
                  partition=None, *, rules=DEFAULT_RULES, extractors=EXTRACTORS):
    """Yield one DepRecord per (commit, blob) pair of the language.

    Commits are selected through f2c over extension-classified paths;
    each selected commit's change records are re-derived so the blob set
    matches the paths exactly. All consumed maps must share the store's
    version (and the partition's, when given).
    """
    f2c, c2p = maps["f2c"], maps["c2p"]
    for m in (f2c, c2p):
        if m.store_version != store.version:
            raise VersionMismatch("map %s built from store version %d, store is %d"
                                  % (m.name, m.store_version, store.version))
    if partition is not None and partition.store_version is not None \
            and partition.store_version != store.version:
        raise VersionMismatch("partition built from store version %d, store is %d"
                              % (partition.store_version, store.version))
    rule = next((r for r in rules if r.language == language), None)
    if rule is None:
        raise ValueError("no language rule for %r" % language)
    extractor = extractors[rule.extractor]

    commits = set()
    for path, path_commits in f2c.items():
        if classify_path(path, rules) == language:
            commits.update(path_commits)

    walker = TreeWalker(store)
    for commit in sorted(commits):
        blobs = set()
        for rec in changed_blobs(commit, store, walker):
            if rec.kind in ("added", "modified") and classify_path(rec.path, rules) == language:
                blobs.add(rec.blob)
        if not blobs:
            continue
        timestamp, author = commit_time_author(commit, store)
        projects = c2p.get(commit)
        repo = min(projects) if projects else ""
        if partition is not None and repo in partition:
            repo = partition.canonical(repo)
        for blob in sorted(blobs):
            modules = extractor(store.get("blob", blob))
            yield DepRecord(commit=commit, repository_name=repo,
                            timestamp=timestamp, author=author, blob=blob,
                            modules=tuple(modules))
