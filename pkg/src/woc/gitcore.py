"""Parse, serialize, hash, and validate git objects at the byte level.

All four object kinds (commit, tree, blob, tag) are handled in their
post-inflation loose form: the content hashed is ``<kind> <len>\\0<body>``
and every function here works on the body bytes. Parsing is strict; a
payload that cannot be reproduced byte-for-byte by re-serializing the
parsed record is treated as invalid rather than repaired.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

from .errors import MalformedObject

OBJECT_KINDS = ("commit", "tree", "blob", "tag")

# Hashes of the two zero-length objects git considers valid.
EMPTY_BLOB_HEX = "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"
EMPTY_TREE_HEX = "4b825dc642cb6eb9a060e54bf8d69288fbee4904"

_SIGNATURE_RE = re.compile(rb"\A(?P<ident>.*) (?P<time>-?\d+) (?P<tz>[^ ]+)\Z", re.DOTALL)
_IDENT_RE = re.compile(r"\A(?P<name>.*?) ?<(?P<email>.*?)>\Z", re.DOTALL)
_MODE_RE = re.compile(rb"\A[0-7]{1,7}\Z")


class ObjectId(bytes):
    """20-byte binary SHA1 naming a git object.

    Ordering, hashing, and equality are inherited from ``bytes``, so ids
    sort lexicographically on their raw form. ``hex()`` renders the
    40-character lowercase form.
    """

    __slots__ = ()

    def __new__(cls, raw):
        if len(raw) != 20:
            raise ValueError("ObjectId requires exactly 20 bytes, got %d" % len(raw))
        return super().__new__(cls, raw)

    @classmethod
    def from_hex(cls, text) -> "ObjectId":
        try:
            return cls(bytes.fromhex(text))
        except ValueError:
            raise ValueError("not a 40-char hex object id: %r" % (text,))

    def __repr__(self):
        return "ObjectId(%s)" % self.hex()


def _decode(raw: bytes) -> str:
    return raw.decode("utf-8", "surrogateescape")


def _encode(text: str) -> bytes:
    return text.encode("utf-8", "surrogateescape")


@dataclass(frozen=True)
class Signature:
    """One author/committer line: the identity span plus time fields.

    ``ident`` is the exact byte span between the header tag and the time
    fields, decoded with surrogate escapes so re-encoding reproduces the
    original bytes. The composite "Name <email>" string is the atomic
    identity used everywhere downstream; ``name``/``email`` are parsed
    views of it.
    """

    ident: str
    time: int
    tz: str

    @property
    def name(self) -> str:
        m = _IDENT_RE.match(self.ident)
        return m.group("name") if m else self.ident

    @property
    def email(self) -> str:
        m = _IDENT_RE.match(self.ident)
        return m.group("email") if m else ""

    def raw(self) -> bytes:
        return b"%s %d %s" % (_encode(self.ident), self.time, _encode(self.tz))


def parse_signature(raw: bytes) -> Signature:
    m = _SIGNATURE_RE.match(raw)
    if m is None:
        raise MalformedObject("bad signature line: %r" % raw)
    return Signature(
        ident=_decode(m.group("ident")),
        time=int(m.group("time")),
        tz=_decode(m.group("tz")),
    )


@dataclass(frozen=True)
class CommitRecord:
    tree: "ObjectId"
    parents: tuple["ObjectId", ...]
    author: Signature
    committer: Signature
    message: bytes
    # Headers after committer (encoding, gpgsig, ...) kept verbatim as
    # (key, value) with continuation lines folded into value newlines.
    extra_headers: tuple[tuple[str, bytes], ...] = ()

    @property
    def author_id(self) -> str:
        return self.author.ident

    @property
    def committer_id(self) -> str:
        return self.committer.ident


@dataclass(frozen=True)
class TreeEntry:
    mode: str
    name: bytes
    id: "ObjectId"

    @property
    def entry_kind(self) -> str:
        return "tree" if self.is_tree else "blob"

    @property
    def is_tree(self) -> bool:
        return self.mode in ("40000", "040000")

    @property
    def is_gitlink(self) -> bool:
        return self.mode == "160000"


@dataclass(frozen=True)
class TreeRecord:
    # Entries exactly as stored: git's canonical sort order is never
    # re-applied on parse.
    entries: tuple[TreeEntry, ...]


@dataclass(frozen=True)
class BlobRecord:
    payload: bytes


@dataclass(frozen=True)
class TagRecord:
    object: "ObjectId"
    obj_kind: str
    tag: str
    tagger: Signature | None
    message: bytes
    extra_headers: tuple[tuple[str, bytes], ...] = ()


GitObjectRecord = CommitRecord | TreeRecord | BlobRecord | TagRecord


def hash_object(kind: str, payload: bytes) -> ObjectId:
    """SHA1 of ``<kind> <decimal-length>\\0`` + payload (the git content
    address rule)."""
    _check_kind(kind)
    h = hashlib.sha1()
    h.update(b"%s %d\x00" % (kind.encode("ascii"), len(payload)))
    h.update(payload)
    return ObjectId(h.digest())


def _check_kind(kind):
    if kind not in OBJECT_KINDS:
        raise ValueError("unknown object kind: %r" % (kind,))


def _split_headers(payload: bytes):
    """Split a commit/tag payload into ordered (key, value) headers and
    the message. Continuation lines (leading space) fold into the prior
    header value separated by newlines."""
    sep = payload.find(b"\n\n")
    if sep < 0:
        raise MalformedObject("no blank line separating headers from message")
    head, message = payload[:sep], payload[sep + 2:]
    headers = []
    for line in head.split(b"\n"):
        if line.startswith(b" "):
            if not headers:
                raise MalformedObject("continuation line before any header")
            key, value = headers[-1]
            headers[-1] = (key, value + b"\n" + line[1:])
            continue
        key, _, value = line.partition(b" ")
        if not key:
            raise MalformedObject("empty header key")
        try:
            headers.append((key.decode("ascii"), value))
        except UnicodeDecodeError:
            raise MalformedObject("non-ascii header key: %r" % key)
    return headers, message


def _parse_commit(payload: bytes) -> CommitRecord:
    headers, message = _split_headers(payload)
    if not headers or headers[0][0] != "tree":
        raise MalformedObject("commit must start with a tree header")
    tree = _hex_header(headers[0][1], "tree")
    i = 1
    parents = []
    while i < len(headers) and headers[i][0] == "parent":
        parents.append(_hex_header(headers[i][1], "parent"))
        i += 1
    if i >= len(headers) or headers[i][0] != "author":
        raise MalformedObject("commit missing author header")
    author = parse_signature(headers[i][1])
    i += 1
    if i >= len(headers) or headers[i][0] != "committer":
        raise MalformedObject("commit missing committer header")
    committer = parse_signature(headers[i][1])
    i += 1
    return CommitRecord(
        tree=tree,
        parents=tuple(parents),
        author=author,
        committer=committer,
        message=message,
        extra_headers=tuple(headers[i:]),
    )


def _hex_header(value: bytes, what: str) -> ObjectId:
    try:
        return ObjectId.from_hex(value.decode("ascii"))
    except (ValueError, UnicodeDecodeError):
        raise MalformedObject("bad %s id: %r" % (what, value))


def _parse_tag(payload: bytes) -> TagRecord:
    headers, message = _split_headers(payload)
    fields = dict()
    order = [k for k, _ in headers[:3]]
    if order != ["object", "type", "tag"]:
        raise MalformedObject("tag must start with object/type/tag headers")
    for key, value in headers[:3]:
        fields[key] = value
    obj_kind = fields["type"].decode("ascii", "replace")
    _check_kind(obj_kind)
    rest = headers[3:]
    tagger = None
    if rest and rest[0][0] == "tagger":
        tagger = parse_signature(rest[0][1])
        rest = rest[1:]
    return TagRecord(
        object=_hex_header(fields["object"], "object"),
        obj_kind=obj_kind,
        tag=_decode(fields["tag"]),
        tagger=tagger,
        message=message,
        extra_headers=tuple(rest),
    )


def _parse_tree(payload: bytes) -> TreeRecord:
    entries = []
    pos = 0
    n = len(payload)
    while pos < n:
        sp = payload.find(b" ", pos)
        if sp < 0:
            raise MalformedObject("truncated tree entry mode")
        mode = payload[pos:sp]
        if not _MODE_RE.match(mode):
            raise MalformedObject("bad tree entry mode: %r" % mode)
        nul = payload.find(b"\x00", sp + 1)
        if nul < 0:
            raise MalformedObject("truncated tree entry name")
        name = payload[sp + 1:nul]
        if not name:
            raise MalformedObject("empty tree entry name")
        if nul + 21 > n:
            raise MalformedObject("truncated tree entry id")
        entries.append(TreeEntry(mode=mode.decode("ascii"), name=name,
                                 id=ObjectId(payload[nul + 1:nul + 21])))
        pos = nul + 21
    return TreeRecord(entries=tuple(entries))


def parse_object(kind: str, payload: bytes) -> GitObjectRecord:
    """Parse a payload of the stated kind into a typed record.

    Raises MalformedObject on any grammar violation; malformed payloads
    are never admitted to a store.
    """
    _check_kind(kind)
    if kind == "blob":
        return BlobRecord(payload)
    if kind == "tree":
        return _parse_tree(payload)
    if kind == "commit":
        return _parse_commit(payload)
    return _parse_tag(payload)


def _raw_headers(pairs) -> bytes:
    out = []
    for key, value in pairs:
        out.append(key.encode("ascii") + b" " + value.replace(b"\n", b"\n "))
    return b"\n".join(out)


def serialize(record: GitObjectRecord) -> bytes:
    """Rebuild the payload bytes from a parsed record."""
    if isinstance(record, BlobRecord):
        return record.payload
    if isinstance(record, TreeRecord):
        return b"".join(
            b"%s %s\x00%s" % (e.mode.encode("ascii"), e.name, bytes(e.id))
            for e in record.entries
        )
    if isinstance(record, CommitRecord):
        headers = [("tree", record.tree.hex().encode("ascii"))]
        headers += [("parent", p.hex().encode("ascii")) for p in record.parents]
        headers.append(("author", record.author.raw()))
        headers.append(("committer", record.committer.raw()))
        headers += list(record.extra_headers)
        return _raw_headers(headers) + b"\n\n" + record.message
    if isinstance(record, TagRecord):
        headers = [
            ("object", record.object.hex().encode("ascii")),
            ("type", record.obj_kind.encode("ascii")),
            ("tag", _encode(record.tag)),
        ]
        if record.tagger is not None:
            headers.append(("tagger", record.tagger.raw()))
        headers += list(record.extra_headers)
        return _raw_headers(headers) + b"\n\n" + record.message
    raise TypeError("not a git object record: %r" % (record,))


def kind_of(record: GitObjectRecord) -> str:
    if isinstance(record, BlobRecord):
        return "blob"
    if isinstance(record, TreeRecord):
        return "tree"
    if isinstance(record, CommitRecord):
        return "commit"
    if isinstance(record, TagRecord):
        return "tag"
    raise TypeError("not a git object record: %r" % (record,))


def roundtrip_error(id: ObjectId, kind: str, payload: bytes) -> str | None:
    """Why (id, kind, payload) fails round-trip validation, or None.

    A payload passes when parsing, re-serializing, and re-hashing it
    reproduces ``id`` exactly. Zero-length payloads fail unless they are
    the canonical empty blob/tree, which are the only valid empty
    objects; a zero-size loose file claiming any other id is the
    known truncation pathology and is rejected.
    """
    _check_kind(kind)
    if len(payload) == 0 and id.hex() not in (EMPTY_BLOB_HEX, EMPTY_TREE_HEX):
        return "zero-size payload"
    try:
        record = parse_object(kind, payload)
    except MalformedObject as exc:
        return "malformed %s: %s" % (kind, exc)
    rebuilt = serialize(record)
    if rebuilt != payload:
        return "re-serialization differs from payload"
    if hash_object(kind, rebuilt) != id:
        return "content hash does not match id"
    return None


def validate_roundtrip(id: ObjectId, kind: str, payload: bytes) -> bool:
    """True iff parse, re-serialize, hash reproduces ``id``."""
    return roundtrip_error(id, kind, payload) is None
