"""Desk-scale git repository mining: deduplicated object storage plus
cross-reference maps over commits, blobs, files, authors, and projects."""

from .gitcore import (ObjectId, CommitRecord, TreeEntry, TreeRecord, BlobRecord,
                      TagRecord, Signature, hash_object, parse_object, serialize,
                      validate_roundtrip)
from .store import ObjectStore, PutResult, ShardConfig, shard_of_object
from .ingest import RepoRef, IngestReport, discover, heads_of, needs_update, \
    extract_all, fetch_incremental
from .xref import (MapName, MultiMap, MapSet, ChangeRecord, snapshot_blobs,
                   changed_blobs, map_shard_of, build_basemaps, lookup, compose,
                   export_dump, commit_time_author)
from .augment import Partition, IdentitySignal, Thresholds, defork, \
    canonical_project, identity_signals, resolve_identities
from .langmaps import LangRule, DepRecord, classify_path, \
    extract_python_imports, extract_java_imports, build_langmap

__version__ = "0.1.0"
