"""Single-file configuration with environment overrides.

The config file is plain ``key = value`` lines with ``#`` comments.
Every key can be overridden by an environment variable named
``WOC_<KEY>`` (uppercase). Paths are resolved relative to the config
file's directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path


@dataclass
class WocConfig:
    store_root: str = "wocstore"
    corpus_list: str = "corpus.txt"
    maps_root: str = ""  # default: <store_root>/maps
    langmap_root: str = ""  # default: <store_root>/langmaps
    object_shard_bits: int = 7
    map_shard_bits: int = 5
    change_cap: int = 10000
    blob_commit_cap: int = 10000
    tau_email: float = 0.95
    tau_name: float = 0.9
    tau_file: float = 0.2
    min_shared_commits: int = 1
    stoplist_file: str = ""

    def resolved_maps_root(self) -> Path:
        return Path(self.maps_root) if self.maps_root else Path(self.store_root) / "maps"

    def resolved_langmap_root(self) -> Path:
        return Path(self.langmap_root) if self.langmap_root else Path(self.store_root) / "langmaps"


def load_config(path=None, env=None) -> WocConfig:
    env = os.environ if env is None else env
    values = {}
    base = Path(".")
    if path is not None:
        base = Path(path).parent
        with open(path, "r", encoding="utf-8") as fh:
            for raw in fh:
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                key, _, value = line.partition("=")
                values[key.strip()] = value.strip()
    for f in fields(WocConfig):
        override = env.get("WOC_" + f.name.upper())
        if override is not None:
            values[f.name] = override
    kwargs = {}
    for f in fields(WocConfig):
        if f.name not in values:
            continue
        raw = values[f.name]
        if f.type in ("int", int):
            kwargs[f.name] = int(raw)
        elif f.type in ("float", float):
            kwargs[f.name] = float(raw)
        else:
            kwargs[f.name] = raw
    cfg = WocConfig(**kwargs)
    for name in ("store_root", "corpus_list", "maps_root", "langmap_root", "stoplist_file"):
        value = getattr(cfg, name)
        if value and not Path(value).is_absolute():
            setattr(cfg, name, str(base / value))
    return cfg
