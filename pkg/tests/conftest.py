"""Shared fixtures: a deterministic generated corpus plus reference-git
oracles.

Repos are built with ``git fast-import`` from explicit commit specs, so
object ids are reproducible and every expectation (trend counts,
identity labels, fork/chain structure) is derived from the specs
independently of the code under test.
"""

from __future__ import annotations

import random
import shutil
import subprocess
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import pytest

from woc.gitcore import ObjectId
from woc.ingest import RepoRef, discover, extract_all
from woc.store import ObjectStore, ShardConfig
from woc.xref import build_basemaps
from woc import ingest as ingest_mod


def run_git(args, cwd=None, input=None) -> bytes:
    proc = subprocess.run(["git", *args], cwd=cwd, input=input,
                          capture_output=True, check=True)
    return proc.stdout


# -- repo construction ---------------------------------------------------


@dataclass
class CommitSpec:
    branch: str
    author: tuple[str, str]  # (name, email)
    time: int
    tz: str = "+0000"
    message: str = "change"
    adds: dict[str, bytes] = field(default_factory=dict)
    dels: tuple[str, ...] = ()
    # Parent marks (1-based indices into the spec list). None means the
    # current branch tip, or a root commit if the branch is new.
    parents: tuple[int, ...] | None = None


def fast_import(repo: Path, specs: list[CommitSpec], start_mark: int = 1):
    lines = []
    tips: dict[str, int] = {}
    for i, spec in enumerate(specs, start_mark):
        name, email = spec.author
        ident = "%s <%s> %d %s" % (name, email, spec.time, spec.tz)
        lines.append("commit refs/heads/%s" % spec.branch)
        lines.append("mark :%d" % i)
        lines.append("author %s" % ident)
        lines.append("committer %s" % ident)
        msg = spec.message.encode()
        lines.append("data %d" % len(msg))
        lines.append(spec.message)
        parents = spec.parents
        if parents is None:
            parents = (tips[spec.branch],) if spec.branch in tips else ()
        for n, parent in enumerate(parents):
            lines.append("%s :%d" % ("from" if n == 0 else "merge", parent))
        for path in spec.dels:
            lines.append("D %s" % path)
        for path, content in spec.adds.items():
            lines.append("M 100644 inline %s" % path)
            lines.append("data %d" % len(content))
            lines.append(content.decode("latin-1"))
        lines.append("")
        tips[spec.branch] = i
    stream = "\n".join(lines).encode("latin-1")
    run_git(["init", "--bare", "--quiet", str(repo)])
    run_git(["-C", str(repo), "fast-import", "--quiet"], input=stream)


def continue_import(repo: Path, specs: list[CommitSpec]):
    """Append commits to an existing repo; branch tips resolve to the
    repo's current refs."""
    lines = []
    tips: dict[str, int] = {}
    for i, spec in enumerate(specs, 1):
        name, email = spec.author
        ident = "%s <%s> %d %s" % (name, email, spec.time, spec.tz)
        lines.append("commit refs/heads/%s" % spec.branch)
        lines.append("mark :%d" % i)
        lines.append("author %s" % ident)
        lines.append("committer %s" % ident)
        msg = spec.message.encode()
        lines.append("data %d" % len(msg))
        lines.append(spec.message)
        if spec.branch in tips:
            lines.append("from :%d" % tips[spec.branch])
        else:
            lines.append("from refs/heads/%s^0" % spec.branch)
        for path in spec.dels:
            lines.append("D %s" % path)
        for path, content in spec.adds.items():
            lines.append("M 100644 inline %s" % path)
            lines.append("data %d" % len(content))
            lines.append(content.decode("latin-1"))
        lines.append("")
        tips[spec.branch] = i
    run_git(["-C", str(repo), "fast-import", "--quiet"],
            input="\n".join(lines).encode("latin-1"))


def ts(year, month, day, hour=12) -> int:
    return int(datetime(year, month, day, hour, tzinfo=timezone.utc).timestamp())


# -- reference-git oracles -------------------------------------------------


def git_reachable(repo: Path) -> dict[str, str]:
    """hex id -> kind for every object reachable from any branch head."""
    out = run_git(["-C", str(repo), "rev-list", "--objects", "--branches"])
    ids = [line[:40].decode() for line in out.splitlines() if len(line) >= 40]
    if not ids:
        return {}
    check = run_git(["-C", str(repo), "cat-file", "--batch-check=%(objectname) %(objecttype)"],
                    input="\n".join(ids).encode() + b"\n")
    kinds = {}
    for line in check.splitlines():
        sha, kind = line.decode().split(" ")
        kinds[sha] = kind
    return kinds


def git_heads(repo: Path) -> set[tuple[str, str]]:
    out = run_git(["-C", str(repo), "show-ref", "--heads"])
    heads = set()
    for line in out.decode().splitlines():
        sha, ref = line.split(" ", 1)
        heads.add((ref[len("refs/heads/"):], sha))
    return heads


def git_ls_tree_r(repo: Path, commit: str) -> set[tuple[str, str]]:
    out = run_git(["-C", str(repo), "ls-tree", "-r", commit])
    pairs = set()
    for line in out.decode().splitlines():
        meta, path = line.split("\t", 1)
        mode, kind, sha = meta.split()
        if kind == "blob":
            pairs.add((path, sha))
    return pairs


def git_cat(repo: Path, hex_id: str) -> tuple[str, bytes]:
    kind = run_git(["-C", str(repo), "cat-file", "-t", hex_id]).decode().strip()
    payload = run_git(["-C", str(repo), "cat-file", kind, hex_id])
    return kind, payload


def git_hash_object(kind: str, payload: bytes) -> str:
    return run_git(["hash-object", "-t", kind, "--stdin", "--literally"],
                   input=payload).decode().strip()


def git_branch_commits(repo: Path) -> set[str]:
    out = run_git(["-C", str(repo), "rev-list", "--branches"])
    return {line.decode() for line in out.splitlines()}


# -- the corpus -------------------------------------------------------------


# Hand-labeled identity fixture: 20 author ids and 20 labeled pairs,
# written down before the resolver existed. True pairs merge, false
# pairs must stay apart (stop-listed ids never merge).
ID_A1 = "Jon Smith <jsmith@example.com>"
ID_A2 = "Jonathan Smith <jsmith@example.com>"
ID_B1 = "Maria Garcia <maria@uni.edu>"
ID_B2 = "Maria Garcia <mgarcia@lab.org>"
ID_C1 = "li wei <lw@c.com>"
ID_C2 = "Li Wei <lw@c.com>"
ID_D1 = "Ola Nordmann <ola@nor.no>"
ID_D2 = "Ola Nordman <ola.n@nor.no>"
ID_E1 = "root <root@build01>"
ID_E2 = "root <root@build02>"
ID_F = "anonymous <anon@web>"
ID_G = "Travis CI <builds@travis-ci.org>"
ID_H1 = "Sam Jones <sam@a.com>"
ID_H2 = "Pat Jones <pat@b.com>"
ID_I1 = "Alex Kim <akim@x.io>"
ID_I2 = "Alex Kim <akim@y.io>"
ID_J = "Chris O'Neil <chris@dev.net>"
ID_K = "Dana Fox <dana@fox.org>"
ID_L = "Ed Zhu <ed@zhu.cc>"
ID_M = "Ana Cruz <ana@cruz.br>"

IDENTITY_AUTHORS = [ID_A1, ID_A2, ID_B1, ID_B2, ID_C1, ID_C2, ID_D1, ID_D2,
                    ID_E1, ID_E2, ID_F, ID_G, ID_H1, ID_H2, ID_I1, ID_I2,
                    ID_J, ID_K, ID_L, ID_M]

IDENTITY_PAIRS = [
    (ID_A1, ID_A2, True),   # same email
    (ID_B1, ID_B2, True),   # same name + shared files
    (ID_C1, ID_C2, True),   # same email, case-differing name
    (ID_D1, ID_D2, True),   # near-identical name + shared files
    (ID_E1, ID_E2, False),  # stop-listed role account
    (ID_F, ID_G, False),
    (ID_H1, ID_H2, False),  # different people, same surname
    (ID_I1, ID_I2, False),  # same name but disjoint files, emails differ
    (ID_A1, ID_H1, False),
    (ID_B1, ID_I1, False),
    (ID_E1, ID_F, False),
    (ID_J, ID_K, False),
    (ID_L, ID_M, False),
    (ID_C1, ID_D1, False),
    (ID_G, ID_E1, False),
    (ID_A2, ID_B2, False),
    (ID_D2, ID_I2, False),
    (ID_H2, ID_J, False),
    (ID_K, ID_L, False),
    (ID_F, ID_M, False),
]

DEV1 = ("Dev One", "dev1@main.io")
DEV2 = ("Dev Two", "dev2@main.io")
DEV3 = ("Dev Three", "dev3@main.io")
TREND_ALICE = ("Trend Alice", "alice@trend.io")
TREND_BOB = ("Trend Bob", "bob@trend.io")
TREND_CAROL = ("Trend Carol", "carol@trend.io")


def _ident(pair) -> str:
    return "%s <%s>" % pair


def _split_author(author_id: str) -> tuple[str, str]:
    name, _, rest = author_id.partition(" <")
    return name, rest[:-1]


def _mainline_specs(n_linear=400):
    """The big repo: branches, merges, renames, deletions, empty files,
    deep nesting."""
    rng = random.Random(20140907)
    specs = []
    devs = [DEV1, DEV2, DEV3]
    base = ts(2013, 1, 5)
    live = []

    def content(tag):
        return ("content %s %d\n" % (tag, rng.randrange(10 ** 9))).encode()

    specs.append(CommitSpec("main", DEV1, base, message="root",
                            adds={"README.md": b"mainline\n",
                                  "src/a/b/c/d/core.py": b"import os\n",
                                  "assets/.keep": b""}))
    live += ["README.md", "src/a/b/c/d/core.py"]
    for i in range(n_linear):
        when = base + (i + 1) * 7200
        author = devs[i % 3]
        action = rng.random()
        adds, dels = {}, ()
        if action < 0.55 or not live:
            path = rng.choice([
                "src/mod_%d.py" % i,
                "src/a/b/c/d/e/deep_%d.txt" % i,
                "lib/pkg/util_%d.py" % i,
                "docs/notes_%d.md" % i,
            ])
            adds[path] = content(path)
            live.append(path)
        elif action < 0.85:
            path = rng.choice(live)
            adds[path] = content(path)
        elif action < 0.93 and len(live) > 3:
            path = live.pop(rng.randrange(len(live)))
            dels = (path,)
        else:  # rename: delete + add same content elsewhere
            path = live.pop(rng.randrange(len(live)))
            renamed = path + ".moved"
            body = content(path)
            adds[renamed] = body
            dels = (path,)
            live.append(renamed)
        specs.append(CommitSpec("main", author, when, message="step %d" % i,
                                adds=adds, dels=dels))
    # dev branch forks from an early main commit, gets work, merges back
    fork_at = 30
    dev_tip = None
    merge_times = []
    for round_no in range(3):
        start = len(specs)
        for j in range(4):
            when = base + (n_linear + 40 * round_no + j) * 7200
            parent = (fork_at,) if round_no == 0 and j == 0 else None
            branch_parent = parent if parent else ((dev_tip,) if j == 0 and dev_tip else None)
            specs.append(CommitSpec("dev", devs[(round_no + j) % 3], when,
                                    message="dev %d.%d" % (round_no, j),
                                    adds={"dev/feature_%d_%d.py" % (round_no, j):
                                          content("f%d%d" % (round_no, j))},
                                    parents=branch_parent))
        dev_tip = len(specs)
        main_tip = start  # mark index of current main tip == start (1-based: specs[start-1])
        when = base + (n_linear + 40 * round_no + 10) * 7200
        if round_no == 0:
            # clean merge: snapshot equals first parent's
            specs.append(CommitSpec("main", DEV1, when, message="merge dev (ours)",
                                    parents=(_tip_of(specs, "main"), dev_tip)))
        else:
            # content merge: bring dev files in, plus one brand-new file
            adds = {"dev/feature_%d_%d.py" % (round_no, j):
                    specs[dev_tip - 4 + j].adds["dev/feature_%d_%d.py" % (round_no, j)]
                    for j in range(4)}
            if round_no == 2:
                adds["dev/conflict_note.md"] = b"resolved by hand\n"
            specs.append(CommitSpec("main", DEV1, when, message="merge dev",
                                    parents=(_tip_of(specs, "main"), dev_tip),
                                    adds=adds))
    # a third branch that just exists
    specs.append(CommitSpec("feature", DEV2, base + 9_000_000, message="spike",
                            adds={"spike/idea.txt": b"later\n"},
                            parents=(5,)))
    return specs


def _tip_of(specs, branch) -> int:
    for i in range(len(specs), 0, -1):
        if specs[i - 1].branch == branch:
            return i
    raise AssertionError("no commit on branch %s yet" % branch)


def _chain_x_specs():
    return [CommitSpec("main", DEV2, ts(2014, 3, 1) + i * 86400,
                       message="x%d" % i,
                       adds={"shared/x_%d.txt" % i: ("x body %d\n" % i).encode()})
            for i in range(20)]


def _chain_y_specs():
    return [CommitSpec("side", DEV3, ts(2014, 6, 1) + i * 86400,
                       message="y%d" % i,
                       adds={"shared/y_%d.txt" % i: ("y body %d\n" % i).encode()})
            for i in range(10)]


def _trend_specs():
    """Java commits with hand-countable per-year commit/author totals."""
    rows = [
        (ts(2014, 2, 10), TREND_ALICE),
        (ts(2014, 5, 20), TREND_ALICE),
        (ts(2014, 9, 1), TREND_BOB),
        (ts(2015, 1, 15), TREND_ALICE),
        (ts(2015, 4, 2), TREND_BOB),
        (ts(2015, 7, 30), TREND_BOB),
        (ts(2015, 11, 11), TREND_CAROL),
        (ts(2016, 3, 3), TREND_CAROL),
        (ts(2016, 8, 8), TREND_CAROL),
    ]
    specs = []
    for i, (when, author) in enumerate(rows):
        body = ("package app;\nimport java.util.List;\nimport app.helper.Tool;\n"
                "// rev %d\n" % i).encode()
        specs.append(CommitSpec("main", author, when, message="java %d" % i,
                                adds={"app/src/Main.java": body,
                                      "app/notes_%d.txt" % i: b"txt\n"}))
    return specs


def trend_java_expected() -> dict[int, tuple[int, int]]:
    """year -> (commits, distinct authors), counted from the spec rows."""
    per_year = {}
    for spec in _trend_specs():
        year = datetime.fromtimestamp(spec.time, tz=timezone.utc).year
        commits, authors = per_year.get(year, (0, set()))
        if isinstance(authors, set):
            authors.add(spec.author)
        per_year[year] = (commits + 1, authors)
    return {y: (c, len(a)) for y, (c, a) in per_year.items()}


PYDEPS_BLOBS = {
    "pkg/setup.py": b"import os\nfrom collections import OrderedDict\n\nprint('x')\n",
    "pkg/multi.py": b"import os, sys\nimport numpy as np\n",
    "pkg/fromline.py": b"from a.b import c\nfrom a.b import\n",
    "pkg/tricky.py": b"# import commented\ns = 'import quoted'\n    import indented\n",
    "pkg/plain.txt": b"import not_python_file\n",
}


def _pydeps_specs():
    specs = []
    when = ts(2015, 5, 5)
    for i, (path, body) in enumerate(sorted(PYDEPS_BLOBS.items())):
        specs.append(CommitSpec("main", DEV2, when + i * 3600,
                                message="py %d" % i, adds={path: body}))
    for i in range(7):
        specs.append(CommitSpec("main", DEV3, when + (10 + i) * 3600,
                                message="pyrev %d" % i,
                                adds={"pkg/rev.py": ("import mod_%d\n" % i).encode()}))
    return specs


def _people_specs(which: int):
    """Commits giving the identity-fixture authors their file footprints."""
    base = ts(2015, 9, 1) + which * 10_000_000
    specs = []

    def touch(author_id, path, rev, when):
        specs.append(CommitSpec("main", _split_author(author_id), when,
                                message="t%d" % rev,
                                adds={path: ("v%d of %s\n" % (rev, path)).encode()}))

    if which == 1:
        touch(ID_A1, "app/main.c", 1, base + 1000)
        touch(ID_A1, "app/main.c", 2, base + 2000)
        touch(ID_A2, "app/io.c", 1, base + 3000)
        touch(ID_B1, "lib/core.py", 1, base + 4000)
        touch(ID_B1, "lib/core.py", 2, base + 5000)
        touch(ID_B1, "lib/util.py", 1, base + 6000)
        touch(ID_B1, "lib/util.py", 2, base + 7000)
        touch(ID_C1, "cli/tool.go", 1, base + 8000)
        touch(ID_D1, "web/app.js", 1, base + 9000)
        touch(ID_D1, "web/app.js", 2, base + 10000)
        touch(ID_D1, "web/style.css", 1, base + 11000)
        touch(ID_E1, "ops/deploy.sh", 1, base + 12000)
        touch(ID_F, "misc/anon.txt", 1, base + 13000)
        touch(ID_H1, "game/sam.rs", 1, base + 14000)
        touch(ID_I1, "ml/train.py", 1, base + 15000)
        touch(ID_J, "db/schema.sql", 1, base + 16000)
        touch(ID_L, "fw/boot.c", 1, base + 17000)
    else:
        touch(ID_B2, "lib/core.py", 3, base + 1000)
        touch(ID_B2, "lib/core.py", 4, base + 2000)
        touch(ID_C2, "cli/tool2.go", 1, base + 3000)
        touch(ID_D2, "web/app.js", 3, base + 4000)
        touch(ID_E2, "ops/deploy.sh", 2, base + 5000)
        touch(ID_G, "ci/build.log", 1, base + 6000)
        touch(ID_H2, "game/pat.rs", 1, base + 7000)
        touch(ID_I2, "etl/load.sql", 1, base + 8000)
        touch(ID_K, "ui/panel.tsx", 1, base + 9000)
        touch(ID_M, "sci/paperless.tex", 1, base + 10000)
    return specs


def _zeta_specs():
    """Starts with an empty root tree, then empty files and churn."""
    base = ts(2016, 1, 1)
    specs = [CommitSpec("main", DEV1, base, message="start")]
    specs.append(CommitSpec("main", DEV1, base + 1000, message="empties",
                            adds={"data/.gitkeep": b"", "logs/.gitkeep": b""}))
    specs.append(CommitSpec("main", DEV2, base + 2000, message="fill",
                            adds={"data/a.csv": b"1,2\n"}))
    specs.append(CommitSpec("main", DEV2, base + 3000, message="wipe",
                            dels=("data/a.csv",)))
    specs.append(CommitSpec("main", DEV3, base + 4000, message="refill",
                            adds={"data/a.csv": b"1,2\n3,4\n"}))
    specs.append(CommitSpec("main", DEV1, base + 5000, message="empty again",
                            adds={"data/empty2": b""}))
    return specs


def _epsilon_specs():
    base = ts(2013, 8, 1)
    return [CommitSpec("main", DEV3, base + i * 100000, message="doc %d" % i,
                       adds={"docs/ch%d.md" % i: ("chapter %d\n" % i).encode()})
            for i in range(5)]


@dataclass
class Corpus:
    root: Path
    repos: dict[str, Path]
    list_file: Path
    fork_pair: tuple[str, str]
    chain: tuple[str, str, str]


def build_corpus(root: Path) -> Corpus:
    repos = {}

    def make(owner, name, specs):
        path = root / owner / name
        path.parent.mkdir(parents=True, exist_ok=True)
        fast_import(path, specs)
        repos["%s_%s" % (owner, name)] = path
        return path

    mainline = make("alpha", "mainline", _mainline_specs())
    fork = root / "alpha" / "mainline-fork"
    shutil.copytree(mainline, fork)
    continue_import(fork, [
        CommitSpec("main", DEV1, ts(2016, 10, 1) + i * 3600,
                   message="fork work %d" % i,
                   adds={"forked/extra_%d.py" % i: ("import fork_%d\n" % i).encode()})
        for i in range(5)
    ])
    repos["alpha_mainline-fork"] = fork

    x = _chain_x_specs()
    y = _chain_y_specs()
    make("beta", "chain-a", x)
    make("beta", "chain-b", x + y)
    z = [CommitSpec("side", DEV1, ts(2014, 8, 1) + i * 86400,
                    message="z%d" % i,
                    adds={"cchain/z_%d.txt" % i: ("z body %d\n" % i).encode()})
         for i in range(15)]
    make("beta", "chain-c", y + z)

    make("gamma", "java-trend", _trend_specs())
    make("gamma", "py-deps", _pydeps_specs())
    make("delta", "people1", _people_specs(1))
    make("delta", "people2", _people_specs(2))
    make("zeta", "empty-files", _zeta_specs())
    make("epsilon", "docs", _epsilon_specs())

    list_file = root / "corpus.txt"
    ordered = ["alpha_mainline", "alpha_mainline-fork", "beta_chain-a",
               "beta_chain-b", "beta_chain-c", "gamma_java-trend",
               "gamma_py-deps", "delta_people1", "delta_people2",
               "zeta_empty-files", "epsilon_docs"]
    list_file.write_text("".join(str(repos[name]) + "\n" for name in ordered))
    return Corpus(root=root, repos={n: repos[n] for n in ordered},
                  list_file=list_file,
                  fork_pair=("alpha_mainline", "alpha_mainline-fork"),
                  chain=("beta_chain-a", "beta_chain-b", "beta_chain-c"))


# -- session fixtures -------------------------------------------------------


@pytest.fixture(scope="session")
def corpus(tmp_path_factory) -> Corpus:
    return build_corpus(tmp_path_factory.mktemp("corpus"))


@pytest.fixture(scope="session")
def corpus_store(corpus, tmp_path_factory):
    """Everything ingested once; yields (read-only store, reports by name)."""
    root = tmp_path_factory.mktemp("store")
    reports = {}
    with ObjectStore.create(root, ShardConfig()) as store:
        refs, diags = discover(corpus.list_file)
        assert not diags
        for ref in refs:
            reports[ref.name] = extract_all(ref, store)
    store = ObjectStore.open(root)
    yield store, reports
    store.close()


@pytest.fixture(scope="session")
def corpus_maps(corpus_store):
    store, _ = corpus_store
    return build_basemaps(store, ingest_mod.read_journal(store.root))


# -- the format-parity commit ---------------------------------------------


PARITY_TREE = "f1b66dcca490b5c4455af319bc961a34f69c72c2"
PARITY_PARENT = "c19ff598808b181f1ab2383ff0214520cb3ec659"
PARITY_IDENT = "Audris Mockus <audris@utk.edu>"
PARITY_TIME = "1410029988 -0400"


def parity_commit_payload() -> bytes:
    """A commit whose tree/parent/author/committer/time fields carry the
    documented reference values; the message is ours, so the id is the
    content hash of this payload."""
    return (
        "tree %s\n"
        "parent %s\n"
        "author %s %s\n"
        "committer %s %s\n"
        "\n"
        "news update\n"
        % (PARITY_TREE, PARITY_PARENT, PARITY_IDENT, PARITY_TIME,
           PARITY_IDENT, PARITY_TIME)
    ).encode()
