"""Data-correction layers on top of the basemaps.

De-forking groups projects into equivalence classes connected by shared
commits (transitive closure over the commit-project links), so clones,
forks, and renames count as one project. Identity merging groups author
ids with a threshold rule over string similarity of names/emails and
weighted-Jaccard similarity of the file-name multisets each id touched.
Both produce a Partition with a deterministic canonical representative
per class, emitted in the same dump format as the basemaps.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations

from .errors import UnknownAuthor, UnknownProject, VersionMismatch
from .xref import MapName, MultiMap

# Non-person author patterns observed in the wild: roles, anonymity
# placeholders, and CI/automation tools. Ids matching the stop list stay
# in the maps but are never merged with anything.
DEFAULT_STOPLIST = frozenset([
    "root", "admin", "administrator", "nobody", "anonymous", "unknown",
    "guest", "student", "user", "test", "jenkins", "travis", "travis ci",
    "github", "github actions", "gitlab ci", "dependabot", "buildbot",
    "ci", "bot",
])


class UnionFind:
    def __init__(self):
        self.parent = {}

    def add(self, item):
        if item not in self.parent:
            self.parent[item] = item

    def find(self, item):
        self.add(item)
        root = item
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[item] != root:
            self.parent[item], item = root, self.parent[item]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra

    def classes(self) -> list[list]:
        grouped = {}
        for item in self.parent:
            grouped.setdefault(self.find(item), []).append(item)
        return list(grouped.values())


@dataclass
class Partition:
    """Disjoint classes over a universe, each with a canonical member."""

    class_of: dict
    representatives: list
    members: list[tuple]
    store_version: int | None = None

    @classmethod
    def from_classes(cls, classes, representative_key, store_version=None) -> "Partition":
        """Build from member lists; ``representative_key(member)`` sorts
        candidates, smallest wins. Class ids follow representative order,
        so the result is independent of input enumeration order."""
        chosen = []
        for group in classes:
            rep = min(group, key=representative_key)
            chosen.append((rep, tuple(sorted(group))))
        chosen.sort(key=lambda pair: pair[0])
        class_of = {}
        representatives = []
        members = []
        for class_id, (rep, group) in enumerate(chosen):
            representatives.append(rep)
            members.append(group)
            for item in group:
                class_of[item] = class_id
        return cls(class_of=class_of, representatives=representatives,
                   members=members, store_version=store_version)

    @classmethod
    def from_canonical_map(cls, mm) -> "Partition":
        """Rebuild a Partition from a ``key;canonical`` map (p2p/a2a)."""
        groups: dict = {}
        for item, values in mm.items():
            groups.setdefault(values[0], []).append(item)
        class_of = {}
        representatives = []
        members = []
        for class_id, rep in enumerate(sorted(groups)):
            representatives.append(rep)
            group = tuple(sorted(groups[rep]))
            members.append(group)
            for item in group:
                class_of[item] = class_id
        return cls(class_of=class_of, representatives=representatives,
                   members=members, store_version=mm.store_version)

    def canonical(self, item):
        try:
            return self.representatives[self.class_of[item]]
        except KeyError:
            raise UnknownProject("not in partition universe: %r" % (item,))

    def __len__(self):
        return len(self.representatives)

    def __contains__(self, item):
        return item in self.class_of

    def same_class(self, a, b) -> bool:
        return self.class_of.get(a, -1) == self.class_of.get(b, -2)

    def to_multimap(self, name: str, shard_bits: int) -> MultiMap:
        """``key;canonical`` map (p2p or a2a), composable with basemaps."""
        out = MultiMap(MapName.parse(name), shard_bits,
                       self.store_version if self.store_version is not None else -1)
        for item, class_id in self.class_of.items():
            out.add(item, self.representatives[class_id])
        return out


def defork(c2p: MultiMap, p2c: MultiMap, *, min_shared_commits: int = 1) -> Partition:
    """Partition projects into clone-equivalence classes.

    Two projects land in one class iff they are connected in the graph
    whose edges join projects sharing at least ``min_shared_commits``
    commits. The representative is the member with the most commits,
    ties broken by smallest name.
    """
    if c2p.store_version != p2c.store_version:
        raise VersionMismatch("c2p version %d != p2c version %d"
                              % (c2p.store_version, p2c.store_version))
    uf = UnionFind()
    for project, _ in p2c.items():
        uf.add(project)
    if min_shared_commits <= 1:
        for _, projects in c2p.items():
            first = projects[0]
            for other in projects[1:]:
                uf.union(first, other)
    else:
        shared = Counter()
        for _, projects in c2p.items():
            for pair in combinations(sorted(projects), 2):
                shared[pair] += 1
        for (a, b), count in shared.items():
            if count >= min_shared_commits:
                uf.union(a, b)

    def rep_key(project):
        return (-len(p2c.get(project)), project)

    return Partition.from_classes(uf.classes(), rep_key,
                                  store_version=c2p.store_version)


def canonical_project(project: str, partition: Partition) -> str:
    return partition.canonical(project)


# -- author identity ------------------------------------------------------


@dataclass(frozen=True)
class IdentitySignal:
    pair: tuple[str, str]
    name_sim: float
    email_sim: float
    file_jaccard: float
    commit_count_a: int
    commit_count_b: int
    # Reserved for commit-message style similarity; unused by the
    # threshold rule shipped here.
    style_sim: float | None = None


@dataclass(frozen=True)
class Thresholds:
    email: float = 0.95
    name: float = 0.9
    file: float = 0.2


def damerau_levenshtein(a: str, b: str) -> int:
    """Edit distance with adjacent transpositions (optimal string
    alignment variant)."""
    if a == b:
        return 0
    la, lb = len(a), len(b)
    if not la:
        return lb
    if not lb:
        return la
    prev2 = None
    prev = list(range(lb + 1))
    for i in range(1, la + 1):
        cur = [i] + [0] * lb
        for j in range(1, lb + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
            if (i > 1 and j > 1 and a[i - 1] == b[j - 2] and a[i - 2] == b[j - 1]):
                cur[j] = min(cur[j], prev2[j - 2] + 1)
        prev2, prev = prev, cur
    return prev[lb]


def string_similarity(a: str, b: str) -> float:
    """1 - normalized Damerau-Levenshtein distance; empty vs empty is 1."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - damerau_levenshtein(a, b) / longest


def split_ident(ident: str) -> tuple[str, str]:
    """(name, email) parts of a composite "Name <email>" id."""
    start = ident.rfind("<")
    if start < 0 or not ident.endswith(">"):
        return ident.strip(), ""
    return ident[:start].strip(), ident[start + 1:-1].strip()


def file_weights(author: str, a2c: MultiMap, c2f: MultiMap) -> Counter:
    """File-name multiset touched by an author; weights are touch counts."""
    weights = Counter()
    for commit in a2c.get(author):
        for path in c2f.get(commit):
            weights[path] += 1
    return weights


def weighted_jaccard(wa: Counter, wb: Counter) -> float:
    """sum(min) / sum(max) over the union of weighted keys."""
    if not wa and not wb:
        return 0.0
    lo = hi = 0
    for key in wa.keys() | wb.keys():
        a, b = wa.get(key, 0), wb.get(key, 0)
        lo += min(a, b)
        hi += max(a, b)
    return lo / hi if hi else 0.0


def identity_signals(a1: str, a2: str, a2c: MultiMap, c2f: MultiMap) -> IdentitySignal:
    """Similarity evidence for one candidate pair; symmetric in pair order."""
    for author in (a1, a2):
        if author not in a2c:
            raise UnknownAuthor(author)
    name1, email1 = split_ident(a1)
    name2, email2 = split_ident(a2)
    wa, wb = file_weights(a1, a2c, c2f), file_weights(a2, a2c, c2f)
    if a1 == a2:
        jaccard = 1.0
    else:
        jaccard = weighted_jaccard(wa, wb)
    return IdentitySignal(
        pair=(a1, a2),
        name_sim=string_similarity(name1, name2),
        email_sim=string_similarity(email1, email2),
        file_jaccard=jaccard,
        commit_count_a=len(a2c.get(a1)),
        commit_count_b=len(a2c.get(a2)),
    )


def is_stoplisted(author: str, stoplist=DEFAULT_STOPLIST) -> bool:
    name, email = split_ident(author)
    local = email.split("@", 1)[0]
    return name.lower() in stoplist or local.lower() in stoplist


def candidate_pairs(a2c: MultiMap, c2f: MultiMap, *, stoplist=DEFAULT_STOPLIST,
                    max_block: int = 50):
    """Blocked candidate generation: pairs sharing an email local-part,
    an exact name, or at least one touched file. Blocks larger than
    ``max_block`` are skipped to keep pair growth near-linear."""
    authors = [a for a, _ in a2c.items() if not is_stoplisted(a, stoplist)]
    blocks: dict[tuple, list] = {}
    for author in authors:
        name, email = split_ident(author)
        local = email.split("@", 1)[0].lower()
        if local:
            blocks.setdefault(("e", local), []).append(author)
        if name:
            blocks.setdefault(("n", name.lower()), []).append(author)
    for author in authors:
        for path in file_weights(author, a2c, c2f):
            blocks.setdefault(("f", path), []).append(author)
    seen = set()
    for members in blocks.values():
        if len(members) > max_block:
            continue
        for pair in combinations(sorted(set(members)), 2):
            if pair not in seen:
                seen.add(pair)
                yield pair


def resolve_identities(authors, signals, thresholds: Thresholds = Thresholds(),
                       *, stoplist=DEFAULT_STOPLIST) -> Partition:
    """Merge author ids via threshold rule plus transitive closure.

    A pair merges when its emails are near-identical, or when both the
    names are close and the touched-file overlap is substantial.
    Stop-listed ids never merge.
    """
    uf = UnionFind()
    counts: dict[str, int] = {}
    for author in authors:
        uf.add(author)
    for sig in signals:
        a1, a2 = sig.pair
        counts[a1] = max(counts.get(a1, 0), sig.commit_count_a)
        counts[a2] = max(counts.get(a2, 0), sig.commit_count_b)
        if is_stoplisted(a1, stoplist) or is_stoplisted(a2, stoplist):
            continue
        _, email1 = split_ident(a1)
        _, email2 = split_ident(a2)
        name1, _ = split_ident(a1)
        name2, _ = split_ident(a2)
        email_rule = bool(email1) and bool(email2) and sig.email_sim >= thresholds.email
        name_rule = (bool(name1) and bool(name2)
                     and sig.name_sim >= thresholds.name
                     and sig.file_jaccard >= thresholds.file)
        if email_rule or name_rule:
            uf.union(a1, a2)

    def rep_key(author):
        return (-counts.get(author, 0), author)

    return Partition.from_classes(uf.classes(), rep_key)
