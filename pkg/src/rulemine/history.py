"""Commit-history mining: first publishers, source/mirror classes, technical lag.

All history access goes through the version-control tool's plumbing via
subprocess; repositories must be full (non-shallow) clones. Cross-repo
aggregation is single-threaded over sorted event streams so results are
deterministic regardless of how event extraction was parallelized.
"""

from __future__ import annotations

import hashlib
import logging
import subprocess
from dataclasses import dataclass
from datetime import datetime, timezone

from .cluster import ClusterInventory
from .extract import RuleRecord

log = logging.getLogger(__name__)

SOURCE_RATIO = 0.80
MIRROR_RATIO = 0.20


class HistoryError(Exception):
    pass


@dataclass(frozen=True)
class CommitEvent:
    repo_id: str
    commit_id: str
    author_name: str
    author_email: str
    timestamp: datetime
    files_touched: tuple[tuple[str, str], ...]  # (path, added|modified|deleted)
    message: str = ""
    renames: tuple[tuple[str, str], ...] = ()  # (old_path, new_path)


def _git(repo_path, *args: str) -> str:
    proc = subprocess.run(
        ["git", "-C", str(repo_path), *args],
        capture_output=True,
        text=True,
        errors="replace",
        check=False,
    )
    if proc.returncode != 0:
        raise HistoryError(f"git {' '.join(args[:2])} failed: {proc.stderr.strip()[:200]}")
    return proc.stdout


_KIND = {"A": "added", "M": "modified", "D": "deleted"}


def extract_commit_events(repo_path, repo_id: str) -> list[CommitEvent]:
    """File-level commit events in commit-time order, author timestamps.

    Merge commits are diffed against their first parent and attributed to
    their own author and timestamp. Renames are recorded as modifications of
    the new path; rename chains are resolved by file_commit_index.
    """
    out = _git(
        repo_path,
        "log",
        "--reverse",
        "--diff-merges=first-parent",
        "--name-status",
        "--format=%x01%H%x02%an%x02%ae%x02%at%x02%s",
    )
    events = []
    for chunk in out.split("\x01"):
        if not chunk.strip():
            continue
        header, _, body = chunk.partition("\n")
        commit_id, author_name, author_email, at, message = header.split("\x02", 4)
        files = []
        renames = []
        for line in body.splitlines():
            if not line.strip():
                continue
            parts = line.split("\t")
            status = parts[0]
            if status[0] in _KIND and len(parts) == 2:
                files.append((parts[1], _KIND[status[0]]))
            elif status[0] in "RC" and len(parts) == 3:
                files.append((parts[2], "modified"))
                if status[0] == "R":
                    renames.append((parts[1], parts[2]))
        if not files:
            continue
        events.append(
            CommitEvent(
                repo_id=repo_id,
                commit_id=commit_id,
                author_name=author_name,
                author_email=author_email,
                timestamp=datetime.fromtimestamp(int(at), tz=timezone.utc),
                files_touched=tuple(files),
                message=message,
                renames=tuple(renames),
            )
        )
    events.sort(key=lambda e: (e.timestamp, e.commit_id))
    return events


def file_commit_index(events: list[CommitEvent]) -> dict[str, list[tuple[datetime, str, str]]]:
    """Map current file path -> chronological (timestamp, commit, kind) list.

    Renames recorded in the history fold the old path's timeline into the
    new path's, so the index answers "which commits touched the file now at
    this path" across renames.
    """
    timelines: dict[str, list[tuple[datetime, str, str]]] = {}
    for ev in events:
        renamed_from = {new: old for old, new in ev.renames}
        for path, kind in ev.files_touched:
            if path in renamed_from:
                old = renamed_from[path]
                timelines[path] = timelines.pop(old, []) + [(ev.timestamp, ev.commit_id, kind)]
            else:
                timelines.setdefault(path, []).append((ev.timestamp, ev.commit_id, kind))
    return timelines


class HistoryIndex:
    """Per-repo file timelines plus commit lookup, built once per run."""

    def __init__(self, events_by_repo: dict[str, list[CommitEvent]]):
        self.events_by_repo = events_by_repo
        self.file_index = {
            repo: file_commit_index(events) for repo, events in events_by_repo.items()
        }
        self._commits = {
            (e.repo_id, e.commit_id): e for evs in events_by_repo.values() for e in evs
        }

    def first_touch(
        self, repo_id: str, path: str, kinds: tuple[str, ...] = ("added", "modified")
    ) -> tuple[datetime, str] | None:
        for ts, commit, kind in self.file_index.get(repo_id, {}).get(path, []):
            if kind in kinds:
                return ts, commit
        return None

    def commit(self, repo_id: str, commit_id: str) -> CommitEvent | None:
        return self._commits.get((repo_id, commit_id))


@dataclass(frozen=True)
class FirstAppearance:
    cluster_id: str
    repo_id: str
    timestamp: datetime
    commit_id: str
    author_name: str
    author_email: str


def first_appearance(
    cluster_id: str,
    inventory: ClusterInventory,
    records: dict[str, RuleRecord],
    index: HistoryIndex,
) -> FirstAppearance | None:
    """Earliest commit adding/modifying a file holding a member of the cluster.

    Ties break on (timestamp, repo_id, commit_id). Returns None when no member
    file maps to any commit; callers must flag and exclude such clusters.
    """
    entry = inventory.entries[cluster_id]
    candidates = []
    for rid in entry.members:
        rec = records[rid]
        touch = index.first_touch(rec.repo_id, rec.file_path)
        if touch is not None:
            candidates.append((touch[0], rec.repo_id, touch[1]))
    if not candidates:
        return None
    ts, repo_id, commit_id = min(candidates)
    ev = index.commit(repo_id, commit_id)
    return FirstAppearance(
        cluster_id=cluster_id,
        repo_id=repo_id,
        timestamp=ts,
        commit_id=commit_id,
        author_name=ev.author_name if ev else "",
        author_email=ev.author_email if ev else "",
    )


@dataclass(frozen=True)
class RepoClassification:
    repo_id: str
    first_publisher_ratio: float
    repo_class: str  # source | mirror | mixed


def classify_repo(ratio: float) -> str:
    if ratio >= SOURCE_RATIO:
        return "source"
    if ratio <= MIRROR_RATIO:
        return "mirror"
    return "mixed"


def first_publisher_ratio(
    repo_id: str,
    inventory: ClusterInventory,
    appearances: dict[str, FirstAppearance],
) -> RepoClassification:
    """Share of the repo's clusters that first appeared in that repo."""
    contained = [cid for cid, e in inventory.entries.items() if repo_id in e.repos]
    if not contained:
        raise ValueError(f"repository {repo_id} contains no clusters")
    first_here = sum(
        1 for cid in contained if cid in appearances and appearances[cid].repo_id == repo_id
    )
    ratio = first_here / len(contained)
    return RepoClassification(repo_id, ratio, classify_repo(ratio))


@dataclass(frozen=True)
class LagRecord:
    cluster_id: str
    source_repo: str
    source_time: datetime
    mirror_repo: str
    adoption_time: datetime
    lag_days: int
    skew_flag: bool
    single_rule_file: bool = False


def technical_lag(
    cluster_id: str,
    mirror_repo: str,
    inventory: ClusterInventory,
    records: dict[str, RuleRecord],
    index: HistoryIndex,
    source: FirstAppearance,
    only_paths: set[str] | None = None,
    single_rule_file: bool = False,
) -> LagRecord | None:
    """Earliest commit in the mirror touching a file holding the cluster.

    Negative deltas (clock skew, rebases, shallow imports) clamp to zero and
    carry a flag. Returns None when the mirror has no qualifying commit.
    """
    entry = inventory.entries[cluster_id]
    touches = []
    for rid in entry.members:
        rec = records[rid]
        if rec.repo_id != mirror_repo:
            continue
        if only_paths is not None and rec.file_path not in only_paths:
            continue
        touch = index.first_touch(mirror_repo, rec.file_path)
        if touch is not None:
            touches.append(touch[0])
    if not touches:
        return None
    adoption = min(touches)
    delta_days = (adoption - source.timestamp).days
    skew = delta_days < 0
    return LagRecord(
        cluster_id=cluster_id,
        source_repo=source.repo_id,
        source_time=source.timestamp,
        mirror_repo=mirror_repo,
        adoption_time=adoption,
        lag_days=max(0, delta_days),
        skew_flag=skew,
        single_rule_file=single_rule_file,
    )


def compute_lags(
    inventory: ClusterInventory,
    records: dict[str, RuleRecord],
    index: HistoryIndex,
    appearances: dict[str, FirstAppearance],
    only_single_rule_files: bool = False,
) -> list[LagRecord]:
    """All (cluster, mirror) lags; mirrors are repos other than the source."""
    single_paths = None
    if only_single_rule_files:
        counts: dict[tuple[str, str], int] = {}
        for rec in records.values():
            key = (rec.repo_id, rec.file_path)
            counts[key] = counts.get(key, 0) + 1
        single_paths = {key for key, n in counts.items() if n == 1}

    lags = []
    for cid in sorted(inventory.entries):
        if cid not in appearances:
            continue
        source = appearances[cid]
        for repo in inventory.entries[cid].repos:
            if repo == source.repo_id:
                continue
            paths = None
            if single_paths is not None:
                paths = {p for (r, p) in single_paths if r == repo}
            lag = technical_lag(
                cid,
                repo,
                inventory,
                records,
                index,
                source,
                only_paths=paths,
                single_rule_file=only_single_rule_files,
            )
            if lag is not None:
                lags.append(lag)
    return lags


@dataclass
class SingleRuleFileLag:
    lags: list[LagRecord]
    mean_rules_per_file: float


def single_rule_file_lag(
    inventory: ClusterInventory,
    records: dict[str, RuleRecord],
    index: HistoryIndex,
    appearances: dict[str, FirstAppearance],
) -> SingleRuleFileLag:
    """Lag distribution restricted to files containing exactly one rule."""
    counts: dict[tuple[str, str], int] = {}
    for rec in records.values():
        key = (rec.repo_id, rec.file_path)
        counts[key] = counts.get(key, 0) + 1
    mean_rules = sum(counts.values()) / len(counts) if counts else 0.0
    lags = compute_lags(inventory, records, index, appearances, only_single_rule_files=True)
    return SingleRuleFileLag(lags=lags, mean_rules_per_file=mean_rules)


@dataclass(frozen=True)
class AuthorIdentity:
    canonical_id: str
    display_name: str
    aliases: frozenset[tuple[str, str]]  # (name, email)


class _UnionFind:
    def __init__(self):
        self.parent: dict = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _noreply_username(email: str) -> str | None:
    local, _, domain = email.partition("@")
    if "noreply" not in domain.lower():
        return None
    if "+" in local:
        local = local.rsplit("+", 1)[1]
    return local.casefold()


def normalize_authors(events: list[CommitEvent]) -> list[AuthorIdentity]:
    """Merge author aliases: exact email, exact multi-token name, no-reply usernames.

    Merging is deliberately conservative (exact matches only) so that distinct
    authors are never folded together by fuzzy heuristics.
    """
    pairs = sorted({(e.author_name, e.author_email) for e in events})
    uf = _UnionFind()
    for p in pairs:
        uf.find(p)

    by_email: dict[str, list] = {}
    by_name: dict[str, list] = {}
    by_local: dict[str, list] = {}
    for name, email in pairs:
        if email:
            by_email.setdefault(email.casefold(), []).append((name, email))
            local = email.partition("@")[0].casefold()
            if _noreply_username(email) is None:
                by_local.setdefault(local, []).append((name, email))
        if len(name.split()) >= 2:
            by_name.setdefault(name.casefold(), []).append((name, email))

    for group in list(by_email.values()) + list(by_name.values()):
        for other in group[1:]:
            uf.union(group[0], other)
    for name, email in pairs:
        username = _noreply_username(email)
        if username:
            for other in by_local.get(username, ()):
                uf.union((name, email), other)

    groups: dict = {}
    for p in pairs:
        groups.setdefault(uf.find(p), []).append(p)

    name_counts: dict[str, int] = {}
    for e in events:
        key = (e.author_name, e.author_email)
        name_counts[key] = name_counts.get(key, 0) + 1

    identities = []
    for members in groups.values():
        counted: dict[str, int] = {}
        for name, email in members:
            counted[name] = counted.get(name, 0) + name_counts.get((name, email), 0)
        display = max(sorted(counted), key=lambda n: counted[n])
        digest = hashlib.sha256(repr(sorted(members)).encode()).hexdigest()[:12]
        identities.append(
            AuthorIdentity(
                canonical_id=digest,
                display_name=display,
                aliases=frozenset(members),
            )
        )
    identities.sort(key=lambda i: i.canonical_id)
    return identities


def identity_lookup(identities: list[AuthorIdentity]) -> dict[tuple[str, str], AuthorIdentity]:
    table = {}
    for ident in identities:
        for alias in ident.aliases:
            table[alias] = ident
    return table
