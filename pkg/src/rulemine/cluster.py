"""Unique-rule-logic clustering: blocking plus average-linkage agglomeration.

Distances live on an integer grid (hundredths, d = 100 - similarity) and all
average-distance comparisons are done with exact integer cross-multiplication,
so merge order, tie-breaking and therefore cluster inventories are fully
deterministic and identical across re-runs and worker counts.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from datetime import datetime

from . import ctph
from .extract import RuleRecord

DEFAULT_DISTANCE_THRESHOLD = 0.35


class CalibrationError(Exception):
    pass


def block_partition(signatures: dict[str, ctph.FuzzySignature]) -> dict[str, list[str]]:
    """Partition rule ids into blocks keyed by signature block key."""
    blocks: dict[str, list[str]] = {}
    for rule_id in sorted(signatures):
        blocks.setdefault(signatures[rule_id].block_key, []).append(rule_id)
    return blocks


def cluster_block(
    members: list[tuple[str, ctph.FuzzySignature]],
    distance_threshold: float = DEFAULT_DISTANCE_THRESHOLD,
) -> list[list[str]]:
    """Average-linkage agglomerative clustering of one block.

    Merging continues while the minimum inter-cluster average distance does
    not exceed the threshold. Ties on the average are broken by merging the
    lexicographically smallest pair of cluster ids, a cluster's id being its
    smallest member rule_id. Returns sorted member lists, sorted by id.
    """
    threshold_h = round(distance_threshold * 100)
    ids = [rid for rid, _sig in members]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate rule ids in block")
    if not members:
        return []

    sigs = dict(members)
    clusters: dict[str, list[str]] = {rid: [rid] for rid in ids}
    sizes: dict[str, int] = {rid: 1 for rid in ids}
    # cross-pair distance sums between clusters, in integer hundredths
    sums: dict[tuple[str, str], int] = {}
    ordered = sorted(ids)
    for i, a in enumerate(ordered):
        for b in ordered[i + 1 :]:
            sums[(a, b)] = 100 - ctph.similarity(sigs[a], sigs[b])

    while len(clusters) > 1:
        best = None  # (total, count, id_a, id_b)
        for (a, b), total in sums.items():
            count = sizes[a] * sizes[b]
            if best is None:
                best = (total, count, a, b)
                continue
            bt, bc, ba, bb = best
            lhs = total * bc
            rhs = bt * count
            if lhs < rhs or (lhs == rhs and (a, b) < (ba, bb)):
                best = (total, count, a, b)
        total, count, a, b = best
        if total > threshold_h * count:
            break
        keep, gone = (a, b) if a < b else (b, a)
        clusters[keep] = sorted(clusters[keep] + clusters.pop(gone))
        sizes[keep] += sizes.pop(gone)
        del sums[(a, b)]
        for other in list(clusters):
            if other == keep:
                continue
            s = 0
            for pair in ((other, keep), (keep, other), (other, gone), (gone, other)):
                if pair in sums:
                    s += sums.pop(pair)
            key = (other, keep) if other < keep else (keep, other)
            sums[key] = s
    return sorted(sorted(m) for m in clusters.values())


def cluster_corpus(
    members: list[tuple[str, ctph.FuzzySignature]],
    distance_threshold: float = DEFAULT_DISTANCE_THRESHOLD,
    blocked: bool = True,
) -> list[list[str]]:
    """Cluster a whole corpus, with or without block partitioning."""
    if not blocked:
        return cluster_block(members, distance_threshold)
    sigs = dict(members)
    blocks = block_partition(sigs)
    clusters: list[list[str]] = []
    for key in sorted(blocks):
        clusters.extend(cluster_block([(rid, sigs[rid]) for rid in blocks[key]], distance_threshold))
    return sorted(clusters)


def pairwise_f1(clusters_a: list[list[str]], clusters_b: list[list[str]]) -> float:
    """Pairwise F1 between two clusterings of the same items."""
    def pairs(clusters):
        out = set()
        for members in clusters:
            ms = sorted(members)
            for i, x in enumerate(ms):
                for y in ms[i + 1 :]:
                    out.add((x, y))
        return out

    pa, pb = pairs(clusters_a), pairs(clusters_b)
    if not pa and not pb:
        return 1.0
    if not pa or not pb:
        return 0.0
    inter = len(pa & pb)
    precision = inter / len(pa)
    recall = inter / len(pb)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass
class SoundnessReport:
    """Blocking cost versus unblocked full-matrix clustering."""

    pairwise_f1: float
    split_pairs: list[tuple[str, str]]


def blocking_soundness(
    members: list[tuple[str, ctph.FuzzySignature]],
    distance_threshold: float = DEFAULT_DISTANCE_THRESHOLD,
) -> SoundnessReport:
    """Quantify what blocking loses against clustering the full matrix."""
    blocked = cluster_corpus(members, distance_threshold, blocked=True)
    full = cluster_corpus(members, distance_threshold, blocked=False)

    def pair_set(clusters):
        out = set()
        for ms in clusters:
            for i, x in enumerate(ms):
                for y in ms[i + 1 :]:
                    out.add((x, y))
        return out

    blocked_pairs = pair_set(blocked)
    full_pairs = pair_set(full)
    split = sorted(full_pairs - blocked_pairs)
    return SoundnessReport(pairwise_f1=pairwise_f1(blocked, full), split_pairs=split)


@dataclass(frozen=True)
class ClusterEntry:
    cluster_id: str
    members: tuple[str, ...]
    representative: str
    repos: tuple[str, ...]
    first_seen: datetime | None
    missing_commit_data: bool

    @property
    def cardinality(self) -> int:
        return len(self.repos)

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass
class ClusterInventory:
    entries: dict[str, ClusterEntry] = field(default_factory=dict)
    mode: str = ctph.MODE_LOGIC_ONLY

    def __iter__(self):
        return iter(sorted(self.entries))

    def __len__(self):
        return len(self.entries)


@dataclass
class IncidenceMatrix:
    counts: dict[tuple[str, str], int] = field(default_factory=dict)

    def row_sums(self) -> dict[str, int]:
        sums: dict[str, int] = {}
        for (repo, _cid), n in self.counts.items():
            sums[repo] = sums.get(repo, 0) + n
        return sums

    def column_support(self) -> dict[str, int]:
        support: dict[str, int] = {}
        for (_repo, cid), _n in self.counts.items():
            support[cid] = support.get(cid, 0) + 1
        return support


def _cluster_content_id(canonical_texts: list[str]) -> str:
    digest = hashlib.sha256()
    for text in sorted(set(canonical_texts)):
        digest.update(text.encode("utf-8"))
        digest.update(b"\x00")
    return digest.hexdigest()[:16]


def build_inventory(
    clusters: list[list[str]],
    records: dict[str, RuleRecord],
    first_commits: dict[str, datetime] | None = None,
    mode: str = ctph.MODE_LOGIC_ONLY,
) -> tuple[ClusterInventory, IncidenceMatrix]:
    """Assemble the cluster inventory and repository-cluster incidence matrix.

    Cluster ids are content hashes of the sorted member canonical texts, so
    they are stable across re-runs and survive corpus growth for unchanged
    clusters. The representative is the member with the earliest first commit
    (ties and missing commit data fall back to lexicographic rule_id).
    """
    first_commits = first_commits or {}
    seen = [rid for cluster in clusters for rid in cluster]
    if len(seen) != len(set(seen)):
        raise ValueError("clusters do not partition the rule set")

    inventory = ClusterInventory(mode=mode)
    matrix = IncidenceMatrix()
    for members in clusters:
        texts = [ctph.canonicalize(records[rid].raw_text, mode).text for rid in members]
        cid = _cluster_content_id(texts)
        missing = [rid for rid in members if rid not in first_commits]

        def commit_key(rid):
            ts = first_commits.get(rid)
            return (ts is None, ts if ts is not None else datetime.min, rid)

        representative = min(members, key=commit_key)
        repos = tuple(sorted({records[rid].repo_id for rid in members}))
        known = [first_commits[rid] for rid in members if rid in first_commits]
        entry = ClusterEntry(
            cluster_id=cid,
            members=tuple(sorted(members)),
            representative=representative,
            repos=repos,
            first_seen=min(known) if known else None,
            missing_commit_data=bool(missing),
        )
        if cid in inventory.entries:
            raise ValueError(f"cluster content hash collision for {cid}")
        inventory.entries[cid] = entry
        for rid in members:
            key = (records[rid].repo_id, cid)
            matrix.counts[key] = matrix.counts.get(key, 0) + 1
    return inventory, matrix


@dataclass(frozen=True)
class BenchmarkEntry:
    entry_id: str
    text: str
    label: str  # original | variant | mirage
    parent_id: str | None = None


@dataclass
class LabeledBenchmark:
    entries: list[BenchmarkEntry]

    def __post_init__(self):
        by_id = {e.entry_id: e for e in self.entries}
        for e in self.entries:
            if e.label not in ("original", "variant", "mirage"):
                raise ValueError(f"bad label {e.label!r} for {e.entry_id}")
            if e.label in ("variant", "mirage"):
                parent = by_id.get(e.parent_id)
                if parent is None or parent.label != "original":
                    raise ValueError(f"{e.entry_id} references missing original {e.parent_id!r}")

    def originals(self):
        return [e for e in self.entries if e.label == "original"]

    def variants(self):
        return [e for e in self.entries if e.label == "variant"]

    def mirages(self):
        return [e for e in self.entries if e.label == "mirage"]


@dataclass(frozen=True)
class ThresholdScore:
    threshold: int
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


def calibrate_threshold(
    benchmark: LabeledBenchmark,
    mode: str = ctph.MODE_LOGIC_ONLY,
    sweep: list[int] | None = None,
) -> tuple[int, list[ThresholdScore]]:
    """Sweep similarity thresholds against a labeled benchmark.

    A variant is a true positive at threshold t when its similarity to its
    parent original reaches t; a variant or mirage is a false positive when
    its similarity to any non-parent original reaches t. The best threshold
    maximizes F1, ties going to the higher threshold.
    """
    sweep = sweep if sweep is not None else list(range(30, 96, 5))
    variants = benchmark.variants()
    if not variants:
        raise CalibrationError("benchmark has no variants; recall is undefined")

    sigs = {e.entry_id: ctph.hash_rule(e.text, mode) for e in benchmark.entries}
    originals = benchmark.originals()

    parent_sim: dict[str, int] = {}
    best_nonparent: dict[str, int] = {}
    for e in variants + benchmark.mirages():
        scores = {o.entry_id: ctph.similarity(sigs[e.entry_id], sigs[o.entry_id]) for o in originals}
        if e.label == "variant":
            parent_sim[e.entry_id] = scores[e.parent_id]
        nonparent = [s for oid, s in scores.items() if oid != e.parent_id]
        best_nonparent[e.entry_id] = max(nonparent) if nonparent else 0

    results = []
    for t in sweep:
        tp = sum(1 for e in variants if parent_sim[e.entry_id] >= t)
        fn = len(variants) - tp
        fp = sum(1 for eid, s in best_nonparent.items() if s >= t)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / len(variants)
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        results.append(ThresholdScore(t, tp, fp, fn, precision, recall, f1))

    best = max(results, key=lambda r: (r.f1, r.threshold))
    return best.threshold, results
