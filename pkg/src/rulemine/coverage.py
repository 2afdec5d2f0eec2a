"""Malware-family taxonomy classification, coverage metrics and reaction time."""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from datetime import date, datetime
from importlib import resources
from pathlib import Path

import yaml

from .cluster import ClusterInventory
from .extract import RuleRecord
from .history import CommitEvent

RULE_NAME_RE = re.compile(r"rule\s+([^\s:{]+)")
HEADER_RE = re.compile(r"rule\s+[^\s{]+(?:\s*:\s*([^{\n]+))?")
META_BLOCK_RE = re.compile(r"meta:\s*(.*?)\s*(?:strings:|condition:)", re.S | re.I)

_TOKEN_SPLIT_RE = re.compile(r"[^a-z0-9]+")

CANDIDATE_RULE_EXTENSIONS = {".yar", ".yara", ".rule", ".rules", ".sig", ".yarasig"}


@dataclass(frozen=True)
class Family:
    name: str
    aliases: tuple[str, ...]


@dataclass
class TaxonomyConfig:
    version: str
    families: list[Family]

    def __post_init__(self):
        seen: dict[str, str] = {}
        for fam in self.families:
            if not fam.aliases:
                raise ValueError(f"family {fam.name} has no aliases")
            for alias in fam.aliases:
                if alias != alias.casefold():
                    raise ValueError(f"alias {alias!r} must be lowercase")
                if alias in seen:
                    raise ValueError(f"alias {alias!r} in both {seen[alias]} and {fam.name}")
                seen[alias] = fam.name

    def alias_map(self) -> dict[str, str]:
        return {alias: fam.name for fam in self.families for alias in fam.aliases}

    def aliases_for(self, family: str) -> tuple[str, ...]:
        for fam in self.families:
            if fam.name == family:
                return fam.aliases
        raise KeyError(family)


def load_taxonomy(path=None) -> TaxonomyConfig:
    if path is None:
        text = resources.files("rulemine.data").joinpath("taxonomy.yaml").read_text()
    else:
        text = Path(path).read_text()
    doc = yaml.safe_load(text)
    families = [
        Family(name=item["name"], aliases=tuple(item["aliases"])) for item in doc["families"]
    ]
    return TaxonomyConfig(version=str(doc.get("version", "0")), families=families)


@dataclass(frozen=True)
class Disclosure:
    family: str
    date: date
    aliases: tuple[str, ...]
    citation: str = ""


def load_disclosures(path=None) -> dict[str, Disclosure]:
    if path is None:
        text = resources.files("rulemine.data").joinpath("disclosures.yaml").read_text()
    else:
        text = Path(path).read_text()
    doc = yaml.safe_load(text)
    out = {}
    for item in doc["families"]:
        value = item["date"]
        when = value if isinstance(value, date) else date.fromisoformat(str(value))
        aliases = tuple(item.get("aliases") or (item["family"].casefold(),))
        if any(a != a.casefold() for a in aliases):
            raise ValueError(f"disclosure aliases must be lowercase for {item['family']}")
        out[item["family"]] = Disclosure(
            family=item["family"], date=when, aliases=aliases, citation=item.get("citation", "")
        )
    return out


@dataclass(frozen=True)
class FamilyAssignment:
    cluster_id: str
    family: str  # family name or "unclassified"
    matched_alias: str | None
    match_source: str | None  # rule_name | header | meta


def _tokens(text: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT_RE.split(text.casefold()) if t]


def _match_source(tokens: list[str], ordered_aliases: list[str]) -> str | None:
    token_set = set(tokens)
    for alias in ordered_aliases:
        if alias in token_set or any(alias in tok for tok in token_set):
            return alias
    return None


def classify(
    rule: RuleRecord,
    taxonomy: TaxonomyConfig,
    subject_id: str | None = None,
) -> FamilyAssignment:
    """Assign a rule (or the cluster it represents) to a malware family.

    Token sources are checked with rule_name > header > meta precedence;
    within a source the longest alias wins, ties alphabetical.
    """
    alias_map = taxonomy.alias_map()
    ordered = sorted(alias_map, key=lambda a: (-len(a), a))

    sources = []
    name_m = RULE_NAME_RE.search(rule.raw_text)
    sources.append(("rule_name", _tokens(name_m.group(1)) if name_m else []))
    header_m = HEADER_RE.search(rule.raw_text)
    header_tags = header_m.group(1) if header_m and header_m.group(1) else ""
    sources.append(("header", _tokens(header_tags)))
    meta_text = " ".join(v for _k, v in rule.meta)
    sources.append(("meta", _tokens(meta_text)))

    for source_name, tokens in sources:
        if not tokens:
            continue
        alias = _match_source(tokens, ordered)
        if alias is not None:
            return FamilyAssignment(
                cluster_id=subject_id or rule.rule_id,
                family=alias_map[alias],
                matched_alias=alias,
                match_source=source_name,
            )
    return FamilyAssignment(
        cluster_id=subject_id or rule.rule_id,
        family="unclassified",
        matched_alias=None,
        match_source=None,
    )


def classify_inventory(
    inventory: ClusterInventory,
    records: dict[str, RuleRecord],
    taxonomy: TaxonomyConfig,
) -> dict[str, FamilyAssignment]:
    """Classify every cluster by its representative rule."""
    out = {}
    for cid in sorted(inventory.entries):
        entry = inventory.entries[cid]
        out[cid] = classify(records[entry.representative], taxonomy, subject_id=cid)
    return out


@dataclass(frozen=True)
class CoverageRow:
    family: str
    c_f: float
    c_f_repo: float
    clusters: int


def coverage_metrics(
    assignments: dict[str, FamilyAssignment],
    inventory: ClusterInventory,
    repo_count: int,
) -> dict[str, CoverageRow]:
    """Depth (share of UR) and breadth (share of repos) per family.

    Unclassified clusters stay in the denominator and get their own row, so
    the c_f column sums to 1 exactly.
    """
    total = len(assignments)
    if total == 0:
        return {}
    by_family: dict[str, list[str]] = {}
    for cid, a in assignments.items():
        by_family.setdefault(a.family, []).append(cid)
    rows = {}
    for family in sorted(by_family):
        cids = by_family[family]
        repos = set()
        for cid in cids:
            repos.update(inventory.entries[cid].repos)
        rows[family] = CoverageRow(
            family=family,
            c_f=len(cids) / total,
            c_f_repo=len(repos) / repo_count if repo_count else 0.0,
            clusters=len(cids),
        )
    return rows


def family_timeline(
    assignments: dict[str, FamilyAssignment], inventory: ClusterInventory
) -> dict[str, list[tuple[datetime, int]]]:
    """Per-family (first_seen, cardinality) points, sorted by date."""
    timeline: dict[str, list[tuple[datetime, int]]] = {}
    for cid, a in assignments.items():
        entry = inventory.entries[cid]
        if a.family == "unclassified" or entry.first_seen is None:
            continue
        timeline.setdefault(a.family, []).append((entry.first_seen, entry.cardinality))
    for points in timeline.values():
        points.sort()
    return timeline


@dataclass(frozen=True)
class IntentEvent:
    repo_id: str
    commit_id: str
    timestamp: datetime
    trigger: str  # message | filename
    matched_alias: str
    detail: str


def detect_intent_events(
    family: str,
    aliases: tuple[str, ...],
    events: list[CommitEvent],
    candidate_paths: set[str] | None = None,
) -> list[IntentEvent]:
    """Commits that signal detection intent for a family.

    A commit qualifies when its message contains an alias (case-insensitive,
    word-boundary) or when it adds/modifies a candidate rule file whose
    basename contains an alias. Bulk imports that touch many files without
    alias-bearing names produce no events.
    """
    message_res = [
        (alias, re.compile(rf"\b{re.escape(alias)}\b", re.IGNORECASE)) for alias in aliases
    ]
    out = []
    for ev in events:
        hit = None
        for alias, rx in message_res:
            if rx.search(ev.message):
                hit = IntentEvent(
                    ev.repo_id, ev.commit_id, ev.timestamp, "message", alias, ev.message
                )
                break
        if hit is None:
            for path, kind in ev.files_touched:
                if kind == "deleted":
                    continue
                if candidate_paths is not None and path not in candidate_paths:
                    continue
                if candidate_paths is None:
                    suffix = "." + path.rsplit(".", 1)[1].lower() if "." in path else ""
                    if suffix not in CANDIDATE_RULE_EXTENSIONS:
                        continue
                basename = path.rsplit("/", 1)[-1].casefold()
                for alias in aliases:
                    if alias in basename:
                        hit = IntentEvent(
                            ev.repo_id, ev.commit_id, ev.timestamp, "filename", alias, path
                        )
                        break
                if hit:
                    break
        if hit:
            out.append(hit)
    out.sort(key=lambda e: (e.timestamp, e.repo_id, e.commit_id))
    return out


@dataclass(frozen=True)
class MTTFRRecord:
    family: str
    disclosure_date: date
    first_rule_date: date
    mttfr_days: int
    predates_disclosure: bool


def mttfr(
    family: str, disclosure_date: date, intent_events: list[IntentEvent]
) -> MTTFRRecord | None:
    """Days from public disclosure to the first detection-intent commit.

    Negative deltas (rule predates the recorded disclosure) are flagged but
    not clamped. Returns None when the family has no intent events at all.
    """
    if not intent_events:
        return None
    first = min(e.timestamp for e in intent_events).date()
    delta = (first - disclosure_date).days
    return MTTFRRecord(
        family=family,
        disclosure_date=disclosure_date,
        first_rule_date=first,
        mttfr_days=delta,
        predates_disclosure=delta < 0,
    )


def annotation_sample(
    assignments: dict[str, FamilyAssignment],
    records: dict[str, RuleRecord],
    inventory: ClusterInventory,
    fraction: float = 0.1,
    seed: int = 0,
) -> list[dict]:
    """Seeded sample of assignments exported for external manual validation."""
    rng = random.Random(seed)
    cids = sorted(assignments)
    k = max(1, round(fraction * len(cids))) if cids else 0
    out = []
    for cid in sorted(rng.sample(cids, k)) if k else []:
        a = assignments[cid]
        rep = inventory.entries[cid].representative
        out.append(
            {
                "cluster_id": cid,
                "rule_name": records[rep].name,
                "family": a.family,
                "matched_alias": a.matched_alias or "",
                "match_source": a.match_source or "",
            }
        )
    return out
