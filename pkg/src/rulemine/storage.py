"""Flat-file persistence for pipeline artifacts.

Everything is columnar CSV or JSON lines so stages are independently
inspectable and resumable. Writers are deterministic: fixed field order,
sorted rows, no wall-clock timestamps. Each file starts with a header
comment recording the seed and config digest of the producing run.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from datetime import datetime, timezone
from pathlib import Path

from .cluster import ClusterEntry, ClusterInventory, IncidenceMatrix
from .ctph import FuzzySignature
from .extract import RuleRecord
from .history import AuthorIdentity, CommitEvent, FirstAppearance, LagRecord


def _header_line(seed: int, digest: str) -> str:
    return f"# rulemine seed={seed} config={digest}\n"


def write_csv(path, fieldnames: list[str], rows: list[dict], seed: int, digest: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    buf.write(_header_line(seed, digest))
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    path.write_text(buf.getvalue())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


def write_jsonl(path, rows: list[dict], seed: int, digest: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(_header_line(seed, digest))
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_jsonl(path) -> list[dict]:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append(json.loads(line))
    return rows


def write_json(path, payload: dict, seed: int, digest: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"_meta": {"seed": seed, "config": digest}, **payload}
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _iso(ts: datetime | None) -> str:
    return ts.astimezone(timezone.utc).isoformat() if ts is not None else ""


def _parse_iso(text: str) -> datetime | None:
    return datetime.fromisoformat(text) if text else None


# --- rule records ----------------------------------------------------------

def record_to_dict(rec: RuleRecord) -> dict:
    return {
        "rule_id": rec.rule_id,
        "repo_id": rec.repo_id,
        "file_path": rec.file_path,
        "name": rec.name,
        "modifier": rec.modifier,
        "raw_text": rec.raw_text,
        "span_start": rec.byte_span[0],
        "span_end": rec.byte_span[1],
        "meta": [list(kv) for kv in rec.meta],
        "string_count": rec.string_count,
        "condition_text": rec.condition_text,
        "imports": list(rec.imports),
    }


def record_from_dict(row: dict) -> RuleRecord:
    return RuleRecord(
        rule_id=row["rule_id"],
        repo_id=row["repo_id"],
        file_path=row["file_path"],
        name=row["name"],
        modifier=row["modifier"],
        raw_text=row["raw_text"],
        byte_span=(row["span_start"], row["span_end"]),
        meta=tuple((k, v) for k, v in row["meta"]),
        string_count=row["string_count"],
        condition_text=row["condition_text"],
        imports=tuple(row["imports"]),
    )


def write_records(path, records: list[RuleRecord], seed: int, digest: str):
    rows = [record_to_dict(r) for r in sorted(records, key=lambda r: (r.file_path, r.byte_span))]
    write_jsonl(path, rows, seed, digest)


def read_records(path) -> list[RuleRecord]:
    return [record_from_dict(row) for row in read_jsonl(path)]


EXPORT_FIELDS = [
    "rule_id", "repo", "path", "span_start", "span_end", "name", "modifier",
    "string_count", "imports", "meta", "condition_hash",
]


def write_record_export(path, records: list[RuleRecord], seed: int, digest: str):
    """The delimited per-repo extraction export (no raw text)."""
    rows = []
    for rec in sorted(records, key=lambda r: (r.file_path, r.byte_span)):
        rows.append(
            {
                "rule_id": rec.rule_id,
                "repo": rec.repo_id,
                "path": rec.file_path,
                "span_start": rec.byte_span[0],
                "span_end": rec.byte_span[1],
                "name": rec.name,
                "modifier": rec.modifier,
                "string_count": rec.string_count,
                "imports": ";".join(rec.imports),
                "meta": ";".join(f"{k}={v}" for k, v in rec.meta),
                "condition_hash": rec.condition_hash(),
            }
        )
    write_csv(path, EXPORT_FIELDS, rows, seed, digest)


# --- signatures -------------------------------------------------------------

SIGNATURE_FIELDS = ["rule_id", "mode", "blocksize", "sig1", "sig2", "block_key", "serialized"]


def write_signatures(path, sigs: dict[str, FuzzySignature], mode: str, seed: int, digest: str):
    rows = []
    for rule_id in sorted(sigs):
        sig = sigs[rule_id]
        rows.append(
            {
                "rule_id": rule_id,
                "mode": mode,
                "blocksize": sig.blocksize,
                "sig1": sig.sig1,
                "sig2": sig.sig2,
                "block_key": sig.block_key,
                "serialized": sig.serialize(),
            }
        )
    write_csv(path, SIGNATURE_FIELDS, rows, seed, digest)


def read_signatures(path) -> dict[str, FuzzySignature]:
    return {row["rule_id"]: FuzzySignature.parse(row["serialized"]) for row in read_csv(path)}


# --- inventory and matrix ---------------------------------------------------

def write_inventory(path, inventory: ClusterInventory, seed: int, digest: str):
    rows = []
    for cid in sorted(inventory.entries):
        e = inventory.entries[cid]
        rows.append(
            {
                "cluster_id": e.cluster_id,
                "size": e.size,
                "cardinality": e.cardinality,
                "first_seen": _iso(e.first_seen),
                "representative": e.representative,
                "member_rule_ids": list(e.members),
                "repos": list(e.repos),
                "missing_commit_data": e.missing_commit_data,
            }
        )
    write_jsonl(path, rows, seed, digest)


def read_inventory(path, mode: str = "logic_only") -> ClusterInventory:
    inventory = ClusterInventory(mode=mode)
    for row in read_jsonl(path):
        entry = ClusterEntry(
            cluster_id=row["cluster_id"],
            members=tuple(row["member_rule_ids"]),
            representative=row["representative"],
            repos=tuple(row["repos"]),
            first_seen=_parse_iso(row["first_seen"]),
            missing_commit_data=row["missing_commit_data"],
        )
        inventory.entries[entry.cluster_id] = entry
    return inventory


def write_matrix(path, matrix: IncidenceMatrix, seed: int, digest: str):
    rows = [
        {"repo": repo, "cluster_id": cid, "count": count}
        for (repo, cid), count in sorted(matrix.counts.items())
    ]
    write_csv(path, ["repo", "cluster_id", "count"], rows, seed, digest)


def read_matrix(path) -> IncidenceMatrix:
    matrix = IncidenceMatrix()
    for row in read_csv(path):
        matrix.counts[(row["repo"], row["cluster_id"])] = int(row["count"])
    return matrix


# --- history ----------------------------------------------------------------

def write_events(path, events: list[CommitEvent], seed: int, digest: str):
    rows = [
        {
            "repo_id": e.repo_id,
            "commit_id": e.commit_id,
            "author_name": e.author_name,
            "author_email": e.author_email,
            "timestamp": _iso(e.timestamp),
            "files_touched": [list(ft) for ft in e.files_touched],
            "message": e.message,
            "renames": [list(rn) for rn in e.renames],
        }
        for e in events
    ]
    write_jsonl(path, rows, seed, digest)


def read_events(path) -> list[CommitEvent]:
    return [
        CommitEvent(
            repo_id=row["repo_id"],
            commit_id=row["commit_id"],
            author_name=row["author_name"],
            author_email=row["author_email"],
            timestamp=_parse_iso(row["timestamp"]),
            files_touched=tuple((p, k) for p, k in row["files_touched"]),
            message=row["message"],
            renames=tuple((a, b) for a, b in row["renames"]),
        )
        for row in read_jsonl(path)
    ]


APPEARANCE_FIELDS = ["cluster_id", "repo", "timestamp", "commit", "author_name", "author_email"]


def write_appearances(path, apps: dict[str, FirstAppearance], seed: int, digest: str):
    rows = [
        {
            "cluster_id": cid,
            "repo": a.repo_id,
            "timestamp": _iso(a.timestamp),
            "commit": a.commit_id,
            "author_name": a.author_name,
            "author_email": a.author_email,
        }
        for cid, a in sorted(apps.items())
    ]
    write_csv(path, APPEARANCE_FIELDS, rows, seed, digest)


def read_appearances(path) -> dict[str, FirstAppearance]:
    out = {}
    for row in read_csv(path):
        out[row["cluster_id"]] = FirstAppearance(
            cluster_id=row["cluster_id"],
            repo_id=row["repo"],
            timestamp=_parse_iso(row["timestamp"]),
            commit_id=row["commit"],
            author_name=row["author_name"],
            author_email=row["author_email"],
        )
    return out


LAG_FIELDS = [
    "cluster_id", "source_repo", "mirror_repo", "lag_days", "single_rule_file", "skew_flag",
]


def write_lags(path, lags: list[LagRecord], seed: int, digest: str):
    rows = [
        {
            "cluster_id": lag.cluster_id,
            "source_repo": lag.source_repo,
            "mirror_repo": lag.mirror_repo,
            "lag_days": lag.lag_days,
            "single_rule_file": lag.single_rule_file,
            "skew_flag": lag.skew_flag,
        }
        for lag in sorted(lags, key=lambda g: (g.cluster_id, g.mirror_repo))
    ]
    write_csv(path, LAG_FIELDS, rows, seed, digest)


def write_authors(path, identities: list[AuthorIdentity], seed: int, digest: str):
    rows = [
        {
            "canonical_id": ident.canonical_id,
            "display_name": ident.display_name,
            "aliases": sorted(list(a) for a in ident.aliases),
        }
        for ident in sorted(identities, key=lambda i: i.canonical_id)
    ]
    write_jsonl(path, rows, seed, digest)


def read_authors(path) -> list[AuthorIdentity]:
    return [
        AuthorIdentity(
            canonical_id=row["canonical_id"],
            display_name=row["display_name"],
            aliases=frozenset((n, e) for n, e in row["aliases"]),
        )
        for row in read_jsonl(path)
    ]


# --- manifest ---------------------------------------------------------------

def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(path, manifest: dict):
    path = Path(path)
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
