"""End-to-end pipeline orchestration: staged runs, manifest, resumability.

Eight stages run in order, each reading only persisted artifacts of earlier
stages, so any stage can be re-run or resumed from disk. The manifest lists
every artifact with a content hash and carries no wall-clock data: identical
config and workspace produce byte-identical manifests at any worker count.
"""

from __future__ import annotations

import hashlib
import json
import logging
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path

import yaml

from . import cluster as cluster_mod
from . import coverage as coverage_mod
from . import ctph, history, ingest, metrics, quality, storage

log = logging.getLogger(__name__)

STAGES = ["extract", "hash", "cluster", "history", "metrics", "quality", "coverage", "report"]

DEPENDENCIES = {
    "extract": [],
    "hash": ["extract"],
    "cluster": ["hash"],
    "history": ["cluster"],
    "metrics": ["history"],
    "quality": ["cluster"],
    "coverage": ["history"],
    "report": ["metrics", "coverage"],
}


class ConfigError(Exception):
    pass


class StageError(Exception):
    pass


@dataclass(frozen=True)
class RepoSpec:
    owner: str
    name: str
    clone_url: str

    @property
    def repo_id(self) -> str:
        return f"{self.owner}/{self.name}"


@dataclass
class PipelineConfig:
    workspace: Path
    snapshot_time: datetime
    repos: list[RepoSpec] = field(default_factory=list)
    discovery_query: str | None = None
    hash_mode: str = ctph.MODE_LOGIC_ONLY
    similarity_threshold: int = 65
    distance_threshold: float = 0.35
    taxonomy_path: str | None = None
    disclosures_path: str | None = None
    lint_catalog_path: str | None = None
    engine_command: list[str] | None = None
    goodware_dir: str | None = None
    malware_dir: str | None = None
    seed: int = 0
    workers: int = 4

    def validate(self):
        if self.hash_mode not in (ctph.MODE_FULL, ctph.MODE_LOGIC_ONLY):
            raise ConfigError(f"bad hash_mode {self.hash_mode!r}")
        expected = 1 - self.similarity_threshold / 100
        if abs(self.distance_threshold - expected) > 1e-9:
            raise ConfigError(
                f"inconsistent thresholds: distance {self.distance_threshold} != "
                f"1 - {self.similarity_threshold}/100"
            )
        if self.snapshot_time.tzinfo is None:
            raise ConfigError("snapshot_time must be timezone-aware")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if (self.goodware_dir is None) != (self.malware_dir is None):
            raise ConfigError("goodware_dir and malware_dir must be set together")

    def digest(self) -> str:
        # workers excluded: parallelism must not change any output
        payload = {
            "snapshot_time": self.snapshot_time.isoformat(),
            "repos": [[r.owner, r.name, r.clone_url] for r in self.repos],
            "discovery_query": self.discovery_query,
            "hash_mode": self.hash_mode,
            "similarity_threshold": self.similarity_threshold,
            "distance_threshold": self.distance_threshold,
            "taxonomy_path": self.taxonomy_path,
            "disclosures_path": self.disclosures_path,
            "lint_catalog_path": self.lint_catalog_path,
            "engine_command": self.engine_command,
            "goodware_dir": self.goodware_dir,
            "malware_dir": self.malware_dir,
            "seed": self.seed,
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_file(cls, path, **overrides) -> "PipelineConfig":
        doc = yaml.safe_load(Path(path).read_text()) or {}
        doc.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(doc, base_dir=Path(path).parent)

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path | None = None) -> "PipelineConfig":
        base = base_dir or Path.cwd()
        try:
            workspace = Path(doc["workspace"])
            if not workspace.is_absolute():
                workspace = base / workspace
            snapshot = doc["snapshot_time"]
            if isinstance(snapshot, str):
                snapshot = datetime.fromisoformat(snapshot.replace("Z", "+00:00"))
            elif isinstance(snapshot, date) and not isinstance(snapshot, datetime):
                snapshot = datetime(snapshot.year, snapshot.month, snapshot.day, tzinfo=timezone.utc)
            repos = [
                RepoSpec(owner=r["owner"], name=r["name"], clone_url=r["clone_url"])
                for r in doc.get("repos", [])
            ]
            similarity = int(doc.get("similarity_threshold", 65))
            config = cls(
                workspace=workspace,
                snapshot_time=snapshot,
                repos=repos,
                discovery_query=doc.get("discovery_query"),
                hash_mode=str(doc.get("hash_mode", ctph.MODE_LOGIC_ONLY)).replace("-", "_"),
                similarity_threshold=similarity,
                distance_threshold=float(doc.get("distance_threshold", 1 - similarity / 100)),
                taxonomy_path=doc.get("taxonomy"),
                disclosures_path=doc.get("disclosures"),
                lint_catalog_path=doc.get("lint_catalog"),
                engine_command=doc.get("engine_command"),
                goodware_dir=doc.get("goodware_dir"),
                malware_dir=doc.get("malware_dir"),
                seed=int(doc.get("seed", 0)),
                workers=int(doc.get("workers", 4)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc
        config.validate()
        return config


def _repo_dir_id(dirname: str) -> str:
    return dirname.replace("__", "/")


class Pipeline:
    """Stage runner over one workspace."""

    def __init__(self, config: PipelineConfig):
        config.validate()
        self.config = config
        self.ws = Path(config.workspace)
        self.repos_dir = self.ws / "repos"
        self.artifacts = self.ws / "artifacts"
        self.ledger_path = self.ws / "ledger" / "clone_failures.jsonl"
        self._digest = config.digest()

    # --- plumbing ---------------------------------------------------------

    def _path(self, rel: str) -> Path:
        path = self.artifacts / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def repo_ids(self) -> list[str]:
        if not self.repos_dir.is_dir():
            return []
        return sorted(_repo_dir_id(p.name) for p in self.repos_dir.iterdir() if p.is_dir())

    def repo_path(self, repo_id: str) -> Path:
        return self.repos_dir / repo_id.replace("/", "__")

    def ensure_clones(self) -> int:
        """Clone configured repos that are not in the workspace yet.

        Returns the number of clone failures (ledgered, not fatal).
        """
        if not self.config.repos:
            return 0
        ledger = ingest.FailureLedger(self.ledger_path)
        refs = [
            ingest.RepoRef(
                host="local",
                owner=spec.owner,
                name=spec.name,
                clone_url=spec.clone_url,
                snapshot_time=self.config.snapshot_time,
            )
            for spec in self.config.repos
        ]
        handles = ingest.clone_many(refs, self.repos_dir, ledger, workers=self.config.workers)
        return len(refs) - len(handles)

    def load_all_records(self) -> dict[str, "object"]:
        records = {}
        for path in sorted((self.artifacts / "extraction").glob("*.jsonl")):
            for rec in storage.read_records(path):
                records[rec.rule_id] = rec
        return records

    def load_events(self) -> dict[str, list]:
        events = {}
        for path in sorted((self.artifacts / "history").glob("commits__*.jsonl")):
            repo_id = _repo_dir_id(path.stem.removeprefix("commits__"))
            events[repo_id] = storage.read_events(path)
        return events

    # --- stages -----------------------------------------------------------

    def stage_extract(self):
        repo_ids = self.repo_ids()
        if not repo_ids:
            raise StageError("no repositories in workspace; clone or configure repos first")

        def one(repo_id: str):
            root = self.repo_path(repo_id)
            candidates = ingest.select_candidate_files(root, repo_id)
            records = []
            from .extract import scan_file

            for cand in candidates:
                text = (root / cand.path).read_text(encoding="utf-8", errors="replace")
                records.extend(scan_file(text, (repo_id, cand.path)))
            return repo_id, records

        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            results = dict(pool.map(one, repo_ids))
        for repo_id in repo_ids:
            key = repo_id.replace("/", "__")
            storage.write_records(
                self._path(f"extraction/{key}.jsonl"), results[repo_id], self.config.seed, self._digest
            )
            storage.write_record_export(
                self._path(f"extraction/{key}.csv"), results[repo_id], self.config.seed, self._digest
            )

    def stage_hash(self):
        records = self.load_all_records()
        mode = self.config.hash_mode
        ids = sorted(records)

        def one(rule_id: str):
            return rule_id, ctph.hash_rule(records[rule_id].raw_text, mode)

        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            sigs = dict(pool.map(one, ids))
        storage.write_signatures(
            self._path("signatures/signatures.csv"), sigs, mode, self.config.seed, self._digest
        )

    def stage_cluster(self):
        records = self.load_all_records()
        sigs = storage.read_signatures(self.artifacts / "signatures/signatures.csv")
        members = [(rid, sigs[rid]) for rid in sorted(sigs)]
        clusters = cluster_mod.cluster_corpus(
            members, self.config.distance_threshold, blocked=True
        )

        # commit events feed inventory first_seen; persisted here, reused later
        events_by_repo = {}
        for repo_id in self.repo_ids():
            key = repo_id.replace("/", "__")
            out = self._path(f"history/commits__{key}.jsonl")
            try:
                events = history.extract_commit_events(self.repo_path(repo_id), repo_id)
            except history.HistoryError as exc:
                log.warning("history unavailable for %s: %s", repo_id, exc)
                events = []
            storage.write_events(out, events, self.config.seed, self._digest)
            events_by_repo[repo_id] = events
        index = history.HistoryIndex(events_by_repo)
        first_commits = {}
        for rid in sorted(records):
            rec = records[rid]
            touch = index.first_touch(rec.repo_id, rec.file_path)
            if touch is not None:
                first_commits[rid] = touch[0]

        inventory, matrix = cluster_mod.build_inventory(
            clusters, records, first_commits, mode=self.config.hash_mode
        )
        storage.write_inventory(
            self._path("clusters/inventory.jsonl"), inventory, self.config.seed, self._digest
        )
        storage.write_matrix(
            self._path("clusters/matrix.csv"), matrix, self.config.seed, self._digest
        )

    def stage_history(self):
        records = self.load_all_records()
        inventory = storage.read_inventory(
            self.artifacts / "clusters/inventory.jsonl", self.config.hash_mode
        )
        events_by_repo = self.load_events()
        index = history.HistoryIndex(events_by_repo)

        appearances = {}
        flagged = []
        for cid in sorted(inventory.entries):
            app = history.first_appearance(cid, inventory, records, index)
            if app is None:
                flagged.append(cid)
            else:
                appearances[cid] = app
        storage.write_appearances(
            self._path("history/first_appearance.csv"), appearances, self.config.seed, self._digest
        )
        storage.write_csv(
            self._path("history/flagged_clusters.csv"),
            ["cluster_id"],
            [{"cluster_id": cid} for cid in flagged],
            self.config.seed,
            self._digest,
        )

        classes = []
        for repo_id in self.repo_ids():
            try:
                rc = history.first_publisher_ratio(repo_id, inventory, appearances)
            except ValueError:
                continue
            classes.append(
                {
                    "repo": rc.repo_id,
                    "first_publisher_ratio": f"{rc.first_publisher_ratio:.6f}",
                    "class": rc.repo_class,
                }
            )
        storage.write_csv(
            self._path("history/repo_classes.csv"),
            ["repo", "first_publisher_ratio", "class"],
            classes,
            self.config.seed,
            self._digest,
        )

        lags = history.compute_lags(inventory, records, index, appearances)
        storage.write_lags(self._path("history/lag.csv"), lags, self.config.seed, self._digest)
        srf = history.single_rule_file_lag(inventory, records, index, appearances)
        storage.write_lags(
            self._path("history/lag_single_rule.csv"), srf.lags, self.config.seed, self._digest
        )
        storage.write_json(
            self._path("history/file_stats.json"),
            {
                "mean_rules_per_file": srf.mean_rules_per_file,
                "skew_flagged": sum(1 for lag in lags if lag.skew_flag),
            },
            self.config.seed,
            self._digest,
        )

        identities = history.normalize_authors(
            [e for events in events_by_repo.values() for e in events]
        )
        storage.write_authors(
            self._path("history/authors.jsonl"), identities, self.config.seed, self._digest
        )

    def stage_metrics(self):
        inventory = storage.read_inventory(
            self.artifacts / "clusters/inventory.jsonl", self.config.hash_mode
        )
        matrix = storage.read_matrix(self.artifacts / "clusters/matrix.csv")
        appearances = storage.read_appearances(self.artifacts / "history/first_appearance.csv")
        identities = storage.read_authors(self.artifacts / "history/authors.jsonl")
        events_by_repo = self.load_events()
        seed = self.config.seed

        per_repo_clusters: dict[str, int] = {}
        for repo, _cid in matrix.counts:
            per_repo_clusters[repo] = per_repo_clusters.get(repo, 0) + 1
        contribution = [per_repo_clusters[r] for r in sorted(per_repo_clusters)]
        cardinalities = [inventory.entries[cid].cardinality for cid in sorted(inventory.entries)]

        payload = {"seed": seed}
        lorenz_files = {}
        if contribution and sum(contribution) > 0:
            g = metrics.gini(contribution, seed=seed)
            payload["gini_contribution"] = {
                "g": g.g, "ci_low": g.ci_low, "ci_high": g.ci_high,
                "resamples": g.resamples, "seed": g.seed, "method": g.method,
            }
            lorenz_files["metrics/lorenz_contribution.csv"] = metrics.lorenz_curve(contribution)
        if cardinalities and sum(cardinalities) > 0:
            g = metrics.gini(cardinalities, seed=seed)
            payload["gini_popularity"] = {
                "g": g.g, "ci_low": g.ci_low, "ci_high": g.ci_high,
                "resamples": g.resamples, "seed": g.seed, "method": g.method,
            }
            lorenz_files["metrics/lorenz_popularity.csv"] = metrics.lorenz_curve(cardinalities)
        for rel, points in lorenz_files.items():
            storage.write_csv(
                self._path(rel),
                ["p", "L"],
                [{"p": f"{p:.9f}", "L": f"{l:.9f}"} for p, l in points],
                seed,
                self._digest,
            )

        table = history.identity_lookup(identities)
        influences = metrics.author_influence(appearances, inventory, table)
        if influences:
            k, curve = metrics.pareto_share(influences, 0.80)
            payload["pareto"] = {"authors_for_80pct": k, "authors_total": len(influences)}
            storage.write_csv(
                self._path("metrics/pareto.csv"),
                ["author_share", "impact_share"],
                [{"author_share": f"{a:.9f}", "impact_share": f"{b:.9f}"} for a, b in curve],
                seed,
                self._digest,
            )
            storage.write_csv(
                self._path("metrics/influence.csv"),
                ["author", "display_name", "productivity", "impact", "peak_impact"],
                [
                    {
                        "author": i.author.canonical_id,
                        "display_name": i.author.display_name,
                        "productivity": i.productivity,
                        "impact": i.impact,
                        "peak_impact": f"{i.peak_impact:.4f}",
                    }
                    for i in influences
                ],
                seed,
                self._digest,
            )

        payload["redundancy"] = metrics.redundancy_stats(inventory)
        payload["activity"] = metrics.activity_stats(
            self.repo_ids(), events_by_repo, self.config.snapshot_time
        )
        storage.write_json(self._path("metrics/metrics.json"), payload, seed, self._digest)

    def stage_quality(self) -> str:
        records = self.load_all_records()
        catalog = quality.LintCatalog.load(self.config.lint_catalog_path)
        rows = []
        for rid in sorted(records):
            findings, score = quality.lint(records[rid], catalog)
            rows.append(
                {
                    "rule_id": rid,
                    "name": records[rid].name,
                    "score": score.score,
                    "findings": ";".join(f.check_id for f in findings),
                }
            )
        storage.write_csv(
            self._path("quality/lint.csv"),
            ["rule_id", "name", "score", "findings"],
            rows,
            self.config.seed,
            self._digest,
        )

        if not (self.config.engine_command and self.config.goodware_dir and self.config.malware_dir):
            return "skipped"

        inventory = storage.read_inventory(
            self.artifacts / "clusters/inventory.jsonl", self.config.hash_mode
        )
        reps = sorted(inventory.entries[cid].representative for cid in inventory.entries)
        ruleset = [records[rid] for rid in reps]
        engine = quality.CommandScanEngine(self.config.engine_command)
        results = quality.run_benchmark(
            ruleset, self.config.goodware_dir, self.config.malware_dir, engine
        )
        lint_scores = {row["rule_id"]: row["score"] for row in rows}
        bench_rows = []
        for r in sorted(results, key=lambda r: r.rule_id):
            bench_rows.append(
                {
                    "rule_id": r.rule_id,
                    "score": lint_scores.get(r.rule_id, ""),
                    "tp": r.tp,
                    "fp": r.fp,
                    "precision": "" if r.precision is None else f"{r.precision:.6f}",
                    "parse_ms": f"{r.parse_ms:.3f}",
                    "scan_ms": f"{r.scan_ms:.3f}",
                    "scan_cv": f"{r.scan_cv:.4f}",
                    "matched": r.matched,
                    "flags": ";".join(r.flags),
                }
            )
        storage.write_csv(
            self._path("quality/benchmark.csv"),
            ["rule_id", "score", "tp", "fp", "precision", "parse_ms", "scan_ms",
             "scan_cv", "matched", "flags"],
            bench_rows,
            self.config.seed,
            self._digest,
        )

        goodware_files = sum(1 for p in Path(self.config.goodware_dir).iterdir() if p.is_file())
        matched = [r for r in results if r.matched]
        summary = {
            "engine": self.config.engine_command,
            "environment": quality.environment_info(),
            "catalog_version": catalog.version,
            "aggregate_precision": quality.aggregate_precision(results),
            "matched_rules": len(matched),
            "benchmarked_rules": len(results),
        }
        union = quality.matched_malware_union(
            ruleset, self.config.malware_dir, quality.CommandScanEngine(self.config.engine_command)
        )
        malware_files = sum(1 for p in Path(self.config.malware_dir).iterdir() if p.is_file())
        summary["corpus_recall"] = quality.corpus_recall(union, malware_files)
        if len(matched) >= 3 and goodware_files:
            fp_rates = [r.fp / goodware_files for r in matched]
            scan_times = [r.scan_ms for r in matched]
            try:
                summary["spearman_fp_vs_scan_ms"] = quality.spearman(fp_rates, scan_times)
            except ValueError:
                summary["spearman_fp_vs_scan_ms"] = None
        (self._path("quality/benchmark_env.json")).write_text(
            json.dumps(summary, sort_keys=True, indent=2) + "\n"
        )
        return "ok"

    def stage_coverage(self):
        records = self.load_all_records()
        inventory = storage.read_inventory(
            self.artifacts / "clusters/inventory.jsonl", self.config.hash_mode
        )
        taxonomy = coverage_mod.load_taxonomy(self.config.taxonomy_path)
        disclosures = coverage_mod.load_disclosures(self.config.disclosures_path)
        events = [e for evs in self.load_events().values() for e in evs]
        seed = self.config.seed

        assignments = coverage_mod.classify_inventory(inventory, records, taxonomy)
        storage.write_csv(
            self._path("coverage/assignments.csv"),
            ["cluster_id", "family", "matched_alias", "match_source"],
            [
                {
                    "cluster_id": cid,
                    "family": a.family,
                    "matched_alias": a.matched_alias or "",
                    "match_source": a.match_source or "",
                }
                for cid, a in sorted(assignments.items())
            ],
            seed,
            self._digest,
        )

        rows = coverage_mod.coverage_metrics(assignments, inventory, len(self.repo_ids()))
        timeline = coverage_mod.family_timeline(assignments, inventory)

        mttfr_rows = []
        mttfr_by_family = {}
        for family in sorted(disclosures):
            disclosure = disclosures[family]
            intents = coverage_mod.detect_intent_events(family, disclosure.aliases, events)
            rec = coverage_mod.mttfr(family, disclosure.date, intents)
            if rec is None:
                continue
            mttfr_by_family[family] = rec
            mttfr_rows.append(
                {
                    "family": rec.family,
                    "disclosure_date": rec.disclosure_date.isoformat(),
                    "first_rule_date": rec.first_rule_date.isoformat(),
                    "mttfr_days": rec.mttfr_days,
                    "predates_disclosure": rec.predates_disclosure,
                }
            )
        storage.write_csv(
            self._path("coverage/mttfr.csv"),
            ["family", "disclosure_date", "first_rule_date", "mttfr_days", "predates_disclosure"],
            mttfr_rows,
            seed,
            self._digest,
        )

        coverage_rows = []
        for family in sorted(rows):
            row = rows[family]
            fam_clusters = [
                inventory.entries[cid]
                for cid, a in assignments.items()
                if a.family == family
            ]
            first_seen = [e.first_seen for e in fam_clusters if e.first_seen is not None]
            cards = sorted(e.cardinality for e in fam_clusters)
            mt = mttfr_by_family.get(family)
            coverage_rows.append(
                {
                    "family": family,
                    "c_f": f"{row.c_f:.9f}",
                    "c_f_repo": f"{row.c_f_repo:.9f}",
                    "clusters": row.clusters,
                    "first_seen": min(first_seen).isoformat() if first_seen else "",
                    "median_cardinality": statistics.median(cards) if cards else "",
                    "mttfr_days": mt.mttfr_days if mt else "",
                }
            )
        storage.write_csv(
            self._path("coverage/coverage.csv"),
            ["family", "c_f", "c_f_repo", "clusters", "first_seen", "median_cardinality",
             "mttfr_days"],
            coverage_rows,
            seed,
            self._digest,
        )

        storage.write_csv(
            self._path("coverage/timeline.csv"),
            ["family", "first_seen", "cardinality"],
            [
                {"family": fam, "first_seen": ts.isoformat(), "cardinality": card}
                for fam in sorted(timeline)
                for ts, card in timeline[fam]
            ],
            seed,
            self._digest,
        )

        sample = coverage_mod.annotation_sample(assignments, records, inventory, seed=seed)
        storage.write_csv(
            self._path("coverage/annotation_sample.csv"),
            ["cluster_id", "rule_name", "family", "matched_alias", "match_source"],
            sample,
            seed,
            self._digest,
        )
        storage.write_json(
            self._path("coverage/versions.json"),
            {"taxonomy_version": taxonomy.version},
            seed,
            self._digest,
        )

    def stage_report(self):
        from . import report

        report.emit_plots(self.artifacts, seed=self.config.seed, digest=self._digest)

    # --- orchestration ------------------------------------------------------

    def run_stage(self, name: str) -> str:
        runner = getattr(self, f"stage_{name}")
        status = runner()
        return status or "ok"

    def run(self, resume: bool = True) -> dict:
        """Run all stages in order and write the manifest.

        A stage failure marks the stage failed and skips stages that depend
        on it (transitively); independent stages still run.
        """
        manifest_path = self.artifacts / "manifest.json"
        previous = None
        if resume and manifest_path.exists():
            try:
                candidate = storage.read_manifest(manifest_path)
                if candidate.get("config_digest") == self._digest:
                    previous = candidate
            except (OSError, json.JSONDecodeError):
                previous = None

        statuses: dict[str, str] = {}
        stage_files: dict[str, list[str]] = {}
        failed: set[str] = set()
        for name in STAGES:
            if any(dep in failed for dep in self._transitive_deps(name)):
                statuses[name] = "skipped-dependency"
                stage_files[name] = []
                continue
            prev_entry = _previous_ok_stage(previous, name) if previous else None
            if prev_entry is not None and all(
                (self.artifacts / art["path"]).exists() for art in prev_entry["artifacts"]
            ):
                statuses[name] = prev_entry["status"]
                stage_files[name] = [art["path"] for art in prev_entry["artifacts"]]
                continue
            snapshot = self._artifact_set()
            try:
                statuses[name] = self.run_stage(name)
            except Exception as exc:  # noqa: BLE001 - stage boundary
                log.error("stage %s failed: %s", name, exc)
                statuses[name] = "failed"
                failed.add(name)
            stage_files[name] = sorted(self._artifact_set() - snapshot)

        manifest = {
            "config_digest": self._digest,
            "seed": self.config.seed,
            "hash_mode": self.config.hash_mode,
            "similarity_threshold": self.config.similarity_threshold,
            "distance_threshold": self.config.distance_threshold,
            "stages": [
                {
                    "name": name,
                    "status": statuses[name],
                    "artifacts": [
                        {"path": rel, "sha256": storage.file_sha256(self.artifacts / rel)}
                        for rel in stage_files[name]
                        if (self.artifacts / rel).exists()
                    ],
                }
                for name in STAGES
            ],
        }
        listed = {art["path"] for stage in manifest["stages"] for art in stage["artifacts"]}
        unlisted = self._artifact_set() - listed
        manifest["unassigned"] = [
            {"path": rel, "sha256": storage.file_sha256(self.artifacts / rel)}
            for rel in sorted(unlisted)
        ]
        self.artifacts.mkdir(parents=True, exist_ok=True)
        storage.write_manifest(manifest_path, manifest)
        return manifest

    def _transitive_deps(self, name: str) -> set[str]:
        out = set()
        stack = list(DEPENDENCIES[name])
        while stack:
            dep = stack.pop()
            if dep not in out:
                out.add(dep)
                stack.extend(DEPENDENCIES[dep])
        return out

    def _artifact_set(self) -> set[str]:
        if not self.artifacts.is_dir():
            return set()
        return {
            p.relative_to(self.artifacts).as_posix()
            for p in self.artifacts.rglob("*")
            if p.is_file() and p.name != "manifest.json"
        }


def _previous_ok_stage(previous: dict, name: str) -> dict | None:
    for stage in previous.get("stages", []):
        if stage["name"] == name and stage["status"] in ("ok", "skipped"):
            return stage
    return None


def run_pipeline(config: PipelineConfig, resume: bool = True) -> dict:
    """Clone anything missing, run all stages, return the manifest."""
    pipeline = Pipeline(config)
    failures = pipeline.ensure_clones()
    manifest = pipeline.run(resume=resume)
    manifest["clone_failures"] = failures
    return manifest


# --- read-only queries -------------------------------------------------------

def query(artifact_dir, selector: str, **params) -> list[dict]:
    """Read-only lookups over persisted artifacts."""
    artifacts = Path(artifact_dir)
    if selector == "clusters-by-author":
        author = params["author"]
        identities = storage.read_authors(artifacts / "history/authors.jsonl")
        matching = {
            i.canonical_id
            for i in identities
            if author == i.canonical_id
            or author == i.display_name
            or any(author in alias for alias in i.aliases)
        }
        table = {}
        for ident in identities:
            for alias in ident.aliases:
                table[alias] = ident.canonical_id
        out = []
        for row in storage.read_csv(artifacts / "history/first_appearance.csv"):
            cid = table.get((row["author_name"], row["author_email"]))
            if cid in matching:
                out.append(row)
        return out
    if selector == "noisy-rules":
        max_score = int(params.get("max_score", 70))
        min_fp = int(params.get("min_fp", 1))
        lint_rows = {row["rule_id"]: row for row in storage.read_csv(artifacts / "quality/lint.csv")}
        out = []
        for row in storage.read_csv(artifacts / "quality/benchmark.csv"):
            score_text = row.get("score") or lint_rows.get(row["rule_id"], {}).get("score")
            if score_text in (None, ""):
                continue
            if int(score_text) < max_score and int(row["fp"]) >= min_fp:
                out.append(row)
        return out
    if selector == "cluster":
        cid = params["cluster_id"]
        for row in storage.read_jsonl(artifacts / "clusters/inventory.jsonl"):
            if row["cluster_id"] == cid:
                return [row]
        return []
    raise ValueError(f"unknown selector {selector!r}")
