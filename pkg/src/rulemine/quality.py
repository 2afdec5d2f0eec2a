"""Static lint scoring and dynamic benchmarking of rules.

Lint applies a versioned check catalog (shipped as editable data) against a
base score of 100, deducting per-finding severities. The dynamic benchmark
drives an external scan engine through a command-template adapter and scores
matches against user-supplied goodware/malware corpora.
"""

from __future__ import annotations

import logging
import os
import platform
import re
import statistics
import subprocess
import tempfile
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .extract import RuleRecord, parse_string_declarations

log = logging.getLogger(__name__)


class EngineError(Exception):
    pass


@dataclass(frozen=True)
class LintCheck:
    check_id: str
    severity: int
    description: str
    enabled: bool = True


@dataclass
class LintCatalog:
    version: str
    checks: dict[str, LintCheck]

    @classmethod
    def load(cls, path=None) -> "LintCatalog":
        if path is None:
            text = resources.files("rulemine.data").joinpath("lint_catalog.yaml").read_text()
        else:
            text = Path(path).read_text()
        doc = yaml.safe_load(text)
        checks = {}
        for item in doc["checks"]:
            check = LintCheck(
                check_id=item["check_id"],
                severity=int(item["severity"]),
                description=item.get("description", ""),
                enabled=bool(item.get("enabled", True)),
            )
            if not 1 <= check.severity <= 70:
                raise ValueError(f"severity out of range for {check.check_id}")
            checks[check.check_id] = check
        return cls(version=str(doc.get("version", "0")), checks=checks)


@dataclass(frozen=True)
class LintFinding:
    rule_id: str
    check_id: str
    severity: int
    message: str


@dataclass(frozen=True)
class QualityScore:
    rule_id: str
    score: int


_META_ALIASES = {
    "missing-author-meta": ("author",),
    "missing-description-meta": ("description", "desc"),
    "missing-reference-meta": ("reference", "ref", "source", "url"),
}

_BROAD_ELEMENT_RE = re.compile(
    r"(?<!\\)(?:\.|\\[wWsSdD]|\[\^[^\]]*\])(?:\*|\+|\{\d+,\})"
)

_COND_REF_RE = re.compile(r"[$#@!]([A-Za-z0-9_]*)(\*)?")
_OF_THEM_RE = re.compile(r"\b(\d+|all|any)\s+of\s+them\b")


def _condition_findings(rule: RuleRecord, decls) -> list[str]:
    names = [d.identifier for d in decls]
    problems = []
    cond = rule.condition_text
    for m in _COND_REF_RE.finditer(cond):
        ident, wildcard = m.group(1), m.group(2)
        if wildcard:
            if not any(n.startswith(ident) for n in names):
                problems.append(f"no string matches wildcard ${ident}*")
        elif ident:
            if ident not in names:
                problems.append(f"undefined string ${ident}")
    for m in _OF_THEM_RE.finditer(cond):
        count = m.group(1)
        if count == "any" or count == "all":
            if not names:
                problems.append(f"'{count} of them' with no strings")
        elif int(count) > len(names):
            problems.append(f"'{count} of them' with only {len(names)} strings")
    return problems


def lint(rule: RuleRecord, catalog: LintCatalog | None = None) -> tuple[list[LintFinding], QualityScore]:
    """Apply the check catalog to one rule; returns findings and the score."""
    catalog = catalog or _default_catalog()
    decls = parse_string_declarations(rule.raw_text)
    meta_keys = {k.casefold() for k in rule.meta_keys}
    findings = []

    def hit(check_id: str, message: str):
        check = catalog.checks.get(check_id)
        if check is not None and check.enabled:
            findings.append(LintFinding(rule.rule_id, check_id, check.severity, message))

    for check_id, accepted in _META_ALIASES.items():
        if not any(key in meta_keys for key in accepted):
            hit(check_id, f"meta lacks {accepted[0]}")

    short = [d for d in decls if d.kind in ("text", "hex") and d.byte_length() < 4]
    if short:
        names = ", ".join("$" + d.identifier for d in short)
        hit("short-atom", f"atoms shorter than 4 bytes: {names}")

    broad = [
        d for d in decls
        if d.kind == "regex" and not d.value.startswith("^") and _BROAD_ELEMENT_RE.search(d.value)
    ]
    if broad:
        names = ", ".join("$" + d.identifier for d in broad)
        hit("broad-unanchored-regex", f"unanchored unbounded repetition: {names}")

    problems = _condition_findings(rule, decls)
    if problems:
        hit("inconsistent-condition", "; ".join(problems))

    misused = [
        d for d in decls
        if d.kind == "hex" and ("nocase" in d.modifiers or "fullword" in d.modifiers)
    ]
    if misused:
        names = ", ".join("$" + d.identifier for d in misused)
        hit("hex-modifier-misuse", f"nocase/fullword on hex strings: {names}")

    contents: dict[tuple[str, str], list[str]] = {}
    for d in decls:
        value = re.sub(r"\s+", "", d.value).casefold() if d.kind == "hex" else d.value
        contents.setdefault((d.kind, value), []).append(d.identifier)
    dupes = [ids for ids in contents.values() if len(ids) > 1]
    if dupes:
        flat = ", ".join("$" + i for ids in dupes for i in ids)
        hit("duplicate-string-content", f"identical string content: {flat}")

    total = sum(f.severity for f in findings)
    return findings, QualityScore(rule.rule_id, max(0, 100 - total))


_CATALOG_CACHE: LintCatalog | None = None


def _default_catalog() -> LintCatalog:
    global _CATALOG_CACHE
    if _CATALOG_CACHE is None:
        _CATALOG_CACHE = LintCatalog.load()
    return _CATALOG_CACHE


def detection_metrics(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall and F1 with the 0-denominator -> 0 convention."""
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


class CommandScanEngine:
    """Scan-engine adapter: a command template with {rules_file} and {target_dir}.

    The engine must print one "rule_name<TAB>file_path" line per match; a
    nonzero exit without any output is an engine error.
    """

    def __init__(self, command: list[str], timeout: float = 120.0):
        self.command = list(command)
        self.timeout = timeout

    def scan(self, rules_file, target_dir) -> list[tuple[str, str]]:
        argv = [
            part.format(rules_file=str(rules_file), target_dir=str(target_dir))
            for part in self.command
        ]
        try:
            proc = subprocess.run(
                argv, capture_output=True, text=True, timeout=self.timeout, check=False
            )
        except subprocess.TimeoutExpired as exc:
            raise EngineError(f"engine timed out after {self.timeout}s") from exc
        if proc.returncode != 0 and not proc.stdout:
            raise EngineError(f"engine failed ({proc.returncode}): {proc.stderr.strip()[:200]}")
        matches = []
        for line in proc.stdout.splitlines():
            if "\t" in line:
                rule_name, path = line.split("\t", 1)
                matches.append((rule_name.strip(), path.strip()))
        return matches


@dataclass
class BenchmarkResult:
    rule_id: str
    tp: int
    fp: int
    fn: int | None
    precision: float | None
    recall: float | None
    f1: float | None
    parse_ms: float
    scan_ms: float
    scan_cv: float
    matched: bool
    flags: tuple[str, ...] = ()


def run_benchmark(
    ruleset: list[RuleRecord],
    goodware_dir,
    malware_dir,
    engine: CommandScanEngine,
    repeats: int = 10,
    labels: dict[str, set[str]] | None = None,
) -> list[BenchmarkResult]:
    """Benchmark each rule in isolation against both corpora.

    Goodware matches count as false positives, malware matches as true
    positives. Per-rule recall appears only when ground-truth labels map the
    rule to its expected malware files; otherwise use corpus_recall().
    Timing comes from `repeats` repetitions; matches from the first run.
    """
    goodware_dir = Path(goodware_dir)
    malware_dir = Path(malware_dir)
    if not any(goodware_dir.iterdir()) or not any(malware_dir.iterdir()):
        raise ValueError("benchmark corpora directories must be non-empty")
    results = []
    with tempfile.TemporaryDirectory(prefix="rulemine-bench-") as tmp:
        empty_dir = Path(tmp) / "empty"
        empty_dir.mkdir()
        for rule in ruleset:
            rules_file = Path(tmp) / f"{rule.rule_id}.yar"
            header = "".join(f'import "{m}"\n' for m in dict.fromkeys(rule.imports))
            rules_file.write_text(header + rule.raw_text + "\n")

            try:
                parse_times = _timed_scans(engine, rules_file, empty_dir, repeats)
            except EngineError as exc:
                log.warning("rule %s failed to compile: %s", rule.name, exc)
                results.append(
                    BenchmarkResult(
                        rule_id=rule.rule_id, tp=0, fp=0, fn=None, precision=None,
                        recall=None, f1=None, parse_ms=0.0, scan_ms=0.0, scan_cv=0.0,
                        matched=False, flags=("compile-failure",),
                    )
                )
                continue

            try:
                good_matches, good_times = _matched_scan(engine, rules_file, goodware_dir, repeats)
                mal_matches, mal_times = _matched_scan(engine, rules_file, malware_dir, repeats)
            except EngineError as exc:
                log.warning("rule %s scan failed: %s", rule.name, exc)
                results.append(
                    BenchmarkResult(
                        rule_id=rule.rule_id, tp=0, fp=0, fn=None, precision=None,
                        recall=None, f1=None, parse_ms=statistics.mean(parse_times),
                        scan_ms=0.0, scan_cv=0.0, matched=False, flags=("scan-timeout",),
                    )
                )
                continue

            fp = len({path for _r, path in good_matches})
            matched_malware = {path for _r, path in mal_matches}
            tp = len(matched_malware)
            matched = (tp + fp) >= 1

            fn = recall = f1 = None
            precision = None
            if matched:
                precision = tp / (tp + fp)
            if labels is not None and rule.rule_id in labels:
                expected = {str(malware_dir / name) for name in labels[rule.rule_id]}
                caught = len(matched_malware & expected)
                fn = len(expected - matched_malware)
                _p, recall, f1 = detection_metrics(caught, fp, fn)

            scan_times = [g + m for g, m in zip(good_times, mal_times)]
            mean_scan = statistics.mean(scan_times)
            cv = statistics.pstdev(scan_times) / mean_scan if mean_scan > 0 else 0.0
            results.append(
                BenchmarkResult(
                    rule_id=rule.rule_id,
                    tp=tp,
                    fp=fp,
                    fn=fn,
                    precision=precision,
                    recall=recall,
                    f1=f1,
                    parse_ms=statistics.mean(parse_times),
                    scan_ms=mean_scan,
                    scan_cv=cv,
                    matched=matched,
                )
            )
    return results


def _timed_scans(engine, rules_file, target_dir, repeats) -> list[float]:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        engine.scan(rules_file, target_dir)
        times.append((time.perf_counter() - t0) * 1000)
    return times


def _matched_scan(engine, rules_file, target_dir, repeats):
    matches = None
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = engine.scan(rules_file, target_dir)
        times.append((time.perf_counter() - t0) * 1000)
        if matches is None:
            matches = out
    return matches or [], times


def aggregate_precision(results: list[BenchmarkResult]) -> float | None:
    """Pooled precision over rules that produced at least one match."""
    matched = [r for r in results if r.matched]
    if not matched:
        return None
    tp = sum(r.tp for r in matched)
    fp = sum(r.fp for r in matched)
    return tp / (tp + fp) if tp + fp else None


def corpus_recall(matched_malware: set[str], malware_files: int) -> float:
    """Share of malware samples matched by at least one rule.

    Per-rule recall needs ground-truth labels; this corpus-level figure is
    what an unlabeled malware directory supports. Feed it the union from
    matched_malware_union().
    """
    if malware_files == 0:
        raise ValueError("no malware samples")
    return len(matched_malware) / malware_files


def matched_malware_union(
    ruleset: list[RuleRecord], malware_dir, engine: CommandScanEngine
) -> set[str]:
    """All malware files matched by at least one rule (single batch scan)."""
    with tempfile.TemporaryDirectory(prefix="rulemine-union-") as tmp:
        rules_file = Path(tmp) / "all.yar"
        imports = dict.fromkeys(m for r in ruleset for m in r.imports)
        header = "".join(f'import "{m}"\n' for m in imports)
        rules_file.write_text(header + "\n".join(r.raw_text for r in ruleset) + "\n")
        matches = engine.scan(rules_file, malware_dir)
    return {path for _r, path in matches}


def rank_array(values) -> np.ndarray:
    """Average ranks (1-based) with ties sharing the mean rank."""
    arr = np.asarray(values, dtype=float)
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(arr.size, dtype=float)
    i = 0
    while i < arr.size:
        j = i
        while j + 1 < arr.size and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    """Spearman's rank correlation with average-rank tie handling."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size != ys.size or xs.size < 3:
        raise ValueError("spearman needs two equal-length vectors of size >= 3")
    rx = rank_array(xs)
    ry = rank_array(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    if denom == 0:
        raise ValueError("spearman is undefined for a constant vector")
    return float((rx * ry).sum() / denom)


def environment_info() -> dict:
    """Host metadata recorded in benchmark report headers."""
    mem_total_kb = None
    try:
        with open("/proc/meminfo") as fh:
            for line in fh:
                if line.startswith("MemTotal:"):
                    mem_total_kb = int(line.split()[1])
                    break
    except OSError:
        pass
    return {
        "cpu_count": os.cpu_count(),
        "machine": platform.machine(),
        "platform": platform.platform(),
        "python": platform.python_version(),
        "mem_total_kb": mem_total_kb,
    }
