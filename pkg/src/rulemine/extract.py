"""Rule extraction from candidate files: header matching plus brace balancing.

Rules are located with the canonical header pattern and delimited by walking
to the balancing close brace, skipping braces that sit inside comments,
string literals or regex literals. Extraction is pure and deterministic; a
malformed tail yields diagnostics instead of records.
"""

from __future__ import annotations

import hashlib
import logging
import math
import random
import re
from dataclasses import dataclass, field

from .textspans import BLOCK_COMMENT, LINE_COMMENT, blank_noncode, noncode_spans, strip_noncode

log = logging.getLogger(__name__)

HEADER_RE = re.compile(r"^\s*((private|global)?\s*rule\s+([A-Za-z0-9_]+))\b", re.MULTILINE)
IMPORT_RE = re.compile(r'^\s*import\s+"([^"\n]+)"', re.MULTILINE)
_SECTION_RE = re.compile(r"\b(meta|strings|condition)\s*:")
_META_LINE_RE = re.compile(
    r'^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*("(?:\\.|[^"\\\n])*"|true|false|-?\d+)\s*$'
)
_STRING_DECL_RE = re.compile(r"\$[A-Za-z0-9_]*\s*=")
_WS_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class RuleRecord:
    """One extracted rule occurrence."""

    rule_id: str
    repo_id: str
    file_path: str
    name: str
    modifier: str  # none | private | global
    raw_text: str
    byte_span: tuple[int, int]
    meta: tuple[tuple[str, str], ...]
    string_count: int
    condition_text: str
    imports: tuple[str, ...]

    @property
    def meta_keys(self) -> tuple[str, ...]:
        return tuple(k for k, _v in self.meta)

    def condition_hash(self) -> str:
        return hashlib.sha256(normalize_condition(self.condition_text).encode()).hexdigest()[:16]


def _rule_id(repo_id: str, path: str, span: tuple[int, int]) -> str:
    key = f"{repo_id}:{path}:{span[0]}:{span[1]}"
    return hashlib.sha256(key.encode()).hexdigest()[:16]


def _unquote(value: str) -> str:
    if len(value) >= 2 and value[0] == '"' and value[-1] == '"':
        return value[1:-1].replace('\\"', '"').replace("\\\\", "\\")
    return value


def normalize_condition(text: str) -> str:
    """Comparison form of a condition: comments stripped, whitespace removed."""
    return _WS_RE.sub("", strip_noncode(text))


def find_sections(body_blanked: str) -> dict[str, int]:
    """Offsets of the first meta/strings/condition keyword in a blanked body."""
    found = {}
    for m in _SECTION_RE.finditer(body_blanked):
        found.setdefault(m.group(1), m.start())
    return found


def _meta_span(raw_text: str, blanked: str) -> tuple[int, int] | None:
    """(start, end) of the meta section contents within the rule text."""
    sections = find_sections(blanked)
    if "meta" not in sections:
        return None
    start = blanked.index(":", sections["meta"]) + 1
    following = [v for k, v in sections.items() if k != "meta" and v > sections["meta"]]
    end = min(following) if following else raw_text.rfind("}")
    if end < start:
        return None
    return start, end


def meta_section_span(raw_text: str) -> tuple[int, int] | None:
    """Span covering 'meta:' through the end of its entries, or None."""
    blanked = blank_noncode(raw_text)
    span = _meta_span(raw_text, blanked)
    if span is None:
        return None
    sections = find_sections(blanked)
    return sections["meta"], span[1]


def parse_meta_block(raw_text: str, diagnostics: list[str] | None = None) -> list[tuple[str, str]]:
    """Ordered (key, value) pairs from a rule's meta block; [] when absent."""
    spans = noncode_spans(raw_text)
    blanked = blank_noncode(raw_text, spans)
    span = _meta_span(raw_text, blanked)
    if span is None:
        return []
    start, end = span
    # blank comments only: values must survive, trailing comments must not
    comment_spans = [s for s in spans if s[2] in (LINE_COMMENT, BLOCK_COMMENT)]
    decommented = blank_noncode(raw_text, comment_spans)
    pairs = []
    for line in decommented[start:end].split("\n"):
        if not line.strip():
            continue
        m = _META_LINE_RE.match(line)
        if not m:
            if diagnostics is not None:
                diagnostics.append(f"unparseable meta line: {line.strip()!r}")
            continue
        pairs.append((m.group(1), _unquote(m.group(2))))
    return pairs


def _count_strings(body_blanked: str) -> int:
    sections = find_sections(body_blanked)
    if "strings" not in sections:
        return 0
    start = body_blanked.index(":", sections["strings"]) + 1
    end = sections.get("condition", len(body_blanked))
    return len(_STRING_DECL_RE.findall(body_blanked[start:end]))


@dataclass(frozen=True)
class StringDecl:
    """One declaration from a rule's strings section."""

    identifier: str  # without the $ sigil; "" for anonymous strings
    kind: str  # text | hex | regex
    value: str  # unquoted text, hex body, or regex body
    modifiers: tuple[str, ...]

    def byte_length(self) -> int:
        """Unescaped length of text strings, byte-token count for hex."""
        if self.kind == "text":
            return len(re.sub(r"\\x[0-9A-Fa-f]{2}|\\.", ".", self.value))
        if self.kind == "hex":
            return len(re.findall(r"[0-9A-Fa-f?]{2}", self.value))
        return len(self.value)


_DECL_HEAD_RE = re.compile(r"\$([A-Za-z0-9_]*)\s*=\s*")
_MODIFIER_RE = re.compile(r"\s*([a-z][a-z0-9_]*)(\([^)]*\))?")
_KNOWN_MODIFIERS = {
    "nocase", "wide", "ascii", "xor", "base64", "base64wide", "fullword", "private"
}


def parse_string_declarations(raw_text: str) -> list[StringDecl]:
    """Parse the declarations of a rule's strings section, in source order."""
    spans = noncode_spans(raw_text)
    blanked = blank_noncode(raw_text, spans)
    sections = find_sections(blanked)
    if "strings" not in sections:
        return []
    start = blanked.index(":", sections["strings"]) + 1
    end = sections.get("condition", len(blanked))
    decls = []
    for m in _DECL_HEAD_RE.finditer(blanked, start, end):
        vpos = m.end()
        ch = raw_text[vpos] if vpos < len(raw_text) else ""
        if ch == '"':
            vm = re.match(r'"((?:\\.|[^"\\\n])*)"', raw_text[vpos:])
            if not vm:
                continue
            kind, value = "text", vm.group(1)
            after = vpos + vm.end()
        elif ch == "{":
            close = raw_text.find("}", vpos)
            if close == -1:
                continue
            kind, value = "hex", raw_text[vpos + 1 : close].strip()
            after = close + 1
        elif ch == "/":
            vm = re.match(r"/((?:\\.|[^/\\\n])*)/[is]*", raw_text[vpos:])
            if not vm:
                continue
            kind, value = "regex", vm.group(1)
            after = vpos + vm.end()
        else:
            continue
        modifiers = []
        pos = after
        while True:
            mm = _MODIFIER_RE.match(blanked, pos, end)
            if not mm or mm.group(1) not in _KNOWN_MODIFIERS:
                break
            modifiers.append(mm.group(1))
            pos = mm.end()
        decls.append(StringDecl(m.group(1), kind, value, tuple(modifiers)))
    return decls


def _condition_slice(raw_text: str, blanked: str) -> str:
    sections = find_sections(blanked)
    if "condition" not in sections:
        return ""
    start = blanked.index(":", sections["condition"]) + 1
    end = raw_text.rfind("}")
    if end <= start:
        end = len(raw_text)
    return raw_text[start:end].strip()


def file_imports(content: str, blanked: str | None = None) -> tuple[str, ...]:
    """All module names imported at file level, in source order."""
    if blanked is None:
        blanked = blank_noncode(content)
    names = []
    for m in IMPORT_RE.finditer(content):
        # the keyword itself must be in code context
        kw = m.start() + m.group(0).index("import")
        if blanked[kw : kw + 6] == "import":
            names.append(m.group(1))
    return tuple(names)


def scan_file(
    content: str | bytes,
    provenance: tuple[str, str],
    diagnostics: list[str] | None = None,
) -> list[RuleRecord]:
    """Extract every rule from one file's content, ordered by byte offset."""
    if isinstance(content, bytes):
        content = content.decode("utf-8", errors="replace")
    repo_id, path = provenance
    spans = noncode_spans(content)
    blanked = blank_noncode(content, spans)
    imports = file_imports(content, blanked)

    records = []
    cursor = 0
    for m in HEADER_RE.finditer(blanked):
        start = m.start(1)
        if start < cursor:
            continue  # header text inside a previous rule body
        open_idx = blanked.find("{", m.end(1))
        if open_idx == -1:
            _diag(diagnostics, f"{path}: rule {m.group(3)!r} has no opening brace")
            continue
        next_header = HEADER_RE.search(blanked, m.end(1))
        if next_header is not None and next_header.start(1) < open_idx:
            _diag(diagnostics, f"{path}: rule {m.group(3)!r} has no body")
            continue
        depth = 0
        close_idx = -1
        for i in range(open_idx, len(blanked)):
            ch = blanked[i]
            if ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    close_idx = i
                    break
        if close_idx == -1:
            _diag(diagnostics, f"{path}: rule {m.group(3)!r} unbalanced braces at EOF")
            continue

        span = (start, close_idx + 1)
        raw_text = content[span[0] : span[1]]
        body_blanked = blanked[span[0] : span[1]]
        meta_diags: list[str] = []
        meta = parse_meta_block(raw_text, meta_diags)
        for msg in meta_diags:
            _diag(diagnostics, f"{path}: {msg}")
        records.append(
            RuleRecord(
                rule_id=_rule_id(repo_id, path, span),
                repo_id=repo_id,
                file_path=path,
                name=m.group(3),
                modifier=m.group(2) or "none",
                raw_text=raw_text,
                byte_span=span,
                meta=tuple(meta),
                string_count=_count_strings(body_blanked),
                condition_text=_condition_slice(raw_text, body_blanked),
                imports=imports,
            )
        )
        cursor = close_idx + 1
    return records


def _diag(diagnostics: list[str] | None, message: str) -> None:
    if diagnostics is not None:
        diagnostics.append(message)
    log.warning("%s", message)


@dataclass
class AgreementReport:
    """Outcome of cross-validating extraction against an oracle parser."""

    sample_size: int
    fields_compared: list[str]
    agreement_rate: float
    mismatches: list[tuple[str, str, object, object]] = field(default_factory=list)
    oracle_failures: list[str] = field(default_factory=list)


_COMPARED_FIELDS = ["name", "modifier", "imports", "string_count", "meta_keys", "condition"]


def cross_validate(
    records: list[RuleRecord],
    oracle,
    sample_fraction: float,
    seed: int = 0,
    file_loader=None,
) -> AgreementReport:
    """Compare a seeded sample of records against a formal-parser oracle.

    The oracle adapter receives file paths; its records are paired with ours
    by position within each file. Files the oracle fails on are excluded from
    the denominator and reported separately.
    """
    if not 0 < sample_fraction <= 1:
        raise ValueError("sample_fraction must be in (0, 1]")
    rng = random.Random(seed)
    k = max(1, math.ceil(sample_fraction * len(records)))
    sample = records if k >= len(records) else rng.sample(records, k)

    by_file: dict[tuple[str, str], list[RuleRecord]] = {}
    for rec in records:
        by_file.setdefault((rec.repo_id, rec.file_path), []).append(rec)
    for recs in by_file.values():
        recs.sort(key=lambda r: r.byte_span[0])

    sampled_ids = {rec.rule_id for rec in sample}
    mismatching = set()
    mismatches = []
    failures = []
    denominator = 0
    for key in sorted({(rec.repo_id, rec.file_path) for rec in sample}):
        file_records = by_file[key]
        path = file_loader(*key) if file_loader else key[1]
        try:
            oracle_rules = oracle.parse_file(path)
        except Exception as exc:  # noqa: BLE001 - oracle crash contract
            failures.append(f"{key[1]}: {exc}")
            continue
        for idx, rec in enumerate(file_records):
            if rec.rule_id not in sampled_ids:
                continue
            denominator += 1
            if idx >= len(oracle_rules):
                mismatching.add(rec.rule_id)
                mismatches.append((rec.rule_id, "presence", rec.name, None))
                continue
            orule = oracle_rules[idx]
            checks = [
                ("name", rec.name, orule.name),
                ("modifier", rec.modifier, orule.modifier),
                ("imports", tuple(rec.imports), tuple(orule.imports)),
                ("string_count", rec.string_count, orule.string_count),
                ("meta_keys", tuple(rec.meta_keys), tuple(orule.meta_keys)),
                (
                    "condition",
                    normalize_condition(rec.condition_text),
                    orule.condition_compact,
                ),
            ]
            for fname, ours, theirs in checks:
                if ours != theirs:
                    mismatching.add(rec.rule_id)
                    mismatches.append((rec.rule_id, fname, ours, theirs))
    rate = 1.0 if denominator == 0 else 1.0 - len(mismatching) / denominator
    return AgreementReport(
        sample_size=denominator,
        fields_compared=list(_COMPARED_FIELDS),
        agreement_rate=rate,
        mismatches=mismatches,
        oracle_failures=failures,
    )
