"""Lexical span scanning for YARA rule source text.

A single forward scan classifies the regions of a source file that must not
be treated as code: line and block comments, double-quoted string literals
(with backslash escapes) and regex literals. Both the rule extractor and the
canonicalizer work from these spans so that braces, rule headers and section
keywords inside comments or literals are never acted on.
"""

from __future__ import annotations

import bisect

LINE_COMMENT = "line_comment"
BLOCK_COMMENT = "block_comment"
STRING = "string"
REGEX = "regex"

_REGEX_PRECEDERS = {"=", "(", ","}


def noncode_spans(text: str) -> list[tuple[int, int, str]]:
    """Return (start, end, kind) spans of comments and literals, in order."""
    spans = []
    i = 0
    n = len(text)
    prev_code = ""  # last non-whitespace character seen in code context
    prev_word = ""  # last identifier-ish word seen in code context
    word = []
    while i < n:
        c = text[i]
        if c == "/" and i + 1 < n and text[i + 1] == "/":
            end = text.find("\n", i)
            end = n if end == -1 else end
            spans.append((i, end, LINE_COMMENT))
            i = end
            continue
        if c == "/" and i + 1 < n and text[i + 1] == "*":
            end = text.find("*/", i + 2)
            end = n if end == -1 else end + 2
            spans.append((i, end, BLOCK_COMMENT))
            i = end
            continue
        if c == '"':
            j = i + 1
            while j < n and text[j] not in ('"', "\n"):
                j += 2 if text[j] == "\\" else 1
            end = min(j + 1, n) if j < n and text[j] == '"' else min(j, n)
            spans.append((i, end, STRING))
            i = end
            prev_code = '"'
            word = []
            continue
        if c == "/" and (prev_code in _REGEX_PRECEDERS or prev_word == "matches"):
            j = i + 1
            while j < n and text[j] not in ("/", "\n"):
                j += 2 if text[j] == "\\" else 1
            if j < n and text[j] == "/":
                j += 1
                while j < n and text[j] in "is":
                    j += 1
            spans.append((i, j, REGEX))
            i = j
            prev_code = "/"
            word = []
            continue
        if c.isspace():
            if word:
                prev_word = "".join(word)
                word = []
        else:
            prev_code = c
            if c.isalnum() or c == "_":
                word.append(c)
            else:
                if word:
                    prev_word = "".join(word)
                word = []
        i += 1
    return spans


def blank_noncode(text: str, spans: list[tuple[int, int, str]] | None = None) -> str:
    """Replace non-code spans with spaces (newlines kept), preserving length."""
    if spans is None:
        spans = noncode_spans(text)
    if not spans:
        return text
    out = []
    pos = 0
    for start, end, _kind in spans:
        out.append(text[pos:start])
        out.append("".join("\n" if ch == "\n" else " " for ch in text[start:end]))
        pos = end
    out.append(text[pos:])
    return "".join(out)


def strip_noncode(text: str, spans: list[tuple[int, int, str]] | None = None,
                  kinds: tuple[str, ...] = (LINE_COMMENT, BLOCK_COMMENT)) -> str:
    """Remove spans of the given kinds from the text entirely."""
    if spans is None:
        spans = noncode_spans(text)
    out = []
    pos = 0
    for start, end, kind in spans:
        if kind not in kinds:
            continue
        out.append(text[pos:start])
        pos = end
    out.append(text[pos:])
    return "".join(out)


class SpanIndex:
    """Fast point lookups against a scanned span list."""

    def __init__(self, spans: list[tuple[int, int, str]]):
        self._starts = [s for s, _e, _k in spans]
        self._spans = spans

    def kind_at(self, pos: int) -> str | None:
        i = bisect.bisect_right(self._starts, pos) - 1
        if i >= 0 and self._spans[i][0] <= pos < self._spans[i][1]:
            return self._spans[i][2]
        return None

    def in_code(self, pos: int) -> bool:
        return self.kind_at(pos) is None
