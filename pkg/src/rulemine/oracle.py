"""Grammar-based oracle parser used to cross-validate the regex extractor.

This is a deliberate second implementation built from a tokenizer plus a
recursive-descent parser over the rule grammar, sharing no code with the
extraction path. It is exposed behind the oracle adapter contract: an adapter
takes a file path and returns structured records, whether it runs in-process
(GrammarOracle) or shells out to an external parser (ProcessOracle).
"""

from __future__ import annotations

import json
import re
import subprocess
from dataclasses import dataclass


class OracleError(Exception):
    """The oracle failed to parse a file."""


@dataclass(frozen=True)
class OracleRule:
    name: str
    modifier: str
    imports: tuple[str, ...]
    string_count: int
    meta_keys: tuple[str, ...]
    condition_compact: str


_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER_RE = re.compile(r"0x[0-9A-Fa-f]+|\d+(?:\.\d+)?(?:KB|MB)?")
_STRINGREF_RE = re.compile(r"[$#@!][A-Za-z0-9_]*\*?")


class _Tokenizer:
    """Cursor-based lexer; regex and hex-string tokens are parser-directed."""

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def _skip_trivia(self):
        text, n = self.text, len(self.text)
        while self.pos < n:
            c = text[self.pos]
            if c.isspace():
                self.pos += 1
            elif c == "/" and text.startswith("//", self.pos):
                nl = text.find("\n", self.pos)
                self.pos = n if nl == -1 else nl + 1
            elif c == "/" and text.startswith("/*", self.pos):
                close = text.find("*/", self.pos + 2)
                if close == -1:
                    raise OracleError("unterminated block comment")
                self.pos = close + 2
            else:
                return

    def eof(self) -> bool:
        self._skip_trivia()
        return self.pos >= len(self.text)

    def peek(self) -> str:
        self._skip_trivia()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take_ident(self) -> str | None:
        self._skip_trivia()
        m = _IDENT_RE.match(self.text, self.pos)
        if not m:
            return None
        self.pos = m.end()
        return m.group(0)

    def expect_ident(self) -> str:
        ident = self.take_ident()
        if ident is None:
            raise OracleError(f"expected identifier at offset {self.pos}")
        return ident

    def take_punct(self, ch: str) -> bool:
        self._skip_trivia()
        if self.pos < len(self.text) and self.text[self.pos] == ch:
            self.pos += 1
            return True
        return False

    def expect_punct(self, ch: str):
        if not self.take_punct(ch):
            raise OracleError(f"expected {ch!r} at offset {self.pos}")

    def take_string(self) -> str:
        self._skip_trivia()
        if self.pos >= len(self.text) or self.text[self.pos] != '"':
            raise OracleError(f"expected string literal at offset {self.pos}")
        i = self.pos + 1
        text, n = self.text, len(self.text)
        while i < n and text[i] != '"':
            if text[i] == "\n":
                raise OracleError("newline in string literal")
            i += 2 if text[i] == "\\" else 1
        if i >= n:
            raise OracleError("unterminated string literal")
        surface = text[self.pos : i + 1]
        self.pos = i + 1
        return surface

    def take_regex(self) -> str:
        self._skip_trivia()
        if self.text[self.pos] != "/":
            raise OracleError(f"expected regex literal at offset {self.pos}")
        i = self.pos + 1
        text, n = self.text, len(self.text)
        while i < n and text[i] not in ("/", "\n"):
            i += 2 if text[i] == "\\" else 1
        if i >= n or text[i] != "/":
            raise OracleError("unterminated regex literal")
        i += 1
        while i < n and text[i] in "is":
            i += 1
        surface = text[self.pos : i]
        self.pos = i
        return surface

    def take_hex_string(self) -> str:
        self._skip_trivia()
        if self.text[self.pos] != "{":
            raise OracleError(f"expected hex string at offset {self.pos}")
        close = self.text.find("}", self.pos + 1)
        if close == -1:
            raise OracleError("unterminated hex string")
        surface = self.text[self.pos : close + 1]
        self.pos = close + 1
        return surface


_META_NUMBER_RE = re.compile(r"-?(?:0x[0-9A-Fa-f]+|\d+)")


def _take_meta_value(tok: _Tokenizer, key: str):
    if tok.peek() == '"':
        tok.take_string()
        return
    save = tok.pos
    word = tok.take_ident()
    if word in ("true", "false"):
        return
    tok.pos = save
    tok._skip_trivia()
    m = _META_NUMBER_RE.match(tok.text, tok.pos)
    if not m:
        raise OracleError(f"bad meta value for {key!r}")
    tok.pos = m.end()


def _parse_meta(tok: _Tokenizer) -> list[str]:
    tok.expect_punct(":")
    keys = []
    while True:
        save = tok.pos
        ident = tok.take_ident()
        if ident is None or ident in ("strings", "condition"):
            tok.pos = save
            return keys
        if not tok.take_punct("="):
            raise OracleError(f"meta entry {ident!r} missing '='")
        _take_meta_value(tok, ident)
        keys.append(ident)


def _parse_strings(tok: _Tokenizer) -> int:
    tok.expect_punct(":")
    count = 0
    while True:
        if tok.peek() != "$":
            return count
        tok.take_punct("$")
        tok.take_ident()  # may be anonymous
        if not tok.take_punct("="):
            raise OracleError("string declaration missing '='")
        c = tok.peek()
        if c == '"':
            tok.take_string()
        elif c == "/":
            tok.take_regex()
        elif c == "{":
            tok.take_hex_string()
        else:
            raise OracleError("bad string value")
        count += 1
        # modifiers: identifiers, possibly with a parenthesized argument
        while True:
            save = tok.pos
            word = tok.take_ident()
            if word is None or word in ("meta", "strings", "condition"):
                tok.pos = save
                break
            if tok.take_punct("("):
                depth = 1
                while depth:
                    if tok.eof():
                        raise OracleError("unterminated modifier arguments")
                    if tok.peek() == '"':
                        tok.take_string()
                        continue
                    ch = tok.text[tok.pos]
                    tok.pos += 1
                    if ch == "(":
                        depth += 1
                    elif ch == ")":
                        depth -= 1


def _parse_condition(tok: _Tokenizer) -> str:
    tok.expect_punct(":")
    parts = []
    prev_word = ""
    while True:
        if tok.eof():
            raise OracleError("unterminated rule body in condition")
        c = tok.peek()
        if c == "}":
            tok.take_punct("}")
            return "".join(parts)
        if c == '"':
            parts.append(tok.take_string())
            prev_word = ""
            continue
        if c == "/" and prev_word == "matches":
            parts.append(tok.take_regex())
            prev_word = ""
            continue
        if c in "$#@!":
            tok._skip_trivia()
            m = _STRINGREF_RE.match(tok.text, tok.pos)
            if m and len(m.group(0)) > 1:
                tok.pos = m.end()
                parts.append(m.group(0))
                prev_word = ""
                continue
        m = _IDENT_RE.match(tok.text, tok.pos)
        if m:
            tok.pos = m.end()
            parts.append(m.group(0))
            prev_word = m.group(0)
            continue
        m = _NUMBER_RE.match(tok.text, tok.pos)
        if m:
            tok.pos = m.end()
            parts.append(m.group(0))
            prev_word = ""
            continue
        parts.append(tok.text[tok.pos])
        tok.pos += 1
        prev_word = ""


def _parse_rule(tok: _Tokenizer, first_word: str, imports: tuple[str, ...]) -> OracleRule:
    modifier = "none"
    word = first_word
    while word in ("private", "global"):
        if modifier == "none":
            modifier = word
        word = tok.expect_ident()
    if word != "rule":
        raise OracleError(f"expected 'rule', got {word!r}")
    name = tok.expect_ident()
    if tok.take_punct(":"):
        while True:
            if tok.take_ident() is None:
                break
    tok.expect_punct("{")
    meta_keys: list[str] = []
    string_count = 0
    condition = None
    while True:
        if tok.take_punct("}"):
            break
        section = tok.expect_ident()
        if section == "meta":
            meta_keys = _parse_meta(tok)
        elif section == "strings":
            string_count = _parse_strings(tok)
        elif section == "condition":
            condition = _parse_condition(tok)
            break
        else:
            raise OracleError(f"unexpected section {section!r}")
    if condition is None:
        raise OracleError(f"rule {name!r} has no condition")
    return OracleRule(
        name=name,
        modifier=modifier,
        imports=imports,
        string_count=string_count,
        meta_keys=tuple(meta_keys),
        condition_compact=condition,
    )


def parse_source(text: str) -> list[OracleRule]:
    """Parse one file's source into oracle records, in source order."""
    tok = _Tokenizer(text)
    imports: list[str] = []
    rules: list[OracleRule] = []
    while not tok.eof():
        word = tok.expect_ident()
        if word == "import":
            imports.append(tok.take_string()[1:-1])
        elif word == "include":
            tok.take_string()
        elif word in ("private", "global", "rule"):
            rules.append(_parse_rule(tok, word, ()))
        else:
            raise OracleError(f"unexpected top-level token {word!r}")
    all_imports = tuple(imports)
    return [
        OracleRule(
            name=r.name,
            modifier=r.modifier,
            imports=all_imports,
            string_count=r.string_count,
            meta_keys=r.meta_keys,
            condition_compact=r.condition_compact,
        )
        for r in rules
    ]


class GrammarOracle:
    """In-process oracle adapter backed by the grammar parser above."""

    def parse_file(self, path) -> list[OracleRule]:
        with open(path, encoding="utf-8", errors="replace") as fh:
            return parse_source(fh.read())


class ProcessOracle:
    """Oracle adapter invoking an external parser process.

    The command template receives {input_path}; the process must print a JSON
    array of objects with keys name, modifier, imports, string_count,
    meta_keys and condition.
    """

    def __init__(self, command: list[str], timeout: float = 60.0):
        self.command = command
        self.timeout = timeout

    def parse_file(self, path) -> list[OracleRule]:
        argv = [part.format(input_path=str(path)) for part in self.command]
        proc = subprocess.run(
            argv, capture_output=True, text=True, timeout=self.timeout, check=False
        )
        if proc.returncode != 0:
            raise OracleError(f"oracle process failed ({proc.returncode}): {proc.stderr.strip()}")
        try:
            payload = json.loads(proc.stdout)
        except json.JSONDecodeError as exc:
            raise OracleError(f"oracle produced invalid JSON: {exc}") from exc
        return [
            OracleRule(
                name=item["name"],
                modifier=item.get("modifier", "none"),
                imports=tuple(item.get("imports", ())),
                string_count=int(item.get("string_count", 0)),
                meta_keys=tuple(item.get("meta_keys", ())),
                condition_compact=re.sub(r"\s+", "", item.get("condition", "")),
            )
            for item in payload
        ]
