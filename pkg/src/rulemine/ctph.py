"""Context-triggered piecewise hashing with ssdeep-compatible signatures and scores.

The hashing engine is a single-pass, multi-blocksize state machine: one block
hash context per candidate blocksize (3 * 2^k), forked lazily as the input
grows, with the final blocksize chosen at digest time. Signatures serialize as
"blocksize:sig1:sig2" and interoperate with standard fuzzy-hash tooling.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .textspans import strip_noncode

SPAMSUM_LENGTH = 64
MIN_BLOCKSIZE = 3
ROLLING_WINDOW = 7
HASH_PRIME = 0x01000193
HASH_INIT = 0x28021967
NUM_CONTEXTS = 31
BLOCK_KEY_LENGTH = 24

_B64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/"

_MASK32 = 0xFFFFFFFF


def _engine(data, bh_h, bh_halfh, dindex, digests, halfdig, parked):
    """Single pass over `data`, filling per-blocksize digest state.

    Returns (context_count, final_rolling_hash). Context i covers blocksize
    3 << i; context i+1 is forked (cloning i's running hashes) the first time
    context i commits a digest character, so every context sees the whole
    prefix exactly as if it had run from byte 0.
    """
    h1 = 0
    h2 = 0
    h3 = 0
    win = np.zeros(ROLLING_WINDOW, np.int64)
    n = 0
    bhend = 1
    roll = 0
    for idx in range(data.shape[0]):
        c = int(data[idx])
        h2 = h2 - h1 + ROLLING_WINDOW * c
        h1 = h1 + c - win[n]
        win[n] = c
        n = (n + 1) % ROLLING_WINDOW
        h3 = ((h3 << 5) & _MASK32) ^ c
        roll = (h1 + h2 + h3) & _MASK32

        for i in range(bhend):
            bh_h[i] = ((bh_h[i] * HASH_PRIME) & _MASK32) ^ c
            bh_halfh[i] = ((bh_halfh[i] * HASH_PRIME) & _MASK32) ^ c

        rp1 = roll + 1
        i = 0
        while i < bhend:
            if rp1 % (MIN_BLOCKSIZE << i) != 0:
                # once the trigger fails for one blocksize it fails for all
                # larger ones (-1 mod 2b implies -1 mod b)
                break
            if dindex[i] == 0 and bhend < NUM_CONTEXTS:
                bh_h[bhend] = bh_h[bhend - 1]
                bh_halfh[bhend] = bh_halfh[bhend - 1]
                dindex[bhend] = 0
                halfdig[bhend] = -1
                parked[bhend] = False
                bhend += 1
            digests[i, dindex[i]] = bh_h[i] % 64
            halfdig[i] = bh_halfh[i] % 64
            if dindex[i] < SPAMSUM_LENGTH - 1:
                dindex[i] += 1
                bh_h[i] = HASH_INIT
                if dindex[i] < SPAMSUM_LENGTH // 2:
                    bh_halfh[i] = HASH_INIT
                    halfdig[i] = -1
            else:
                # signature full: keep folding the tail into the last slot
                parked[i] = True
            i += 1
    return bhend, roll


try:  # pragma: no cover - exercised implicitly
    from numba import njit

    _engine_jit = njit(cache=True)(_engine)
except ImportError:  # pragma: no cover
    _engine_jit = _engine


@dataclass(frozen=True)
class FuzzySignature:
    """A CTPH signature: blocksize plus the two base64 digest strings."""

    blocksize: int
    sig1: str
    sig2: str

    @property
    def block_key(self) -> str:
        """First 24 characters of sig1 (whole sig1 when shorter)."""
        return self.sig1[:BLOCK_KEY_LENGTH]

    def serialize(self) -> str:
        return f"{self.blocksize}:{self.sig1}:{self.sig2}"

    @classmethod
    def parse(cls, text: str) -> "FuzzySignature":
        m = re.match(r"^(\d+):([0-9A-Za-z+/]*):([0-9A-Za-z+/]*)(?:,.*)?$", text)
        if not m:
            raise ValueError(f"malformed fuzzy signature: {text!r}")
        return cls(int(m.group(1)), m.group(2), m.group(3))

    @cached_property
    def _scored_parts(self) -> tuple[str, str]:
        return _eliminate_sequences(self.sig1), _eliminate_sequences(self.sig2)


def hash_bytes(data: bytes) -> FuzzySignature:
    """Hash a byte string into a fuzzy signature."""
    if not data:
        return FuzzySignature(MIN_BLOCKSIZE, "", "")
    arr = np.frombuffer(data, dtype=np.uint8)
    bh_h = np.full(NUM_CONTEXTS, HASH_INIT, np.int64)
    bh_halfh = np.full(NUM_CONTEXTS, HASH_INIT, np.int64)
    dindex = np.zeros(NUM_CONTEXTS, np.int64)
    digests = np.zeros((NUM_CONTEXTS, SPAMSUM_LENGTH), np.int64)
    halfdig = np.full(NUM_CONTEXTS, -1, np.int64)
    parked = np.zeros(NUM_CONTEXTS, np.bool_)
    bhend, roll = _engine_jit(arr, bh_h, bh_halfh, dindex, digests, halfdig, parked)

    total = len(data)
    bi = 0
    while (MIN_BLOCKSIZE << bi) * SPAMSUM_LENGTH < total:
        bi += 1
        if bi >= NUM_CONTEXTS:
            raise ValueError("input too large for fuzzy hashing")
    while bi >= bhend:
        bi -= 1
    while bi > 0 and dindex[bi] < SPAMSUM_LENGTH // 2:
        bi -= 1

    sig1 = "".join(_B64[digests[bi, j]] for j in range(dindex[bi]))
    if roll != 0:
        sig1 += _B64[bh_h[bi] % 64]
    elif parked[bi]:
        sig1 += _B64[digests[bi, SPAMSUM_LENGTH - 1]]

    if bi < bhend - 1:
        nxt = bi + 1
        ln = min(int(dindex[nxt]), SPAMSUM_LENGTH // 2 - 1)
        sig2 = "".join(_B64[digests[nxt, j]] for j in range(ln))
        if roll != 0:
            sig2 += _B64[bh_halfh[nxt] % 64]
        elif halfdig[nxt] >= 0:
            sig2 += _B64[halfdig[nxt]]
    elif roll != 0:
        sig2 = _B64[bh_h[0] % 64]
    else:
        sig2 = ""

    return FuzzySignature(MIN_BLOCKSIZE << bi, sig1, sig2)


def hash_text(text: str) -> FuzzySignature:
    return hash_bytes(text.encode("utf-8"))


MODE_FULL = "full"
MODE_LOGIC_ONLY = "logic_only"

_WS_RUN_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class CanonicalRule:
    """Normalized rule text ready for fuzzy hashing."""

    text: str
    mode: str


def canonicalize(raw_text: str, mode: str = MODE_LOGIC_ONLY) -> CanonicalRule:
    """Strip comments and collapse whitespace; logic_only drops the meta block.

    Case is preserved: rule logic is case-sensitive and lowercasing would
    merge rules that the scan engine treats as distinct.
    """
    if mode not in (MODE_FULL, MODE_LOGIC_ONLY):
        raise ValueError(f"unknown canonicalization mode: {mode}")
    text = raw_text
    if mode == MODE_LOGIC_ONLY:
        from .extract import meta_section_span

        span = meta_section_span(text)
        if span is not None:
            text = text[: span[0]] + text[span[1] :]
    text = strip_noncode(text)
    text = _WS_RUN_RE.sub(" ", text).strip()
    return CanonicalRule(text=text, mode=mode)


def hash_rule(raw_text: str, mode: str = MODE_LOGIC_ONLY) -> FuzzySignature:
    """Canonicalize a rule and hash the canonical text."""
    return hash_text(canonicalize(raw_text, mode).text)


def _eliminate_sequences(s: str) -> str:
    """Collapse runs of one character longer than 3 down to exactly 3."""
    if len(s) < 4:
        return s
    out = list(s[:3])
    for i in range(3, len(s)):
        if s[i] != s[i - 1] or s[i] != s[i - 2] or s[i] != s[i - 3]:
            out.append(s[i])
    return "".join(out)


def _has_common_substring(s1: str, s2: str) -> bool:
    if len(s1) < ROLLING_WINDOW or len(s2) < ROLLING_WINDOW:
        return False
    if len(s2) < len(s1):
        s1, s2 = s2, s1
    return any(s1[i : i + ROLLING_WINDOW] in s2 for i in range(len(s1) - ROLLING_WINDOW + 1))


def _edit_distance(s1: str, s2: str) -> int:
    """Edit distance with unit insert/delete and cost-2 substitution.

    With those weights the distance equals len1 + len2 - 2*LCS, so it is
    computed from the longest common subsequence via the bit-parallel
    row-update (strings here are at most 64 chars, one machine word).
    """
    m = len(s1)
    if m == 0 or len(s2) == 0:
        return m + len(s2)
    masks: dict[str, int] = {}
    for i, ch in enumerate(s1):
        masks[ch] = masks.get(ch, 0) | (1 << i)
    v = (1 << m) - 1
    for ch in s2:
        u = v & masks.get(ch, 0)
        v = (v + u) | (v - u)
    lcs = m - (v & ((1 << m) - 1)).bit_count()
    return m + len(s2) - 2 * lcs


def _score_strings(s1: str, s2: str, blocksize: int) -> int:
    if len(s1) > SPAMSUM_LENGTH or len(s2) > SPAMSUM_LENGTH:
        return 0
    if not _has_common_substring(s1, s2):
        return 0
    score = _edit_distance(s1, s2)
    score = (score * SPAMSUM_LENGTH) // (len(s1) + len(s2))
    score = (100 * score) // SPAMSUM_LENGTH
    if score >= 100:
        return 0
    score = 100 - score
    # small blocksizes must not overstate matches between short signatures
    if blocksize >= (99 + ROLLING_WINDOW) // ROLLING_WINDOW * MIN_BLOCKSIZE:
        return score
    cap = blocksize // MIN_BLOCKSIZE * min(len(s1), len(s2))
    return min(score, cap)


def similarity(a: FuzzySignature, b: FuzzySignature) -> int:
    """0-100 match score between two signatures (symmetric)."""
    bs1, bs2 = a.blocksize, b.blocksize
    if bs1 != bs2 and bs1 != bs2 * 2 and bs2 != bs1 * 2:
        return 0
    a1, a2 = a._scored_parts
    b1, b2 = b._scored_parts
    if bs1 == bs2 and a1 == b1 and a2 == b2:
        return 100
    if bs1 == bs2:
        return max(_score_strings(a1, b1, bs1), _score_strings(a2, b2, bs1 * 2))
    if bs1 == bs2 * 2:
        return _score_strings(a1, b2, bs1)
    return _score_strings(a2, b1, bs2)


def compare(sig_a: str, sig_b: str) -> int:
    """Score two serialized signatures; raises ValueError on malformed input."""
    return similarity(FuzzySignature.parse(sig_a), FuzzySignature.parse(sig_b))
