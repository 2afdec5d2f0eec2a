"""Independent reference implementations used only as test oracles.

Each function here deliberately uses the most literal, textbook formulation of
its algorithm (iterative re-hash instead of streaming state, full-matrix
recomputation instead of incremental updates, quadratic DP instead of
bit-parallel tricks) so that agreement with the production code is meaningful.
"""

from __future__ import annotations

import itertools

B64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/"
MASK32 = 0xFFFFFFFF


# ---------------------------------------------------------------------------
# Fuzzy hashing: classic two-pass formulation. Hash at a guessed blocksize,
# halve and redo while the digest comes out too short.
# ---------------------------------------------------------------------------

class _Roll:
    def __init__(self):
        self.win = [0] * 7
        self.h1 = 0
        self.h2 = 0
        self.h3 = 0
        self.n = 0

    def update(self, c):
        self.h2 = self.h2 - self.h1 + 7 * c
        self.h1 = self.h1 + c - self.win[self.n % 7]
        self.win[self.n % 7] = c
        self.n += 1
        self.h3 = ((self.h3 << 5) & MASK32) ^ c
        return (self.h1 + self.h2 + self.h3) & MASK32


def fuzzy_hash_ref(data: bytes) -> str:
    if not data:
        return "3::"
    blocksize = 3
    while blocksize * 64 < len(data):
        blocksize *= 2

    while True:
        p = [""] * 64
        r2 = [""] * 32
        j = 0
        k = 0
        h2 = 0x28021967
        h3 = 0x28021967
        roll = _Roll()
        h = 0
        for c in data:
            h = roll.update(c)
            h2 = ((h2 * 0x01000193) & MASK32) ^ c
            h3 = ((h3 * 0x01000193) & MASK32) ^ c
            if h % blocksize == blocksize - 1:
                p[j] = B64[h2 % 64]
                if j < 63:
                    h2 = 0x28021967
                    j += 1
            if h % (blocksize * 2) == blocksize * 2 - 1:
                r2[k] = B64[h3 % 64]
                if k < 31:
                    h3 = 0x28021967
                    k += 1
        if h != 0:
            p[j] = B64[h2 % 64]
            r2[k] = B64[h3 % 64]
        sig1 = "".join(p[: j + 1]) if p[j] else "".join(p[:j])
        sig2 = "".join(r2[: k + 1]) if r2[k] else "".join(r2[:k])

        if blocksize > 3 and j < 32:
            blocksize //= 2
        else:
            return f"{blocksize}:{sig1}:{sig2}"


def _elim(s: str) -> str:
    out = []
    for ch in s:
        if len(out) >= 3 and ch == out[-1] == out[-2] == out[-3]:
            continue
        out.append(ch)
    return "".join(out)


def _common7(s1: str, s2: str) -> bool:
    grams1 = {s1[i : i + 7] for i in range(len(s1) - 6)}
    grams2 = {s2[j : j + 7] for j in range(len(s2) - 6)}
    return bool(grams1 & grams2)


def _levenshtein2(s1: str, s2: str) -> int:
    # substitution costs 2, insert/delete cost 1
    prev = list(range(len(s2) + 1))
    for i, c1 in enumerate(s1):
        cur = [i + 1]
        for j, c2 in enumerate(s2):
            cur.append(min(prev[j + 1] + 1, cur[j] + 1, prev[j] + (0 if c1 == c2 else 2)))
        prev = cur
    return prev[-1]


def _score(s1: str, s2: str, blocksize: int) -> int:
    if len(s1) > 64 or len(s2) > 64:
        return 0
    if not _common7(s1, s2):
        return 0
    score = _levenshtein2(s1, s2)
    score = (score * 64) // (len(s1) + len(s2))
    score = (100 * score) // 64
    if score >= 100:
        return 0
    score = 100 - score
    if blocksize >= (99 + 7) // 7 * 3:
        return score
    if score > blocksize // 3 * min(len(s1), len(s2)):
        score = blocksize // 3 * min(len(s1), len(s2))
    return score


def fuzzy_compare_ref(sig_a: str, sig_b: str) -> int:
    bs1_s, a1, a2 = sig_a.split(":")
    bs2_s, b1, b2 = sig_b.split(":")
    bs1, bs2 = int(bs1_s), int(bs2_s)
    if bs1 != bs2 and bs1 != bs2 * 2 and bs2 != bs1 * 2:
        return 0
    a1, a2, b1, b2 = _elim(a1), _elim(a2), _elim(b1), _elim(b2)
    if bs1 == bs2 and a1 == b1 and a2 == b2:
        return 100
    if bs1 == bs2:
        return max(_score(a1, b1, bs1), _score(a2, b2, bs1 * 2))
    if bs1 == bs2 * 2:
        return _score(a1, b2, bs1)
    return _score(a2, b1, bs2)


# ---------------------------------------------------------------------------
# Average-linkage agglomerative clustering, recomputing the full average
# distance between every cluster pair at every step.
# ---------------------------------------------------------------------------

def average_linkage_ref(ids, dist, threshold_hundredths):
    """Cluster `ids` given dist[(i, j)] in integer hundredths of distance.

    Merges the pair with minimal average distance (ties: lexicographically
    smallest pair of cluster ids, a cluster's id being its smallest member)
    while that minimum is <= threshold. Returns sorted member lists.
    """
    clusters = {i: [i] for i in ids}

    def avg(ca, cb):
        total = 0
        for x in clusters[ca]:
            for y in clusters[cb]:
                total += dist[(x, y)] if (x, y) in dist else dist[(y, x)]
        return total, len(clusters[ca]) * len(clusters[cb])

    while len(clusters) > 1:
        best = None
        for ca, cb in itertools.combinations(sorted(clusters), 2):
            total, count = avg(ca, cb)
            if best is None:
                best = (total, count, ca, cb)
                continue
            bt, bc, _, _ = best
            # compare total/count < bt/bc using integers
            if total * bc < bt * count:
                best = (total, count, ca, cb)
        bt, bc, ca, cb = best
        if bt > threshold_hundredths * bc:
            break
        merged = sorted(clusters.pop(ca) + clusters.pop(cb))
        clusters[merged[0]] = merged
    return sorted(sorted(members) for members in clusters.values())


# ---------------------------------------------------------------------------
# Gini coefficient via the pairwise mean-absolute-difference formula.
# ---------------------------------------------------------------------------

def gini_mad_ref(values):
    n = len(values)
    mean = sum(values) / n
    total = 0.0
    for x in values:
        for y in values:
            total += abs(x - y)
    return total / (2 * n * n * mean)


# ---------------------------------------------------------------------------
# Spearman rank correlation: rank with explicit average-rank ties, then
# Pearson on the ranks.
# ---------------------------------------------------------------------------

def _ranks(xs):
    order = sorted(range(len(xs)), key=lambda i: xs[i])
    ranks = [0.0] * len(xs)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and xs[order[j + 1]] == xs[order[i]]:
            j += 1
        avg_rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg_rank
        i = j + 1
    return ranks


def spearman_ref(xs, ys):
    rx, ry = _ranks(xs), _ranks(ys)
    n = len(rx)
    mx = sum(rx) / n
    my = sum(ry) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    vx = sum((a - mx) ** 2 for a in rx)
    vy = sum((b - my) ** 2 for b in ry)
    return cov / (vx * vy) ** 0.5
