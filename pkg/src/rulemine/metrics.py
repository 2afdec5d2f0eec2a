"""Ecosystem-level concentration, redundancy, influence and activity metrics."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .cluster import ClusterInventory
from .history import AuthorIdentity, CommitEvent, FirstAppearance


def lorenz_curve(values) -> list[tuple[float, float]]:
    """Lorenz points (p, L(p)) for a non-negative distribution, L(0) = 0."""
    arr = np.sort(np.asarray(values, dtype=float))
    if arr.size == 0:
        raise ValueError("lorenz_curve needs a non-empty distribution")
    if np.any(arr < 0):
        raise ValueError("lorenz_curve needs non-negative values")
    total = arr.sum()
    if total == 0:
        raise ValueError("lorenz_curve is undefined for an all-zero distribution")
    cum = np.cumsum(arr) / total
    points = [(0.0, 0.0)]
    n = arr.size
    points.extend(((i + 1) / n, float(cum[i])) for i in range(n))
    return points


def _gini_point(sorted_rows: np.ndarray) -> np.ndarray:
    """Gini of each (sorted ascending) row via trapezoidal Lorenz integration."""
    n = sorted_rows.shape[1]
    totals = sorted_rows.sum(axis=1)
    safe = np.where(totals == 0, 1.0, totals)
    lor = np.cumsum(sorted_rows, axis=1) / safe[:, None]
    prev = np.concatenate([np.zeros((sorted_rows.shape[0], 1)), lor[:, :-1]], axis=1)
    integral = ((lor + prev) / 2).sum(axis=1) / n
    g = 1.0 - 2.0 * integral
    return np.where(totals == 0, 0.0, g)


@dataclass(frozen=True)
class GiniResult:
    g: float
    ci_low: float
    ci_high: float
    resamples: int
    seed: int
    method: str = "percentile-bootstrap"


def gini(values, resamples: int = 10_000, seed: int = 0) -> GiniResult:
    """Gini coefficient with a seeded percentile-bootstrap confidence interval.

    The point estimate comes from trapezoidal integration of the Lorenz
    curve; resampling indices are drawn once from a single seeded generator,
    making the interval bit-reproducible across runs and worker counts.
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0 or np.any(arr < 0):
        raise ValueError("gini needs a non-empty, non-negative distribution")
    if arr.sum() == 0:
        raise ValueError("gini is undefined for an all-zero distribution")
    point = float(_gini_point(np.sort(arr)[None, :])[0])

    rng = np.random.default_rng(seed)
    idx = rng.integers(0, arr.size, size=(resamples, arr.size))
    boots = _gini_point(np.sort(arr[idx], axis=1))
    lo, hi = np.percentile(boots, [2.5, 97.5])
    return GiniResult(
        g=point, ci_low=float(lo), ci_high=float(hi), resamples=resamples, seed=seed
    )


@dataclass(frozen=True)
class AuthorInfluence:
    author: AuthorIdentity
    productivity: int
    impact: int
    peak_impact: float


def author_influence(
    appearances: dict[str, FirstAppearance],
    inventory: ClusterInventory,
    identity_table: dict[tuple[str, str], AuthorIdentity],
) -> list[AuthorInfluence]:
    """Per-author productivity (clusters created) and impact (adoptions).

    peak_impact is the mean cardinality of the author's top-10 clusters (all
    of them when they created fewer than 10). Ordered by impact descending.
    """
    per_author: dict[str, list[int]] = {}
    authors: dict[str, AuthorIdentity] = {}
    for cid, app in appearances.items():
        ident = identity_table.get((app.author_name, app.author_email))
        if ident is None:
            continue
        cardinality = inventory.entries[cid].cardinality
        per_author.setdefault(ident.canonical_id, []).append(cardinality)
        authors[ident.canonical_id] = ident

    influences = []
    for aid, cards in per_author.items():
        cards.sort(reverse=True)
        top = cards[: min(10, len(cards))]
        influences.append(
            AuthorInfluence(
                author=authors[aid],
                productivity=len(cards),
                impact=sum(cards),
                peak_impact=sum(top) / len(top),
            )
        )
    influences.sort(key=lambda i: (-i.impact, i.author.canonical_id))
    return influences


def pareto_share(
    influences: list[AuthorInfluence], target_share: float = 0.80
) -> tuple[int, list[tuple[float, float]]]:
    """Smallest author count reaching the target share of total impact."""
    impacts = sorted((i.impact for i in influences), reverse=True)
    total = sum(impacts)
    if total == 0:
        raise ValueError("no impact to distribute")
    curve = []
    running = 0
    k = None
    for rank, impact in enumerate(impacts, start=1):
        running += impact
        share = running / total
        curve.append((rank / len(impacts), share))
        if k is None and share >= target_share:
            k = rank
    return k if k is not None else len(impacts), curve


def redundancy_stats(inventory: ClusterInventory) -> dict:
    """Singleton share, cardinality distribution and occurrence compression."""
    entries = list(inventory.entries.values())
    if not entries:
        return {"singleton_share": 0.0, "cardinality_distribution": {}, "compression_ratio": 1.0}
    cardinalities = [e.cardinality for e in entries]
    occurrences = sum(e.size for e in entries)
    return {
        "singleton_share": sum(1 for c in cardinalities if c == 1) / len(entries),
        "cardinality_distribution": dict(sorted(Counter(cardinalities).items())),
        "compression_ratio": occurrences / len(entries),
    }


def activity_stats(
    repos: list[str],
    events_by_repo: dict[str, list[CommitEvent]],
    snapshot_time: datetime,
) -> dict:
    """Share of repos committed-to within 365 days of the snapshot, and the
    median staleness in days. Repos with no usable history count as inactive
    and are excluded from the median."""
    staleness = []
    active = 0
    for repo in repos:
        events = events_by_repo.get(repo)
        if not events:
            continue
        days = (snapshot_time - events[-1].timestamp).days
        staleness.append(days)
        if days <= 365:
            active += 1
    return {
        "active_share_365d": active / len(repos) if repos else 0.0,
        "median_days_since_last_commit": float(np.median(staleness)) if staleness else None,
        "repos_with_history": len(staleness),
    }
