"""Figure rendering for pipeline artifacts.

All figures render to SVG with a fixed hash salt and no embedded dates, so
plot files are byte-stable across re-runs of the same workspace. Each figure
carries provenance metadata (config digest and seed) in its SVG header.
"""

from __future__ import annotations

import logging
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from . import storage  # noqa: E402

log = logging.getLogger(__name__)


def _save(fig, path: Path, seed: int, digest: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(
        path,
        format="svg",
        metadata={
            "Date": None,
            "Title": path.stem,
            "Description": f"rulemine artifact; seed={seed}; config={digest}",
        },
    )
    plt.close(fig)


def _style(digest: str):
    matplotlib.rcParams["svg.hashsalt"] = digest
    matplotlib.rcParams["figure.figsize"] = (6.0, 4.0)
    matplotlib.rcParams["axes.grid"] = True
    matplotlib.rcParams["grid.alpha"] = 0.3


def plot_lorenz(points_by_name: dict[str, list[tuple[float, float]]], path, seed, digest):
    fig, ax = plt.subplots()
    ax.plot([0, 1], [0, 1], "k--", linewidth=0.8, label="equality")
    for name, points in sorted(points_by_name.items()):
        xs, ys = zip(*points)
        ax.plot(xs, ys, label=name)
    ax.set_xlabel("cumulative share of repositories")
    ax.set_ylabel("cumulative share of clusters")
    ax.set_title("Lorenz curves")
    ax.legend()
    _save(fig, Path(path), seed, digest)


def plot_pareto(curve: list[tuple[float, float]], path, seed, digest, target: float = 0.8):
    fig, ax = plt.subplots()
    xs, ys = zip(*curve)
    ax.step([0, *xs], [0, *ys], where="post")
    ax.axhline(target, color="red", linewidth=0.8, linestyle=":", label=f"{target:.0%} impact")
    ax.set_xlabel("share of authors (by impact rank)")
    ax.set_ylabel("cumulative share of impact")
    ax.set_title("Author influence concentration")
    ax.legend()
    _save(fig, Path(path), seed, digest)


def plot_lag_histogram(lag_days: list[int], path, seed, digest):
    fig, ax = plt.subplots()
    if lag_days:
        bins = min(50, max(10, int(np.sqrt(len(lag_days))) * 2))
        ax.hist(lag_days, bins=bins, color="#3465a4")
    ax.set_xlabel("technical lag (days)")
    ax.set_ylabel("cluster-mirror pairs")
    ax.set_title("Technical lag distribution")
    _save(fig, Path(path), seed, digest)


def plot_cost_noise(rows: list[dict], path, seed, digest):
    """Scan time vs false positives; the high-cost/high-FP quadrant is shaded."""
    fig, ax = plt.subplots()
    xs = [float(r["scan_ms"]) for r in rows]
    ys = [int(r["fp"]) for r in rows]
    if xs:
        x_med = float(np.median(xs))
        y_med = float(np.median(ys))
        x_hi = max(max(xs) * 1.05, x_med + 1)
        y_hi = max(max(ys) * 1.05, y_med + 1)
        ax.axvspan(x_med, x_hi, ymin=0, ymax=1, alpha=0.0)
        ax.fill_betweenx([y_med, y_hi], x_med, x_hi, color="red", alpha=0.15, zorder=0)
        ax.scatter(xs, ys, s=18, color="#204a87", zorder=2)
        ax.axvline(x_med, color="grey", linewidth=0.8, linestyle=":")
        ax.axhline(y_med, color="grey", linewidth=0.8, linestyle=":")
    ax.set_xlabel("scan time (ms)")
    ax.set_ylabel("false positives")
    ax.set_title("Cost vs noise (shaded: high-cost, high-FP)")
    _save(fig, Path(path), seed, digest)


def plot_family_timeline(rows: list[dict], path, seed, digest):
    """Per-family first-appearance dots; dot size tracks cluster cardinality."""
    fig, ax = plt.subplots()
    families = sorted({r["family"] for r in rows})
    index = {fam: i for i, fam in enumerate(families)}
    if rows:
        from datetime import datetime

        xs = [datetime.fromisoformat(r["first_seen"]) for r in rows]
        ys = [index[r["family"]] for r in rows]
        sizes = [12 + 10 * int(r["cardinality"]) for r in rows]
        ax.scatter(xs, ys, s=sizes, alpha=0.6, color="#4e9a06")
        ax.set_yticks(range(len(families)), families)
        fig.autofmt_xdate()
    ax.set_xlabel("first appearance")
    ax.set_title("Family coverage over time (size = cardinality)")
    _save(fig, Path(path), seed, digest)


def emit_plots(artifact_dir, seed: int = 0, digest: str = "0") -> list[Path]:
    """Render every figure the persisted artifacts support; returns paths."""
    artifacts = Path(artifact_dir)
    plots_dir = artifacts / "plots"
    _style(digest)
    written = []

    lorenz = {}
    for name in ("contribution", "popularity"):
        path = artifacts / f"metrics/lorenz_{name}.csv"
        if path.exists():
            rows = storage.read_csv(path)
            lorenz[name] = [(float(r["p"]), float(r["L"])) for r in rows]
    if lorenz:
        out = plots_dir / "lorenz.svg"
        plot_lorenz(lorenz, out, seed, digest)
        written.append(out)

    pareto_path = artifacts / "metrics/pareto.csv"
    if pareto_path.exists():
        rows = storage.read_csv(pareto_path)
        curve = [(float(r["author_share"]), float(r["impact_share"])) for r in rows]
        if curve:
            out = plots_dir / "pareto.svg"
            plot_pareto(curve, out, seed, digest)
            written.append(out)

    lag_path = artifacts / "history/lag.csv"
    if lag_path.exists():
        lags = [int(r["lag_days"]) for r in storage.read_csv(lag_path)]
        out = plots_dir / "lag_histogram.svg"
        plot_lag_histogram(lags, out, seed, digest)
        written.append(out)

    bench_path = artifacts / "quality/benchmark.csv"
    if bench_path.exists():
        rows = [r for r in storage.read_csv(bench_path) if r["matched"] == "True"]
        out = plots_dir / "cost_noise.svg"
        plot_cost_noise(rows, out, seed, digest)
        written.append(out)

    timeline_path = artifacts / "coverage/timeline.csv"
    if timeline_path.exists():
        rows = storage.read_csv(timeline_path)
        out = plots_dir / "family_timeline.svg"
        plot_family_timeline(rows, out, seed, digest)
        written.append(out)

    return written
