"""Command-line interface for the mining pipeline.

Exit codes: 0 success, 1 configuration error, 2 stage failure, 3 partial
success (some repositories were ledgered during cloning).
"""

from __future__ import annotations

import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import click

from . import ingest
from .pipeline import ConfigError, Pipeline, PipelineConfig, query as run_query

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_STAGE = 2
EXIT_PARTIAL = 3


def _load_config(ctx) -> PipelineConfig:
    opts = ctx.obj
    overrides = {
        "workspace": opts["workspace"],
        "seed": opts["seed"],
        "workers": opts["workers"],
        "hash_mode": opts["mode"].replace("-", "_") if opts["mode"] else None,
    }
    if opts["threshold"] is not None:
        overrides["similarity_threshold"] = opts["threshold"]
        overrides["distance_threshold"] = 1 - opts["threshold"] / 100
    try:
        if opts["config"]:
            return PipelineConfig.from_file(opts["config"], **overrides)
        if not opts["workspace"]:
            raise ConfigError("either --config or --workspace is required")
        doc = {
            "workspace": opts["workspace"],
            "snapshot_time": datetime.now(tz=timezone.utc).isoformat(),
        }
        doc.update({k: v for k, v in overrides.items() if v is not None})
        return PipelineConfig.from_dict(doc)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


@click.group()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), help="Pipeline config file.")
@click.option("--workspace", type=click.Path(file_okay=False), help="Workspace directory.")
@click.option("--seed", type=int, default=None, help="PRNG seed recorded in outputs.")
@click.option("--workers", type=int, default=None, help="Worker pool width.")
@click.option("--mode", type=click.Choice(["full", "logic-only"]), default=None,
              help="Canonicalization mode for hashing.")
@click.option("--threshold", type=int, default=None, help="Similarity threshold (0-100).")
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
@click.pass_context
def main(ctx, config, workspace, seed, workers, mode, threshold, verbose):
    """Batch mining and auditing toolkit for open-source YARA rule ecosystems."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    ctx.obj = {
        "config": config,
        "workspace": workspace,
        "seed": seed,
        "workers": workers,
        "mode": mode,
        "threshold": threshold,
    }


@main.command()
@click.argument("search_query")
@click.option("--page-limit", type=int, default=10, show_default=True)
@click.option("--output", type=click.Path(dir_okay=False), help="Write JSON list here.")
@click.pass_context
def discover(ctx, search_query, page_limit, output):
    """Search the hosting API for candidate repositories."""
    config = _load_config(ctx)
    adapter = ingest.GitHubSearchAdapter()
    try:
        repos = ingest.discover_repositories(
            search_query, adapter, page_limit, snapshot_time=config.snapshot_time
        )
    except (ingest.TransportError, ingest.RateLimitedError, ingest.PageParseError) as exc:
        click.echo(f"discovery failed: {exc}", err=True)
        sys.exit(EXIT_STAGE)
    payload = [
        {"host": r.host, "owner": r.owner, "name": r.name, "clone_url": r.clone_url}
        for r in repos
    ]
    text = json.dumps(payload, indent=2)
    if output:
        Path(output).write_text(text + "\n")
    else:
        click.echo(text)


@main.command()
@click.pass_context
def clone(ctx):
    """Clone configured repositories into the workspace (full history)."""
    config = _load_config(ctx)
    pipeline = Pipeline(config)
    failures = pipeline.ensure_clones()
    click.echo(f"cloned workspace: {pipeline.repos_dir} ({failures} failures ledgered)")
    sys.exit(EXIT_PARTIAL if failures else EXIT_OK)


def _stage_command(name: str, help_text: str):
    @main.command(name=name, help=help_text)
    @click.pass_context
    def _cmd(ctx):
        config = _load_config(ctx)
        pipeline = Pipeline(config)
        try:
            status = pipeline.run_stage(name)
        except Exception as exc:  # noqa: BLE001 - CLI boundary
            click.echo(f"stage {name} failed: {exc}", err=True)
            sys.exit(EXIT_STAGE)
        click.echo(f"stage {name}: {status}")

    return _cmd


_stage_command("extract", "Extract rules from candidate files in cloned repos.")
_stage_command("hash", "Canonicalize and fuzzy-hash every extracted rule.")
_stage_command("cluster", "Block, cluster and build the inventory and matrix.")
_stage_command("history", "Mine commit histories: first publishers, lag, authors.")
_stage_command("metrics", "Compute concentration, redundancy and activity metrics.")
_stage_command("quality", "Lint rules; benchmark them when corpora are configured.")
_stage_command("coverage", "Classify clusters into families; coverage and MTTFR.")
_stage_command("report", "Render figures from persisted artifacts.")


@main.command()
@click.option("--no-resume", is_flag=True, help="Recompute every stage from scratch.")
@click.pass_context
def run(ctx, no_resume):
    """Run all pipeline stages in order and write the manifest."""
    config = _load_config(ctx)
    pipeline = Pipeline(config)
    failures = pipeline.ensure_clones()
    manifest = pipeline.run(resume=not no_resume)
    for stage in manifest["stages"]:
        click.echo(f"{stage['name']:<10} {stage['status']}")
    click.echo(f"manifest: {pipeline.artifacts / 'manifest.json'}")
    if any(s["status"] == "failed" for s in manifest["stages"]):
        sys.exit(EXIT_STAGE)
    if failures:
        sys.exit(EXIT_PARTIAL)


@main.command(name="query")
@click.argument("selector")
@click.option("--author", help="Author id, display name or alias substring.")
@click.option("--cluster-id", help="Cluster id for the 'cluster' selector.")
@click.option("--max-score", type=int, default=70, show_default=True)
@click.option("--min-fp", type=int, default=1, show_default=True)
@click.pass_context
def query_cmd(ctx, selector, author, cluster_id, max_score, min_fp):
    """Read-only lookups over persisted artifacts.

    Selectors: clusters-by-author, noisy-rules, cluster.
    """
    config = _load_config(ctx)
    params = {"max_score": max_score, "min_fp": min_fp}
    if author:
        params["author"] = author
    if cluster_id:
        params["cluster_id"] = cluster_id
    try:
        rows = run_query(Path(config.workspace) / "artifacts", selector, **params)
    except (ValueError, KeyError, OSError) as exc:
        click.echo(f"query failed: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    for row in rows:
        click.echo(json.dumps(row, sort_keys=True))


if __name__ == "__main__":
    main()
