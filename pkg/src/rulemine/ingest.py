"""Repository discovery, snapshot cloning and candidate file selection."""

from __future__ import annotations

import json
import logging
import os
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

log = logging.getLogger(__name__)

API_TOKEN_ENV = "RULEMINE_API_TOKEN"

SPECIALIZED_EXTENSIONS = {"yar", "yara", "rule", "rules", "sig", "yarasig"}
GENERIC_EXTENSIONS = {"txt", "conf"}
TEXT_SNIFF_BYTES = 8192


class TransportError(Exception):
    """The hosting API could not be reached; the call may be retried."""


class RateLimitedError(Exception):
    """The hosting API asked us to back off; resume after retry_after."""

    def __init__(self, message: str, retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class PageParseError(Exception):
    """A result page could not be decoded."""

    def __init__(self, page: int, message: str):
        super().__init__(f"page {page}: {message}")
        self.page = page


@dataclass(frozen=True)
class RepoRef:
    host: str
    owner: str
    name: str
    clone_url: str
    snapshot_time: datetime

    @property
    def repo_id(self) -> str:
        return f"{self.owner}/{self.name}"


@dataclass(frozen=True)
class FileCandidate:
    repo_id: str
    path: str
    extension: str
    size_bytes: int
    is_text: bool = True


class GitHubSearchAdapter:
    """Repository search over the GitHub REST API.

    Pagination, authentication and rate-limit handling live here so that
    discovery logic stays testable against mock adapters. The token comes
    from the RULEMINE_API_TOKEN environment variable.
    """

    def __init__(self, token: str | None = None, per_page: int = 100, session=None):
        self.token = token if token is not None else os.environ.get(API_TOKEN_ENV)
        self.per_page = per_page
        if session is None:
            import requests

            session = requests.Session()
        self.session = session

    def search(self, query: str, page: int) -> tuple[list[dict], bool]:
        headers = {"Accept": "application/vnd.github+json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            resp = self.session.get(
                "https://api.github.com/search/repositories",
                params={"q": query, "page": page, "per_page": self.per_page},
                headers=headers,
                timeout=30,
            )
        except Exception as exc:  # noqa: BLE001 - transport boundary
            raise TransportError(str(exc)) from exc
        if resp.status_code in (403, 429):
            retry = resp.headers.get("Retry-After")
            raise RateLimitedError(
                f"rate limited (HTTP {resp.status_code})",
                retry_after=float(retry) if retry else None,
            )
        if resp.status_code != 200:
            raise TransportError(f"HTTP {resp.status_code}")
        try:
            payload = resp.json()
            items = [
                {
                    "host": "github.com",
                    "owner": item["owner"]["login"],
                    "name": item["name"],
                    "clone_url": item["clone_url"],
                }
                for item in payload["items"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise PageParseError(page, str(exc)) from exc
        has_more = len(payload["items"]) == self.per_page
        return items, has_more


def discover_repositories(
    query: str,
    api_adapter,
    page_limit: int,
    snapshot_time: datetime | None = None,
) -> list[RepoRef]:
    """Deduplicated repository references for a search query, sorted by owner/name."""
    if not query:
        raise ValueError("query must be non-empty")
    if page_limit < 1:
        raise ValueError("page_limit must be positive")
    snapshot = snapshot_time or datetime.now(tz=timezone.utc)
    seen: dict[tuple[str, str], RepoRef] = {}
    for page in range(1, page_limit + 1):
        items, has_more = api_adapter.search(query, page)
        for item in items:
            key = (item["owner"], item["name"])
            if key not in seen:
                seen[key] = RepoRef(
                    host=item.get("host", "github.com"),
                    owner=item["owner"],
                    name=item["name"],
                    clone_url=item["clone_url"],
                    snapshot_time=snapshot,
                )
        if not has_more:
            break
    return [seen[key] for key in sorted(seen)]


def _is_text(path: Path) -> bool:
    try:
        with open(path, "rb") as fh:
            return b"\x00" not in fh.read(TEXT_SNIFF_BYTES)
    except OSError as exc:
        log.warning("unreadable file skipped: %s (%s)", path, exc)
        return False


def select_candidate_files(repo_root, repo_id: str | None = None) -> list[FileCandidate]:
    """Candidate rule files under a working tree, sorted by path.

    Keeps the six specialized rule extensions plus .txt, .conf and
    extensionless files; every candidate must pass the text sniff (no NUL
    byte in the first 8 KiB). Unreadable files are skipped with a warning.
    """
    root = Path(repo_root)
    repo_id = repo_id if repo_id is not None else root.name
    out = []
    for path in sorted(root.rglob("*")):
        if not path.is_file() or path.is_symlink():
            continue
        rel = path.relative_to(root).as_posix()
        if rel.split("/", 1)[0] == ".git":
            continue
        ext = path.suffix[1:].lower() if path.suffix else ""
        if ext not in SPECIALIZED_EXTENSIONS and ext not in GENERIC_EXTENSIONS and ext != "":
            continue
        if not _is_text(path):
            continue
        try:
            size = path.stat().st_size
        except OSError as exc:
            log.warning("unreadable file skipped: %s (%s)", path, exc)
            continue
        out.append(
            FileCandidate(repo_id=repo_id, path=rel, extension=ext, size_bytes=size)
        )
    out.sort(key=lambda c: c.path)
    return out


class FailureLedger:
    """Newline-delimited record of clone failures; the pipeline continues."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def record(self, clone_url: str, error: str):
        entry = {
            "clone_url": clone_url,
            "error": error,
            "timestamp": datetime.now(tz=timezone.utc).isoformat(),
        }
        with open(self.path, "a") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")


@dataclass(frozen=True)
class RepoHandle:
    repo_id: str
    path: Path


def clone_snapshot(repo: RepoRef, dest, ledger: FailureLedger | None = None) -> RepoHandle | None:
    """Full-history clone of one repository; failures are ledgered, not fatal."""
    dest = Path(dest)
    dest.parent.mkdir(parents=True, exist_ok=True)
    proc = subprocess.run(
        ["git", "clone", "--quiet", repo.clone_url, str(dest)],
        capture_output=True,
        text=True,
        check=False,
    )
    if proc.returncode != 0:
        message = proc.stderr.strip()[:300]
        log.warning("clone failed for %s: %s", repo.clone_url, message)
        if ledger is not None:
            ledger.record(repo.clone_url, message)
        return None
    return RepoHandle(repo_id=repo.repo_id, path=dest)


def clone_many(
    repos: list[RepoRef],
    dest_root,
    ledger: FailureLedger | None = None,
    workers: int = 4,
) -> list[RepoHandle]:
    """Clone repositories with a bounded worker pool; order follows input."""
    dest_root = Path(dest_root)
    dest_root.mkdir(parents=True, exist_ok=True)

    def run(repo: RepoRef):
        dest = dest_root / f"{repo.owner}__{repo.name}"
        if dest.exists():
            return RepoHandle(repo_id=repo.repo_id, path=dest)
        return clone_snapshot(repo, dest, ledger)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        handles = list(pool.map(run, repos))
    return [h for h in handles if h is not None]
