"""Shared fixtures: git repo builders and rule corpora."""

from __future__ import annotations

import random
import subprocess
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

DATA_DIR = Path(__file__).parent / "data"

EPOCH = datetime(2020, 1, 1, 12, 0, 0, tzinfo=timezone.utc)


def day(n: int) -> datetime:
    return EPOCH + timedelta(days=n)


class RepoBuilder:
    """Scripted git repositories with exact author timestamps."""

    def __init__(self, path: Path, default_author=("Alice Dev", "alice@example.org")):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.default_author = default_author
        self._git("init", "--quiet", "--initial-branch=main")
        self._git("config", "user.name", default_author[0])
        self._git("config", "user.email", default_author[1])

    def _git(self, *args, env_extra=None):
        import os

        env = dict(os.environ)
        if env_extra:
            env.update(env_extra)
        proc = subprocess.run(
            ["git", "-C", str(self.path), *args],
            capture_output=True,
            text=True,
            env=env,
            check=False,
        )
        if proc.returncode != 0:
            raise RuntimeError(f"git {args}: {proc.stderr}")
        return proc.stdout

    def commit(self, files: dict[str, str | None], when: datetime, message: str,
               author: tuple[str, str] | None = None) -> str:
        for rel, content in files.items():
            target = self.path / rel
            if content is None:
                target.unlink()
            else:
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_text(content)
        self._git("add", "-A")
        name, email = author or self.default_author
        stamp = when.strftime("%Y-%m-%dT%H:%M:%S%z")
        self._git(
            "commit", "--quiet", "--allow-empty", "-m", message,
            env_extra={
                "GIT_AUTHOR_NAME": name,
                "GIT_AUTHOR_EMAIL": email,
                "GIT_AUTHOR_DATE": stamp,
                "GIT_COMMITTER_NAME": name,
                "GIT_COMMITTER_EMAIL": email,
                "GIT_COMMITTER_DATE": stamp,
            },
        )
        return self._git("rev-parse", "HEAD").strip()

    def branch(self, name: str, start: str = "HEAD"):
        self._git("checkout", "--quiet", "-b", name, start)

    def checkout(self, name: str):
        self._git("checkout", "--quiet", name)

    def merge(self, other: str, when: datetime, message: str,
              author: tuple[str, str] | None = None):
        name, email = author or self.default_author
        stamp = when.strftime("%Y-%m-%dT%H:%M:%S%z")
        self._git(
            "merge", "--quiet", "--no-ff", "-m", message, other,
            env_extra={
                "GIT_AUTHOR_NAME": name,
                "GIT_AUTHOR_EMAIL": email,
                "GIT_AUTHOR_DATE": stamp,
                "GIT_COMMITTER_NAME": name,
                "GIT_COMMITTER_EMAIL": email,
                "GIT_COMMITTER_DATE": stamp,
            },
        )
        return self._git("rev-parse", "HEAD").strip()

    def move(self, old: str, new: str, when: datetime, message: str):
        self._git("mv", old, new)
        return self.commit({}, when, message)


@pytest.fixture
def repo_builder(tmp_path):
    def build(name: str, **kwargs) -> RepoBuilder:
        return RepoBuilder(tmp_path / name, **kwargs)

    return build


def curated_corpus_texts() -> dict[str, str]:
    """The curated parser-validation corpus: fixture files plus generated rules."""
    from rulegen import RuleFactory

    texts = {}
    for path in sorted((DATA_DIR / "rules").iterdir()):
        texts[path.name] = path.read_text()
    rng = random.Random(20240801)
    factory = RuleFactory(rng)
    for fileno in range(18):
        rules = [factory.rule() for _ in range(rng.randrange(8, 13))]
        header = f"// generated collection {fileno}\n"
        if rng.random() < 0.4:
            header += 'import "pe"\n\n'
        texts[f"generated_{fileno:02d}.yar"] = header + "\n".join(rules)
    return texts


@pytest.fixture(scope="session")
def curated_corpus(tmp_path_factory):
    """Corpus directory of .yar files, plus the extracted records."""
    from rulemine.extract import scan_file

    root = tmp_path_factory.mktemp("curated-corpus")
    records = []
    for name, text in curated_corpus_texts().items():
        (root / name).write_text(text)
        records.extend(scan_file(text, ("corpus", name)))
    return root, records
