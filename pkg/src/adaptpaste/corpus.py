"""Corpus ingestion, quality filters and repository-level splits."""

from __future__ import annotations

import hashlib
import logging
import os
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path, PurePosixPath
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")


class CorpusError(RuntimeError):
    pass


@dataclass(frozen=True)
class SourceFile:
    repo_id: str
    relative_path: str
    text: str
    line_count: int = -1

    def __post_init__(self):
        if self.line_count < 0:
            object.__setattr__(self, "line_count", count_lines(self.text))

    @cached_property
    def data(self) -> bytes:
        return self.text.encode("utf-8")


@dataclass(frozen=True)
class SplitAssignment:
    repo_id: str
    split: str


@dataclass
class FilterConfig:
    extensions: tuple[str, ...] = (".py",)
    min_lines: int = 3
    test_dirs: tuple[str, ...] = ("test", "tests")
    test_prefixes: tuple[str, ...] = ("test_",)
    test_suffixes: tuple[str, ...] = ("_test",)
    # path components under root that make up the repository id
    repo_depth: int = 1
    extra_excludes: tuple[str, ...] = field(default_factory=tuple)


def count_lines(text: str) -> int:
    if not text:
        return 0
    return text.count("\n") + (0 if text.endswith("\n") else 1)


def is_test_path(rel: PurePosixPath, config: FilterConfig) -> bool:
    parts = rel.parts
    if any(p in config.test_dirs for p in parts[:-1]):
        return True
    stem = PurePosixPath(parts[-1]).stem
    if any(stem.startswith(p) for p in config.test_prefixes):
        return True
    return any(stem.endswith(s) for s in config.test_suffixes)


def passes_filters(file: SourceFile, config: FilterConfig) -> bool:
    """Post-hoc predicate check, mirrors what `ingest` enforces."""
    rel = PurePosixPath(file.relative_path)
    if rel.suffix not in config.extensions:
        return False
    if is_test_path(rel, config):
        return False
    if any(re.search(p, file.relative_path) for p in config.extra_excludes):
        return False
    return file.line_count >= config.min_lines


def _repo_of(rel: PurePosixPath, depth: int) -> str:
    parts = rel.parts
    if len(parts) <= depth:
        # top-level files form their own repository
        return "/".join(parts)
    return "/".join(parts[:depth])


def ingest(root_dir: str | os.PathLike, config: FilterConfig | None = None) -> list[SourceFile]:
    """Walk ``root_dir`` and return every file passing the filters, in path order."""
    config = config or FilterConfig()
    root = Path(root_dir)
    if not root.is_dir() or not os.access(root, os.R_OK | os.X_OK):
        raise CorpusError(f"cannot read corpus root {root}")

    files = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            path = Path(dirpath) / name
            rel = PurePosixPath(path.relative_to(root).as_posix())
            if rel.suffix not in config.extensions or is_test_path(rel, config):
                continue
            if any(re.search(p, str(rel)) for p in config.extra_excludes):
                continue
            try:
                text = path.read_bytes().decode("utf-8")
            except UnicodeDecodeError:
                log.warning("skipping %s: not valid UTF-8", rel)
                continue
            except OSError as exc:
                log.warning("skipping %s: %s", rel, exc)
                continue
            sf = SourceFile(_repo_of(rel, config.repo_depth), str(rel), text)
            if sf.line_count < config.min_lines:
                continue
            files.append(sf)
    files.sort(key=lambda f: f.relative_path)
    return files


def _unit_hash(repo_id: str, seed: int) -> float:
    digest = hashlib.sha256(f"{seed}\x00{repo_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def _partition(n: int, ratios: Sequence[float]) -> list[int]:
    # largest-remainder rounding; every split gets at least one repo
    raw = [r * n for r in ratios]
    counts = [int(x) for x in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    for i, c in enumerate(counts):
        if c == 0 and ratios[i] > 0:
            donor = max(range(len(counts)), key=lambda j: counts[j])
            counts[donor] -= 1
            counts[i] += 1
    return counts


def split(
    files: Iterable[SourceFile],
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> dict[str, SplitAssignment]:
    """Assign each repository to train/valid/test.

    Repositories are ordered by a seeded hash of their id and cut into
    consecutive runs whose sizes are the closest integer partition of the
    ratios, so the result does not depend on input order.
    """
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three values summing to 1, got {ratios}")
    repos = sorted({f.repo_id for f in files})
    if len(repos) < 3:
        raise CorpusError(f"need at least 3 repositories to split, got {len(repos)}")
    ranked = sorted(repos, key=lambda r: (_unit_hash(r, seed), r))
    counts = _partition(len(ranked), ratios)
    out = {}
    pos = 0
    for name, count in zip(SPLITS, counts):
        for repo in ranked[pos : pos + count]:
            out[repo] = SplitAssignment(repo, name)
        pos += count
    return out
