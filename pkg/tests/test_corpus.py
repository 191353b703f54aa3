import pytest

from adaptpaste.corpus import (CorpusError, FilterConfig, SourceFile, count_lines, ingest, is_test_path,
                               passes_filters, split)
from pathlib import PurePosixPath


def _write(root, rel, text):
    p = root / rel
    p.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(text, bytes):
        p.write_bytes(text)
    else:
        p.write_text(text, encoding="utf-8")


@pytest.fixture
def tree(tmp_path):
    body = "a = 1\nb = 2\nc = a + b\n"
    _write(tmp_path, "alpha/pkg/core.py", body)
    _write(tmp_path, "alpha/pkg/util.py", body + "d = c\n")
    _write(tmp_path, "alpha/tests/test_core.py", body)
    _write(tmp_path, "beta/main.py", body)
    _write(tmp_path, "beta/test_main.py", body)
    _write(tmp_path, "beta/main_test.py", body)
    _write(tmp_path, "beta/short.py", "x = 1\n")
    _write(tmp_path, "beta/readme.txt", body)
    _write(tmp_path, "gamma/latin1.py", "s = 'caf\xe9'\n".encode("latin-1") * 3)
    _write(tmp_path, "gamma/ok.py", body)
    _write(tmp_path, "delta/x.py", body)
    return tmp_path


def test_count_lines():
    assert count_lines("") == 0
    assert count_lines("a") == 1
    assert count_lines("a\n") == 1
    assert count_lines("a\nb") == 2


def test_ingest_filters_and_order(tree):
    files = ingest(tree)
    paths = [f.relative_path for f in files]
    assert paths == ["alpha/pkg/core.py", "alpha/pkg/util.py", "beta/main.py", "delta/x.py", "gamma/ok.py"]
    assert {f.repo_id for f in files} == {"alpha", "beta", "delta", "gamma"}
    assert files[1].line_count == 4
    cfg = FilterConfig()
    assert all(passes_filters(f, cfg) for f in files)


def test_ingest_extra_excludes_and_depth(tree):
    files = ingest(tree, FilterConfig(extra_excludes=(r"^beta/",), repo_depth=2))
    assert "beta/main.py" not in [f.relative_path for f in files]
    assert files[0].repo_id == "alpha/pkg"


def test_ingest_unreadable_root(tmp_path):
    with pytest.raises(CorpusError):
        ingest(tmp_path / "missing")


def test_test_path_detection():
    cfg = FilterConfig()
    assert is_test_path(PurePosixPath("a/tests/x.py"), cfg)
    assert is_test_path(PurePosixPath("a/test_x.py"), cfg)
    assert is_test_path(PurePosixPath("a/x_test.py"), cfg)
    assert not is_test_path(PurePosixPath("a/contest.py"), cfg)


def _files(n):
    return [SourceFile(f"repo{i}", f"repo{i}/m.py", "a = 1\n" * 5) for i in range(n)]


def test_split_is_disjoint_deterministic_and_order_free():
    files = _files(40)
    a = split(files, (0.8, 0.1, 0.1), seed=3)
    b = split(list(reversed(files)), (0.8, 0.1, 0.1), seed=3)
    assert a == b
    counts = {s: sum(1 for v in a.values() if v.split == s) for s in ("train", "valid", "test")}
    assert counts == {"train": 32, "valid": 4, "test": 4}
    by_split = {}
    for v in a.values():
        by_split.setdefault(v.split, set()).add(v.repo_id)
    assert not (by_split["train"] & by_split["valid"]) and not (by_split["train"] & by_split["test"])


def test_split_seed_changes_assignment():
    files = _files(40)
    assert split(files, seed=1) != split(files, seed=2)


def test_split_every_split_nonempty():
    a = split(_files(3), (0.98, 0.01, 0.01))
    assert sorted(v.split for v in a.values()) == ["test", "train", "valid"]


def test_split_errors():
    with pytest.raises(CorpusError):
        split(_files(2))
    with pytest.raises(ValueError):
        split(_files(5), (0.5, 0.5, 0.5))
