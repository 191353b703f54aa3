import random
import sys
from pathlib import Path

import pytest
import torch

from adaptpaste.corpus import SourceFile

STDLIB = Path(sys.prefix) / "lib" / f"python{sys.version_info.major}.{sys.version_info.minor}"
if not (STDLIB / "os.py").exists():
    STDLIB = Path(random.__file__).parent

torch.set_num_threads(1)


def source(text: str, path: str = "m.py", repo: str = "r") -> SourceFile:
    return SourceFile(repo, path, text)


@pytest.fixture
def make_source():
    return source


@pytest.fixture(scope="session")
def stdlib_root() -> Path:
    return STDLIB


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Records one verdict line per acceptance criterion."""

    def emit(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
