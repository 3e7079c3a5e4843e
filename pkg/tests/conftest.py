import os
from pathlib import Path

import pytest

MNIST_FILES = {
    "train_images": "train-images.idx3-ubyte",
    "train_labels": "train-labels.idx1-ubyte",
    "test_images": "t10k-images.idx3-ubyte",
    "test_labels": "t10k-labels.idx1-ubyte",
}

_ACCEPTANCE = []


def _find(directory: Path, name: str):
    for candidate in (name, name.replace(".idx", "-idx"), name + ".gz", name.replace(".idx", "-idx") + ".gz"):
        if (directory / candidate).exists():
            return directory / candidate
    return None


@pytest.fixture(scope="session")
def mnist_paths():
    directory = Path(os.environ.get("SNN_MNIST_DIR", "/root/data/mnist"))
    found = {k: _find(directory, v) for k, v in MNIST_FILES.items()}
    missing = [MNIST_FILES[k] for k, v in found.items() if v is None]
    if missing:
        pytest.skip(f"MNIST files not found in {directory} (set SNN_MNIST_DIR): {missing}")
    return {k: str(v) for k, v in found.items()}


@pytest.fixture
def acceptance_record():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(name, ok, detail=""):
        _ACCEPTANCE.append((name, bool(ok), detail))
        assert ok, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
