from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from blockstate.dataset import load_idx

MNIST_DIR = Path(os.environ.get("BLOCKSTATE_MNIST_DIR", "/root/data/mnist"))
TRAIN_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
TEST_FILES = ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")


def mnist_available() -> bool:
    return all((MNIST_DIR / f).exists() for f in TRAIN_FILES + TEST_FILES)


def pytest_collection_modifyitems(config, items):
    run_slow = os.environ.get("BLOCKSTATE_RUN_SLOW") == "1"
    skip_slow = pytest.mark.skip(reason="slow job; set BLOCKSTATE_RUN_SLOW=1")
    skip_mnist = pytest.mark.skip(reason=f"MNIST files not found in {MNIST_DIR}")
    have = mnist_available()
    for item in items:
        if "slow" in item.keywords and not run_slow:
            item.add_marker(skip_slow)
        if "mnist" in item.keywords and not have:
            item.add_marker(skip_mnist)


@pytest.fixture(scope="session")
def mnist_train():
    return load_idx(*(MNIST_DIR / f for f in TRAIN_FILES))


@pytest.fixture(scope="session")
def mnist_test():
    return load_idx(*(MNIST_DIR / f for f in TEST_FILES))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance report ---------------------------------------------------------------------

CRITERIA: dict[int, list[tuple[str, str, str]]] = {}
DETAIL_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """``report(detail)`` attaches a measured value to this test's criterion line."""
    details = request.node.stash.setdefault(DETAIL_KEY, [])
    return details.append


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    report = yield
    mark = item.get_closest_marker("criterion")
    if mark is None or (report.when != "call" and not (report.when == "setup" and report.skipped)):
        return report
    if report.skipped and hasattr(report, "wasxfail"):
        outcome = "FAIL"
    elif report.skipped:
        outcome = "SKIP"
    else:
        outcome = "PASS" if report.passed else "FAIL"
    detail = "; ".join(item.stash.get(DETAIL_KEY, []))
    if outcome == "SKIP" and not detail:
        detail = str(report.longrepr[2]) if isinstance(report.longrepr, tuple) else "skipped"
    CRITERIA.setdefault(mark.args[0], []).append((outcome, item.name, detail))
    return report


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        parts = CRITERIA[number]
        ran = [p for p in parts if p[0] != "SKIP"]
        if not ran:
            verdict = "SKIP"
        elif any(p[0] == "FAIL" for p in ran):
            verdict = "FAIL"
        else:
            verdict = "PASS"
        terminalreporter.write_line(f"criterion {number}: {verdict}")
        for outcome, name, detail in parts:
            terminalreporter.write_line(f"    {outcome:4s} {name}: {detail}")
