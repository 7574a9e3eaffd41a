import pytest

from boss.data import generate_blobs
from boss.models import build_generator, train_classifier


@pytest.fixture(scope="session")
def blobs4():
    """Four well separated classes of 8x8 images."""
    return generate_blobs(4, 40, 64, seed=3, noise=0.1, image_shape=(8, 8))


@pytest.fixture(scope="session")
def clf4(blobs4):
    return train_classifier(blobs4, [64, 32, 4], epochs=15, seed=0)


@pytest.fixture(scope="session")
def clf4b(blobs4):
    return train_classifier(blobs4, [64, 32, 4], epochs=15, seed=1)


@pytest.fixture(scope="session")
def gen64():
    return build_generator(16, 64, hidden=(32, 32), seed=0)


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" in nodeid and rep.when == "call":
                name = nodeid.split("::")[-1]
                num = int(name.split("_")[2])
                lines.append((num, f"criterion {num:>2} {'PASS' if outcome == 'passed' else 'FAIL'}  {name}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
