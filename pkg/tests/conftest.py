import json
from pathlib import Path

import numpy as np
import pytest

ORACLES = json.loads((Path(__file__).parent / "oracles" / "frozen.json").read_text())


@pytest.fixture(scope="session")
def oracle():
    return ORACLES


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def mcse(x: np.ndarray) -> float:
    """Monte Carlo standard error of a chain mean, using the chain's ESS."""
    from hiercheck.samplers import effective_sample_size

    return float(np.std(x, ddof=1) / np.sqrt(effective_sample_size(x)))


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> bool:
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
