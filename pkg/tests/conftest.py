import json
from pathlib import Path

import numpy as np
import pytest

import siggen
from devo.audio import AudioBuffer

GOLDEN_DIR = Path(__file__).parent / "golden"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion."""
    lines = []
    for status, verdict in (("passed", "PASS"), ("failed", "FAIL")):
        for report in terminalreporter.stats.get(status, []):
            if "test_acceptance" in report.nodeid and report.when == "call":
                name = report.nodeid.split("::")[-1]
                lines.append((name, verdict))
    if lines:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for name, verdict in sorted(lines):
            terminalreporter.write_line(f"  {verdict}  {name}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def speech_buf():
    return AudioBuffer(siggen.speech_like(1.5, seed=11), 16000)


@pytest.fixture
def noise_buf():
    return AudioBuffer(siggen.pink_noise(1.5, seed=12), 16000)


@pytest.fixture(scope="session")
def stoi_goldens():
    records = json.loads((GOLDEN_DIR / "stoi_golden.json").read_text())
    assert len(records) >= 10
    return records
