from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "tests" / "fixtures"
CONFIGS = ROOT / "configs"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fixture_data(monkeypatch):
    monkeypatch.setenv("EXTRAFW_DATA_DIR", str(FIXTURES / "data"))
    return FIXTURES / "data"


# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[crit]
        ok = all(c[1] for c in checks)
        detail = "; ".join(f"{name}: {'ok' if good else 'FAIL'} ({info})" for name, good, info in checks)
        terminalreporter.write_line(f"criterion {crit:2d} {'PASS' if ok else 'FAIL'} - {detail}")
