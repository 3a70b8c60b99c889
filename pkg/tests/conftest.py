from functools import lru_cache

import pytest
from hypothesis import settings

from renormlab import blaschke, contfrac

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

TARGETS = {"golden": contfrac.golden, "silver": contfrac.silver}

#: (criterion, passed, detail) lines collected by the acceptance module.
ACCEPTANCE_LOG: list[tuple[int, bool, str]] = []


@lru_cache(maxsize=None)
def _tuned(n: int, target: str, a: float, tol: float):
    return blaschke.tune_theta(n, TARGETS[target](), tol, a=a)


@pytest.fixture(scope="session")
def tuned():
    """``tuned(n, "golden", a=0.0, tol=1e-12)`` -> cached TuneResult."""

    def get(n, target="golden", a=0.0, tol=1e-12):
        return _tuned(n, target, float(a), tol)

    return get


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LOG:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in sorted(ACCEPTANCE_LOG):
        terminalreporter.write_line(f"criterion {crit:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
