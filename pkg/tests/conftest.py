import os
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

EXTENDED = os.environ.get("NMSTEER_EXTENDED") == "1"

_ACCEPTANCE = defaultdict(list)


def pytest_collection_modifyitems(config, items):
    if EXTENDED:
        return
    skip = pytest.mark.skip(reason="extended; set NMSTEER_EXTENDED=1")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        entries = _ACCEPTANCE[n]
        ok = all(e[0] for e in entries)
        bad = [d for passed, d in entries if not passed]
        detail = "; ".join(bad) if bad else entries[-1][1]
        tr.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def acceptance():
    """``acceptance(n, passed, detail)`` records a line for the summary."""
    def record(n, passed, detail):
        _ACCEPTANCE[n].append((bool(passed), detail))
        return passed
    return record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
