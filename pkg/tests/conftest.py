import random
import re

import pytest

from kgquery.enumerate import EnumBudget, enumerate_abstract
from kgquery.kg import random_kg_pair


@pytest.fixture(scope="session")
def default_types():
    return enumerate_abstract(EnumBudget())


@pytest.fixture(scope="session")
def small_kgs():
    return random_kg_pair(30, 3, 120, random.Random(7))


@pytest.fixture(scope="session")
def medium_kgs():
    return random_kg_pair(80, 4, 600, random.Random(11))


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    lines = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", getattr(rep, "nodeid", ""))
            if not m or rep.when not in ("call", "setup"):
                continue
            n = int(m.group(1))
            verdict = "PASS" if outcome == "passed" else "FAIL"
            prev = lines.get(n)
            if prev is None or verdict == "FAIL":
                lines[n] = (verdict, m.group(2).replace("_", " "))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        verdict, name = lines[n]
        terminalreporter.write_line(f"criterion {n}: {verdict}  ({name})")
