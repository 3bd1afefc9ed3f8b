import numpy as np
import pytest


def central_diff(f, x, axis, h=1e-5):
    """Central difference of ``f(points) -> array`` along ``axis`` at points ``x``."""
    e = np.zeros(x.shape[-1])
    e[axis] = h
    return (f(x + e) - f(x - e)) / (2 * h)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance results, filled by test_acceptance.py and printed after the run
ACCEPTANCE = []


def acceptance_lines():
    """One PASS/FAIL line per criterion; a criterion passes only if every part does."""
    by_id = {}
    for number, part, passed, detail in ACCEPTANCE:
        by_id.setdefault(number, []).append((part, passed, detail))
    lines = []
    for number in sorted(by_id):
        parts = by_id[number]
        status = "PASS" if all(p for _, p, _ in parts) else "FAIL"
        body = "; ".join(f"{part} {'ok' if p else 'FAILED'} ({detail})" for part, p, detail in parts)
        lines.append(f"{status} criterion {number:>2}: {body}")
    return lines


def pytest_terminal_summary(terminalreporter):
    lines = acceptance_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
