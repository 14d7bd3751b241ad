"""Acceptance gate: every criterion at full scale, one pass/fail line each.

Run ``pytest tests/test_acceptance.py -v -s`` to see the lines inline; they
are also printed in the terminal summary.
"""
import pytest

from pgkbreg.acceptance import CRITERIA, FULL, criterion_line

LINES = {}


@pytest.fixture(scope="module", autouse=True)
def report():
    yield
    print("\nacceptance summary")
    for i in sorted(LINES):
        print(LINES[i])


@pytest.mark.slow
@pytest.mark.parametrize("criterion", FULL)
def test_criterion(criterion, capsys):
    checks = CRITERIA[criterion]("full")
    line = criterion_line(criterion, checks)
    LINES[criterion] = line
    with capsys.disabled():
        print("\n" + line)
    assert checks, "criterion produced no checks"
    failed = [c.detail() for c in checks if not c.passed]
    assert not failed, line
