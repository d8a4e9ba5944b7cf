"""Acceptance criteria 1-14 at their stated tolerances.

Each test prints one PASS/FAIL line. Monte Carlo durations can be scaled
with HYBRIDHOM_ACCEPT_SCALE; thresholds never change.
"""

import pytest

from hybridhom.acceptance import CHECKS, Session, run_criterion


@pytest.fixture(scope="module")
def session():
    return Session(None)


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CHECKS))
def test_criterion(number, session, capsys):
    result = run_criterion(number, session)
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.line()
