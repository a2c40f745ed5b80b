"""Acceptance criteria 1-12, one test each, at their stated tolerances."""

from __future__ import annotations

import pytest

from rgbdsde.verify import CRITERIA

# collected by the terminal-summary hook in conftest
LINES: dict = {}


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    result = CRITERIA[number]()
    LINES[number] = result.line()
    print(result.line())
    assert result.passed, result.details
