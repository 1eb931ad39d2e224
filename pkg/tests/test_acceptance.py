"""End-to-end acceptance criteria, one test per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see the pass/fail line
each criterion prints.
"""

import pytest

from walker_sg import acceptance

pytestmark = pytest.mark.slow


@pytest.mark.parametrize("number", [n for n, _, _ in acceptance.CRITERIA], ids=lambda n: f"criterion_{n}")
def test_criterion(number):
    result = acceptance.run_one(number)
    print(result.line())
    assert result.passed, result.line()
