"""The eleven acceptance criteria at their stated tolerances.

Each test prints one PASS/FAIL line; the lines are repeated in the
"acceptance criteria" section of the pytest summary.
"""

import pytest

from ktube.acceptance import CRITERIA, run_criterion


@pytest.mark.parametrize("number", [c[0] for c in CRITERIA], ids=[f"criterion_{c[0]:02d}" for c in CRITERIA])
def test_criterion(number, acceptance_lines, capsys):
    res = run_criterion(number)
    acceptance_lines.append(res.line())
    with capsys.disabled():
        print("\n" + res.line())
        for name, detail in res.details.items():
            print(f"    {'ok  ' if res.checks[name] else 'FAIL'} {name}: {detail}")
    assert res.passed, res.line()
