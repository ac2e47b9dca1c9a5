"""One test per acceptance criterion; each prints its PASS/FAIL line.

Criteria 9 and 10 are not attainable as stated and are marked as strict
expected failures: the line still prints FAIL with the measured value.
"""
import pytest

from decohere.acceptance import CRITERIA, run_criterion

LINES: list[str] = []

UNATTAINABLE = {
    9: "the quoted regime gives t_mix = t_wp exactly, so the second ratio is 1, not >= 10",
    10: "small-separation curvature is Φσk₀²/3 by the isotropic average, twice the quoted /6",
}


def _params():
    out = []
    for n in sorted(CRITERIA):
        marks = [pytest.mark.xfail(strict=True, reason=UNATTAINABLE[n])] if n in UNATTAINABLE else []
        out.append(pytest.param(n, id=f"criterion{n}_{CRITERIA[n][0]}", marks=marks))
    return out


@pytest.mark.parametrize("number", _params())
def test_criterion(number):
    r = run_criterion(number)
    line = r.line()
    LINES.append(line)
    print(line)
    assert r.passed, line
