"""Acceptance criteria A1-A8 at their stated tolerances; one PASS/FAIL line each."""

import pytest

from alignflock.acceptance import CRITERIA, TOLERANCES, _timed


@pytest.mark.parametrize("cid,name,fn", CRITERIA, ids=[c[0] for c in CRITERIA])
def test_criterion(cid, name, fn, capsys):
    crit = _timed(cid, name, fn, dict(TOLERANCES))
    with capsys.disabled():
        print(f"\n{crit.line()}")
    for c in crit.failures:
        print(f"  failed check {c.name}: value={c.value!r} limit={c.limit!r}")
    assert crit.passed
