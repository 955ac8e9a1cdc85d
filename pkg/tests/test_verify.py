import numpy as np
import pytest

from pdhp.gaussian_algebra import COMPLETE_SQUARE_SIGN_FAULT, injected_fault
from pdhp.verify import CHECKS, check_worked_instance, format_table, run_checks


def test_all_checks_pass():
    results = run_checks()
    assert [r.name for r in results] == list(CHECKS)
    assert all(r.passed for r in results), format_table(results)


def test_selected_checks_and_unknown_name():
    assert [r.name for r in run_checks(["worked_instance"])] == ["worked_instance"]
    assert check_worked_instance() <= 1e-12
    with pytest.raises(KeyError):
        run_checks(["nope"])


def test_injected_fault_is_caught():
    with injected_fault(COMPLETE_SQUARE_SIGN_FAULT):
        results = run_checks(["complete_square", "combine_quadratics"])
    assert not results[0].passed
    assert results[1].passed
    assert run_checks(["complete_square"])[0].passed


def test_crash_becomes_failed_row(monkeypatch):
    def boom(rng):
        raise RuntimeError("kaput")

    monkeypatch.setitem(CHECKS, "worked_instance", (boom, 1.0))
    (res,) = run_checks(["worked_instance"])
    assert not res.passed and res.value == np.inf and "kaput" in res.detail
    assert "FAIL" in format_table([res])
