"""Validation-suite mechanics (the full gate runs in the acceptance tests)."""

from cablefem.validate import suite_step_limit_equivalence, suite_symmetry


def test_symmetry_suite_passes_clean():
    name, tol, measured, passed = suite_symmetry()
    assert passed and measured <= tol


def test_injected_asymmetry_fails_symmetry_suite():
    def fault(k):
        k = k.tolil(copy=True)
        k[0, 1] += 1.0
        return k.tocsr()

    name, tol, measured, passed = suite_symmetry(fault=fault)
    assert not passed
    assert measured > tol


def test_step_limit_suite_reports_tip_difference():
    name, tol, measured, passed = suite_step_limit_equivalence()
    assert name == "step-limit-equivalence"
    assert passed and measured <= tol
