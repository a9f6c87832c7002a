import pytest

from src.core.verification.verifier import SUITES, VerificationResult, gradient_cases, run_verification


def test_result_aggregates_checks():
    result = VerificationResult()
    result.record("first", True, 1e-12)
    result.record("second", False, 0.5, "off by half")
    assert not result.valid
    data = result.to_dict()
    assert data["valid"] is False
    assert [c["name"] for c in data["checks"]] == ["first", "second"]
    assert "off by half" in data["feedback"]


@pytest.mark.parametrize("suite", [
    "metric_oracle", "parameter_counts", "bpr_fixed_points", "lightgcn_decomposition", "commutation",
])
def test_fast_suites_pass(suite):
    result = run_verification(seed=0, suites=[suite])
    assert result.valid, result.feedback
    assert result.checks


def test_unknown_suite():
    with pytest.raises(ValueError):
        run_verification(suites=["nonsense"])


@pytest.mark.slow
def test_full_verification_passes():
    result = run_verification(seed=3)
    assert result.valid, result.feedback
    assert len(result.checks) >= len(SUITES)


def test_decomposition_checks_every_score_term():
    result = run_verification(seed=1, suites=["lightgcn_decomposition"])
    names = {c["name"] for c in result.checks}
    assert {"lightgcn_decomposition", "lightgcn_fused_blocks", "lightgcn_score_terms"} <= names
    assert result.valid, result.feedback


def test_gradient_cases_include_both_twins():
    labels = [name for name, _ in gradient_cases()]
    assert any(name.startswith("twin_e ") for name in labels)
    assert any(name.startswith("twin ") for name in labels)
