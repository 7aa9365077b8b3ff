import itertools
import math

import numpy as np
import pytest

from nikolskii_lb.core.errors import ConditionViolated, NumericalFailure, ParameterError
from nikolskii_lb.core.lb_verifier import (
    ASYMPTOTE, NAMED_CONSTANTS, R_ZERO_LAMBDA, branch_of, certificate, certificate_bound,
    check_lemma_sandwich, check_lemma_wjk, chi_budget, compute_Sm, cosh_product, exact_enum,
    exact_enum_equal, general_branch_moments, upsilon_moment, verify_assumptions,
)
from nikolskii_lb.core.models import BudgetMode, LambdaBranch, PriorKind, Provenance


def _brute_force(S, n):
    total = 0.0
    for w in itertools.product((-1.0, 1.0), repeat=len(S)):
        total += (1.0 + float(np.dot(S, w))) ** n
    return math.log(total / 2 ** len(S))


def test_named_constants():
    assert NAMED_CONSTANTS["assumption_mass"]["expression"] == "230/231"
    assert NAMED_CONSTANTS["kappa_floor"]["value"] == pytest.approx(143 / 144)
    assert ASYMPTOTE == pytest.approx(107 / (144 * math.e))
    assert R_ZERO_LAMBDA == 0.125


@pytest.mark.parametrize("s", [0.01, 0.1, 0.3])
def test_exact_enum_single_bump_second_moment(s):
    assert math.exp(exact_enum_equal(s, 1, 2)) == pytest.approx(1.0 + s * s, rel=1e-12)


def test_exact_enum_equal_at_n_two():
    s, M = 0.01, 50
    assert math.exp(exact_enum_equal(s, M, 2)) == pytest.approx(1.0 + s * s * M, rel=1e-10)


def test_exact_enum_matches_brute_force():
    S = np.array([0.01, 0.02, 0.03, 0.015])
    assert exact_enum(S, 5) == pytest.approx(_brute_force(S, 5), rel=1e-10)


def test_exact_enum_collapses_equal_entries():
    S = np.full(6, 0.02)
    assert exact_enum(S, 7) == pytest.approx(_brute_force(S, 7), rel=1e-10)


def test_exact_enum_refuses_large_unequal_input():
    S = np.linspace(0.001, 0.002, 25)
    with pytest.raises(NumericalFailure):
        exact_enum(S, 3)


def test_cosh_product_closed_form():
    S = np.full(3, 0.01)
    assert cosh_product(S, 10, 1) == pytest.approx(3 * math.log(math.cosh(0.1)), rel=1e-12)
    assert cosh_product(S, 10, 2) == pytest.approx(3 * math.log(math.cosh(0.2)), rel=1e-12)


def test_exact_enum_below_cosh_product():
    rng = np.random.default_rng(4)
    for _ in range(5):
        S = rng.uniform(0.0, 0.01, 8)
        assert exact_enum(S, 20) <= cosh_product(S, 20) + 1e-12


def test_cosh_product_bernoulli_prior():
    S = np.full(2, 0.1)
    expected = 2 * math.log1p(0.25 * math.expm1(0.5))
    assert cosh_product(S, 5, 1, PriorKind.BERNOULLI_ON_UNIT, 0.5) == pytest.approx(expected)


def test_certificate_bound_with_exact_second_moment():
    result = certificate_bound(1.0, 1.0, 4.0, 0.125)
    assert result["ez_min_bound"] == pytest.approx(1.0)
    assert result["final"] == pytest.approx(0.875 / math.e)


def test_certificate_bound_reference_value():
    result = certificate_bound(1.0, 2.0, 100.0, 0.125)
    assert result["final"] == pytest.approx(0.32097, abs=1e-4)


def test_certificate_bound_edge_cases():
    assert certificate_bound(1.0, math.inf, 4.0, 0.125)["final"] == 0.0
    assert certificate_bound(1.0, 5.0, math.inf, 0.125)["ez_min_bound"] == 1.0
    assert certificate_bound(1.0, 1e6, 1.0, 0.125)["final"] == 0.0
    with pytest.raises(NumericalFailure):
        certificate_bound(1.0, 0.5, 4.0, 0.125)


def test_lemma_wjk_boundary_case():
    result = check_lemma_wjk(1, 1, 0.1, 1.0, [1.0], reps=1000, seed=0)
    assert result["D_K"] == pytest.approx(5.0)
    assert result["premise_value"] == pytest.approx(1.0)
    assert result["premise"]
    assert result["W_exact"] == pytest.approx(1.1, abs=1e-12)
    assert result["W_hat"] == pytest.approx(1.1, abs=1e-12)
    assert result["stderr"] == pytest.approx(0.0, abs=1e-12)
    assert result["pass"]


def test_lemma_wjk_premise_violation():
    with pytest.raises(ConditionViolated):
        check_lemma_wjk(1, 1, 0.2, 1.0, [1.0], reps=10)
    result = check_lemma_wjk(1, 1, 0.2, 1.0, [1.0], reps=10, enforce=False)
    assert not result["premise"]
    assert not result["pass"]


def test_lemma_wjk_monte_carlo_agrees_with_enumeration():
    a = [0.01, 0.02, 0.03]
    result = check_lemma_wjk(50, 3, 0.5, 1.0, a, reps=20_000, seed=3)
    assert result["W_exact"] is not None
    assert abs(result["W_hat"] - result["W_exact"]) <= 5.0 * result["stderr"] + 1e-12
    assert result["W_exact"] <= 2.0


def test_lemma_wjk_bernoulli_weights():
    result = check_lemma_wjk(10, 4, 1.0, 1.0, [0.05], reps=5000, seed=1, zeta_p=0.5,
                             equal_weights=True)
    assert result["pass"]
    assert result["W_exact"] >= 1.0


def test_lemma_wjk_argument_checks():
    with pytest.raises(ParameterError):
        check_lemma_wjk(0, 1, 0.1, 1.0, [0.1])
    with pytest.raises(ParameterError):
        check_lemma_wjk(1, 2, 0.1, 1.0, [0.1, 0.2, 0.3])
    with pytest.raises(ParameterError):
        check_lemma_wjk(1, 1, -0.1, 1.0, [0.1])


def test_zero_lambda_branch(family_one):
    assert branch_of(family_one) is LambdaBranch.ZERO_LAMBDA
    moments = general_branch_moments(family_one)
    assert moments["kappa"] == 1.0
    assert moments["R_term"] == R_ZERO_LAMBDA


def test_compute_sm_closed_form_matches_quadrature(family_one):
    closed = compute_Sm(family_one)
    assert closed.shape == (family_one.M,)
    assert np.all(closed == family_one.S_value)
    quad = compute_Sm(family_one, method="quadrature", boxes=[0, 1, 2])
    np.testing.assert_allclose(quad, family_one.S_value, rtol=1e-6)
    with pytest.raises(ParameterError):
        compute_Sm(family_one, method="spline")


def test_chi_budget_modes(family_one):
    exact = chi_budget(family_one, mode=BudgetMode.EXACT_ENUM)
    product = chi_budget(family_one, mode=BudgetMode.COSH_PRODUCT)
    assert exact.value <= product.value * (1.0 + 1e-12)
    assert product.conservative
    assert not exact.conservative
    assert exact.per_m["count"] == family_one.M
    assert exact.ratio == pytest.approx(exact.value / exact.alpha_sq)
    with pytest.raises(ConditionViolated):
        chi_budget(family_one, mode=BudgetMode.GENERAL_BRANCH_BOUND)


def test_certificate_zero_lambda_branch(family_one):
    cert = certificate(family_one)
    assert cert.branch is LambdaBranch.ZERO_LAMBDA
    assert cert.budget_mode is BudgetMode.EXACT_ENUM
    assert cert.kappa == 1.0
    assert cert.final >= 0.0
    assert cert.asymptote == pytest.approx(ASYMPTOTE)
    assert cert.provenance["constants"] == Provenance.ESTIMATED.value


def test_checklist_on_zero_mean_family(family_one):
    checklist = verify_assumptions(family_one, y_mc=100, seed=2)
    assert len(checklist.entries) == 5
    assert checklist.a1_disjoint_supports.passed
    assert checklist.a2_positive_base.passed
    assert checklist.a4_separation_mass.passed
    assert checklist.a5_branch.passed
    assert checklist.branch is LambdaBranch.ZERO_LAMBDA
    assert checklist.a3_class_mass.provenance is Provenance.MONTE_CARLO
    a3 = checklist.a3_class_mass
    assert a3.detail["nonnegative_fraction"] == 1.0
    assert a3.passed == (a3.value >= a3.threshold and a3.detail["base_in_theta_prime"])
    assert checklist.passed == all(e.passed for e in checklist.entries)


def test_checklist_is_reproducible(synthetic_family):
    first = verify_assumptions(synthetic_family, y_mc=100, seed=8)
    second = verify_assumptions(synthetic_family, y_mc=100, seed=8)
    assert [e.value for e in first.entries] == [e.value for e in second.entries]
    assert first.a5_branch.passed
    with pytest.raises(ParameterError):
        verify_assumptions(synthetic_family, y_mc=50)


def test_general_branch_moments(synthetic_family):
    moments = general_branch_moments(synthetic_family)
    assert moments["kappa_ok"]
    assert moments["kappa"] == pytest.approx(1.0, abs=5e-3)
    assert moments["second_moment"] >= moments["kappa"] ** 2 * (1.0 - 1e-12)
    assert moments["R_term"] == pytest.approx(0.125 * math.sqrt(moments["second_moment"]))


def test_upsilon_moment_within_bound(synthetic_family):
    value = upsilon_moment(synthetic_family, synthetic_family.n, 4.0 * (math.e + 1.0))
    assert 1.0 <= value <= 2.0


def test_general_branch_budget_and_certificate(synthetic_family):
    budget = chi_budget(synthetic_family, mode=BudgetMode.GENERAL_BRANCH_BOUND, reps=2000)
    assert budget.conservative
    assert budget.per_m["lemma_premise"] == 1.0
    assert budget.per_m["upsilon_moment"] <= 2.0
    cert = certificate(synthetic_family, budget=budget)
    assert cert.branch is LambdaBranch.NONNEG_UNIT
    assert cert.final >= 0.0
    with pytest.raises(ConditionViolated):
        chi_budget(synthetic_family, mode=BudgetMode.EXACT_ENUM)


def test_general_branch_budget_records_failed_premise(synthetic_family):
    n = 4 * synthetic_family.n
    budget = chi_budget(synthetic_family, n=n, mode=BudgetMode.GENERAL_BRANCH_BOUND, reps=200)
    assert budget.n == n
    assert budget.per_m["lemma_premise"] == 0.0
    # 2bJD_K scales with J / n_family, about 0.47 per unit
    assert budget.per_m["lemma_premise_value"] == pytest.approx(
        4.0 * (math.e + 1.0) * 40.0 * 0.81 / 256.0, rel=1e-9)
    assert math.isfinite(budget.value) and budget.value > 0.0


def test_sandwich_is_exact_for_zero_mean_bumps(family_one):
    result = check_lemma_sandwich(family_one, y_mc=20, grid=2000, seed=0)
    assert result["checked"] == 20
    assert result["exact_equality"]
    assert result["pass"]


def test_sandwich_holds_for_nonnegative_bumps(synthetic_family):
    result = check_lemma_sandwich(synthetic_family, y_mc=50, grid=4000, seed=1)
    assert result["checked"] > 0
    assert result["worst_upper_margin"] >= -1e-12
    assert result["pass"]
