import math

import numpy as np
import pytest

from nikolskii_lb.core.errors import ParameterError
from nikolskii_lb.core.models import ClassParams, Regime
from nikolskii_lb.core.param_space import (
    ParameterGrid, adaptive_normalization, alpha_n, check_conditions_A, classify,
    compare_thetas, exponent_case, exponent_general, exponent_isotropic, exponent_q_infinite,
    midpoint_c, rate_exponent, rates_at_n, rho, smoothness_diagnostics,
)


@pytest.mark.parametrize("beta, r, q, expected_z, regime", [
    (0.4, 2.0, "inf", 4.0 / 9.0, Regime.THETA_PRIME),
    (0.45, 2.0, "inf", 9.0 / 19.0, Regime.THETA_PRIME),
    (0.4, 1.0, "inf", 1.0 / 3.5, Regime.THETA_DOUBLE_PRIME),
    (0.4, 1.5, 2.0, 7.0 / 22.0, Regime.THETA_TRIPLE_PRIME),
    (1.0, 2.0, "inf", 0.5, Regime.PARAMETRIC),
])
def test_rate_exponent_and_regime(beta, r, q, expected_z, regime):
    theta = ClassParams.create(1, beta, r, q)
    report = rate_exponent(theta)
    assert report.z == pytest.approx(expected_z, rel=1e-12)
    assert report.regime is regime


@pytest.mark.parametrize("beta, r", [(0.4, 2.0), (0.4, 1.0), (0.7, 3.0), (2.0, 1.0), (0.3, "inf")])
def test_isotropic_and_q_infinite_forms_agree(beta, r):
    theta = ClassParams.create(1, beta, r, "inf")
    z = exponent_general(theta)
    assert exponent_q_infinite(theta) == pytest.approx(z, rel=1e-12)
    assert exponent_isotropic(theta) == pytest.approx(z, rel=1e-12)


def test_q_infinite_form_requires_infinite_q():
    with pytest.raises(ParameterError):
        exponent_q_infinite(ClassParams.create(1, 0.4, 2.0, 4.0))


def test_exponent_never_exceeds_one_half():
    for beta in (0.1, 0.5, 1.0, 3.0, 10.0):
        for r in (1.0, 1.5, 2.0, 4.0, math.inf):
            for q in (3.0, math.inf):
                z = exponent_general(ClassParams.create(2, beta, r, q))
                assert 0.0 < z <= 0.5


def test_smoothness_diagnostics():
    theta = ClassParams.create(2, [0.5, 1.0], [2.0, 4.0], "inf", L=[4.0, 2.0])
    diag = smoothness_diagnostics(theta)
    assert diag.inv_omega == pytest.approx(1.0 + 0.25)
    assert diag.inv_beta == pytest.approx(3.0)
    assert diag.bold_L == pytest.approx(16.0 * 2.0)
    assert diag.tau(math.inf) == pytest.approx(-0.25)


def test_exponent_case_branches():
    assert exponent_case(ClassParams.create(1, 0.4, 2.0, "inf")) == 1
    assert exponent_case(ClassParams.create(1, 0.4, 1.0, "inf")) == 2
    assert exponent_case(ClassParams.create(1, 0.4, 1.5, 2.0)) == 3


def test_rates_at_n(theta):
    report = rates_at_n(theta, 1000)
    z = 4.0 / 9.0
    assert report.n == 1000
    assert report.psi_n == pytest.approx((math.sqrt(math.log(1000)) / 1000) ** z)
    assert report.phi_n == pytest.approx(1000 ** -z)
    assert report.price == pytest.approx(math.log(1000) ** (z / 2))
    assert report.psi_n == pytest.approx(report.phi_n * report.price)


@pytest.mark.parametrize("n", [2, 0, -5, 2.5, True])
def test_sample_size_below_three_rejected(theta, n):
    with pytest.raises(ParameterError):
        rates_at_n(theta, n)
    with pytest.raises(ParameterError):
        adaptive_normalization(0.25, n)


def test_compare_thetas_midpoint(theta, theta_prime):
    z, z_prime = 4.0 / 9.0, 9.0 / 19.0
    relation = compare_thetas(theta, theta_prime, n=1000)
    assert relation.in_theta_prime
    assert relation.in_plus
    assert not relation.in_zero
    assert relation.c == pytest.approx(0.5 + z / (2 * z_prime))
    assert relation.c == pytest.approx(midpoint_c(z, z_prime))
    assert relation.alpha == pytest.approx(0.5 * (z + z_prime))
    assert relation.alpha_n_growth_exponent == pytest.approx(0.5 * (z_prime - z))
    assert relation.alpha_n == pytest.approx(1000 ** (0.5 * (z_prime - z)))


def test_alpha_override_must_lie_between_exponents(theta, theta_prime):
    relation = compare_thetas(theta, theta_prime, alpha=0.46)
    assert relation.c * relation.z_prime == pytest.approx(0.46)
    with pytest.raises(ParameterError):
        compare_thetas(theta, theta_prime, alpha=0.4)
    with pytest.raises(ParameterError):
        compare_thetas(theta, theta_prime, alpha=0.48)


def test_alpha_n_grows_with_n(theta, theta_prime):
    assert alpha_n(theta, theta_prime, 10 ** 6) > alpha_n(theta, theta_prime, 10 ** 3) > 1.0


def test_same_parameter_is_in_zero_set(theta):
    relation = compare_thetas(theta, theta)
    assert relation.in_zero
    assert not relation.in_theta_prime
    assert relation.alpha_n_growth_exponent == pytest.approx(0.0)


def test_rho_for_infinite_q():
    theta = ClassParams.create(1, 0.4, 1.0, "inf")
    other = ClassParams.create(1, 0.3, 1.0, "inf")
    assert rho(theta, other) == pytest.approx(min(2.5, 1.0 / 0.3))


def test_double_prime_relation():
    theta = ClassParams.create(1, 0.4, 1.0, "inf")
    other = ClassParams.create(1, 0.45, 1.0, "inf")
    relation = compare_thetas(theta, other)
    assert classify(other) is Regime.THETA_DOUBLE_PRIME
    assert relation.rho >= 1.0
    assert relation.in_theta_double_prime


def test_rho_needs_matching_dimension():
    with pytest.raises(ParameterError):
        rho(ClassParams.create(1, 0.4, 2.0, "inf"), ClassParams.create(2, 0.4, 2.0, "inf"))


def test_grid_points_and_shape():
    grid = ParameterGrid.anisotropic(2, [0.3, 0.6], [1.0, 2.0])
    assert grid.shape == (2, 2, 2, 2, 1)
    assert len(grid.points()) == 16
    iso = ParameterGrid.isotropic(1, [0.3, 0.6, 0.9], [1.0, 2.0], [2.0, math.inf])
    assert len(iso.points()) == 12


def test_conditions_a2_a3_hold_with_midpoint():
    grid = ParameterGrid.isotropic(1, [0.2, 0.3, 0.4, 0.6], [1.5, 2.0, 3.0])
    report = check_conditions_A(grid)
    assert report.pairs
    for pair in report.pairs:
        assert pair.a2_pass and pair.a3_pass
        assert pair.a2_exponent > 0.0
    assert report.price_bounded


def test_conditions_skip_parametric_points():
    points = [ClassParams.create(1, 1.0, 2.0, "inf"), ClassParams.create(1, 0.4, 2.0, "inf")]
    report = check_conditions_A(points)
    assert report.skipped_parametric == 1
    assert report.grid_kind == "list"


def test_conditions_reject_bad_alpha_fraction():
    with pytest.raises(ParameterError):
        check_conditions_A([ClassParams.create(1, 0.4, 2.0, "inf")], alpha_fraction=1.5)
    with pytest.raises(ParameterError):
        check_conditions_A([])


R_CHOICES = (1.0, 1.5, 2.0, 3.0, 4.0, 8.0, math.inf)
Q_CHOICES = (2.0, 3.0, 4.0, 8.0, math.inf)
S_GRID = (1.0, 2.0, 3.0, 4.0, 8.0, 16.0, math.inf)


@pytest.fixture(scope="module")
def random_thetas():
    """10^4 seeded parameters with d <= 4, half of them isotropic, all with q = inf"""
    rng = np.random.default_rng(2024)
    points = []
    for _ in range(10_000):
        d = int(rng.integers(1, 5))
        if rng.random() < 0.5:
            beta = float(np.exp(rng.uniform(math.log(0.05), math.log(20.0))))
            r = R_CHOICES[int(rng.integers(len(R_CHOICES)))]
        else:
            beta = np.exp(rng.uniform(math.log(0.05), math.log(20.0), d)).tolist()
            r = [R_CHOICES[int(i)] for i in rng.integers(len(R_CHOICES), size=d)]
        q = Q_CHOICES[int(rng.integers(len(Q_CHOICES)))]
        points.append((ClassParams.create(d, beta, r, "inf"), q))
    return points


def test_q_infinite_and_isotropic_forms_on_random_parameters(random_thetas):
    isotropic = 0
    for theta, _ in random_thetas:
        z_inf = exponent_q_infinite(theta)
        assert exponent_general(theta) == pytest.approx(z_inf, rel=1e-12)
        if theta.isotropic:
            isotropic += 1
            assert exponent_isotropic(theta) == pytest.approx(z_inf, rel=1e-12)
    assert 4000 < isotropic < 7000


def test_regimes_are_exclusive_and_exhaustive(random_thetas):
    labels = {
        0: Regime.THETA_PRIME, 1: Regime.THETA_DOUBLE_PRIME, 2: Regime.THETA_TRIPLE_PRIME,
    }
    for base, q in random_thetas:
        theta = base.with_q(q)
        diag = smoothness_diagnostics(theta)
        tau2, tau_q = diag.tau(2.0), diag.tau(q)
        conditions = [tau2 >= 1.0, tau2 < 1.0 and tau_q < 0.0, tau2 < 1.0 and tau_q >= 0.0]
        assert sum(conditions) == 1
        z = exponent_general(theta)
        assert 0.0 <= z <= 0.5
        expected = Regime.PARAMETRIC if z == 0.5 else labels[conditions.index(True)]
        assert classify(theta) is expected


def test_tau_is_nonincreasing_in_s(random_thetas):
    for theta, _ in random_thetas:
        diag = smoothness_diagnostics(theta)
        values = [diag.tau(s) for s in S_GRID]
        assert all(later <= earlier for earlier, later in zip(values, values[1:]))


def test_double_prime_exponent_grows_with_q(random_thetas):
    checked = 0
    for base, q in random_thetas:
        theta = base.with_q(q)
        if classify(theta) is not Regime.THETA_DOUBLE_PRIME:
            continue
        checked += 1
        diag = smoothness_diagnostics(theta)
        grid = [s for s in Q_CHOICES if s >= q]
        values = [(1.0 - 2.0 / s) / (2.0 - 2.0 / s - diag.tau(s)) for s in grid]
        assert all(later >= earlier - 1e-15 for earlier, later in zip(values, values[1:]))
        assert values[0] == pytest.approx(exponent_general(theta), rel=1e-12, abs=1e-15)
    assert checked > 100


def test_isotropic_rho_exceeds_one_exactly_when_tau_is_negative(random_thetas):
    for base, q in random_thetas:
        if not base.isotropic:
            continue
        theta = base.with_q(q)
        diag = smoothness_diagnostics(theta)
        tau_q = diag.tau(q)
        value = rho(theta, theta)
        tol = 1e-12 * (1.0 + diag.inv_beta)
        assert value == pytest.approx(1.0 - tau_q, rel=1e-9, abs=tol)
        if tau_q < -tol:
            assert value > 1.0
        elif tau_q > tol:
            assert value < 1.0
