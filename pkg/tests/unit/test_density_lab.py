import math

import numpy as np
import pytest

from nikolskii_lb.core.density_lab import (
    base_norm_bound, box_masses_quadrature, build_family, build_family_I, build_family_II,
    check_base_norm, choose_kappa, draw_prior, eval_density, eval_mollified_base,
    functional_norms, integral, is_nonnegative, lattice_in_box, mollified_uniform,
    plateau_sub_box, sample_density, shrunk_composite,
)
from nikolskii_lb.core.errors import ConstructionError, ParameterError, RegimeError
from nikolskii_lb.core.models import (
    BaseKind, ClassParams, Construction, FamilyConstants, PriorKind, PriorSpec,
)


def test_mollified_uniform_plateau_and_support():
    base = mollified_uniform(1, 8.0, 0.5)
    assert base.sup == pytest.approx(0.0625)
    assert base.components[0].plateau_box() == ((4.0, 16.0),)
    values = base(np.array([[-1.0], [0.0], [10.0], [20.0], [21.0]]))
    assert values[0] == 0.0 and values[1] == 0.0
    assert values[2] == pytest.approx(0.0625, rel=1e-14)
    assert values[3] == 0.0 and values[4] == 0.0
    assert base.integral() == pytest.approx(1.0, abs=1e-9)


def test_mollified_uniform_l2_between_plateau_and_sup():
    base = mollified_uniform(1, 8.0, 0.5)
    assert 0.0625 ** 2 * 12.0 < base.l2_sq() < 0.0625
    assert base.lq_norm(math.inf) == base.sup


def test_eval_mollified_base_matches_density():
    x = np.array([[1.0, 10.0], [10.0, 10.0], [-1.0, 3.0]])
    expected = mollified_uniform(2, 8.0, 0.5)(x)
    np.testing.assert_array_equal(eval_mollified_base(8.0, 0.5, x), expected)
    assert eval_mollified_base(8.0, 0.5, x)[1] == pytest.approx(0.0625 ** 2)
    assert eval_mollified_base(8.0, 0.5, x)[2] == 0.0


def test_mollified_uniform_in_two_dimensions():
    base = mollified_uniform(2, 8.0, 0.5)
    assert base.sup == pytest.approx(0.0625 ** 2)
    assert base.integral() == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("big_n, a", [(0.5, 0.5), (8.0, 0.0), (8.0, 1.5)])
def test_mollified_uniform_rejects_bad_parameters(big_n, a):
    with pytest.raises(ParameterError):
        mollified_uniform(1, big_n, a)


def test_shrunk_composite_is_a_density():
    base = shrunk_composite(1, 8.0, 0.5, 0.01, 0.5, math.inf, [0.01])
    assert base.kind is BaseKind.SHRUNK_COMPOSITE
    assert base.integral() == pytest.approx(1.0, abs=1e-8)
    assert base.components[0].weight == pytest.approx(0.995)
    reflected = base.components[0].plateau_box()[0]
    assert reflected[1] < 0.0
    with pytest.raises(ParameterError):
        shrunk_composite(1, 8.0, 0.5, 1.0, 0.5, math.inf, [1.0])


def test_base_sampling_stays_in_support():
    base = mollified_uniform(1, 8.0, 0.5)
    x = base.sample(np.random.default_rng(3), 5000)
    assert x.shape == (5000, 1)
    assert np.all((x > 0.0) & (x < 20.0))
    assert abs(x.mean() - 10.0) < 0.4


def test_lattice_in_box():
    lattice = lattice_in_box(((0.0, 10.0),), (1.0,), (2.0,), 5)
    assert lattice.counts == (5,)
    np.testing.assert_allclose(lattice.centers()[:, 0], [0.5, 2.5, 4.5, 6.5, 8.5])
    np.testing.assert_array_equal(lattice.locate(np.array([[2.5], [3.4], [8.9], [9.5]])),
                                  [1, -1, 4, -1])
    assert lattice.box_extent() == ((0.0, 9.0),)
    with pytest.raises(ConstructionError):
        lattice_in_box(((0.0, 10.0),), (1.0,), (2.0,), 6)


def test_draw_prior_supports():
    rng = np.random.default_rng(0)
    signs = draw_prior(PriorSpec(PriorKind.RADEMACHER), 50, rng, 4)
    assert signs.shape == (4, 50)
    assert set(np.unique(signs)) <= {-1, 1}
    bits = draw_prior(PriorSpec(PriorKind.BERNOULLI_ON_UNIT, 0.5), 50, rng, 4)
    assert set(np.unique(bits)) <= {0, 1}


def test_family_one_geometry(family_one):
    assert family_one.construction is Construction.FIRST
    assert family_one.prior.kind is PriorKind.RADEMACHER
    assert family_one.lambda_bump == 0.0
    assert family_one.M >= 1
    assert family_one.M == math.floor(family_one.M_real)
    assert 0.0 <= family_one.rounding_slack < 1.0
    assert family_one.plateau == pytest.approx(family_one.A, rel=1e-12)
    assert family_one.lattice.spacing[0] == pytest.approx(2.0 * family_one.sigma[0])
    z = 4.0 / 9.0
    assert family_one.rate == pytest.approx((math.sqrt(math.log(1000)) / 1000) ** z)
    assert family_one.A == pytest.approx(family_one.rate ** 2)
    assert family_one.psi_n > 0.0


def test_family_one_density_is_nonnegative_and_normalised(family_one):
    rng = np.random.default_rng(11)
    for y in draw_prior(family_one.prior, family_one.M, rng, 5):
        assert is_nonnegative(family_one, y)
        assert integral(family_one, y) == pytest.approx(1.0, abs=1e-9)


def test_family_one_bump_values(family_one):
    y = np.ones(family_one.M, dtype=np.int8)
    center = family_one.lattice.center_of(np.array([0]))
    peak = center + 0.25 * np.asarray(family_one.sigma)
    value = eval_density(family_one, y, peak)[0]
    assert value == pytest.approx(family_one.plateau + family_one.A, rel=1e-9)


def test_family_one_separation_is_exact(family_one):
    ys = draw_prior(family_one.prior, family_one.M, np.random.default_rng(1), 3)
    norms = functional_norms(family_one, ys)
    assert norms["passed"]
    np.testing.assert_allclose(norms["separations"], norms["separation"], rtol=1e-12)


def test_kappa_outside_range_is_rejected(theta, theta_prime, fixed_constants):
    with pytest.raises(ConstructionError):
        build_family_I(theta, theta_prime, 1000, 0.5, constants=fixed_constants)


def test_construction_one_needs_theta_prime_regime(theta_prime, fixed_constants):
    theta = ClassParams.create(1, 0.4, 1.0, "inf")
    with pytest.raises(RegimeError):
        build_family_I(theta, theta_prime, 1000, 0.25, constants=fixed_constants)


def test_build_family_rejects_synthetic(theta, theta_prime, fixed_constants):
    with pytest.raises(ParameterError):
        build_family(theta, theta_prime, 1000, 0.25, construction=Construction.SYNTHETIC,
                     constants=fixed_constants)


def test_synthetic_family_geometry(synthetic_family):
    lam = 0.9 / (16.0 * math.sqrt(8000.0))
    assert synthetic_family.sigma == pytest.approx((0.75,))
    assert synthetic_family.lattice.spacing == pytest.approx((1.5,))
    assert synthetic_family.lattice.counts == (8,)
    assert synthetic_family.extras["lambda"] == pytest.approx(lam)
    assert synthetic_family.lambda_bump == pytest.approx(lam, rel=1e-12)
    assert synthetic_family.Sigma_M == pytest.approx(0.5 * 8 * lam, rel=1e-12)
    assert synthetic_family.prior.kind is PriorKind.BERNOULLI_ON_UNIT
    assert synthetic_family.shape.nonnegative


def test_synthetic_density_at_bump_center(synthetic_family):
    y = np.ones(8, dtype=np.int8)
    center = synthetic_family.lattice.center_of(np.array([0]))
    rho = 8 * synthetic_family.lambda_bump
    expected = (1.0 - rho) * 0.0625 + synthetic_family.A
    assert eval_density(synthetic_family, y, center)[0] == pytest.approx(expected, rel=1e-12)


def test_synthetic_mass_is_preserved(synthetic_family):
    rng = np.random.default_rng(5)
    for y in draw_prior(synthetic_family.prior, 8, rng, 6):
        assert is_nonnegative(synthetic_family, y)
        assert integral(synthetic_family, y) == pytest.approx(1.0, abs=1e-9)


def test_box_masses_match_closed_form(synthetic_family):
    y = np.array([1, 0, 1, 1, 0, 0, 1, 0], dtype=np.int8)
    rho = float(synthetic_family.rho(y))
    masses = box_masses_quadrature(synthetic_family, y, range(8))
    expected = ((1.0 - rho) * 0.0625 * 0.75
                + y.astype(float) * synthetic_family.lambda_bump)
    np.testing.assert_allclose(masses, expected, rtol=1e-8)


def test_weight_vector_length_is_checked(synthetic_family):
    with pytest.raises(ParameterError):
        eval_density(synthetic_family, np.ones(3), np.zeros((1, 1)))


def test_sampling_is_reproducible(synthetic_family):
    y = np.ones(8, dtype=np.int8)
    first = sample_density(synthetic_family, y, 500, 42)
    second = sample_density(synthetic_family, y, 500, 42)
    assert first.shape == (500, 1)
    np.testing.assert_array_equal(first, second)
    assert np.all((first > 0.0) & (first < 20.0))


def test_sampling_box_fraction_matches_mass(synthetic_family):
    y = np.ones(8, dtype=np.int8)
    x = sample_density(synthetic_family, y, 20_000, 9)
    inside = float(np.mean(synthetic_family.lattice.locate(x) >= 0))
    rho = float(synthetic_family.rho(y))
    expected = 8 * ((1.0 - rho) * 0.0625 * 0.75 + synthetic_family.lambda_bump)
    assert abs(inside - expected) < 5.0 * math.sqrt(expected * (1 - expected) / 20_000)


@pytest.mark.parametrize("u", [2.0, 4.0])
def test_base_norm_stays_below_closed_form(u):
    norm, bound = check_base_norm(mollified_uniform(1, 8.0, 0.5), u)
    assert bound == pytest.approx(base_norm_bound(8.0, 0.5, 1, u))
    assert 0.0 < norm <= bound


def test_base_norm_bound_is_attained_at_infinity():
    norm, bound = check_base_norm(mollified_uniform(2, 8.0, 0.5), math.inf)
    assert norm == pytest.approx(bound, rel=1e-12)
    assert bound == pytest.approx(0.0625 ** 2)


def test_base_norm_needs_mollified_uniform():
    base = shrunk_composite(1, 8.0, 0.5, 0.25, 0.4, math.inf, (0.25,))
    with pytest.raises(ParameterError):
        check_base_norm(base, 2.0)


def test_family_one_records_base_norm(family_one):
    assert family_one.extras["base_lq_norm"] <= family_one.extras["base_lq_bound"] * (1 + 1e-9)
    assert family_one.extras["base_lq_norm"] == pytest.approx(family_one.base.lq_norm(math.inf))
    assert family_one.extras["base_lq_bound"] == pytest.approx(family_one.A, rel=1e-12)


# Construction II pair: theta in ThetaDoublePrime, theta_prime in Theta''[theta]
SECOND_CONSTANTS = FamilyConstants(C1=0.1, a=0.9, big_n=8.0)


@pytest.fixture
def theta_second():
    return ClassParams.create(1, 0.5, 1.2, "inf", L=4.0)


@pytest.fixture
def theta_second_prime():
    return ClassParams.create(1, 0.55, 1.2, "inf", L=4.0)


@pytest.fixture
def family_two(theta_second, theta_second_prime):
    """Construction II at n = 10^6 with the largest admissible kappa"""
    return build_family_II(theta_second, theta_second_prime, 10 ** 6, 0.0225, 1.0,
                           constants=SECOND_CONSTANTS)


def test_family_two_geometry(family_two):
    assert family_two.construction is Construction.SECOND
    assert family_two.base.kind is BaseKind.SHRUNK_COMPOSITE
    assert family_two.M == 518
    assert family_two.M == math.floor(family_two.M_real)
    t = family_two.extras["t"]
    assert t == pytest.approx(family_two.M * family_two.volume, rel=1e-12)
    assert 0.0 < t < 1.0
    assert family_two.extras["h"][0] == pytest.approx(t)
    assert math.prod(family_two.extras["capacity"]) >= family_two.M
    assert family_two.A == pytest.approx(0.0225)


def test_family_two_plateau_matches_closed_form(family_two):
    # c t^(-1/q) a^d N^(-d) with c = 4 C1 and q = inf
    assert family_two.constants.c_const == pytest.approx(0.4)
    assert family_two.plateau == pytest.approx(0.4 * 0.9 / 8.0, rel=1e-12)
    centers = family_two.lattice.center_of(np.arange(family_two.M))
    np.testing.assert_allclose(family_two.base(centers), family_two.plateau, rtol=1e-12)


def test_family_two_is_a_nonnegative_density(family_two):
    rng = np.random.default_rng(5)
    for y in draw_prior(family_two.prior, family_two.M, rng, 5):
        assert is_nonnegative(family_two, y)
        assert integral(family_two, y) == pytest.approx(1.0, abs=1e-9)


def test_construction_two_needs_double_prime_regime(theta, theta_prime):
    with pytest.raises(RegimeError):
        build_family_II(theta, theta_prime, 10 ** 6, 0.0225, 1.0, constants=SECOND_CONSTANTS)


def test_choose_kappa_reports_construction_two_budget(theta_second, theta_second_prime):
    with pytest.raises(ConstructionError, match="construction II at n=1000000"):
        choose_kappa(theta_second, theta_second_prime, 10 ** 6, constants=SECOND_CONSTANTS)


def test_plateau_sub_box_rejects_wide_bumps():
    with pytest.raises(ConstructionError, match="sigma_1"):
        plateau_sub_box(0.1, (0.5,), (1.0,), 0.9, 1)


def test_plateau_sub_box_splits_t_by_rho():
    h, box, capacity = plateau_sub_box(0.25, (0.125, 0.125), (1.0, 1.0), 0.5, 4)
    assert h == pytest.approx((0.5, 0.5))
    assert box == ((2.0, 3.0), (2.0, 3.0))
    assert capacity == (8, 8)
