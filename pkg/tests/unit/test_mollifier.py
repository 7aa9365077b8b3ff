import math

import numpy as np
import pytest

from nikolskii_lb.core.errors import ParameterError
from nikolskii_lb.core.mollifier import (
    make_bump, mollifier, mollifier_cdf, mollifier_mass, plateau_profile, sample_mollifier, u0,
)

# integral of exp(-1/(1 - z^2)) over (-1, 1)
MOLLIFIER_MASS = 0.4439938161680794


def test_mollifier_vanishes_outside_unit_interval():
    z = np.array([-2.0, -1.0, 1.0, 1.5])
    assert np.all(mollifier(z) == 0.0)
    assert mollifier(np.array([0.0]))[0] == pytest.approx(math.exp(-1.0))


def test_u0_support():
    assert u0(np.array([0.25, -0.25, 0.3]))[0] == 0.0
    assert u0(np.array([0.0]))[0] == pytest.approx(math.exp(-1.0))


def test_mollifier_mass():
    assert mollifier_mass() == pytest.approx(MOLLIFIER_MASS, rel=1e-6)


def test_mollifier_cdf_endpoints_and_symmetry():
    values = mollifier_cdf(np.array([-3.0, -1.0, 0.0, 1.0, 3.0]))
    assert values[0] == 0.0 and values[1] == 0.0
    assert values[2] == pytest.approx(0.5, abs=1e-12)
    assert values[3] == 1.0 and values[4] == 1.0
    s = np.linspace(-0.9, 0.9, 19)
    np.testing.assert_allclose(mollifier_cdf(s) + mollifier_cdf(-s), 1.0, atol=1e-12)


def test_mollifier_cdf_is_monotone():
    values = mollifier_cdf(np.linspace(-1.0, 1.0, 501))
    assert np.all(np.diff(values) >= 0.0)


def test_sample_mollifier_moments():
    rng = np.random.default_rng(7)
    draws = sample_mollifier(rng, 20_000)
    assert draws.shape == (20_000,)
    assert np.all(np.abs(draws) < 1.0)
    assert abs(draws.mean()) < 0.02


@pytest.mark.parametrize("big_n", [1.0, 1.5, 8.0, 100.0])
def test_plateau_profile_is_a_density(big_n):
    profile = plateau_profile(big_n)
    assert profile.integral() == pytest.approx(1.0, abs=1e-9)
    assert profile.support == (0.0, big_n + 2.0)


def test_plateau_profile_flat_part():
    profile = plateau_profile(8.0)
    v = np.array([2.0, 3.5, 5.0, 8.0])
    np.testing.assert_allclose(profile(v), 1.0 / 8.0, rtol=0, atol=1e-15)
    assert profile(np.array([0.0]))[0] == 0.0
    assert profile(np.array([10.0]))[0] == 0.0
    assert profile.is_flat_at(5.0)
    assert not profile.is_flat_at(1.0)


def test_plateau_profile_rejects_small_n():
    with pytest.raises(ParameterError):
        plateau_profile(0.5)


def test_zero_mean_bump():
    shape = make_bump(1)
    assert not shape.nonnegative
    assert shape.integral == pytest.approx(0.0, abs=1e-12)
    assert shape.linf_norm == pytest.approx(1.0, rel=1e-12)
    assert shape.l2_norm > 0.0
    assert shape(np.array([[0.25]]))[0] == pytest.approx(1.0)
    assert shape(np.array([[-0.25]]))[0] == pytest.approx(-1.0)
    assert shape(np.array([[0.5]]))[0] == 0.0


def test_nonnegative_bump():
    shape = make_bump(1, nonnegative=True)
    assert shape.nonnegative
    assert shape.integral == pytest.approx(math.e * MOLLIFIER_MASS / 2.0, rel=1e-6)
    assert shape(np.array([[0.0]]))[0] == pytest.approx(1.0)
    values = shape(np.linspace(-0.6, 0.6, 121)[:, None])
    assert np.all(values >= 0.0)


def test_bump_norms_factorize_over_dimensions():
    one = make_bump(1, nonnegative=True)
    two = make_bump(2, nonnegative=True)
    assert two.l2_norm == pytest.approx(one.l2_norm ** 2, rel=1e-10)
    assert two.integral == pytest.approx(one.integral ** 2, rel=1e-10)
    assert two.norm(1.0) == pytest.approx(one.norm(1.0) ** 2, rel=1e-10)


def test_bump_rejects_wrong_dimension():
    with pytest.raises(ParameterError):
        make_bump(0)
    with pytest.raises(ParameterError):
        make_bump(2)(np.zeros((3, 1)))
