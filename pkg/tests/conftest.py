import pytest

from nikolskii_lb.core.density_lab import build_family_I, build_family_synthetic
from nikolskii_lb.core.models import ClassParams, FamilyConstants

# Pinned constants keep family construction away from the slow calibration.
FIXED_CONSTANTS = FamilyConstants(C1=0.1, a=0.5, big_n=8.0)


@pytest.fixture
def theta():
    return ClassParams.create(1, 0.4, 2.0, "inf")


@pytest.fixture
def theta_prime():
    return ClassParams.create(1, 0.45, 2.0, "inf")


@pytest.fixture
def fixed_constants():
    return FIXED_CONSTANTS


@pytest.fixture
def family_one(theta, theta_prime):
    """Construction I at n = 1000 with kappa = 1/4"""
    return build_family_I(theta, theta_prime, 1000, 0.25, constants=FIXED_CONSTANTS)


@pytest.fixture
def synthetic_family(theta, theta_prime):
    """Eight nonnegative bumps under a Bernoulli(1/2) prior at n = 1000"""
    return build_family_synthetic(theta, theta_prime, 1000, 8, constants=FIXED_CONSTANTS)


@pytest.fixture
def out_dir(tmp_path, monkeypatch):
    monkeypatch.delenv("NIKOLSKII_OUT_DIR", raising=False)
    return str(tmp_path / "reports")
