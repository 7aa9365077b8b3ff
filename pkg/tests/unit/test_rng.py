import numpy as np
import pytest

from nikolskii_lb.core.errors import ParameterError
from nikolskii_lb.utils.rng import make_rng, stream


def test_make_rng_is_seeded():
    assert make_rng(5).random() == make_rng(5).random()
    rng = np.random.default_rng(1)
    assert make_rng(rng) is rng
    assert isinstance(make_rng(np.random.SeedSequence(3)), np.random.Generator)


@pytest.mark.parametrize("seed", [-1, 1.5, "7", True, 2 ** 64])
def test_make_rng_rejects_bad_seeds(seed):
    with pytest.raises(ParameterError):
        make_rng(seed)


def test_streams_are_keyed():
    assert stream(3, 1, 2).random() == stream(3, 1, 2).random()
    assert stream(3, 1, 2).random() != stream(3, 2, 1).random()
    assert stream(3, 0).random() != stream(4, 0).random()
    with pytest.raises(ParameterError):
        stream(3, -1)
