import numpy as np
import pytest

from nikolskii_lb.utils.quadrature import gauss_legendre, panel_rule, tensor_rule


def test_gauss_legendre_is_cached_and_read_only():
    nodes, weights = gauss_legendre(8)
    assert gauss_legendre(8)[0] is nodes
    assert weights.sum() == pytest.approx(2.0)
    with pytest.raises(ValueError):
        nodes[0] = 0.0


def test_panel_rule_respects_breakpoints():
    nodes, weights = panel_rule([0.0, 1.0, 3.0], max_width=0.5, order=4)
    assert weights.sum() == pytest.approx(3.0)
    assert nodes.size == 6 * 4
    kinked = np.abs(nodes - 1.0)
    assert np.dot(weights, kinked) == pytest.approx(0.5 + 2.0)


def test_panel_rule_degenerate_input():
    nodes, weights = panel_rule([1.0], max_width=0.5)
    assert nodes.size == 0 and weights.size == 0
    with pytest.raises(ValueError):
        panel_rule([0.0, 1.0], max_width=0.0)


def test_tensor_rule_integrates_products():
    rule = panel_rule([0.0, 1.0], max_width=1.0, order=8)
    points, weights = tensor_rule([rule, rule])
    assert points.shape == (64, 2)
    assert np.dot(weights, points[:, 0] * points[:, 1] ** 2) == pytest.approx(1.0 / 6.0)
