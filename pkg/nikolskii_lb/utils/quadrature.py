"""
Quadrature helpers: composite Gauss-Legendre panels and their tensor products
"""

from functools import lru_cache
from typing import Sequence, Tuple

import numpy as np

__all__ = [
    "gauss_legendre",
    "panel_rule",
    "tensor_rule",
]


@lru_cache(maxsize=16)
def gauss_legendre(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the Gauss-Legendre rule on [-1, 1]"""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def panel_rule(breakpoints: Sequence[float], max_width: float,
               order: int = 16) -> Tuple[np.ndarray, np.ndarray]:
    """
    Composite Gauss-Legendre rule over [min(breakpoints), max(breakpoints)]

    Every breakpoint is a panel edge and no panel is wider than max_width.

    Args:
        breakpoints: Points where the integrand may lose smoothness
        max_width: Largest admissible panel width
        order: Gauss-Legendre nodes per panel

    Returns:
        (nodes, weights) as 1-D arrays
    """
    edges = np.unique(np.asarray(breakpoints, dtype=float))
    if edges.size < 2:
        return np.empty(0), np.empty(0)
    if not max_width > 0:
        raise ValueError("max_width must be positive")
    pieces = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        count = max(1, int(np.ceil((hi - lo) / max_width)))
        pieces.append(np.linspace(lo, hi, count + 1))
    panel_edges = np.unique(np.concatenate(pieces))
    ref_nodes, ref_weights = gauss_legendre(order)
    lo = panel_edges[:-1, None]
    half = 0.5 * np.diff(panel_edges)[:, None]
    nodes = lo + half * (ref_nodes[None, :] + 1.0)
    weights = half * ref_weights[None, :]
    return nodes.ravel(), weights.ravel()


def tensor_rule(rules: Sequence[Tuple[np.ndarray, np.ndarray]]) -> Tuple[np.ndarray, np.ndarray]:
    """Tensor product of 1-D rules: points of shape (P, d) and weights of shape (P,)"""
    grids = np.meshgrid(*[nodes for nodes, _ in rules], indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=-1)
    weight_grids = np.meshgrid(*[weights for _, weights in rules], indexing="ij")
    weights = np.prod(np.stack([w.ravel() for w in weight_grids], axis=-1), axis=-1)
    return points, weights

