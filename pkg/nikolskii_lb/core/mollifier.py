"""
One-dimensional mollifier profiles and the tensor bump shapes built from them

Every compactly supported function in the package is a product of 1-D
profiles. A Profile knows its support, the points where panels must break,
and the intervals on which it is constant, so norms and finite differences
reduce to cheap 1-D Gauss-Legendre sums even when the support is very long.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Sequence, Tuple

import numpy as np

from nikolskii_lb.core.errors import ParameterError
from nikolskii_lb.utils.quadrature import gauss_legendre, panel_rule

logger = logging.getLogger(__name__)

__all__ = [
    "mollifier",
    "mollifier_mass",
    "mollifier_cdf",
    "sample_mollifier",
    "u0",
    "Profile",
    "profile_rule",
    "plateau_profile",
    "BumpShape",
    "make_bump",
]

CDF_PANELS = 2048
GL_ORDER = 16
PANELS_PER_FEATURE = 24
E_INV = math.exp(-1.0)


def mollifier(z: np.ndarray) -> np.ndarray:
    """exp(-1/(1 - z^2)) on |z| < 1, zero elsewhere"""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = np.abs(z) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - z[inside] ** 2))
    return out


def u0(t: np.ndarray) -> np.ndarray:
    """exp(-1/(1 - 16 t^2)) on |t| < 1/4, zero elsewhere"""
    return mollifier(4.0 * np.asarray(t, dtype=float))


@lru_cache(maxsize=1)
def _cdf_table() -> Tuple[np.ndarray, np.ndarray, float]:
    edges = np.linspace(-1.0, 1.0, CDF_PANELS + 1)
    nodes, weights = gauss_legendre(GL_ORDER)
    half = 0.5 * np.diff(edges)
    points = edges[:-1, None] + half[:, None] * (nodes[None, :] + 1.0)
    panel_mass = (half[:, None] * weights[None, :] * mollifier(points)).sum(axis=1)
    mass = float(math.fsum(panel_mass))
    cumulative = np.concatenate(([0.0], np.cumsum(panel_mass))) / mass
    cumulative[-1] = 1.0
    return edges, cumulative, mass


def mollifier_mass() -> float:
    """R = integral of exp(-1/(1 - z^2)) over (-1, 1)"""
    return _cdf_table()[2]


def mollifier_cdf(s: np.ndarray) -> np.ndarray:
    """
    Distribution function of the normalised 1-D mollifier

    Whole panels come from a cumulative table; the partial panel holding s
    is integrated with its own Gauss-Legendre rule, so values are accurate
    to rounding and exactly 0 below -1 and exactly 1 above 1.
    """
    edges, cumulative, mass = _cdf_table()
    s = np.asarray(s, dtype=float)
    flat = s.ravel()
    out = np.where(flat >= 1.0, 1.0, 0.0)
    inside = (flat > -1.0) & (flat < 1.0)
    if np.any(inside):
        x = flat[inside]
        k = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, CDF_PANELS - 1)
        lo = edges[k]
        nodes, weights = gauss_legendre(GL_ORDER)
        half = 0.5 * (x - lo)
        pts = lo[:, None] + half[:, None] * (nodes[None, :] + 1.0)
        partial = (half[:, None] * weights[None, :] * mollifier(pts)).sum(axis=1) / mass
        out[inside] = np.clip(cumulative[k] + partial, 0.0, 1.0)
    return out.reshape(s.shape)


def sample_mollifier(rng: np.random.Generator, size: int) -> np.ndarray:
    """Draws from the normalised mollifier by rejection from Uniform(-1, 1)"""
    result = np.empty(size)
    filled = 0
    while filled < size:
        batch = max(64, int(1.8 * (size - filled)))
        z = rng.uniform(-1.0, 1.0, batch)
        accept = rng.uniform(0.0, 1.0, batch) * E_INV < mollifier(z)
        kept = z[accept][: size - filled]
        result[filled:filled + kept.size] = kept
        filled += kept.size
    return result


@dataclass(frozen=True)
class Profile:
    """Compactly supported 1-D function with its panel structure"""
    name: str
    func: Callable[[np.ndarray], np.ndarray]
    support: Tuple[float, float]
    breakpoints: Tuple[float, ...]
    feature: float
    sup: float
    flat: Tuple[Tuple[float, float], ...] = ()

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.func(np.asarray(x, dtype=float))

    def affine(self, center: float, width: float, name: str = "") -> "Profile":
        """x -> self((x - center) / width)"""
        if not width > 0:
            raise ParameterError("profile width must be positive")
        base = self.func
        lo, hi = self.support
        return Profile(
            name=name or f"{self.name}[{center:.6g},{width:.6g}]",
            func=lambda x: base((np.asarray(x, dtype=float) - center) / width),
            support=(center + width * lo, center + width * hi),
            breakpoints=tuple(center + width * b for b in self.breakpoints),
            feature=self.feature * width,
            sup=self.sup,
            flat=tuple((center + width * a, center + width * b) for a, b in self.flat),
        )

    def shifted(self, offset: float) -> "Profile":
        """x -> self(x + offset)"""
        return self.affine(-offset, 1.0, name=f"{self.name}(+{offset:.6g})")

    def reflected(self) -> "Profile":
        """x -> self(-x)"""
        base = self.func
        lo, hi = self.support
        return Profile(
            name=f"{self.name}(-x)",
            func=lambda x: base(-np.asarray(x, dtype=float)),
            support=(-hi, -lo),
            breakpoints=tuple(sorted(-b for b in self.breakpoints)),
            feature=self.feature,
            sup=self.sup,
            flat=tuple((-b, -a) for a, b in self.flat),
        )

    def is_flat_at(self, x: float) -> bool:
        lo, hi = self.support
        if x <= lo or x >= hi:
            return True
        return any(a <= x <= b for a, b in self.flat)

    def norm(self, r: float) -> float:
        return profile_norm([self], [1.0], r)

    def integral(self) -> float:
        nodes, weights = profile_rule([self])
        return float(np.dot(weights, self(nodes)))


def profile_rule(profiles: Sequence[Profile]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Quadrature rule for linear combinations of the given profiles

    Panels break at every breakpoint of every profile. A gap on which all
    profiles are constant (or vanish) gets one panel; other gaps are cut into
    panels no wider than the finest feature width divided by PANELS_PER_FEATURE.
    """
    edges = sorted({b for p in profiles for b in p.breakpoints}
                   | {e for p in profiles for e in p.support})
    lo_all = min(p.support[0] for p in profiles)
    hi_all = max(p.support[1] for p in profiles)
    edges = [e for e in edges if lo_all <= e <= hi_all]
    feature = min(p.feature for p in profiles) / PANELS_PER_FEATURE
    all_nodes, all_weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (lo + hi)
        if all(mid <= p.support[0] or mid >= p.support[1] for p in profiles):
            continue
        width = hi - lo if all(p.is_flat_at(mid) for p in profiles) else feature
        nodes, weights = panel_rule([lo, hi], width, GL_ORDER)
        all_nodes.append(nodes)
        all_weights.append(weights)
    if not all_nodes:
        return np.empty(0), np.empty(0)
    return np.concatenate(all_nodes), np.concatenate(all_weights)


def profile_norm(profiles: Sequence[Profile], coefficients: Sequence[float], r: float) -> float:
    """L_r norm of sum_i coefficients[i] * profiles[i]; r = inf is a grid maximum"""
    nodes, weights = profile_rule(profiles)
    if nodes.size == 0:
        return 0.0
    if math.isinf(r):
        edges = np.array(sorted({b for p in profiles for b in p.breakpoints}))
        nodes = np.concatenate((nodes, edges))
    values = np.zeros_like(nodes)
    for coef, profile in zip(coefficients, profiles):
        values += coef * profile(nodes)
    if math.isinf(r):
        return float(np.max(np.abs(values)))
    return float(np.dot(weights, np.abs(values) ** r) ** (1.0 / r))


def plateau_profile(big_n: float) -> Profile:
    """
    g_N(v) = (F(N + 1 - v) - F(1 - v)) / N

    The 1-D factor of the mollified uniform density: supported on (0, N + 2),
    equal to 1/N on [2, N], and a probability density for every N >= 1.
    """
    if not big_n >= 1.0:
        raise ParameterError(f"N must satisfy N >= 1, got {big_n}")
    n = float(big_n)

    def g(v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return (mollifier_cdf(n + 1.0 - v) - mollifier_cdf(1.0 - v)) / n

    if n >= 2.0:
        breakpoints: Tuple[float, ...] = (0.0, 2.0, n, n + 2.0)
        flat: Tuple[Tuple[float, float], ...] = ((2.0, n),)
    else:
        breakpoints = (0.0, n, 2.0, n + 2.0)
        flat = ()
    return Profile(name=f"g_N(N={n:.6g})", func=g, support=(0.0, n + 2.0),
                   breakpoints=breakpoints, feature=2.0, sup=1.0 / n, flat=flat)


def _bump_factor() -> Profile:
    return Profile(
        name="e*u0",
        func=lambda t: math.e * u0(t),
        support=(-0.25, 0.25),
        breakpoints=(-0.25, 0.0, 0.25),
        feature=0.5,
        sup=1.0,
    )


def _wide_bump_factor() -> Profile:
    return Profile(
        name="e*u0(t/2)",
        func=lambda t: math.e * u0(0.5 * np.asarray(t, dtype=float)),
        support=(-0.5, 0.5),
        breakpoints=(-0.5, 0.0, 0.5),
        feature=1.0,
        sup=1.0,
    )


def _odd_factor() -> Profile:
    return Profile(
        name="e*lambda1",
        func=lambda t: math.e * (u0(np.asarray(t, dtype=float) - 0.25)
                                 - u0(np.asarray(t, dtype=float) + 0.25)),
        support=(-0.5, 0.5),
        breakpoints=(-0.5, -0.25, 0.0, 0.25, 0.5),
        feature=0.5,
        sup=1.0,
    )


@dataclass(eq=False)
class BumpShape:
    """Tensor bump Lambda(x) = prod_j factors[j](x_j), supported in [-1/2, 1/2]^d"""
    d: int
    nonnegative: bool
    factors: Tuple[Profile, ...]
    l2_norm: float
    linf_norm: float
    integral: float
    identifier: str
    _norms: Dict[float, float] = field(default_factory=dict, repr=False)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[-1] != self.d:
            raise ParameterError(f"expected points of dimension {self.d}, got {x.shape[-1]}")
        out = np.ones(x.shape[:-1])
        for j, factor in enumerate(self.factors):
            out *= factor(x[..., j])
        return out

    def norm(self, r: float) -> float:
        """||Lambda||_r as the product of factor norms"""
        if r not in self._norms:
            self._norms[r] = math.prod(f.norm(r) for f in self.factors)
        return self._norms[r]

    def to_dict(self) -> Dict[str, object]:
        return {
            "identifier": self.identifier,
            "d": self.d,
            "nonnegative": self.nonnegative,
            "l2_norm": self.l2_norm,
            "linf_norm": self.linf_norm,
            "integral": self.integral,
        }


@lru_cache(maxsize=32)
def make_bump(d: int, nonnegative: bool = False) -> BumpShape:
    """
    Smooth bump supported in [-1/2, 1/2]^d with sup norm 1

    Args:
        d: Dimension
        nonnegative: Build the nonnegative bump prod_j e*u0(x_j/2) instead of
            the zero-mean lambda1(x_1) prod_{j>=2} u0(x_j)

    Returns:
        BumpShape with norms computed by quadrature
    """
    if isinstance(d, bool) or not isinstance(d, int) or d < 1:
        raise ParameterError("d must be a positive integer (d >= 1)")
    if nonnegative:
        factors = tuple(_wide_bump_factor() for _ in range(d))
        identifier = f"tensor-u0(x/2)^{d}"
    else:
        factors = (_odd_factor(),) + tuple(_bump_factor() for _ in range(d - 1))
        identifier = f"lambda1 x u0^{d - 1}"
    l2 = math.prod(f.norm(2.0) for f in factors)
    linf = math.prod(f.norm(math.inf) for f in factors)
    integral = math.prod(f.integral() for f in factors)
    shape = BumpShape(d=d, nonnegative=nonnegative, factors=factors, l2_norm=l2,
                      linf_norm=linf, integral=integral, identifier=identifier)
    shape._norms[2.0] = l2
    shape._norms[math.inf] = linf
    logger.debug("bump %s: ||L||_2=%.6g ||L||_inf=%.6g", identifier, l2, linf)
    return shape
