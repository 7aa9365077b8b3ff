"""
Finite-difference verification of anisotropic Nikolskii-ball membership

A function G belongs to the ball with radii L when, for every direction j,
||Delta^{k_j}_{u,j} G||_{r_j} <= L_j |u|^{beta_j} for all u and
||G||_{r_j} <= L_j. The supremum over u is approximated on a log-spaced grid;
k_j = floor(beta_j) + 1 throughout.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import comb

from nikolskii_lb.core.errors import NumericalFailure, ParameterError
from nikolskii_lb.core.models import ClassParams, DirectionCheck, MembershipReport
from nikolskii_lb.core.mollifier import BumpShape, Profile, profile_norm

logger = logging.getLogger(__name__)

__all__ = [
    "difference_order",
    "finite_difference",
    "default_u_grid",
    "SeparableFunction",
    "SeparableSum",
    "membership_check",
    "bump_sum_membership",
    "calibrate_c1",
    "combine",
]

DEFAULT_TOL = 1e-2
U_GRID_POINTS = 40
C1_SAFETY = 0.9
V_GRID = np.logspace(-3.0, math.log10(64.0), 200)

Evaluable = Callable[[np.ndarray], np.ndarray]


def difference_order(beta: float) -> int:
    """k = floor(beta) + 1, the smallest integer above beta"""
    return int(math.floor(beta)) + 1


def _difference_coefficients(k: int) -> List[Tuple[int, float]]:
    return [(l, float((-1) ** (l + k) * comb(k, l, exact=True))) for l in range(k + 1)]


def finite_difference(G: Evaluable, k: int, u: float, j: int) -> Evaluable:
    """
    k-th order difference of G with step u along direction j (1-based)

    Returns:
        x -> sum_{l=0..k} (-1)^(l+k) binom(k, l) G(x + u l e_j)
    """
    if k < 1:
        raise ParameterError("difference order must satisfy k >= 1")
    if j < 1:
        raise ParameterError("direction must satisfy j >= 1")
    coefficients = _difference_coefficients(k)

    def delta(x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if j > x.shape[-1]:
            raise ParameterError(f"direction j={j} exceeds dimension {x.shape[-1]}")
        total = np.zeros(x.shape[:-1])
        for l, coef in coefficients:
            shifted = x.copy()
            shifted[..., j - 1] += u * l
            total += coef * np.asarray(G(shifted), dtype=float)
        return total

    return delta


def default_u_grid(widths: Sequence[float] = (1.0,)) -> np.ndarray:
    """40 log-spaced steps bracketing every characteristic width"""
    lo = min(1e-3, 0.1 * min(widths))
    hi = max(1.0, 4.0 * max(widths))
    return np.logspace(math.log10(lo), math.log10(hi), U_GRID_POINTS)


def profile_difference_norm(profile: Profile, k: int, u: float, r: float) -> float:
    """||Delta^k_u profile||_r for a 1-D profile"""
    coefficients = _difference_coefficients(k)
    shifted = [profile.shifted(u * l) for l, _ in coefficients]
    return profile_norm(shifted, [c for _, c in coefficients], r)


@dataclass(frozen=True)
class SeparableFunction:
    """coef * prod_j profiles[j](x_j)"""
    coef: float
    profiles: Tuple[Profile, ...]

    @property
    def d(self) -> int:
        return len(self.profiles)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.full(x.shape[:-1], self.coef)
        for j, profile in enumerate(self.profiles):
            out *= profile(x[..., j])
        return out

    def widths(self, j: int) -> float:
        lo, hi = self.profiles[j - 1].support
        return hi - lo

    def norm(self, r: float) -> float:
        return abs(self.coef) * math.prod(p.norm(r) for p in self.profiles)

    def difference_norm(self, k: int, u: float, j: int, r: float) -> float:
        others = math.prod(p.norm(r) for i, p in enumerate(self.profiles) if i != j - 1)
        return abs(self.coef) * others * profile_difference_norm(self.profiles[j - 1], k, u, r)


@dataclass(frozen=True)
class SeparableSum:
    """Sum of separable terms; norms are triangle-inequality upper bounds"""
    terms: Tuple[SeparableFunction, ...]

    @property
    def d(self) -> int:
        return self.terms[0].d

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return sum(term(x) for term in self.terms)

    def widths(self, j: int) -> float:
        return min(term.widths(j) for term in self.terms)

    def norm(self, r: float) -> float:
        return math.fsum(term.norm(r) for term in self.terms)

    def difference_norm(self, k: int, u: float, j: int, r: float) -> float:
        return math.fsum(term.difference_norm(k, u, j, r) for term in self.terms)


Separable = Union[SeparableFunction, SeparableSum]


def _grid_norm(values: np.ndarray, weights: np.ndarray, r: float) -> float:
    if math.isinf(r):
        return float(np.max(np.abs(values))) if values.size else 0.0
    total = float(np.dot(weights, np.abs(values) ** r))
    if not math.isfinite(total):
        raise NumericalFailure("non-finite value in grid quadrature")
    return total ** (1.0 / r)


def _direction_check(j: int, k: int, ratios: np.ndarray, u_grid: np.ndarray, norm: float,
                     limit: float, tol: float) -> DirectionCheck:
    worst = int(np.argmax(ratios))
    return DirectionCheck(
        j=j,
        k=k,
        worst_ratio=float(ratios[worst]),
        worst_u=float(u_grid[worst]),
        norm=norm,
        limit=limit,
        ratio_ok=bool(ratios[worst] <= limit * (1.0 + tol)),
        norm_ok=bool(norm <= limit * (1.0 + tol)),
    )


def membership_check(G: Union[Separable, Evaluable], theta: ClassParams, scale: float = 1.0,
                     u_grid: Optional[Sequence[float]] = None,
                     quad_grid: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                     tol: float = DEFAULT_TOL, check_lq: bool = False) -> MembershipReport:
    """
    Numerical Nikolskii-ball membership at radii scale * L

    Args:
        G: SeparableFunction / SeparableSum (exact 1-D reductions) or any
            callable on (P, d) arrays together with quad_grid
        theta: Class parameter supplying beta, r, L (and q, Q for check_lq)
        scale: Radius multiplier, 1 or 1/2
        u_grid: Positive steps; defaults to default_u_grid of the widths of G
        quad_grid: (points, weights) covering every shifted support; required
            for plain callables
        tol: Relative slack on all comparisons
        check_lq: Also require ||G||_q <= scale * Q

    Returns:
        MembershipReport
    """
    if scale <= 0:
        raise ParameterError("scale must be positive")
    separable = isinstance(G, (SeparableFunction, SeparableSum))
    if not separable and quad_grid is None:
        raise ParameterError("membership_check on a plain callable needs quad_grid")
    if separable and G.d != theta.d:
        raise ParameterError(f"function dimension {G.d} does not match d={theta.d}")

    checks = []
    for j in range(1, theta.d + 1):
        beta, r, L = theta.beta[j - 1], theta.r[j - 1], theta.L[j - 1]
        k = difference_order(beta)
        if u_grid is None:
            grid = default_u_grid([G.widths(j)] if separable else [1.0])
        else:
            grid = np.asarray(u_grid, dtype=float)
        if separable:
            diffs = np.array([G.difference_norm(k, u, j, r) for u in grid])
            norm = G.norm(r)
        else:
            points, weights = quad_grid
            diffs = np.array([_grid_norm(finite_difference(G, k, u, j)(points), weights, r)
                              for u in grid])
            norm = _grid_norm(np.asarray(G(points), dtype=float), weights, r)
        ratios = diffs / grid ** beta
        checks.append(_direction_check(j, k, ratios, grid, norm, scale * L, tol))

    lq_norm = lq_limit = None
    if check_lq:
        if separable:
            lq_norm = G.norm(theta.q)
        else:
            lq_norm = _grid_norm(np.asarray(G(quad_grid[0]), dtype=float), quad_grid[1], theta.q)
        lq_limit = scale * theta.Q
    verdict = all(c.ratio_ok and c.norm_ok for c in checks)
    if lq_norm is not None:
        verdict = verdict and lq_norm <= lq_limit * (1.0 + tol)
    method = "separable" if isinstance(G, SeparableFunction) else (
        "separable-triangle" if separable else "grid")
    logger.debug("membership (%s, scale=%g): %s", method, scale, verdict)
    return MembershipReport(per_direction=checks, verdict=verdict, tolerance=tol, scale=scale,
                            method=method, lq_norm=lq_norm, lq_limit=lq_limit)


def scaled_bump(shape: BumpShape, A: float, sigma: Sequence[float]) -> SeparableFunction:
    """x -> A * Lambda(x / sigma), the bump centred at the origin"""
    return SeparableFunction(
        coef=A,
        profiles=tuple(f.affine(0.0, s) for f, s in zip(shape.factors, sigma)),
    )


def bump_sum_membership(shape: BumpShape, A: float, sigma: Sequence[float], M: int,
                        spacing: Sequence[float], counts: Sequence[int], theta: ClassParams,
                        scale: float = 1.0, u_grid: Optional[Sequence[float]] = None,
                        tol: float = DEFAULT_TOL) -> MembershipReport:
    """
    Membership of sum_m y_m A Lambda((x - x_m)/sigma) for any y in [-1, 1]^M

    Centres sit on a lattice with the given spacing and per-axis counts.
    The difference norm is bounded by
    min(m(u)^(1-1/r) M^(1/r) ||Delta_u Lambda_1||_r, 2^k M^(1/r) ||Lambda_1||_r),
    where m(u) counts the shifted supports overlapping along a lattice row.
    The bound is an equality when m(u) = 1 and |y_m| = 1.

    Returns:
        MembershipReport with method "bump-sum"
    """
    if M < 1:
        raise ParameterError("M must satisfy M >= 1")
    if any(s < w * (1.0 - 1e-12) for s, w in zip(spacing, sigma)):
        raise ParameterError("lattice spacing must be at least the bump width")
    single = scaled_bump(shape, A, sigma)
    checks = []
    for j in range(1, theta.d + 1):
        beta, r, L = theta.beta[j - 1], theta.r[j - 1], theta.L[j - 1]
        k = difference_order(beta)
        inv_r = 0.0 if math.isinf(r) else 1.0 / r
        grid = np.asarray(u_grid if u_grid is not None else default_u_grid([sigma[j - 1]]),
                          dtype=float)
        single_norm = single.norm(r)
        ratios = []
        for u in grid:
            overlap = min(int(math.floor((k * u + sigma[j - 1]) / spacing[j - 1])) + 1,
                          int(counts[j - 1]))
            holder = overlap ** (1.0 - inv_r) * M ** inv_r * single.difference_norm(k, u, j, r)
            crude = 2.0 ** k * M ** inv_r * single_norm
            ratios.append(min(holder, crude) / u ** beta)
        norm = M ** inv_r * single_norm
        checks.append(_direction_check(j, k, np.array(ratios), grid, norm, scale * L, tol))
    inv_q = 0.0 if math.isinf(theta.q) else 1.0 / theta.q
    lq_norm = M ** inv_q * single.norm(theta.q)
    lq_limit = scale * theta.Q
    verdict = all(c.ratio_ok and c.norm_ok for c in checks) and lq_norm <= lq_limit * (1 + tol)
    return MembershipReport(per_direction=checks, verdict=verdict, tolerance=tol, scale=scale,
                            method="bump-sum", lq_norm=lq_norm, lq_limit=lq_limit)


@lru_cache(maxsize=64)
def _overlap_constant(shape: BumpShape, j: int, beta: float, r: float) -> float:
    k = difference_order(beta)
    inv_r = 0.0 if math.isinf(r) else 1.0 / r
    unit = scaled_bump(shape, 1.0, (1.0,) * shape.d)
    crude = 2.0 ** k * unit.norm(r)
    values = []
    for v in V_GRID:
        touching = (math.floor(k * v) + 2) ** (1.0 - inv_r) * unit.difference_norm(k, v, j, r)
        values.append(min(touching, crude) / v ** beta)
    return max(values)


def calibrate_c1(theta: ClassParams, shape: BumpShape) -> float:
    """
    Constant C1 such that A sigma_l^(-beta_l) (sigma M)^(1/r_l) <= C1 L_l puts
    any lattice bump sum with |y_m| <= 1 into the half-radius ball

    Kj is the supremum over v of the overlap-aware single-bump ratio for unit
    width and amplitude with touching supports; C1 = 0.9 / (2 max_j max(Kj, ||Lambda||_rj)).
    """
    if shape.d != theta.d:
        raise ParameterError(f"bump dimension {shape.d} does not match d={theta.d}")
    worst = 0.0
    for j in range(1, theta.d + 1):
        beta, r = theta.beta[j - 1], theta.r[j - 1]
        worst = max(worst, _overlap_constant(shape, j, beta, r), shape.norm(r))
    c1 = C1_SAFETY / (2.0 * worst)
    logger.info("calibrated C1 = %.6g", c1)
    return c1


def combine(first: MembershipReport, second: MembershipReport) -> MembershipReport:
    """
    Membership of a sum from memberships of its parts (triangle inequality)

    Worst ratios, norms and limits add, so two half-radius passes give a
    full-radius pass.
    """
    if len(first.per_direction) != len(second.per_direction):
        raise ParameterError("cannot combine reports of different dimensions")
    tol = max(first.tolerance, second.tolerance)
    checks = []
    for a, b in zip(first.per_direction, second.per_direction):
        worst = a.worst_ratio + b.worst_ratio
        norm = a.norm + b.norm
        limit = a.limit + b.limit
        checks.append(DirectionCheck(
            j=a.j, k=a.k, worst_ratio=worst,
            worst_u=a.worst_u if a.worst_ratio >= b.worst_ratio else b.worst_u,
            norm=norm, limit=limit,
            ratio_ok=worst <= limit * (1.0 + tol), norm_ok=norm <= limit * (1.0 + tol)))
    lq_norm = lq_limit = None
    if first.lq_norm is not None and second.lq_norm is not None:
        lq_norm = first.lq_norm + second.lq_norm
        lq_limit = first.lq_limit + second.lq_limit
    verdict = all(c.ratio_ok and c.norm_ok for c in checks)
    if lq_norm is not None:
        verdict = verdict and lq_norm <= lq_limit * (1.0 + tol)
    return MembershipReport(per_direction=checks, verdict=verdict, tolerance=tol,
                            scale=first.scale + second.scale, method="triangle",
                            lq_norm=lq_norm, lq_limit=lq_limit)
