"""
Rate-exponent calculus over the parameter space of anisotropic Nikolskii classes

Infinite norm indices are represented by math.inf; 1/math.inf is exactly 0.0
in IEEE arithmetic, so no large-float surrogate is ever used.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from nikolskii_lb.core.errors import ParameterError
from nikolskii_lb.core.models import (
    ClassParams, ConditionReport, GridStatistics, PairCondition, RateReport, Regime,
    RelationReport, SmoothnessDiagnostics,
)

logger = logging.getLogger(__name__)

HALF = 0.5
ZERO_TOL = 1e-12

PsiFamily = Callable[[ClassParams, int], float]


def smoothness_diagnostics(theta: ClassParams) -> SmoothnessDiagnostics:
    """
    Aggregate indices of (beta, r)

    Args:
        theta: Class parameter

    Returns:
        1/omega = sum 1/(beta_j r_j), 1/beta = sum 1/beta_j and
        bold L = prod L_j^(1/beta_j)
    """
    inv_omega = math.fsum(1.0 / (b * r) for b, r in zip(theta.beta, theta.r))
    inv_beta = math.fsum(1.0 / b for b in theta.beta)
    bold_L = math.prod(L ** (1.0 / b) for L, b in zip(theta.L, theta.beta))
    return SmoothnessDiagnostics(inv_omega=inv_omega, inv_beta=inv_beta, bold_L=bold_L)


def exponent_case(theta: ClassParams) -> int:
    """Which branch of the general exponent formula applies (1, 2 or 3)"""
    diag = smoothness_diagnostics(theta)
    if diag.tau(2.0) >= 1.0:
        return 1
    if diag.tau(theta.q) < 0.0:
        return 2
    return 3


def exponent_general(theta: ClassParams) -> float:
    """Minimax rate exponent for arbitrary q in [2, inf]"""
    diag = smoothness_diagnostics(theta)
    tau2 = diag.tau(2.0)
    if tau2 >= 1.0:
        return min(HALF, 1.0 / diag.tau(1.0))
    tau_q = diag.tau(theta.q)
    if tau_q < 0.0:
        return (1.0 - 2.0 / theta.q) / (2.0 - 2.0 / theta.q - tau_q)
    return min(HALF, tau2 / diag.tau(1.0))


def exponent_q_infinite(theta: ClassParams) -> float:
    """Closed form of the exponent when q = inf"""
    if not math.isinf(theta.q):
        raise ParameterError("exponent_q_infinite requires q = inf")
    diag = smoothness_diagnostics(theta)
    if diag.tau(2.0) >= 1.0:
        return min(HALF, 1.0 / diag.tau(1.0))
    tau_inf = diag.tau(math.inf)
    if tau_inf < 0.0:
        return 1.0 / (2.0 - tau_inf)
    return HALF


def exponent_isotropic(theta: ClassParams) -> float:
    """Isotropic q = inf exponent, written with 1/r so that r = inf is exact"""
    if not (theta.isotropic and math.isinf(theta.q)):
        raise ParameterError("exponent_isotropic requires an isotropic theta with q = inf")
    beta, r, d = theta.beta[0], theta.r[0], theta.d
    x = 1.0 - 1.0 / r
    if r >= 2.0:
        return beta / (beta + d * x) if beta < d * x else HALF
    if beta * r < d:
        return beta * r / (beta * r + d)
    return HALF


def classify(theta: ClassParams, z: Optional[float] = None) -> Regime:
    """Regime label; Parametric takes precedence whenever z = 1/2"""
    if z is None:
        z = exponent_general(theta)
    if z == HALF:
        return Regime.PARAMETRIC
    diag = smoothness_diagnostics(theta)
    if diag.tau(2.0) >= 1.0:
        return Regime.THETA_PRIME
    if diag.tau(theta.q) < 0.0:
        return Regime.THETA_DOUBLE_PRIME
    return Regime.THETA_TRIPLE_PRIME


def rate_exponent(theta: ClassParams) -> RateReport:
    """
    Rate exponent and regime of a class parameter

    Args:
        theta: Class parameter

    Returns:
        RateReport without the n-dependent fields
    """
    z = exponent_general(theta)
    diag = smoothness_diagnostics(theta)
    return RateReport(z=z, regime=classify(theta, z), diagnostics=diag.to_dict(theta.q))


def _check_n(n: int) -> None:
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 3:
        raise ParameterError(f"n must be an integer n >= 3, got {n!r}")


def adaptive_normalization(z: float, n: int) -> float:
    """(sqrt(ln n) / n)^z"""
    _check_n(n)
    return (math.sqrt(math.log(n)) / n) ** z


def rates_at_n(theta: ClassParams, n: int) -> RateReport:
    """
    Rate exponent with the adaptive normalisation, minimax rate and price at n

    Args:
        theta: Class parameter
        n: Sample size, n >= 3

    Returns:
        RateReport with psi_n, phi_n and price = (ln n)^(z/2)
    """
    _check_n(n)
    report = rate_exponent(theta)
    report.n = int(n)
    report.psi_n = adaptive_normalization(report.z, n)
    report.phi_n = float(n) ** (-report.z)
    report.price = math.log(n) ** (report.z / 2.0)
    return report


def rho(theta: ClassParams, theta_prime: ClassParams) -> float:
    """sum_l min[(1/beta_l)(1/r_l - 1/q), (1/gamma_l)(1/s_l - 1/q')]"""
    return math.fsum(rho_components(theta, theta_prime))


def rho_components(theta: ClassParams, theta_prime: ClassParams) -> List[float]:
    if theta.d != theta_prime.d:
        raise ParameterError("theta and theta_prime must share the dimension d")
    return [
        min((1.0 / b) * (1.0 / r - 1.0 / theta.q), (1.0 / g) * (1.0 / s - 1.0 / theta_prime.q))
        for b, r, g, s in zip(theta.beta, theta.r, theta_prime.beta, theta_prime.r)
    ]


def midpoint_c(z: float, z_prime: float) -> float:
    """c = 1/2 + z / (2 z')"""
    if z_prime == 0.0:
        raise ParameterError("z(theta') = 0: c(theta, theta') cannot be formed")
    return HALF + z / (2.0 * z_prime)


def compare_thetas(theta: ClassParams, theta_prime: ClassParams, alpha: Optional[float] = None,
                   n: Optional[int] = None) -> RelationReport:
    """
    Relation of theta' to theta for the two-class lower bound

    Args:
        theta: Base class parameter
        theta_prime: Competing class parameter
        alpha: Optional override in (z, z'); c = alpha / z'
        n: Optional sample size for alpha_n = n^(c z' - z)

    Returns:
        RelationReport with rho, set memberships, c and alpha_n
    """
    z = exponent_general(theta)
    z_prime = exponent_general(theta_prime)
    if z_prime == 0.0:
        raise ParameterError("z(theta') = 0: c(theta, theta') cannot be formed")
    rho_value = rho(theta, theta_prime)
    regime_prime = classify(theta_prime, z_prime)
    above = z_prime > z
    if alpha is None:
        c = midpoint_c(z, z_prime)
    else:
        if not z < alpha < z_prime:
            raise ParameterError(f"alpha must lie in (z, z') = ({z}, {z_prime}), got {alpha}")
        c = alpha / z_prime
    report = RelationReport(
        z=z,
        z_prime=z_prime,
        rho=rho_value,
        in_theta_prime=regime_prime is Regime.THETA_PRIME and above,
        in_theta_double_prime=(regime_prime is Regime.THETA_DOUBLE_PRIME and above
                               and rho_value >= 1.0 and theta_prime.q <= theta.q),
        in_plus=above,
        in_zero=z_prime == z,
        c=c,
        alpha=c * z_prime,
        alpha_n_decay_exponent=z - c * z_prime,
        alpha_n_growth_exponent=c * z_prime - z,
    )
    if n is not None:
        _check_n(n)
        report.n = int(n)
        report.alpha_n = float(n) ** report.alpha_n_growth_exponent
    return report


def alpha_n(theta: ClassParams, theta_prime: ClassParams, n: int,
            alpha: Optional[float] = None) -> float:
    """alpha_n(theta, theta', c) = phi_n(theta) / phi_n(theta')^c"""
    return compare_thetas(theta, theta_prime, alpha=alpha, n=n).alpha_n


@dataclass
class ParameterGrid:
    """Structured grid over the parameter space

    Isotropic grids vary (beta, r, q) jointly over all coordinates; the
    anisotropic box varies every beta_j and r_j separately.
    """
    d: int
    kind: str
    axes: Dict[str, List[float]]
    L: float = 1.0
    Q: float = 1.0

    @classmethod
    def isotropic(cls, d: int, betas: Sequence[float], rs: Sequence[float],
                  qs: Sequence[float] = (math.inf,)) -> "ParameterGrid":
        return cls(d=d, kind="isotropic",
                   axes={"beta": list(betas), "r": list(rs), "q": list(qs)})

    @classmethod
    def anisotropic(cls, d: int, betas: Sequence[float], rs: Sequence[float],
                    qs: Sequence[float] = (math.inf,)) -> "ParameterGrid":
        axes: Dict[str, List[float]] = {}
        for j in range(d):
            axes[f"beta_{j + 1}"] = list(betas)
        for j in range(d):
            axes[f"r_{j + 1}"] = list(rs)
        axes["q"] = list(qs)
        return cls(d=d, kind="anisotropic", axes=axes)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(len(values) for values in self.axes.values())

    def points(self) -> List[ClassParams]:
        result = []
        for combo in itertools.product(*self.axes.values()):
            values = dict(zip(self.axes.keys(), combo))
            if self.kind == "isotropic":
                result.append(ClassParams.create(self.d, values["beta"], values["r"], values["q"],
                                                 self.L, self.Q))
            else:
                beta = [values[f"beta_{j + 1}"] for j in range(self.d)]
                r = [values[f"r_{j + 1}"] for j in range(self.d)]
                result.append(ClassParams.create(self.d, beta, r, values["q"], self.L, self.Q))
        return result


def _price_bounded(psi_family: PsiFamily, theta: ClassParams,
                   n_points: Sequence[int] = (10 ** 3, 10 ** 6, 10 ** 9, 10 ** 12)) -> bool:
    z = exponent_general(theta)
    for n in n_points:
        price = psi_family(theta, n) / float(n) ** (-z)
        if price > math.log(n) ** 0.25 * (1.0 + 1e-12):
            return False
    return True


def _full_cells(mask: np.ndarray) -> int:
    """Number of grid cells whose corners all lie in mask"""
    cells = mask
    for axis in range(mask.ndim):
        if cells.shape[axis] < 2:
            continue
        lo = [slice(None)] * cells.ndim
        hi = [slice(None)] * cells.ndim
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        cells = cells[tuple(lo)] & cells[tuple(hi)]
    if all(size < 2 for size in mask.shape):
        return 0
    return int(np.count_nonzero(cells))


def check_conditions_A(grid: Union[ParameterGrid, Sequence[ClassParams]],
                       psi_family: Optional[PsiFamily] = None,
                       alpha_fraction: Optional[float] = None) -> ConditionReport:
    """
    Numerical evidence for Conditions A1-A3 on a finite grid

    Args:
        grid: Structured grid or plain list of class parameters
        psi_family: Normalisation family (theta, n) -> psi_n; defaults to
            (sqrt(ln n)/n)^z(theta)
        alpha_fraction: Optional position of alpha inside (z, z'), in (0, 1);
            the midpoint is used when omitted

    Returns:
        ConditionReport with per-pair A2/A3 exponents and A1 grid statistics
    """
    if isinstance(grid, ParameterGrid):
        points, shape, kind, resolution = grid.points(), grid.shape, grid.kind, grid.axes
    else:
        points = list(grid)
        shape, kind, resolution = (len(points),), "list", {}
    if not points:
        raise ParameterError("empty grid")
    if psi_family is None:
        psi_family = lambda theta, n: adaptive_normalization(exponent_general(theta), n)
    if alpha_fraction is not None and not 0.0 < alpha_fraction < 1.0:
        raise ParameterError("alpha_fraction must lie in (0, 1)")

    zs = np.array([exponent_general(theta) for theta in points])
    scale = np.maximum(np.abs(zs), 1.0)
    pairs: List[PairCondition] = []
    a1: List[GridStatistics] = []
    skipped = 0
    price_ok = True

    for i, theta in enumerate(points):
        z = zs[i]
        if z == HALF:
            skipped += 1
            continue
        price_ok = price_ok and _price_bounded(psi_family, theta)
        zero_mask = np.abs(zs - z) <= ZERO_TOL * scale
        plus_mask = (zs > z) & ~zero_mask
        zero_cells = _full_cells(zero_mask.reshape(shape))
        fraction_plus = float(np.mean(plus_mask))
        a1.append(GridStatistics(
            base_index=i,
            fraction_plus=fraction_plus,
            fraction_zero=float(np.mean(zero_mask)),
            zero_cells=zero_cells,
            passed=fraction_plus > 0.0 and zero_cells == 0,
        ))
        for j in np.flatnonzero(plus_mask):
            z_prime = zs[j]
            if alpha_fraction is None:
                c = midpoint_c(z, z_prime)
            else:
                c = (z + alpha_fraction * (z_prime - z)) / z_prime
            a2 = c * z_prime - z
            a3 = (1.0 - c) * z_prime
            pairs.append(PairCondition(base_index=i, other_index=int(j), c=c,
                                       a2_exponent=a2, a2_pass=a2 > 0.0,
                                       a3_exponent=a3, a3_pass=a3 > 0.0))

    passed = (price_ok and all(p.a2_pass and p.a3_pass for p in pairs)
              and all(s.passed for s in a1))
    logger.info("conditions A on %d points: %d pairs, %d parametric skipped, passed=%s",
                len(points), len(pairs), skipped, passed)
    return ConditionReport(
        grid_kind=kind,
        grid_shape=tuple(shape),
        resolution={k: list(v) for k, v in resolution.items()},
        pairs=pairs,
        a1=a1,
        skipped_parametric=skipped,
        price_bounded=price_ok,
        passed=passed,
    )
