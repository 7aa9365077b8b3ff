"""
Perturbation families of densities: bases, bump lattices, builders,
evaluation, exact sampling and closed-form norms

A family is f_y = (1 - rho_y) f0 + sum_m y_m A Lambda((x - x_m)/sigma) with
rho_y = sum_m y_m lambda_m. Every box x_m + sigma [-1/2, 1/2]^d sits where the
base is exactly constant, so bump/base cross terms, S_m and box masses have
closed forms; quadrature paths are kept to check them.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize

from nikolskii_lb.core.errors import ConstructionError, NumericalFailure, ParameterError, RegimeError
from nikolskii_lb.core.models import (
    BaseKind, ClassParams, Construction, FamilyConstants, PriorKind, PriorSpec, Regime,
)
from nikolskii_lb.core.mollifier import BumpShape, make_bump, plateau_profile, sample_mollifier
from nikolskii_lb.core.nikolskii import (
    V_GRID, SeparableFunction, SeparableSum, calibrate_c1, difference_order,
    profile_difference_norm,
)
from nikolskii_lb.core.param_space import (
    classify, compare_thetas, exponent_general, rho_components, smoothness_diagnostics,
)
from nikolskii_lb.utils.quadrature import panel_rule, tensor_rule
from nikolskii_lb.utils.rng import SeedLike, make_rng

logger = logging.getLogger(__name__)

BIG_N_DEFAULT = 8.0
A_SAFETY = 0.9
SEP_FACTOR = 0.99
SYNTHETIC_SAFETY = 0.9
MAX_EXPLICIT_CENTERS = 10_000_000
LOG_A_FLOOR = math.log(1e-8)
NONNEG_SLACK = 1e-12


def _inv(value: float) -> float:
    return 0.0 if math.isinf(value) else 1.0 / value


def base_norm_bound(big_n: float, a: float, d: int, u: float) -> float:
    """a^(d(1-1/u)) N^(-d+d/u), the L_u bound of the mollified uniform density"""
    inv_u = _inv(u)
    return a ** (d * (1.0 - inv_u)) * big_n ** (-d + d * inv_u)


@dataclass(frozen=True)
class MixtureComponent:
    """weight times the law of s * h * (V + W) / a, s = -1 when reflected"""
    weight: float
    big_n: float
    a: float
    h: Tuple[float, ...]
    reflect: bool = False

    @property
    def d(self) -> int:
        return len(self.h)

    def separable(self) -> SeparableFunction:
        g = plateau_profile(self.big_n)
        profiles = []
        for hj in self.h:
            profile = g.affine(0.0, hj / self.a)
            profiles.append(profile.reflected() if self.reflect else profile)
        coef = self.weight * math.prod(self.a / hj for hj in self.h)
        return SeparableFunction(coef=coef, profiles=tuple(profiles))

    @property
    def plateau_value(self) -> float:
        return self.weight * math.prod(self.a / hj for hj in self.h) * self.big_n ** (-self.d)

    def plateau_box(self) -> Tuple[Tuple[float, float], ...]:
        boxes = []
        for hj in self.h:
            lo, hi = 2.0 * hj / self.a, self.big_n * hj / self.a
            boxes.append((-hi, -lo) if self.reflect else (lo, hi))
        return tuple(boxes)

    def lr_power(self, r: float) -> float:
        """||component||_r^r for finite r"""
        g = plateau_profile(self.big_n)
        per_axis = g.norm(r) ** r
        return math.prod(
            (self.weight ** (r / self.d)) * (self.a / hj) ** (r - 1.0) * per_axis for hj in self.h
        )

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        v = sample_mollifier(rng, size * self.d).reshape(size, self.d)
        w = rng.uniform(1.0, self.big_n + 1.0, (size, self.d))
        x = (v + w) * (np.asarray(self.h) / self.a)
        return -x if self.reflect else x


@dataclass(frozen=True)
class BaseDensity:
    """Base density as a mixture of mollified-uniform components with disjoint supports"""
    kind: BaseKind
    components: Tuple[MixtureComponent, ...]
    params: Tuple[Tuple[str, Any], ...] = ()

    @property
    def d(self) -> int:
        return self.components[0].d

    def separable(self) -> Union[SeparableFunction, SeparableSum]:
        terms = tuple(c.separable() for c in self.components)
        return terms[0] if len(terms) == 1 else SeparableSum(terms)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[-1] != self.d:
            raise ParameterError(f"expected points of dimension {self.d}, got {x.shape[-1]}")
        return self.separable()(x)

    @property
    def sup(self) -> float:
        return max(c.plateau_value for c in self.components)

    def l2_sq(self) -> float:
        return math.fsum(c.lr_power(2.0) for c in self.components)

    def lq_norm(self, q: float) -> float:
        if math.isinf(q):
            return self.sup
        return math.fsum(c.lr_power(q) for c in self.components) ** (1.0 / q)

    def integral(self) -> float:
        """Total mass by 1-D quadrature of every factor"""
        total = 0.0
        for c in self.components:
            sep = c.separable()
            total += sep.coef * math.prod(p.integral() for p in sep.profiles)
        return total

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        weights = np.array([c.weight for c in self.components])
        counts = rng.multinomial(size, weights / weights.sum())
        parts = [c.sample(rng, int(k)) for c, k in zip(self.components, counts) if k > 0]
        if not parts:
            return np.empty((0, self.d))
        x = np.concatenate(parts)
        return x[rng.permutation(len(x))]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "params": dict(self.params),
            "components": [
                {"weight": c.weight, "N": c.big_n, "a": c.a, "h": list(c.h), "reflect": c.reflect}
                for c in self.components
            ],
        }


def mollified_uniform(d: int, big_n: float, a: float) -> BaseDensity:
    """f_{0,N,a}(x) = prod_j a g_N(a x_j)"""
    if not big_n >= 1.0:
        raise ParameterError(f"N must satisfy N >= 1, got {big_n}")
    if not 0.0 < a <= 1.0:
        raise ParameterError(f"a must satisfy 0 < a <= 1, got {a}")
    return BaseDensity(
        kind=BaseKind.MOLLIFIED_UNIFORM,
        components=(MixtureComponent(weight=1.0, big_n=big_n, a=a, h=(1.0,) * d),),
        params=(("N", big_n), ("a", a)),
    )


def shrunk_composite(d: int, big_n: float, a: float, t: float, c_const: float, q: float,
                     h: Sequence[float]) -> BaseDensity:
    """(1 - c t^(1-1/q)) f_{0,N,a}(-x) + c t^(-1/q) f_{0,N,a}(x / h), prod h = t"""
    if not 0.0 < t < 1.0:
        raise ParameterError(f"t must lie in (0, 1), got {t}")
    inner = c_const * t ** (1.0 - _inv(q))
    if not 0.0 < inner < 1.0:
        raise ParameterError(f"c t^(1-1/q) must lie in (0, 1), got {inner}")
    return BaseDensity(
        kind=BaseKind.SHRUNK_COMPOSITE,
        components=(
            MixtureComponent(weight=1.0 - inner, big_n=big_n, a=a, h=(1.0,) * d, reflect=True),
            MixtureComponent(weight=inner, big_n=big_n, a=a, h=tuple(h)),
        ),
        params=(("N", big_n), ("a", a), ("t", t), ("c_const", c_const), ("h", tuple(h))),
    )


def eval_mollified_base(big_n: float, a: float, x: np.ndarray) -> np.ndarray:
    """Pointwise values of f_{0,N,a}; x has shape (P, d)"""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return mollified_uniform(x.shape[-1], big_n, a)(x)


def check_base_norm(base: BaseDensity, u: float) -> Tuple[float, float]:
    """
    ||f_{0,N,a}||_u next to its closed-form bound

    Returns:
        (norm, bound); equal when u = inf

    Raises:
        NumericalFailure: if the computed norm exceeds the bound
    """
    if base.kind is not BaseKind.MOLLIFIED_UNIFORM:
        raise ParameterError("the closed-form norm bound covers the mollified uniform base only")
    params = dict(base.params)
    norm = base.lq_norm(u)
    bound = base_norm_bound(params["N"], params["a"], base.d, u)
    if norm > bound * (1.0 + 1e-9):
        raise NumericalFailure(f"||f0||_{u} = {norm:.6g} exceeds its bound {bound:.6g}")
    return norm, bound


@dataclass(frozen=True)
class BumpLattice:
    """M box centres lo + i * spacing filled in C order over a grid of the given counts"""
    lo: Tuple[float, ...]
    spacing: Tuple[float, ...]
    counts: Tuple[int, ...]
    size: int
    sigma: Tuple[float, ...]

    def __post_init__(self):
        if self.size < 1:
            raise ConstructionError("lattice must hold at least one bump")
        if math.prod(self.counts) < self.size:
            raise ConstructionError(
                f"lattice capacity {math.prod(self.counts)} is below M={self.size}")

    @property
    def d(self) -> int:
        return len(self.lo)

    def center_of(self, index: np.ndarray) -> np.ndarray:
        multi = np.unravel_index(np.asarray(index, dtype=np.int64), self.counts)
        return np.stack([lo + s * i for lo, s, i in zip(self.lo, self.spacing, multi)], axis=-1)

    def centers(self) -> np.ndarray:
        if self.size > MAX_EXPLICIT_CENTERS:
            raise NumericalFailure(f"refusing to materialise {self.size} centres")
        return self.center_of(np.arange(self.size))

    def locate(self, x: np.ndarray) -> np.ndarray:
        """Index of the open box containing each point, -1 outside every box"""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        inside = np.ones(x.shape[0], dtype=bool)
        multi = []
        for j in range(self.d):
            i = np.floor((x[:, j] - self.lo[j]) / self.spacing[j] + 0.5).astype(np.int64)
            i = np.clip(i, 0, self.counts[j] - 1)
            offset = x[:, j] - (self.lo[j] + i * self.spacing[j])
            inside &= np.abs(offset) < 0.5 * self.sigma[j]
            multi.append(i)
        linear = np.ravel_multi_index(tuple(multi), self.counts)
        inside &= linear < self.size
        return np.where(inside, linear, -1)

    def box_extent(self) -> Tuple[Tuple[float, float], ...]:
        """Bounding box of every bump box, a superset of the occupied region"""
        return tuple(
            (lo - 0.5 * sg, lo + (c - 1) * s + 0.5 * sg)
            for lo, s, c, sg in zip(self.lo, self.spacing, self.counts, self.sigma)
        )

    def to_dict(self) -> Dict[str, Any]:
        return {"lo": list(self.lo), "spacing": list(self.spacing), "counts": list(self.counts),
                "size": self.size, "sigma": list(self.sigma)}


def lattice_in_box(box: Sequence[Tuple[float, float]], sigma: Sequence[float],
                   spacing: Sequence[float], M: int) -> BumpLattice:
    """Lattice of M boxes of widths sigma fully inside box, with the given spacing"""
    counts, lo = [], []
    for (b_lo, b_hi), sg, s in zip(box, sigma, spacing):
        capacity = int(math.floor((b_hi - b_lo - sg) / s + 1e-9)) + 1 if b_hi - b_lo >= sg else 0
        counts.append(capacity)
        lo.append(b_lo + 0.5 * sg)
    if math.prod(counts) < M:
        raise ConstructionError(f"lattice capacity {math.prod(counts)} is below M={M}")
    return BumpLattice(lo=tuple(lo), spacing=tuple(spacing), counts=tuple(counts), size=M,
                       sigma=tuple(sigma))


@dataclass
class PerturbationFamily:
    """Base density with a lattice of scaled bumps and a prior on their weights"""
    construction: Construction
    base: BaseDensity
    lattice: BumpLattice
    sigma: Tuple[float, ...]
    A: float
    M: int
    shape: BumpShape
    prior: PriorSpec
    theta: ClassParams
    theta_prime: ClassParams
    n: int
    kappa: float
    psi_n: float
    rate: float
    constants: FamilyConstants
    plateau: float
    M_real: float
    extras: Dict[str, Any] = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.base.d

    @property
    def volume(self) -> float:
        """sigma = prod_j sigma_j"""
        return math.prod(self.sigma)

    @property
    def lambda_bump(self) -> float:
        """lambda_m = integral of Lambda_m, identical for every m"""
        return self.A * self.volume * self.shape.integral if self.shape.nonnegative else 0.0

    @property
    def Sigma_M(self) -> float:
        return self.prior.first_moment * self.M * self.lambda_bump

    @property
    def frakS_M(self) -> float:
        return abs(self.lambda_bump)

    @property
    def frakD_M(self) -> float:
        return abs(self.lambda_bump) * math.sqrt(self.M)

    @property
    def S_value(self) -> float:
        """S_m = A^2 sigma ||Lambda||_2^2 / f0 on the boxes"""
        return self.A ** 2 * self.volume * self.shape.l2_norm ** 2 / self.plateau

    @property
    def rounding_slack(self) -> float:
        return (self.M_real - self.M) / self.M_real

    def rho(self, y: np.ndarray) -> np.ndarray:
        """rho_y for y of shape (M,) or (Y, M)"""
        y = np.asarray(y, dtype=float)
        return self.lambda_bump * y.sum(axis=-1)

    def derived(self) -> Dict[str, Any]:
        return {
            "lambda_m": self.lambda_bump,
            "Sigma_M": self.Sigma_M,
            "frakS_M": self.frakS_M,
            "frakD_M": self.frakD_M,
            "S_m": self.S_value,
            "S_m_count": self.M,
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            "construction": self.construction.value,
            "theta": self.theta.to_dict(),
            "theta_prime": self.theta_prime.to_dict(),
            "n": self.n,
            "kappa": self.kappa,
            "A": self.A,
            "sigma": list(self.sigma),
            "M": self.M,
            "M_real": self.M_real,
            "rounding_slack": self.rounding_slack,
            "psi_n": self.psi_n,
            "rate": self.rate,
            "plateau": self.plateau,
            "base": self.base.to_dict(),
            "lattice": self.lattice.to_dict(),
            "bump": self.shape.to_dict(),
            "prior": self.prior.to_dict(),
            "constants": {
                "C1": self.constants.C1, "a": self.constants.a, "N": self.constants.big_n,
                "c_const": self.constants.c_const, "c_sep": self.constants.c_sep,
                "delta": self.constants.delta,
            },
            "derived": self.derived(),
            "extras": {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.extras.items()},
        }


def _lq_budget_n(theta: ClassParams) -> float:
    """Smallest N with N^(-d(1-1/q)) <= Q/2"""
    exponent = theta.d * (1.0 - _inv(theta.q))
    return (2.0 / theta.Q) ** (1.0 / exponent)


@lru_cache(maxsize=32)
def calibrate_base(theta: ClassParams, theta_prime: ClassParams,
                   big_n: float = BIG_N_DEFAULT) -> Tuple[float, float]:
    """
    Largest admissible a for f_{0,N,a} in both half-radius balls

    With steps u = v / a every Nikolskii quantity of f_{0,N,a} is a power of a
    times its value at a = 1, so the margin is computed once and the root
    found by bisection on log a. N is raised to meet the L_q budgets.

    Args:
        theta: Class parameter of the perturbed class
        theta_prime: Class parameter of the competing class
        big_n: Requested N (at least 8 by default)

    Returns:
        (a, N) with a = 0.9 * a*, a* <= 1 the critical value

    Raises:
        ConstructionError: if even a = 1e-8 fails
    """
    if theta.d != theta_prime.d:
        raise ParameterError("theta and theta_prime must share the dimension d")
    big_n = max(big_n, _lq_budget_n(theta), _lq_budget_n(theta_prime))
    g = plateau_profile(big_n)
    d = theta.d
    constraints: List[Tuple[float, float, float]] = []
    for th in (theta, theta_prime):
        for beta, r, L in zip(th.beta, th.r, th.L):
            k = difference_order(beta)
            inv_r = _inv(r)
            g_norm = g.norm(r)
            sup_ratio = max(g_norm ** (d - 1) * profile_difference_norm(g, k, v, r) / v ** beta
                            for v in V_GRID)
            constraints.append((sup_ratio, d * (1.0 - inv_r) + beta, 0.5 * L))
            constraints.append((g_norm ** d, d * (1.0 - inv_r), 0.5 * L))
        constraints.append((g.norm(th.q) ** d, d * (1.0 - _inv(th.q)), 0.5 * th.Q))

    def margin(log_a: float) -> float:
        return max(coef * math.exp(expo * log_a) / limit for coef, expo, limit in constraints) - 1.0

    if margin(0.0) <= 0.0:
        a_star = 1.0
    elif margin(LOG_A_FLOOR) > 0.0:
        raise ConstructionError(
            "no a in [1e-8, 1] puts f_{0,N,a} in the half-radius balls; "
            "the r_j = 1 norm constraint needs L_j >= 2")
    else:
        a_star = math.exp(optimize.bisect(margin, LOG_A_FLOOR, 0.0, xtol=1e-12))
    a = min(1.0, A_SAFETY * a_star)
    logger.info("calibrated base: a* = %.6g, a = %.6g, N = %.6g", a_star, a, big_n)
    return a, big_n


def calibrate_constants(theta: ClassParams, theta_prime: ClassParams,
                        big_n: float = BIG_N_DEFAULT, nonnegative: bool = False) -> FamilyConstants:
    shape = make_bump(theta.d, nonnegative)
    a, big_n = calibrate_base(theta, theta_prime, big_n)
    return FamilyConstants(C1=calibrate_c1(theta, shape), a=a, big_n=big_n)


def _resolve_constants(theta: ClassParams, theta_prime: ClassParams,
                       constants: Optional[FamilyConstants], big_n: float,
                       nonnegative: bool = False) -> FamilyConstants:
    if constants is not None:
        return constants
    return calibrate_constants(theta, theta_prime, big_n, nonnegative)


def _separation(l2_sq_base: float, extra: float) -> float:
    base = math.sqrt(l2_sq_base)
    return math.sqrt(l2_sq_base + extra) - base


def build_family_I(theta: ClassParams, theta_prime: ClassParams, n: int, kappa: float,
                   constants: Optional[FamilyConstants] = None,
                   big_n: float = BIG_N_DEFAULT) -> PerturbationFamily:
    """
    First construction: mollified uniform base with a lattice of zero-mean bumps

    Args:
        theta: Base class parameter, in the ThetaPrime regime
        theta_prime: Competing parameter in Theta'[theta]
        n: Sample size, n >= 3
        kappa: Bump density, 0 < kappa < 2^-d
        constants: Pinned C1, a, N, c_sep; calibrated when omitted
        big_n: Requested N when calibrating

    Returns:
        PerturbationFamily with a Rademacher prior

    Raises:
        RegimeError: regime or relation mismatch
        ConstructionError: sigma_l > 1, capacity shortfall, M < 1 or N below the budget
    """
    if n < 3:
        raise ParameterError(f"n must satisfy n >= 3, got {n}")
    if classify(theta) is not Regime.THETA_PRIME:
        raise RegimeError(f"construction I needs theta in ThetaPrime, got {classify(theta).value}")
    relation = compare_thetas(theta, theta_prime)
    if not relation.in_theta_prime:
        raise RegimeError("construction I needs theta_prime in Theta'[theta]")
    d = theta.d
    if not 0.0 < kappa < 2.0 ** (-d):
        raise ConstructionError(f"kappa must lie in (0, 2^-d) = (0, {2.0 ** -d}), got {kappa}")
    constants = _resolve_constants(theta, theta_prime, constants, big_n)
    C1, a = constants.C1, constants.a
    shape = make_bump(d, nonnegative=False)
    diag = smoothness_diagnostics(theta)
    z = relation.z

    rate = (math.sqrt(math.log(n)) / n) ** z
    A = rate ** 2
    kappa1 = a ** d * kappa
    sigma = tuple(
        (C1 * L) ** (-1.0 / b) * A ** (1.0 / b - _inv(b * r)) * kappa1 ** _inv(b * r)
        for b, r, L in zip(theta.beta, theta.r, theta.L)
    )
    if any(s > 1.0 for s in sigma):
        raise ConstructionError(f"kappa too large: sigma = {sigma} exceeds 1")
    M_real = C1 ** diag.inv_beta * diag.bold_L * A ** (-diag.tau(1.0)) * kappa1 ** (1.0 - diag.inv_omega)
    M = int(math.floor(M_real))
    if M < 1:
        raise ConstructionError(f"M = {M_real:.4g} < 1 at n={n}: n too small for construction I")
    N = a * A ** (-1.0 / d)
    if N < constants.big_n:
        raise ConstructionError(f"N = {N:.4g} is below the base budget {constants.big_n}")
    base = mollified_uniform(d, N, a)
    lq_base, lq_bound = check_base_norm(base, theta.q)
    plateau = base.sup
    box = base.components[0].plateau_box()
    lattice = lattice_in_box(box, sigma, tuple(2.0 * s for s in sigma), M)

    extra = A ** 2 * math.prod(sigma) * M * shape.l2_norm ** 2
    sep = _separation(base.l2_sq(), extra)
    c_sep = constants.c_sep if constants.c_sep is not None else SEP_FACTOR * sep / (kappa * rate)
    psi_n = 0.5 * c_sep * kappa * rate
    family = PerturbationFamily(
        construction=Construction.FIRST, base=base, lattice=lattice, sigma=sigma, A=A, M=M,
        shape=shape, prior=PriorSpec(PriorKind.RADEMACHER), theta=theta,
        theta_prime=theta_prime, n=int(n), kappa=kappa, psi_n=psi_n, rate=rate,
        constants=FamilyConstants(C1=C1, a=a, big_n=constants.big_n, c_sep=c_sep),
        plateau=plateau, M_real=M_real,
        extras={"kappa1": kappa1, "N": N, "separation": sep, "c4": c_sep,
                "base_lq_norm": lq_base, "base_lq_bound": lq_bound},
    )
    logger.info("construction I at n=%d: A=%.4g M=%d sigma=%s psi_n=%.4g",
                n, A, M, sigma, psi_n)
    return family


def plateau_sub_box(t: float, sigma: Sequence[float], rho_l: Sequence[float], a: float,
                    M: int) -> Tuple[Tuple[float, ...], Tuple[Tuple[float, float], ...],
                                     Tuple[int, ...]]:
    """
    Side lengths h_l = t^(rho_l / rho), the bump box Pi and its capacity

    Raises:
        ConstructionError: sigma_l > h_l on some axis, or Pi holds fewer than M bumps
    """
    rho_total = math.fsum(rho_l)
    h = tuple(t ** (rl / rho_total) for rl in rho_l)
    for axis, (hl, sl) in enumerate(zip(h, sigma), start=1):
        if sl > hl:
            raise ConstructionError(f"sigma_{axis} = {sl:.4g} exceeds h_{axis} = {hl:.4g}")
    box = tuple((2.0 * hl / a, (2.0 / a + 2.0) * hl) for hl in h)
    capacity = tuple(int(math.floor(2.0 * hl / sl)) for hl, sl in zip(h, sigma))
    if math.prod(capacity) < M:
        raise ConstructionError(f"capacity {math.prod(capacity)} of Pi is below M={M}")
    return h, box, capacity


def build_family_II(theta: ClassParams, theta_prime: ClassParams, n: int, kappa: float,
                    delta: float, constants: Optional[FamilyConstants] = None,
                    big_n: float = BIG_N_DEFAULT) -> PerturbationFamily:
    """
    Second construction: shrunk composite base with the bumps in a sub-box of its plateau

    The bumps live in Pi = prod_l [2 h_l / a, (2/a + 2) h_l], inside the plateau
    of c t^(-1/q) f_{0,N,a}(x/h); the reflected component lives in the
    negative orthant.

    Raises:
        RegimeError: theta not in ThetaDoublePrime or theta_prime not in Theta''[theta]
        ConstructionError: sigma_l > h_l, capacity shortfall, t >= 1, kappa or delta out
            of range
    """
    if n < 3:
        raise ParameterError(f"n must satisfy n >= 3, got {n}")
    if classify(theta) is not Regime.THETA_DOUBLE_PRIME:
        raise RegimeError(
            f"construction II needs theta in ThetaDoublePrime, got {classify(theta).value}")
    relation = compare_thetas(theta, theta_prime)
    if not relation.in_theta_double_prime:
        raise RegimeError("construction II needs theta_prime in Theta''[theta]")
    if not delta > 0:
        raise ConstructionError(f"delta must be positive, got {delta}")
    d = theta.d
    constants = _resolve_constants(theta, theta_prime, constants, big_n)
    C1, a, N = constants.C1, constants.a, constants.big_n
    c_const = constants.c_const
    if c_const is None:
        c_const = C1 * min(min(theta.L), min(theta_prime.L))
    if not 0.0 < kappa <= 0.5 * theta.Q:
        raise ConstructionError(f"kappa must lie in (0, Q/2], got {kappa}")
    if not kappa < c_const * a ** d * N ** (-d):
        raise ConstructionError(
            f"kappa must be below c a^d N^-d = {c_const * a ** d * N ** (-d):.4g}, got {kappa}")
    shape = make_bump(d, nonnegative=False)
    diag = smoothness_diagnostics(theta)
    q = theta.q
    inv_q = _inv(q)
    tau_q = diag.tau(q)
    z = relation.z

    M_real = (delta * math.log(n) / n ** 2) ** (tau_q / (2.0 - 2.0 * inv_q - tau_q))
    M = int(math.floor(M_real))
    if M < 1:
        raise ConstructionError(f"M = {M_real:.4g} < 1 at n={n}")
    B = (kappa / C1) ** diag.inv_beta / diag.bold_L * M
    sigma = tuple(
        kappa ** (1.0 / b) * C1 ** (-1.0 / b) * L ** (-1.0 / b)
        * B ** ((1.0 / b) * (_inv(r) - inv_q) / tau_q)
        for b, r, L in zip(theta.beta, theta.r, theta.L)
    )
    A = kappa * B ** (-inv_q / tau_q)
    t = M * math.prod(sigma)
    if not t < 1.0:
        raise ConstructionError(f"t = M sigma = {t:.4g} must be below 1; increase n")
    h, box, capacity = plateau_sub_box(t, sigma, rho_components(theta, theta_prime), a, M)
    base = shrunk_composite(d, N, a, t, c_const, q, h)
    plateau = base.components[1].plateau_value
    lattice = lattice_in_box(box, sigma, sigma, M)

    rate = (math.sqrt(math.log(n)) / n) ** z
    extra = A ** 2 * math.prod(sigma) * M * shape.l2_norm ** 2
    sep = _separation(base.l2_sq(), extra)
    c_sep = constants.c_sep if constants.c_sep is not None else SEP_FACTOR * sep / rate
    psi_n = 0.5 * c_sep * rate
    family = PerturbationFamily(
        construction=Construction.SECOND, base=base, lattice=lattice, sigma=sigma, A=A, M=M,
        shape=shape, prior=PriorSpec(PriorKind.RADEMACHER), theta=theta,
        theta_prime=theta_prime, n=int(n), kappa=kappa, psi_n=psi_n, rate=rate,
        constants=FamilyConstants(C1=C1, a=a, big_n=N, c_const=c_const, c_sep=c_sep,
                                  delta=delta),
        plateau=plateau, M_real=M_real,
        extras={"B": B, "t": t, "h": h, "capacity": tuple(capacity), "separation": sep,
                "cross_term": 0.0, "c16": c_sep},
    )
    logger.info("construction II at n=%d: A=%.4g M=%d t=%.4g psi_n=%.4g", n, A, M, t, psi_n)
    return family


def draw_prior(prior: PriorSpec, M: int, rng: np.random.Generator, count: int = 1) -> np.ndarray:
    """count weight vectors of length M, shape (count, M)"""
    if prior.kind is PriorKind.RADEMACHER:
        return (2 * rng.integers(0, 2, size=(count, M), dtype=np.int8) - 1).astype(np.int8)
    return (rng.random((count, M)) < prior.p).astype(np.int8)


def build_family_synthetic(theta: ClassParams, theta_prime: ClassParams, n: int, M: int,
                           p: float = 0.5, constants: Optional[FamilyConstants] = None,
                           big_n: float = BIG_N_DEFAULT, seed: int = 0,
                           separation_draws: int = 256) -> PerturbationFamily:
    """
    Nonnegative-bump family for the general branch of the lower bound

    Equal-mass nonnegative bumps with lambda_m = 0.9 / (16 sqrt(M n)), so that
    256 S_M^2 M n = 0.81, and a BernoulliOnUnit(p) prior. psi_n is 0.495 times
    the smallest separation over seeded prior draws.

    Raises:
        ConstructionError: Sigma_M > 0.25 or the boxes do not fit the plateau
    """
    if n < 3:
        raise ParameterError(f"n must satisfy n >= 3, got {n}")
    if M < 1:
        raise ParameterError("M must satisfy M >= 1")
    if not 0.0 < p <= 1.0:
        raise ParameterError(f"p must lie in (0, 1], got {p}")
    d = theta.d
    constants = _resolve_constants(theta, theta_prime, constants, big_n, nonnegative=True)
    a, N = constants.a, constants.big_n
    shape = make_bump(d, nonnegative=True)
    base = mollified_uniform(d, N, a)
    plateau = base.sup
    box = base.components[0].plateau_box()
    per_axis = int(math.ceil(M ** (1.0 / d) - 1e-9))
    while per_axis ** d < M:
        per_axis += 1
    sigma = tuple((hi - lo) / (2.0 * per_axis) for lo, hi in box)
    lattice = lattice_in_box(box, sigma, tuple(2.0 * s for s in sigma), M)
    lam = SYNTHETIC_SAFETY / (16.0 * math.sqrt(M * n))
    A = lam / (math.prod(sigma) * shape.integral)
    if p * M * lam > 0.25:
        raise ConstructionError(f"Sigma_M = {p * M * lam:.4g} exceeds 0.25")
    z = exponent_general(theta)
    rate = (math.sqrt(math.log(n)) / n) ** z
    family = PerturbationFamily(
        construction=Construction.SYNTHETIC, base=base, lattice=lattice, sigma=sigma, A=A, M=M,
        shape=shape, prior=PriorSpec(PriorKind.BERNOULLI_ON_UNIT, p), theta=theta,
        theta_prime=theta_prime, n=int(n), kappa=float(M * math.prod(sigma) * A), psi_n=0.0,
        rate=rate, constants=FamilyConstants(C1=constants.C1, a=a, big_n=N),
        plateau=plateau, M_real=float(M), extras={"lambda": lam},
    )
    ys = draw_prior(family.prior, M, make_rng(seed), separation_draws)
    separations = functional_norms(family, ys)["separations"]
    family.psi_n = 0.5 * SEP_FACTOR * float(np.min(separations))
    family.extras["separation"] = float(np.min(separations))
    return family


def build_family(theta: ClassParams, theta_prime: ClassParams, n: int, kappa: float,
                 delta: float = 1.0, construction: Optional[Construction] = None,
                 constants: Optional[FamilyConstants] = None,
                 big_n: float = BIG_N_DEFAULT) -> PerturbationFamily:
    """Construction I or II chosen by the regime of theta unless forced"""
    if construction is None:
        regime = classify(theta)
        if regime is Regime.THETA_PRIME:
            construction = Construction.FIRST
        elif regime is Regime.THETA_DOUBLE_PRIME:
            construction = Construction.SECOND
        else:
            raise RegimeError(f"no explicit construction for regime {regime.value}")
    if construction is Construction.FIRST:
        return build_family_I(theta, theta_prime, n, kappa, constants, big_n)
    if construction is Construction.SECOND:
        return build_family_II(theta, theta_prime, n, kappa, delta, constants, big_n)
    raise ParameterError("synthetic families are built with build_family_synthetic")


def realised_exponent(family: PerturbationFamily, index: int = 2) -> float:
    """log prod_m cosh(index n S_m) / ln n"""
    x = index * family.n * family.S_value
    log_cosh = np.logaddexp(x, -x) - math.log(2.0)
    return family.M * float(log_cosh) / math.log(family.n)


def choose_kappa(theta: ClassParams, theta_prime: ClassParams, n: int, delta: float = 1.0,
                 constants: Optional[FamilyConstants] = None, big_n: float = BIG_N_DEFAULT,
                 max_steps: int = 40) -> float:
    """
    Largest kappa on a halving ladder whose family builds and keeps the
    realised chi-square exponent within half of alpha - z(theta)

    For construction II, t = M sigma grows as kappa shrinks, so the search
    stops at the first rung that fails to build after one that built.

    Raises:
        ConstructionError: when no rung of the ladder qualifies; for
            construction II the message reports the exponent at the largest
            buildable kappa
    """
    relation = compare_thetas(theta, theta_prime)
    target = 0.5 * relation.alpha_n_growth_exponent
    second = classify(theta) is Regime.THETA_DOUBLE_PRIME
    constants = _resolve_constants(theta, theta_prime, constants, big_n)
    if second:
        c_const = constants.c_const or constants.C1 * min(min(theta.L), min(theta_prime.L))
        top = min(0.5 * theta.Q, 0.5 * c_const * constants.a ** theta.d
                  * constants.big_n ** (-theta.d))
    else:
        top = 2.0 ** (-theta.d - 1)
    largest_built: Optional[Tuple[float, float]] = None
    for j in range(max_steps):
        kappa = top * 2.0 ** (-j)
        try:
            family = build_family(theta, theta_prime, n, kappa, delta, constants=constants,
                                  big_n=big_n)
        except ConstructionError as exc:
            logger.debug("kappa=%.4g rejected: %s", kappa, exc)
            if second and largest_built is not None:
                break
            continue
        exponent = realised_exponent(family)
        logger.debug("kappa=%.4g: realised exponent %.4g (target %.4g)", kappa, exponent, target)
        if exponent <= target:
            logger.info("chose kappa=%.6g at n=%d", kappa, n)
            return kappa
        if largest_built is None:
            largest_built = (kappa, exponent)
    if second:
        if largest_built is None:
            raise ConstructionError(
                f"construction II builds for no kappa in (0, {top:.4g}] at n={n}")
        raise ConstructionError(
            f"construction II at n={n}: the largest buildable kappa={largest_built[0]:.4g} "
            f"gives chi-square exponent {largest_built[1]:.4g} above the budget {target:.4g}, "
            f"and kappa cannot exceed {top:.4g}; smaller kappa pushes t = M sigma above 1")
    raise ConstructionError(f"no kappa on the ladder satisfies the budget at n={n}")


def _as_weights(family: PerturbationFamily, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    if y.shape[-1] != family.M:
        raise ParameterError(f"weight vector must have M={family.M} entries, got {y.shape[-1]}")
    return y


def eval_density(family: PerturbationFamily, y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """
    f_y at points x of shape (P, d)

    At most one bump term is nonzero at any point since the boxes are disjoint.
    """
    y = _as_weights(family, y)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[-1] != family.d:
        raise ParameterError(f"expected points of dimension {family.d}, got {x.shape[-1]}")
    rho = float(family.rho(y))
    values = (1.0 - rho) * family.base(x)
    index = family.lattice.locate(x)
    hit = index >= 0
    if np.any(hit):
        centers = family.lattice.center_of(index[hit])
        local = (x[hit] - centers) / np.asarray(family.sigma)
        values[hit] += y[index[hit]] * family.A * family.shape(local)
    return values


def integral(family: PerturbationFamily, y: np.ndarray) -> float:
    """Integral of f_y from the quadrature masses of the base and of one bump"""
    y = _as_weights(family, y)
    bump_mass = family.A * family.volume * family.shape.integral
    rho = float(family.rho(y))
    return (1.0 - rho) * family.base.integral() + bump_mass * float(np.sum(y, dtype=float))


def is_nonnegative(family: PerturbationFamily, y: np.ndarray) -> bool:
    """Exact check of f_y >= 0: the base is constant on each box and Lambda spans [min, 1]"""
    y = np.asarray(_as_weights(family, y), dtype=float)
    rho = float(family.rho(y))
    if rho > 1.0:
        return False
    low = 0.0 if family.shape.nonnegative else -1.0
    worst = np.minimum(y * family.A * low, y * family.A)
    # construction I puts the plateau exactly at A, so f_y touches zero up to rounding
    return bool((1.0 - rho) * family.plateau + float(np.min(worst))
                >= -NONNEG_SLACK * family.plateau)


def unit_cube_rule(shape: BumpShape) -> Tuple[np.ndarray, np.ndarray]:
    rules = [panel_rule(sorted(set(f.breakpoints) | {-0.5, 0.5}), 1.0 / 16.0, 8)
             for f in shape.factors]
    return tensor_rule(rules)


def functional_norms(family: PerturbationFamily, y_set: np.ndarray,
                     include_lq: bool = False) -> Dict[str, Any]:
    """
    ||f_y||_2 (and optionally ||f_y||_q) with the separation from ||f0||_2

    ||f_y||_2^2 = (1 - rho)^2 ||f0||^2 + 2 (1 - rho) f0|box sum_m y_m lambda_m
    + A^2 sigma ||Lambda||_2^2 sum_m y_m^2, exact because f0 is constant on the boxes.

    Returns:
        dict with l2_f0, l2 (per y), separations, separation (min), threshold = 2 psi_n,
        passed and, with include_lq, lq (per y)
    """
    y_set = np.atleast_2d(_as_weights(family, y_set)).astype(float)
    base_sq = family.base.l2_sq()
    rho = family.rho(y_set)
    sum_y = y_set.sum(axis=1)
    sum_y2 = (y_set ** 2).sum(axis=1)
    bump_sq = family.A ** 2 * family.volume * family.shape.l2_norm ** 2
    l2_sq = ((1.0 - rho) ** 2 * base_sq
             + 2.0 * (1.0 - rho) * family.plateau * family.lambda_bump * sum_y
             + bump_sq * sum_y2)
    l2 = np.sqrt(l2_sq)
    separations = np.abs(l2 - math.sqrt(base_sq))
    result = {
        "l2_f0": math.sqrt(base_sq),
        "l2": l2,
        "separations": separations,
        "separation": float(np.min(separations)),
        "threshold": 2.0 * family.psi_n,
        "passed": bool(np.all(separations > 2.0 * family.psi_n)),
        "cross_term": family.extras.get("cross_term", 0.0),
    }
    if include_lq:
        result["lq"] = np.array([_lq_norm(family, y) for y in y_set])
    return result


def _lq_norm(family: PerturbationFamily, y: np.ndarray) -> float:
    q = family.theta.q
    rho = float(family.rho(y))
    level = (1.0 - rho) * family.plateau
    if math.isinf(q):
        top = max((1.0 - rho) * family.base.sup, level + family.A * float(np.max(np.abs(y))))
        return top
    points, weights = unit_cube_rule(family.shape)
    lam = family.shape(points)
    values, counts = np.unique(y, return_counts=True)
    inside = math.fsum(
        count * float(np.dot(weights, np.abs(level + value * family.A * lam) ** q))
        for value, count in zip(values, counts)
    )
    outside = (1.0 - rho) ** q * (family.base.lq_norm(q) ** q
                                  - family.M * family.volume * family.plateau ** q)
    return (outside + family.volume * inside) ** (1.0 / q)


def sample_density(family: PerturbationFamily, y: np.ndarray, n: int,
                   seed: SeedLike) -> np.ndarray:
    """
    Exact draws from f_y by region decomposition

    The outside region has mass (1 - rho_y)(1 - M sigma f0|box) and is sampled
    from the base with box hits rejected; box m has mass
    (1 - rho_y) sigma f0|box + y_m lambda_m and is sampled by rejection
    against its envelope (1 - rho_y) f0|box + |y_m| A.

    Raises:
        NumericalFailure: if f_y is not verified nonnegative
    """
    y = _as_weights(family, y)
    if not is_nonnegative(family, y):
        raise NumericalFailure("f_y takes negative values; refusing to sample")
    rng = make_rng(seed)
    rho = float(family.rho(y))
    box_base = (1.0 - rho) * family.plateau * family.volume
    box_masses = box_base + np.asarray(y, dtype=float) * family.lambda_bump
    outside_mass = (1.0 - rho) * (1.0 - family.M * family.plateau * family.volume)
    total = outside_mass + float(np.sum(box_masses))
    n_out = int(rng.binomial(n, min(1.0, max(0.0, outside_mass / total))))
    parts = []

    if n_out:
        drawn = []
        need = n_out
        while need > 0:
            x = family.base.sample(rng, int(need * 1.1) + 16)
            x = x[family.lattice.locate(x) < 0][:need]
            drawn.append(x)
            need -= len(x)
        parts.append(np.concatenate(drawn))

    n_in = n - n_out
    if n_in:
        if family.lambda_bump == 0.0:
            boxes = rng.integers(0, family.M, size=n_in)
        else:
            boxes = rng.choice(family.M, size=n_in, p=box_masses / box_masses.sum())
        y_box = np.asarray(y, dtype=float)[boxes]
        envelope = (1.0 - rho) * family.plateau + np.abs(y_box) * family.A
        local = np.empty((n_in, family.d))
        pending = np.arange(n_in)
        while pending.size:
            v = rng.uniform(-0.5, 0.5, (pending.size, family.d))
            level = (1.0 - rho) * family.plateau + y_box[pending] * family.A * family.shape(v)
            accept = rng.uniform(0.0, 1.0, pending.size) * envelope[pending] < level
            local[pending[accept]] = v[accept]
            pending = pending[~accept]
        centers = family.lattice.center_of(boxes)
        parts.append(centers + local * np.asarray(family.sigma))

    x = np.concatenate(parts) if parts else np.empty((0, family.d))
    return x[rng.permutation(len(x))]


def box_masses_quadrature(family: PerturbationFamily, y: np.ndarray,
                          boxes: Sequence[int]) -> np.ndarray:
    """Integral of f_y over selected boxes by tensor quadrature with true base values"""
    y = _as_weights(family, y)
    rho = float(family.rho(y))
    points, weights = unit_cube_rule(family.shape)
    sigma = np.asarray(family.sigma)
    masses = []
    for m in boxes:
        center = family.lattice.center_of(np.array([m]))[0]
        x = center + points * sigma
        values = (1.0 - rho) * family.base(x) + float(y[m]) * family.A * family.shape(points)
        masses.append(family.volume * float(np.dot(weights, values)))
    return np.array(masses)


