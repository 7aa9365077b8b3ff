"""
Assumption checklist, chi-square budget, lower-bound certificate and the
two auxiliary inequality checks for perturbation families
"""

import logging
import math
from dataclasses import asdict
from typing import Any, Dict, Optional, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from nikolskii_lb.core.density_lab import (
    PerturbationFamily, draw_prior, eval_density, functional_norms, is_nonnegative,
    unit_cube_rule,
)
from nikolskii_lb.core.errors import ConditionViolated, NumericalFailure, ParameterError
from nikolskii_lb.core.models import (
    AssumptionChecklist, BudgetMode, Certificate, CheckEntry, ChiBudget, LambdaBranch,
    PriorKind, Provenance,
)
from nikolskii_lb.core.nikolskii import bump_sum_membership, combine, membership_check
from nikolskii_lb.core.param_space import compare_thetas
from nikolskii_lb.utils.rng import SeedLike, make_rng

logger = logging.getLogger(__name__)

ASSUMPTION_MASS = 230.0 / 231.0
KAPPA_FLOOR = 143.0 / 144.0
EXCEPTIONAL_MASS = 1.0 / 64.0
R_ZERO_LAMBDA = 1.0 / 8.0
R_GENERAL = math.sqrt(2.0) / 8.0
ASYMPTOTE = 107.0 / (144.0 * math.e)
SIGMA_M_LIMIT = 0.25
SPREAD_LIMIT = 1.0 / 256.0
RHO_WINDOW = 12.0

NAMED_CONSTANTS: Dict[str, Dict[str, Any]] = {
    "assumption_mass": {
        "value": ASSUMPTION_MASS, "expression": "230/231",
        "anchor": "prior mass of the class-membership and separation events"},
    "kappa_floor": {
        "value": KAPPA_FLOOR, "expression": "143/144",
        "anchor": "lower bound on kappa from the prior mass of the rho window"},
    "exceptional_mass": {
        "value": EXCEPTIONAL_MASS, "expression": "1/64",
        "anchor": "1/144 + 2/231 bound on the exceptional prior mass"},
    "r_zero_lambda": {
        "value": R_ZERO_LAMBDA, "expression": "1/8",
        "anchor": "remainder term when every bump integrates to zero"},
    "r_general": {
        "value": R_GENERAL, "expression": "sqrt(2)/8",
        "anchor": "remainder bound for nonnegative bumps with weights in [0, 1]"},
    "asymptote": {
        "value": ASYMPTOTE, "expression": "107/(144e)",
        "anchor": "liminf of the normalised two-class combined risk"},
}

ENUM_LIMIT = 20
FULL_COLLAPSE_LIMIT = 2_000_000
COLLAPSE_WINDOW_SD = 40.0
ENUM_CHUNK = 1 << 16
LEMMA_ENUM_LIMIT = 16


def _uniform_value(S: np.ndarray) -> Optional[float]:
    """The common value of S when all entries agree"""
    S = np.asarray(S, dtype=float)
    if S.size == 0:
        return None
    if S.ndim == 1 and S.strides[0] == 0:
        return float(S[0])
    return float(S[0]) if np.all(S == S[0]) else None


def compute_Sm(family: PerturbationFamily, method: str = "closed-form",
               boxes: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    S_m = integral of Lambda_m^2 / f0

    Args:
        family: Perturbation family
        method: "closed-form" (base constant on every box, one value shared
            by all m, returned as a read-only broadcast view) or "quadrature"
            (tensor Gauss-Legendre on each selected box with true base values)
        boxes: Box indices for the quadrature path (default: all when
            M <= 1024, else the first 16)

    Returns:
        Array of S_m, of length M for the closed form, len(boxes) otherwise

    Raises:
        NumericalFailure: if the base vanishes on a box
    """
    if method == "closed-form":
        if not family.plateau > 0:
            raise NumericalFailure("base density vanishes on the bump boxes")
        return np.broadcast_to(np.float64(family.S_value), (family.M,))
    if method != "quadrature":
        raise ParameterError(f"unknown S_m method {method!r}")
    if boxes is None:
        boxes = range(family.M) if family.M <= 1024 else range(16)
    points, weights = unit_cube_rule(family.shape)
    bump_sq = (family.A * family.shape(points)) ** 2
    sigma = np.asarray(family.sigma)
    values = []
    for m in boxes:
        center = family.lattice.center_of(np.array([m]))[0]
        base = family.base(center + points * sigma)
        if np.any(base <= 0.0):
            raise NumericalFailure(f"base density vanishes on box {m}")
        values.append(family.volume * float(np.dot(weights, bump_sq / base)))
    return np.array(values)


def log_pair_mgf(prior_kind: PriorKind, s: np.ndarray, p: float = 0.5) -> np.ndarray:
    """log E exp(s u v) for independent prior draws u, v"""
    s = np.asarray(s, dtype=float)
    if prior_kind is PriorKind.RADEMACHER:
        return np.logaddexp(s, -s) - math.log(2.0)
    return np.log1p(p * p * np.expm1(s))


def cosh_product(S: np.ndarray, n: int, index: int = 1,
                 prior_kind: PriorKind = PriorKind.RADEMACHER, p: float = 0.5) -> float:
    """log of prod_m E exp(index n S_m u v); for Rademacher weights prod_m cosh(index n S_m)"""
    common = _uniform_value(S)
    if common is not None:
        return float(S.size * log_pair_mgf(prior_kind, index * n * common, p))
    return math.fsum(log_pair_mgf(prior_kind, index * n * np.asarray(S, dtype=float), p))


def exact_enum(S: np.ndarray, n: int) -> float:
    """
    log of 2^-M sum over w in {-1, 1}^M of (1 + sum_m S_m w_m)^n

    Raises:
        NumericalFailure: when M > 20 and the S_m differ
    """
    S = np.asarray(S, dtype=float)
    common = _uniform_value(S)
    if common is not None:
        return exact_enum_equal(common, S.size, n)
    M = S.size
    if M > ENUM_LIMIT:
        raise NumericalFailure(f"exact enumeration needs M <= {ENUM_LIMIT}, got {M}")
    bits = np.arange(M)
    logs, signs = [], []
    for start in range(0, 1 << M, ENUM_CHUNK):
        codes = np.arange(start, min(start + ENUM_CHUNK, 1 << M))
        w = ((codes[:, None] >> bits) & 1) * 2.0 - 1.0
        base = 1.0 + w @ S
        with np.errstate(divide="ignore"):
            logs.append(n * np.log(np.abs(base)))
        signs.append(np.sign(base) ** n)
    value, sign = logsumexp(np.concatenate(logs), b=np.concatenate(signs), return_sign=True)
    if sign < 0:
        raise NumericalFailure("enumerated second moment is negative")
    return float(value) - M * math.log(2.0)


def exact_enum_equal(s: float, M: int, n: int) -> float:
    """log of sum_k binom(M, k) 2^-M (1 + s (2k - M))^n, windowed for very large M"""
    if M <= FULL_COLLAPSE_LIMIT:
        k = np.arange(M + 1, dtype=float)
    else:
        tilt = min(0.5 * n * abs(s) * M, 0.5 * M)
        half = COLLAPSE_WINDOW_SD * math.sqrt(M)
        lo = max(0.0, math.floor(0.5 * M + math.copysign(tilt, s) - half))
        hi = min(float(M), math.ceil(0.5 * M + math.copysign(tilt, s) + half))
        k = np.arange(lo, hi + 1.0)
    base = 1.0 + s * (2.0 * k - M)
    log_binom = gammaln(M + 1.0) - gammaln(k + 1.0) - gammaln(M - k + 1.0) - M * math.log(2.0)
    with np.errstate(divide="ignore"):
        log_terms = log_binom + n * np.log(np.abs(base))
    value, sign = logsumexp(log_terms, b=np.sign(base) ** n, return_sign=True)
    if sign < 0:
        raise NumericalFailure("collapsed second moment is negative")
    return float(value)


def _alpha_sq(family: PerturbationFamily, n: int, c: Optional[float]) -> float:
    relation = compare_thetas(family.theta, family.theta_prime, n=n)
    if c is not None:
        relation = compare_thetas(family.theta, family.theta_prime, alpha=c * relation.z_prime,
                                  n=n)
    return relation.alpha_n ** 2


def _safe_exp(log_value: float) -> float:
    return math.exp(log_value) if log_value < 709.0 else math.inf


def _binomial_weights(M: int, p: float) -> np.ndarray:
    k = np.arange(M + 1, dtype=float)
    if p >= 1.0:
        return (k == M).astype(float)
    with np.errstate(divide="ignore"):
        logw = (gammaln(M + 1.0) - gammaln(k + 1.0) - gammaln(M - k + 1.0)
                + k * math.log(p) + (M - k) * np.log1p(-p))
    return np.exp(logw - logsumexp(logw))


def upsilon_moment(family: PerturbationFamily, J: int, b: float) -> float:
    """E (1 + b Upsilon_y^2)^J for Upsilon_y = sum_m lambda_m (y_m - p), exact over Binomial(M, p)"""
    p = family.prior.p
    k = np.arange(family.M + 1, dtype=float)
    chi = family.lambda_bump * (k - family.M * p)
    weights = _binomial_weights(family.M, p)
    return float(np.dot(weights, np.exp(J * np.log1p(b * chi ** 2))))


def chi_budget(family: PerturbationFamily, n: Optional[int] = None, c: Optional[float] = None,
               mode: BudgetMode = BudgetMode.EXACT_ENUM, index: int = 1,
               reps: int = 20_000, seed: SeedLike = 0) -> ChiBudget:
    """
    Chi-square type budget of the mixture likelihood ratio

    Args:
        family: Perturbation family
        n: Sample size (defaults to the family's n)
        c: Exponent multiplier for alpha_n; the midpoint of (z, z') by default
        mode: CoshProduct, ExactEnum (Rademacher prior) or GeneralBranchBound
            (BernoulliOnUnit prior)
        index: Multiplier of n S_m inside the cosh product (1 or 2)
        reps: Monte-Carlo draws for the Upsilon-moment cross-check
        seed: Seed for the cross-check

    Returns:
        ChiBudget with value, per_m summary and ratio = value / alpha_n^2; in
        GeneralBranchBound mode per_m records whether the 2bJD_K <= 1 premise held

    Raises:
        ConditionViolated: prior does not match the mode
        NumericalFailure: M too large for enumeration with unequal S_m
    """
    n = family.n if n is None else int(n)
    if index not in (1, 2):
        raise ParameterError("index must be 1 or 2")
    S = compute_Sm(family)
    alpha_sq = _alpha_sq(family, n, c)
    rademacher = family.prior.kind is PriorKind.RADEMACHER
    stderr = None
    extra: Dict[str, float] = {}
    provenance = Provenance.CLOSED_FORM
    conservative = False

    if mode is BudgetMode.COSH_PRODUCT:
        value = _safe_exp(cosh_product(S, n, index, family.prior.kind, family.prior.p))
        conservative = True
    elif mode is BudgetMode.EXACT_ENUM:
        if not rademacher:
            raise ConditionViolated("ExactEnum needs a Rademacher prior")
        value = _safe_exp(exact_enum(S, n))
    elif mode is BudgetMode.GENERAL_BRANCH_BOUND:
        if rademacher:
            raise ConditionViolated("GeneralBranchBound needs a BernoulliOnUnit prior")
        b = 4.0 * (math.e + 1.0)
        product = _safe_exp(cosh_product(S, n, 2, family.prior.kind, family.prior.p))
        exact = upsilon_moment(family, n, b)
        lemma = check_lemma_wjk(n, family.M, b, 1.0,
                                np.full(1, family.lambda_bump), reps=reps, seed=seed,
                                zeta_p=family.prior.p, equal_weights=True, enforce=False)
        if not lemma["premise"]:
            logger.warning("2bJD_K = %.4g exceeds 1 at n=%d: W <= 2 is not guaranteed, "
                           "the exact Upsilon moment is used", lemma["premise_value"], n)
        value = 0.5 * product + 0.5 * exact
        stderr = 0.5 * lemma["stderr"] if lemma["stderr"] is not None else None
        extra = {"product_term": product, "upsilon_moment": exact,
                 "upsilon_moment_mc": lemma["W_hat"],
                 "lemma_premise": float(lemma["premise"]),
                 "lemma_premise_value": lemma["premise_value"], "lemma_bound": 2.0}
        conservative = True
    else:
        raise ParameterError(f"unknown budget mode {mode!r}")

    common = _uniform_value(S)
    per_m = {"count": float(S.size),
             "min": float(common if common is not None else np.min(S)),
             "max": float(common if common is not None else np.max(S)),
             "mean": float(common if common is not None else np.mean(S))}
    per_m.update(extra)
    budget = ChiBudget(mode=mode, value=value, per_m=per_m, n=n, alpha_sq=alpha_sq,
                       ratio=value / alpha_sq, index=index, provenance=provenance,
                       stderr=stderr, conservative=conservative)
    logger.info("chi budget %s at n=%d: %.6g (ratio %.4g)", mode.value, n, value, budget.ratio)
    return budget


def _entry(name: str, passed: bool, value: float, threshold: float, provenance: Provenance,
           stderr: Optional[float] = None, **detail: Any) -> CheckEntry:
    return CheckEntry(name=name, passed=bool(passed), value=float(value),
                      threshold=float(threshold), provenance=provenance, stderr=stderr,
                      detail=detail)


def branch_of(family: PerturbationFamily) -> LambdaBranch:
    if family.prior.kind is PriorKind.RADEMACHER and family.lambda_bump == 0.0:
        return LambdaBranch.ZERO_LAMBDA
    return LambdaBranch.NONNEG_UNIT


def verify_assumptions(family: PerturbationFamily, n: Optional[int] = None, y_mc: int = 200,
                       seed: SeedLike = 0, tol: float = 1e-2) -> AssumptionChecklist:
    """
    Evaluate the five assumptions of the two-class lower bound on a family

    Class membership combines the half-radius membership of the base with the
    half-radius membership of any bump sum with |y_m| <= 1 (triangle
    inequality), then requires f_y >= 0 for each prior draw.

    Args:
        family: Perturbation family
        n: Sample size for the spread condition (defaults to the family's n)
        y_mc: Number of prior draws, at least 100
        seed: Seed for the prior draws
        tol: Relative slack of the membership comparisons

    Returns:
        AssumptionChecklist; failures are entries, never exceptions
    """
    if y_mc < 100:
        raise ParameterError("y_mc must satisfy y_mc >= 100")
    n = family.n if n is None else int(n)
    lattice = family.lattice

    gap = min(s / w for s, w in zip(lattice.spacing, family.sigma))
    a1 = _entry("a1_disjoint_supports", gap >= 1.0, gap, 1.0, Provenance.CLOSED_FORM,
                spacing=list(lattice.spacing), sigma=list(family.sigma))

    extent = lattice.box_extent()
    corners = np.array(np.meshgrid(*extent, indexing="ij")).reshape(family.d, -1).T
    corner_values = family.base(corners)
    constant = bool(np.allclose(corner_values, family.plateau, rtol=1e-9, atol=0.0))
    a2 = _entry("a2_positive_base", float(np.min(corner_values)) > 0.0 and constant,
                float(np.min(corner_values)), 0.0, Provenance.QUADRATURE,
                plateau=family.plateau, constant_on_boxes=constant)

    base_half = membership_check(family.base.separable(), family.theta, scale=0.5, tol=tol,
                                 check_lq=True)
    bumps_half = bump_sum_membership(family.shape, family.A, family.sigma, family.M,
                                     lattice.spacing, lattice.counts, family.theta, scale=0.5,
                                     tol=tol)
    full = combine(base_half, bumps_half)
    base_alt = membership_check(family.base.separable(), family.theta_prime, scale=1.0,
                                tol=tol, check_lq=True)
    rng = make_rng(seed)
    ys = draw_prior(family.prior, family.M, rng, y_mc)
    nonneg = np.array([is_nonnegative(family, y) for y in ys])
    member = nonneg & full.verdict
    frac3 = float(np.mean(member))
    a3 = _entry("a3_class_mass", frac3 >= ASSUMPTION_MASS and base_alt.verdict, frac3,
                ASSUMPTION_MASS, Provenance.MONTE_CARLO,
                stderr=math.sqrt(frac3 * (1.0 - frac3) / y_mc),
                membership=asdict(full), base_in_theta_prime=base_alt.verdict,
                nonnegative_fraction=float(np.mean(nonneg)))

    norms = functional_norms(family, ys)
    separated = norms["separations"] > 2.0 * family.psi_n
    frac4 = float(np.mean(separated))
    a4 = _entry("a4_separation_mass", frac4 >= ASSUMPTION_MASS, frac4, ASSUMPTION_MASS,
                Provenance.MONTE_CARLO, stderr=math.sqrt(frac4 * (1.0 - frac4) / y_mc),
                min_separation=norms["separation"], threshold_2psi=2.0 * family.psi_n)

    branch = branch_of(family)
    if branch is LambdaBranch.ZERO_LAMBDA:
        a5 = _entry("a5_branch", True, 0.0, 0.0, Provenance.CLOSED_FORM,
                    branch=branch.value, Sigma_M=0.0, frakS_M=0.0)
    else:
        spread = family.frakS_M ** 2 * family.M * n
        in_unit = family.prior.support[0] >= 0.0 and family.prior.support[1] <= 1.0
        passed = family.Sigma_M <= SIGMA_M_LIMIT and spread <= SPREAD_LIMIT and in_unit
        a5 = _entry("a5_branch", passed, 256.0 * spread, 1.0, Provenance.CLOSED_FORM,
                    branch=branch.value, Sigma_M=family.Sigma_M, frakS_M=family.frakS_M,
                    Sigma_M_limit=SIGMA_M_LIMIT)

    checklist = AssumptionChecklist(a1_disjoint_supports=a1, a2_positive_base=a2,
                                    a3_class_mass=a3, a4_separation_mass=a4, a5_branch=a5,
                                    branch=branch, n=n, y_mc=y_mc)
    logger.info("assumptions at n=%d: %s", n,
                ", ".join(f"{e.name}={'pass' if e.passed else 'FAIL'}" for e in checklist.entries))
    return checklist


def general_branch_moments(family: PerturbationFamily, n: Optional[int] = None) -> Dict[str, Any]:
    """
    kappa = E I_y and E I_y^2 with I_y = J_y^n,
    J_y = (1 - Sigma_M) exp(-Upsilon_y / (1 - Sigma_M)) + rho_y

    With equal lambda_m the sum of the weights is Binomial(M, p), so both
    moments are exact finite sums. In the zero-lambda branch I_y = 1.
    """
    n = family.n if n is None else int(n)
    if branch_of(family) is LambdaBranch.ZERO_LAMBDA:
        return {"kappa": 1.0, "second_moment": 1.0, "R_term": R_ZERO_LAMBDA,
                "R_bound": R_ZERO_LAMBDA, "kappa_ok": True, "rho_window_mass": 1.0}
    p = family.prior.p
    Sigma = family.Sigma_M
    k = np.arange(family.M + 1, dtype=float)
    rho_y = family.lambda_bump * k
    upsilon = rho_y - Sigma
    log_j = np.log((1.0 - Sigma) * np.exp(-upsilon / (1.0 - Sigma)) + rho_y)
    weights = _binomial_weights(family.M, p)
    kappa = float(np.dot(weights, np.exp(n * log_j)))
    second = float(np.dot(weights, np.exp(2.0 * n * log_j)))
    window = float(np.sum(weights[np.abs(upsilon) <= RHO_WINDOW * family.frakD_M]))
    return {
        "kappa": kappa,
        "second_moment": second,
        "R_term": 0.125 * math.sqrt(second),
        "R_bound": R_GENERAL,
        "kappa_ok": kappa >= KAPPA_FLOOR,
        "rho_window_mass": window,
    }


def certificate_bound(kappa: float, ez2: float, alpha_sq: float,
                      R_term: float) -> Dict[str, float]:
    """
    ez_min = (kappa + a^2 - sqrt(ez2 - 2 a^2 kappa + a^4)) / 2 and
    final = max(0, (ez_min - R) / e), evaluated in the cancellation-free form
    (kappa^2 + 4 kappa a^2 - ez2) / (2 (kappa + a^2 + sqrt(...)))

    Raises:
        NumericalFailure: if ez2 < kappa^2 beyond rounding
    """
    if ez2 < kappa * kappa * (1.0 - 1e-12):
        raise NumericalFailure(f"ez2 = {ez2} is below kappa^2 = {kappa * kappa}")
    if math.isinf(ez2):
        ez_min = -math.inf
    elif math.isinf(alpha_sq):
        ez_min = kappa
    else:
        radicand = (alpha_sq - kappa) ** 2 + max(ez2 - kappa * kappa, 0.0)
        root = math.sqrt(radicand)
        ez_min = (kappa * kappa + 4.0 * kappa * alpha_sq - ez2) / (2.0 * (kappa + alpha_sq + root))
    final = max(0.0, (ez_min - R_term) / math.e)
    return {"ez_min_bound": ez_min, "final": final}


def certificate(family: PerturbationFamily, n: Optional[int] = None, c: Optional[float] = None,
                budget: Optional[ChiBudget] = None) -> Certificate:
    """
    Numeric lower bound on the normalised two-class combined risk

    The zero-lambda branch uses kappa = 1 and R = 1/8 with the exact second
    moment (ExactEnum). The nonnegative branch uses the exact kappa and R of
    general_branch_moments with the GeneralBranchBound upper estimate of the
    second moment, which makes the certificate conservative.
    """
    n = family.n if n is None else int(n)
    branch = branch_of(family)
    if budget is None:
        mode = (BudgetMode.EXACT_ENUM if branch is LambdaBranch.ZERO_LAMBDA
                else BudgetMode.GENERAL_BRANCH_BOUND)
        budget = chi_budget(family, n, c, mode)
    moments = general_branch_moments(family, n)
    kappa, R_term = moments["kappa"], moments["R_term"]
    bound = certificate_bound(kappa, budget.value, budget.alpha_sq, R_term)
    result = Certificate(
        kappa=kappa, ez2=budget.value, alpha_sq=budget.alpha_sq, R_term=R_term,
        ez_min_bound=bound["ez_min_bound"], final=bound["final"], asymptote=ASYMPTOTE,
        branch=branch, budget_mode=budget.mode, conservative=budget.conservative,
        provenance={
            "kappa": Provenance.CLOSED_FORM.value,
            "ez2": budget.provenance.value,
            "alpha_sq": Provenance.CLOSED_FORM.value,
            "R_term": Provenance.CLOSED_FORM.value,
            "constants": Provenance.ESTIMATED.value,
        },
    )
    logger.info("certificate at n=%d: final=%.6g (asymptote %.6g)", n, result.final, ASYMPTOTE)
    return result


def _sandwich_grid(family: PerturbationFamily, grid: int) -> np.ndarray:
    per_axis = max(2, int(round(grid ** (1.0 / family.d))))
    axes = []
    for lo, hi in family.lattice.box_extent():
        pad = 0.05 * (hi - lo)
        axes.append(np.linspace(lo - pad, hi + pad, per_axis))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def check_lemma_sandwich(family: PerturbationFamily, y_mc: int = 100,
                         grid: Any = 10_000, seed: SeedLike = 0,
                         n: Optional[int] = None) -> Dict[str, Any]:
    """
    Pointwise check of f*_y >= f_y >= exp(-1/n) f*_y on a grid

    f*_y = (1 - Sigma_M) exp(-(rho_y - Sigma_M)/(1 - Sigma_M)) f0 + sum_m y_m Lambda_m.
    Only draws with |rho_y - Sigma_M| <= 12 D_M are checked.

    Args:
        family: Perturbation family
        y_mc: Number of prior draws
        grid: Total number of grid points, or an explicit (P, d) array
        seed: Seed for the prior draws
        n: Sample size in the lower factor (defaults to the family's n)

    Returns:
        dict with checked, excluded, worst upper and lower margins, equality flag and pass
    """
    n = family.n if n is None else int(n)
    points = (np.asarray(grid, dtype=float) if isinstance(grid, np.ndarray)
              else _sandwich_grid(family, int(grid)))
    ys = draw_prior(family.prior, family.M, make_rng(seed), y_mc)
    Sigma = family.Sigma_M
    base = family.base(points)
    scale = float(np.max(np.abs(base))) or 1.0
    upper, lower, equal = math.inf, math.inf, True
    checked = 0
    for y in ys:
        rho_y = float(family.rho(y))
        if abs(rho_y - Sigma) > RHO_WINDOW * family.frakD_M:
            continue
        checked += 1
        f_y = eval_density(family, y, points)
        bumps = f_y - (1.0 - rho_y) * base
        f_star = (1.0 - Sigma) * math.exp(-(rho_y - Sigma) / (1.0 - Sigma)) * base + bumps
        upper = min(upper, float(np.min(f_star - f_y)))
        lower = min(lower, float(np.min(f_y - math.exp(-1.0 / n) * f_star)))
        equal = equal and bool(np.allclose(f_star, f_y, rtol=1e-12, atol=1e-15 * scale))
    slack = -1e-12 * scale
    return {
        "checked": checked,
        "excluded": y_mc - checked,
        "grid_points": int(points.shape[0]),
        "worst_upper_margin": upper,
        "worst_lower_margin": lower,
        "exact_equality": equal and checked > 0,
        "branch": branch_of(family).value,
        "pass": checked > 0 and upper >= slack and lower >= slack,
    }


def check_lemma_wjk(J: int, K: int, b: float, T: float, a_vec: Any, reps: int = 100_000,
                    seed: SeedLike = 0, zeta_p: Optional[float] = None,
                    equal_weights: bool = False, enforce: bool = True) -> Dict[str, Any]:
    """
    Monte-Carlo estimate of W_{J,K}(b) = E (1 + b chi_K^2)^J

    chi_K = sum_k a_k (zeta_k - E zeta_k) with Rademacher zeta (or
    Bernoulli(zeta_p) on {0, 1} when given). The bound W <= 2 holds under
    2 b J D_K <= 1 with D_K = 5 T^2 A_K^2 K, A_K = max |a_k|.

    Args:
        J, K: Power and number of summands
        b: Nonnegative multiplier
        T: Bound on |zeta_k|
        a_vec: Coefficients (length K, or one value with equal_weights)
        reps: Monte-Carlo draws
        seed: Seed
        zeta_p: Bernoulli parameter; Rademacher when None
        equal_weights: Broadcast a single coefficient to all K summands
        enforce: Raise instead of reporting when the premise fails

    Returns:
        dict with W_hat, stderr, W_exact (when computable), D_K, premise and pass

    Raises:
        ConditionViolated: premise fails and enforce is set
    """
    if J < 1 or K < 1:
        raise ParameterError("J and K must be positive")
    if b < 0:
        raise ParameterError("b must be nonnegative")
    a = np.asarray(a_vec, dtype=float).ravel()
    if not equal_weights and a.size != K:
        raise ParameterError(f"a_vec must have K={K} entries, got {a.size}")
    equal_weights = equal_weights or bool(np.all(a == a[0]))
    a_max = float(np.max(np.abs(a)))
    D_K = 5.0 * T * T * a_max * a_max * K
    premise = 2.0 * b * J * D_K <= 1.0 + 1e-12
    if not premise and enforce:
        raise ConditionViolated(f"2bJD_K = {2.0 * b * J * D_K:.4g} exceeds 1")

    rng = make_rng(seed)
    p = 0.5 if zeta_p is None else zeta_p
    mean = 0.0 if zeta_p is None else p
    if equal_weights:
        counts = rng.binomial(K, p, size=reps).astype(float)
        sums = 2.0 * counts - K if zeta_p is None else counts - K * mean
        chi = float(a[0]) * sums
    else:
        chi = np.empty(reps)
        chunk = max(1, ENUM_CHUNK // max(K, 1))
        for start in range(0, reps, chunk):
            size = min(chunk, reps - start)
            if zeta_p is None:
                zeta = rng.integers(0, 2, size=(size, K)) * 2.0 - 1.0
            else:
                zeta = (rng.random((size, K)) < p).astype(float)
            chi[start:start + size] = (zeta - mean) @ a
    values = np.exp(J * np.log1p(b * chi ** 2))
    w_hat = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(reps)) if reps > 1 else None

    w_exact = None
    if equal_weights:
        k = np.arange(K + 1, dtype=float)
        level = 2.0 * k - K if zeta_p is None else k - K * mean
        weights = _binomial_weights(K, p)
        w_exact = float(np.dot(weights, np.exp(J * np.log1p(b * (a_max * level) ** 2))))
    elif K <= LEMMA_ENUM_LIMIT:
        bits = np.arange(K)
        codes = np.arange(1 << K)
        z = ((codes[:, None] >> bits) & 1).astype(float)
        zeta = 2.0 * z - 1.0 if zeta_p is None else z
        prob = np.prod(np.where(z == 1.0, p, 1.0 - p), axis=1)
        w_exact = float(np.dot(prob, np.exp(J * np.log1p(b * ((zeta - mean) @ a) ** 2))))

    passed = premise and w_hat + 3.0 * (stderr or 0.0) <= 2.0
    logger.debug("W(J=%d, K=%d, b=%.4g) = %.6g +- %s", J, K, b, w_hat, stderr)
    return {
        "W_hat": w_hat,
        "stderr": stderr,
        "W_exact": w_exact,
        "D_K": D_K,
        "premise_value": 2.0 * b * J * D_K,
        "premise": premise,
        "pass": passed,
    }
