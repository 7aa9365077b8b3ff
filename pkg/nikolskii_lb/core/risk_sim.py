"""
Monte-Carlo risk of a kernel U-statistic estimator of ||f||_2 on the two
classes of a perturbation family
"""

import logging
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from nikolskii_lb.core.density_lab import (
    PerturbationFamily, build_family, choose_kappa, draw_prior,
    functional_norms, sample_density,
)
from nikolskii_lb.core.errors import ParameterError
from nikolskii_lb.core.lb_verifier import certificate
from nikolskii_lb.core.models import (
    ClassParams, EstimatorSpec, FamilyConstants, KernelName, PriorKind, RiskRow, RiskTable,
)
from nikolskii_lb.core.param_space import compare_thetas
from nikolskii_lb.utils.rng import stream

logger = logging.getLogger(__name__)

BATCHES = 10
BASE_ID = "f0"


def _biweight(t: np.ndarray) -> np.ndarray:
    return np.where(np.abs(t) <= 1.0, 15.0 / 16.0 * (1.0 - t * t) ** 2, 0.0)


def _epanechnikov(t: np.ndarray) -> np.ndarray:
    return np.where(np.abs(t) <= 1.0, 0.75 * (1.0 - t * t), 0.0)


def _biweight4(t: np.ndarray) -> np.ndarray:
    # fourth order, negative near |t| = 0.7
    t2 = t * t
    return np.where(np.abs(t) <= 1.0, 15.0 / 32.0 * (3.0 - 10.0 * t2 + 7.0 * t2 * t2), 0.0)


KERNELS: Dict[KernelName, Callable[[np.ndarray], np.ndarray]] = {
    KernelName.BIWEIGHT: _biweight,
    KernelName.EPANECHNIKOV: _epanechnikov,
    KernelName.BIWEIGHT4: _biweight4,
}


def kernel_function(name: KernelName) -> Callable[[np.ndarray], np.ndarray]:
    try:
        return KERNELS[name]
    except KeyError:
        raise ParameterError(f"unknown kernel {name!r}") from None


def estimate_l2(sample: np.ndarray, spec: EstimatorSpec) -> float:
    """
    U-statistic estimate of ||f||_2

    theta_hat = (n(n-1))^-1 sum_{i != j} h^-d K((X_i - X_j)/h) with a product
    kernel supported in [-1, 1]^d; only pairs within one bandwidth per axis
    contribute, so they are found with a k-d tree in the Chebyshev metric.

    Args:
        sample: Points of shape (n, d)
        spec: Bandwidth vector, kernel and clamp flag

    Returns:
        sqrt(max(theta_hat, 0)) when clamping, else sign(theta_hat) sqrt(|theta_hat|)

    Raises:
        ParameterError: n < 2 or bandwidth dimension mismatch
    """
    x = np.atleast_2d(np.asarray(sample, dtype=float))
    n, d = x.shape
    if n < 2:
        raise ParameterError("estimate_l2 needs n >= 2")
    h = np.asarray(spec.h, dtype=float)
    if h.size == 1:
        h = np.full(d, h[0])
    if h.size != d:
        raise ParameterError(f"bandwidth has {h.size} entries, sample has d={d}")
    scaled = x / h
    pairs = cKDTree(scaled).query_pairs(r=1.0, p=np.inf, output_type="ndarray")
    kernel = kernel_function(spec.kernel)
    if len(pairs):
        diff = scaled[pairs[:, 0]] - scaled[pairs[:, 1]]
        total = float(np.sum(np.prod(kernel(diff), axis=1)))
    else:
        total = 0.0
    theta_hat = 2.0 * total / (n * (n - 1.0) * float(np.prod(h)))
    if spec.clamp:
        return math.sqrt(max(theta_hat, 0.0))
    return math.copysign(math.sqrt(abs(theta_hat)), theta_hat)


def batch_stderr(values: Sequence[float], batches: int = BATCHES) -> Optional[float]:
    """Standard error of the mean by batch means; None for fewer than two values"""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return None
    count = min(batches, values.size)
    means = np.array([math.fsum(chunk) / chunk.size for chunk in np.array_split(values, count)])
    return float(np.std(means, ddof=1) / math.sqrt(count))


def empirical_risk(family: PerturbationFamily, y: Optional[np.ndarray], n: int, reps: int,
                   spec: EstimatorSpec, seed: int, density_id: Optional[str] = None,
                   stream_key: int = 0) -> RiskRow:
    """
    Mean squared error of estimate_l2 under f_y (or the base when y is None)

    Replication r draws from stream (seed, stream_key, r), so rows are
    reproducible and independent of evaluation order.

    Args:
        family: Perturbation family
        y: Bump weights, or None for the base density
        n: Sample size per replication
        reps: Number of replications
        spec: Estimator
        seed: Master seed
        density_id: Row label
        stream_key: Distinguishes densities sharing a seed

    Returns:
        RiskRow with mse, batch-means stderr (None when reps == 1) and the truth
    """
    if reps < 1:
        raise ParameterError("reps must satisfy reps >= 1")
    if y is None:
        truth = math.sqrt(family.base.l2_sq())
    else:
        truth = float(functional_norms(family, y)["l2"][0])
    errors = []
    for r in range(reps):
        rng = stream(seed, stream_key, r)
        if y is None:
            x = family.base.sample(rng, n)
        else:
            x = sample_density(family, y, n, rng)
        errors.append((estimate_l2(x, spec) - truth) ** 2)
    mse = math.fsum(errors) / reps
    row = RiskRow(density_id=density_id or (BASE_ID if y is None else "f_y"),
                  estimator=spec.label, n=int(n), reps=reps, mse=mse,
                  stderr=batch_stderr(errors), truth=truth)
    logger.debug("risk %s / %s at n=%d: mse=%.4g", row.density_id, row.estimator, n, mse)
    return row


def default_specs(family: PerturbationFamily, bandwidths: Optional[Sequence[float]] = None,
                  kernel: KernelName = KernelName.BIWEIGHT, count: int = 6) -> List[EstimatorSpec]:
    """Isotropic specs over the given bandwidths, or log-spaced from sigma/4 to the base width"""
    if bandwidths is None:
        lo = 0.25 * min(family.sigma)
        hi = max(hi - lo for lo, hi in family.base.components[-1].plateau_box())
        bandwidths = np.logspace(math.log10(lo), math.log10(max(hi, 4.0 * lo)), count)
    return [EstimatorSpec(h=(float(h),) * family.d, kernel=kernel) for h in bandwidths]


def _perturbed_draws(family: PerturbationFamily, seed: int, n: int, count: int) -> List[np.ndarray]:
    rng = stream(seed, n, 1 << 20)
    ys = list(draw_prior(family.prior, family.M, rng, max(1, count // 2)))
    if family.prior.kind is PriorKind.RADEMACHER:
        ys = [v for y in ys for v in (y, -y)]
    else:
        ys.extend(draw_prior(family.prior, family.M, rng, count - len(ys)))
    return ys[:count]


def two_class_experiment(theta: ClassParams, theta_prime: ClassParams, n_grid: Sequence[int],
                         kappa: Optional[float], reps: int,
                         spec_grid: Optional[Sequence[EstimatorSpec]], seed: int,
                         alpha: Optional[float] = None, delta: float = 1.0,
                         y_draws: int = 2, constants: Optional[FamilyConstants] = None,
                         bandwidths: Optional[Sequence[float]] = None,
                         kernel: KernelName = KernelName.BIWEIGHT) -> RiskTable:
    """
    Two-class risk trade-off along n_grid

    For each n the family is built (kappa chosen when omitted), the base f0
    stands for the class of theta_prime and y_draws perturbed densities
    (y and -y pairs under a Rademacher prior) for the class of theta.
    Reported per estimator and n:

    - combined = n^(2 alpha) mse(f0) + (sqrt(ln n)/n)^(-2 z) max_y mse(f_y)
    - normalized terms (alpha_n^2 mse(f0) / psi_n^2, max_y mse(f_y) / psi_n^2)
      and their sum, which the certificate bounds from below for every estimator

    Returns:
        RiskTable with min_combined = min over estimators of the normalised sum
    """
    if not n_grid or any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ParameterError("n_grid must be nonempty and strictly increasing")
    relation = compare_thetas(theta, theta_prime, alpha=alpha)
    alpha_value = relation.alpha
    c = relation.c
    rows: List[RiskRow] = []
    combined: Dict[str, Dict[int, float]] = {}
    terms: Dict[str, Dict[int, Tuple[float, float]]] = {}
    normalized: Dict[str, Dict[int, float]] = {}
    normalized_err: Dict[str, Dict[int, float]] = {}
    finals: Dict[int, float] = {}
    minimum: Dict[int, float] = {}

    for n in n_grid:
        kappa_n = kappa if kappa is not None else choose_kappa(theta, theta_prime, n, delta,
                                                               constants=constants)
        family = build_family(theta, theta_prime, n, kappa_n, delta, constants=constants)
        cert = certificate(family, n, c)
        finals[n] = cert.final
        alpha_sq = cert.alpha_sq
        psi_sq = family.psi_n ** 2
        specs = list(spec_grid) if spec_grid else default_specs(family, bandwidths, kernel)
        ys = _perturbed_draws(family, seed, n, y_draws)
        best = math.inf
        for s_index, spec in enumerate(specs):
            key = s_index * (y_draws + 1)
            base_row = empirical_risk(family, None, n, reps, spec, seed, BASE_ID,
                                      stream_key=n * 1000 + key)
            y_rows = [empirical_risk(family, y, n, reps, spec, seed, f"f_y[{j}]",
                                     stream_key=n * 1000 + key + j + 1)
                      for j, y in enumerate(ys)]
            rows.append(base_row)
            rows.extend(y_rows)
            worst = max(y_rows, key=lambda row: row.mse)
            label = spec.label
            combined.setdefault(label, {})[n] = (
                n ** (2.0 * alpha_value) * base_row.mse
                + (math.sqrt(math.log(n)) / n) ** (-2.0 * relation.z) * worst.mse)
            first = alpha_sq * base_row.mse / psi_sq
            second = worst.mse / psi_sq
            terms.setdefault(label, {})[n] = (first, second)
            normalized.setdefault(label, {})[n] = first + second
            err0 = alpha_sq * (base_row.stderr or 0.0) / psi_sq
            err1 = (worst.stderr or 0.0) / psi_sq
            normalized_err.setdefault(label, {})[n] = math.hypot(err0, err1)
            best = min(best, first + second)
        minimum[n] = best
        logger.info("n=%d: certificate %.4g, min normalised combined %.4g", n, cert.final, best)

    return RiskTable(rows=rows, combined=combined, normalized_terms=terms,
                     normalized_combined=normalized, normalized_stderr=normalized_err,
                     certificate_final=finals, min_combined=minimum, alpha=alpha_value)


def consistent_with_certificate(table: RiskTable, sigmas: float = 3.0) -> Dict[str, bool]:
    """Per estimator: normalised combined >= certificate - sigmas * stderr at every n"""
    verdict = {}
    for label, by_n in table.normalized_combined.items():
        verdict[label] = all(
            value >= table.certificate_final[n] - sigmas * table.normalized_stderr[label][n]
            for n, value in by_n.items())
    return verdict


def no_spec_wins_both(table: RiskTable) -> bool:
    """No estimator makes both normalised terms at most half the certificate at any n"""
    for label, by_n in table.normalized_terms.items():
        for n, (first, second) in by_n.items():
            half = 0.5 * table.certificate_final[n]
            if first <= half and second <= half and half > 0:
                return False
    return True
