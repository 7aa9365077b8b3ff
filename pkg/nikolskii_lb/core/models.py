"""
Core data models and enums for nikolskii-lb
"""

import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from nikolskii_lb.core.errors import ParameterError
from nikolskii_lb.utils.validation import class_params_violations, parse_extended_real

Number = Union[int, float, str]


class Regime(Enum):
    """Parameter zones of the minimax rate exponent"""
    THETA_PRIME = "ThetaPrime"
    THETA_DOUBLE_PRIME = "ThetaDoublePrime"
    THETA_TRIPLE_PRIME = "ThetaTriplePrime"
    PARAMETRIC = "Parametric"


class Provenance(Enum):
    """Where a reported number comes from"""
    CLOSED_FORM = "closed-form"
    QUADRATURE = "quadrature"
    MONTE_CARLO = "monte-carlo"
    ESTIMATED = "estimated-constant"


class PriorKind(Enum):
    """Distribution of the bump weights"""
    RADEMACHER = "Rademacher"
    BERNOULLI_ON_UNIT = "BernoulliOnUnit"


class BaseKind(Enum):
    """Base density constructions"""
    MOLLIFIED_UNIFORM = "MollifiedUniform"
    SHRUNK_COMPOSITE = "ShrunkComposite"


class Construction(Enum):
    """Perturbation family constructions"""
    FIRST = "I"
    SECOND = "II"
    SYNTHETIC = "synthetic"


class BudgetMode(Enum):
    """Ways to evaluate the chi-square type budget"""
    COSH_PRODUCT = "CoshProduct"
    EXACT_ENUM = "ExactEnum"
    GENERAL_BRANCH_BOUND = "GeneralBranchBound"


class LambdaBranch(Enum):
    """Branches of the bump-mass assumption"""
    ZERO_LAMBDA = "ZeroLambda"
    NONNEG_UNIT = "NonnegUnit"


class KernelName(Enum):
    """One-dimensional kernels for the U-statistic estimator"""
    BIWEIGHT = "biweight"
    EPANECHNIKOV = "epanechnikov"
    BIWEIGHT4 = "biweight4"


class Command(Enum):
    """CLI subcommands"""
    RATE = "rate"
    REGIMES = "regimes"
    CONSTRUCT = "construct"
    VERIFY = "verify"
    CERTIFY = "certify"
    SIMULATE = "simulate"
    SWEEP = "sweep"
    LEMMAS = "lemmas"


class OutputFormat(Enum):
    """Report file formats"""
    JSON = "json"
    CSV = "csv"


def format_extended(value: float) -> Union[float, str]:
    """Render +inf as the string "inf", leave finite numbers alone"""
    return "inf" if math.isinf(value) else value


def _as_vector(value: Union[Number, Sequence[Number]], d: int, name: str) -> Tuple[float, ...]:
    if isinstance(value, (list, tuple)):
        values = tuple(parse_extended_real(v, name) for v in value)
    else:
        values = (parse_extended_real(value, name),) * d
    if len(values) != d:
        raise ParameterError(f"{name} must have d={d} entries, got {len(values)}")
    return values


@dataclass(frozen=True)
class ClassParams:
    """Nuisance parameter (beta, r, q, L, Q) of an anisotropic Nikolskii class on R^d"""
    d: int
    beta: Tuple[float, ...]
    r: Tuple[float, ...]
    q: float
    L: Tuple[float, ...]
    Q: float

    def __post_init__(self):
        problems = class_params_violations(self.d, self.beta, self.r, self.q, self.L, self.Q)
        if problems:
            raise ParameterError(problems[0])

    @classmethod
    def create(cls, d: int, beta, r, q, L=1.0, Q=1.0) -> "ClassParams":
        """Build from scalars (broadcast to d) or sequences; "inf" accepted for r and q"""
        if isinstance(d, bool) or not isinstance(d, int) or d < 1:
            raise ParameterError("d must be a positive integer (d >= 1)")
        return cls(
            d=d,
            beta=_as_vector(beta, d, "beta"),
            r=_as_vector(r, d, "r"),
            q=parse_extended_real(q, "q"),
            L=_as_vector(L, d, "L"),
            Q=parse_extended_real(Q, "Q"),
        )

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ClassParams":
        allowed = {"d", "beta", "r", "q", "L", "Q"}
        unknown = set(data) - allowed
        if unknown:
            raise ParameterError(f"unknown ClassParams keys: {sorted(unknown)}")
        missing = {"d", "beta", "r", "q"} - set(data)
        if missing:
            raise ParameterError(f"missing ClassParams field: {sorted(missing)[0]}")
        return cls.create(int(data["d"]), data["beta"], data["r"], data["q"],
                          data.get("L", 1.0), data.get("Q", 1.0))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "d": self.d,
            "beta": list(self.beta),
            "r": [format_extended(v) for v in self.r],
            "q": format_extended(self.q),
            "L": list(self.L),
            "Q": self.Q,
        }

    @property
    def isotropic(self) -> bool:
        return len(set(self.beta)) == 1 and len(set(self.r)) == 1

    def with_q(self, q: float) -> "ClassParams":
        return ClassParams(self.d, self.beta, self.r, q, self.L, self.Q)


@dataclass(frozen=True)
class SmoothnessDiagnostics:
    """Aggregated smoothness indices of (beta, r)"""
    inv_omega: float
    inv_beta: float
    bold_L: float

    def tau(self, s: float) -> float:
        """tau(s) = 1 - 1/omega + 1/(beta s), with 1/(beta * inf) = 0"""
        return 1.0 - self.inv_omega + self.inv_beta / s

    def to_dict(self, q: Optional[float] = None) -> Dict[str, Any]:
        points = [1.0, 2.0, math.inf] + ([q] if q is not None and q not in (1.0, 2.0, math.inf) else [])
        return {
            "inv_omega": self.inv_omega,
            "inv_beta": self.inv_beta,
            "bold_L": self.bold_L,
            "tau_at": {str(format_extended(s)): self.tau(s) for s in points},
        }


@dataclass
class RateReport:
    """Rate exponent, regime and the n-dependent normalisations"""
    z: float
    regime: Regime
    diagnostics: Dict[str, Any]
    n: Optional[int] = None
    psi_n: Optional[float] = None
    phi_n: Optional[float] = None
    price: Optional[float] = None


@dataclass
class RelationReport:
    """How two class parameters relate for the two-class lower bound"""
    z: float
    z_prime: float
    rho: float
    in_theta_prime: bool
    in_theta_double_prime: bool
    in_plus: bool
    in_zero: bool
    c: Optional[float] = None
    alpha: Optional[float] = None
    alpha_n_decay_exponent: Optional[float] = None
    alpha_n_growth_exponent: Optional[float] = None
    n: Optional[int] = None
    alpha_n: Optional[float] = None


@dataclass
class PairCondition:
    """Conditions A2/A3 for one ordered pair of grid points"""
    base_index: int
    other_index: int
    c: float
    a2_exponent: float
    a2_pass: bool
    a3_exponent: float
    a3_pass: bool


@dataclass
class GridStatistics:
    """Condition A1 statistics for one base point"""
    base_index: int
    fraction_plus: float
    fraction_zero: float
    zero_cells: int
    passed: bool


@dataclass
class ConditionReport:
    """Numerical evidence for Conditions A1-A3 on a finite grid"""
    grid_kind: str
    grid_shape: Tuple[int, ...]
    resolution: Dict[str, List[float]]
    pairs: List[PairCondition]
    a1: List[GridStatistics]
    skipped_parametric: int
    price_bounded: bool
    passed: bool


@dataclass(frozen=True)
class PriorSpec:
    """Prior on the bump weights y_m"""
    kind: PriorKind
    p: float = 0.5

    @property
    def support(self) -> Tuple[float, float]:
        return (-1.0, 1.0) if self.kind is PriorKind.RADEMACHER else (0.0, 1.0)

    @property
    def first_moment(self) -> float:
        return 0.0 if self.kind is PriorKind.RADEMACHER else self.p

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "p": self.p, "support": list(self.support),
                "first_moment": self.first_moment}


@dataclass(frozen=True)
class FamilyConstants:
    """Constants the theory leaves existential, fixed numerically"""
    C1: float
    a: float
    big_n: float
    c_const: Optional[float] = None
    c_sep: Optional[float] = None
    delta: Optional[float] = None


@dataclass
class DirectionCheck:
    """Nikolskii check along one coordinate direction"""
    j: int
    k: int
    worst_ratio: float
    worst_u: float
    norm: float
    limit: float
    ratio_ok: bool
    norm_ok: bool


@dataclass
class MembershipReport:
    """Outcome of a numerical Nikolskii-ball membership check"""
    per_direction: List[DirectionCheck]
    verdict: bool
    tolerance: float
    scale: float
    method: str
    lq_norm: Optional[float] = None
    lq_limit: Optional[float] = None


@dataclass
class CheckEntry:
    """One line of the assumption checklist"""
    name: str
    passed: bool
    value: float
    threshold: float
    provenance: Provenance
    stderr: Optional[float] = None
    detail: Dict[str, Any] = field(default_factory=dict)


@dataclass
class AssumptionChecklist:
    """Assumptions 1-5 of the two-class lower bound evaluated on a family"""
    a1_disjoint_supports: CheckEntry
    a2_positive_base: CheckEntry
    a3_class_mass: CheckEntry
    a4_separation_mass: CheckEntry
    a5_branch: CheckEntry
    branch: LambdaBranch
    n: int
    y_mc: int
    note: str = "passing checks at finite n is numerical evidence, not a proof"

    @property
    def entries(self) -> List[CheckEntry]:
        return [self.a1_disjoint_supports, self.a2_positive_base, self.a3_class_mass,
                self.a4_separation_mass, self.a5_branch]

    @property
    def passed(self) -> bool:
        return all(entry.passed for entry in self.entries)


@dataclass
class ChiBudget:
    """Chi-square type budget for the mixture likelihood ratio"""
    mode: BudgetMode
    value: float
    per_m: Dict[str, float]
    n: int
    alpha_sq: float
    ratio: float
    index: int = 1
    provenance: Provenance = Provenance.CLOSED_FORM
    stderr: Optional[float] = None
    conservative: bool = False


@dataclass
class Certificate:
    """Numeric lower bound on the two-class combined risk"""
    kappa: float
    ez2: float
    alpha_sq: float
    R_term: float
    ez_min_bound: float
    final: float
    asymptote: float
    branch: LambdaBranch
    budget_mode: BudgetMode
    conservative: bool
    provenance: Dict[str, str]


@dataclass(frozen=True)
class EstimatorSpec:
    """Kernel U-statistic estimator of the L2 norm"""
    h: Tuple[float, ...]
    kernel: KernelName = KernelName.BIWEIGHT
    clamp: bool = True

    def __post_init__(self):
        if any(not h > 0 for h in self.h):
            raise ParameterError("bandwidth h must be positive componentwise (h > 0)")

    @property
    def label(self) -> str:
        return f"{self.kernel.value}(h={','.join(f'{h:.4g}' for h in self.h)})"


@dataclass
class RiskRow:
    """Empirical quadratic risk for one density and estimator"""
    density_id: str
    estimator: str
    n: int
    reps: int
    mse: float
    stderr: Optional[float]
    truth: float


@dataclass
class RiskTable:
    """Empirical risks with the two-class combined functional"""
    rows: List[RiskRow]
    combined: Dict[str, Dict[int, float]]
    normalized_terms: Dict[str, Dict[int, Tuple[float, float]]]
    normalized_combined: Dict[str, Dict[int, float]]
    normalized_stderr: Dict[str, Dict[int, float]]
    certificate_final: Dict[int, float]
    min_combined: Dict[int, float]
    alpha: float
    label: str = "estimator-specific upper evidence"


@dataclass
class RunConfig:
    """Validated configuration of one CLI invocation"""
    command: Command
    theta: Optional[ClassParams] = None
    theta_prime: Optional[ClassParams] = None
    n: Optional[int] = None
    n_grid: Optional[List[int]] = None
    kappa: Optional[float] = None
    delta: Optional[float] = None
    seed: Optional[int] = None
    out_dir: str = "reports"
    format: OutputFormat = OutputFormat.JSON
    reps: int = 100
    y_mc: int = 200
    bandwidths: Optional[List[float]] = None
    kernel: KernelName = KernelName.BIWEIGHT
    alpha: Optional[float] = None
    big_n: float = 8.0
    construction: Optional[Construction] = None
    grid: Optional[Dict[str, Any]] = None
    samples: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["command"] = self.command.value
        data["format"] = self.format.value
        data["kernel"] = self.kernel.value
        data["construction"] = self.construction.value if self.construction else None
        data["theta"] = self.theta.to_dict() if self.theta else None
        data["theta_prime"] = self.theta_prime.to_dict() if self.theta_prime else None
        return data
