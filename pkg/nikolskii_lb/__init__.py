"""
nikolskii-lb - adaptive estimation of the L2 norm of a density

Rate-exponent calculus over anisotropic Nikolskii classes, explicit
perturbation families, assumption checklists, two-class lower-bound
certificates and Monte-Carlo risk evidence.
"""

__version__ = "0.1.0"
__author__ = "nikolskii-lb developers"
__description__ = "Adaptive L2-norm estimation: rate calculus and lower-bound certificates"

from nikolskii_lb.core.models import ClassParams, Regime, RunConfig
from nikolskii_lb.core.param_space import compare_thetas, rate_exponent, rates_at_n

__all__ = [
    "ClassParams",
    "Regime",
    "RunConfig",
    "compare_thetas",
    "rate_exponent",
    "rates_at_n",
    "__version__",
]
