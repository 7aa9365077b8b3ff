"""
Exception hierarchy for nikolskii-lb
"""


class NikolskiiError(Exception):
    """Base class for every error raised by the package"""


class ParameterError(NikolskiiError, ValueError):
    """A parameter lies outside its admissible domain"""


class RegimeError(ParameterError):
    """A construction was requested for parameters of the wrong regime"""


class ConstructionError(NikolskiiError):
    """A perturbation family cannot be built at the requested size"""


class ConditionViolated(NikolskiiError):
    """The premise of a checked inequality does not hold"""


class NumericalFailure(NikolskiiError, ArithmeticError):
    """Quadrature, enumeration or sampling could not produce a trustworthy value"""
