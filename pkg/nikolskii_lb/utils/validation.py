"""
Validation utilities for nikolskii-lb
"""

import math
import os
from pathlib import Path
from typing import Any, List, Sequence

from nikolskii_lb.core.errors import ParameterError

MAX_SEED = 2 ** 64 - 1


def parse_extended_real(value: Any, name: str) -> float:
    """
    Parse a real number, accepting the string "inf" for +infinity

    Args:
        value: Number or numeric string
        name: Field name used in the error message

    Returns:
        The value as a float (math.inf for "inf")
    """
    if isinstance(value, bool):
        raise ParameterError(f"{name}: expected a number, got {value!r}")
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ("inf", "+inf", "infinity", "∞"):
            return math.inf
        try:
            value = float(text)
        except ValueError:
            raise ParameterError(f"{name}: malformed number {value!r}") from None
    try:
        result = float(value)
    except (TypeError, ValueError):
        raise ParameterError(f"{name}: malformed number {value!r}") from None
    if math.isnan(result) or result == -math.inf:
        raise ParameterError(f"{name}: malformed number {value!r}")
    return result


def class_params_violations(d: int, beta: Sequence[float], r: Sequence[float], q: float,
                            L: Sequence[float], Q: float) -> List[str]:
    """
    List every violated constraint of a class parameter, in field order

    Returns:
        Human-readable messages naming the constraint; empty when valid
    """
    problems = []
    if d < 1:
        problems.append("d must be a positive integer (d >= 1)")
    for name, vec in (("beta", beta), ("r", r), ("L", L)):
        if len(vec) != d:
            problems.append(f"{name} must have d={d} entries, got {len(vec)}")
    if any(not (b > 0 and math.isfinite(b)) for b in beta):
        problems.append("beta must be finite and positive (beta > 0)")
    if any(not rj >= 1 for rj in r):
        problems.append("r must satisfy r >= 1")
    if not q >= 2:
        problems.append("q must satisfy q >= 2")
    if any(not (lj > 0 and math.isfinite(lj)) for lj in L):
        problems.append("L must be finite and positive (L > 0)")
    if not (Q > 0 and math.isfinite(Q)):
        problems.append("Q must be finite and positive (Q > 0)")
    return problems


def validate_positive_int(value: Any, minimum: int = 1) -> bool:
    """True if value is an integer not below minimum"""
    return isinstance(value, int) and not isinstance(value, bool) and value >= minimum


def validate_seed(seed: Any) -> bool:
    """True for integer seeds fitting in 64 bits"""
    return validate_positive_int(seed, 0) and seed <= MAX_SEED


def validate_out_dir(path: str) -> bool:
    """
    Validate that an output directory exists or can be created

    Args:
        path: Directory path

    Returns:
        True if the directory is writable (or its nearest existing parent is)
    """
    try:
        target = Path(path).expanduser().resolve()
        while not target.exists():
            target = target.parent
        return target.is_dir() and os.access(target, os.W_OK)
    except Exception:
        return False


def validate_n_grid(n_grid: Sequence[int]) -> bool:
    """True for a nonempty strictly increasing grid of sample sizes n >= 3"""
    if not n_grid:
        return False
    return all(validate_positive_int(n, 3) for n in n_grid) and \
        all(a < b for a, b in zip(n_grid, n_grid[1:]))
