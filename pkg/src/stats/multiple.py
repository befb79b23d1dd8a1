"""Multiple-comparison adjustment."""

from typing import List, Sequence

import numpy as np
from scipy import stats

from ..core.errors import InputValidationError


def bh_adjust(p_values: Sequence[float]) -> List[float]:
    """Benjamini-Hochberg step-up adjusted p-values, returned in input order.

    Args:
        p_values: Raw p-values in [0, 1]

    Returns:
        Adjusted values, capped at 1
    """
    p = np.asarray(list(p_values), dtype=float)
    if p.size == 0:
        return []
    if np.isnan(p).any() or (p < 0).any() or (p > 1).any():
        raise InputValidationError("p-values must lie in [0, 1]")
    return [float(v) for v in stats.false_discovery_control(p, method="bh")]


def bh_reject(p_values: Sequence[float], alpha: float) -> List[bool]:
    """Rejection decisions at FDR level ``alpha``."""
    return [q <= alpha for q in bh_adjust(p_values)]


def significance_stars(p: float, thresholds: Sequence[float] = (0.05, 0.01, 0.001)) -> str:
    """One star per threshold the p-value falls below (strictly)."""
    return "*" * sum(1 for t in thresholds if p < t)
