"""Collinearity pruning by pairwise Cramér's V."""

import logging
from typing import List, Tuple

import numpy as np
import pandas as pd
from scipy.stats.contingency import association

from ..core.errors import InputValidationError
from .matrix import FeatureMatrix

logger = logging.getLogger(__name__)


def contingency_table(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross-tabulate two code vectors over their observed values only (no empty rows or columns)."""
    a_levels, ai = np.unique(np.asarray(a), return_inverse=True)
    b_levels, bi = np.unique(np.asarray(b), return_inverse=True)
    na, nb = a_levels.size, b_levels.size
    if na == 0 or nb == 0:
        return np.zeros((0, 0), dtype=int)
    return np.bincount(ai.ravel() * nb + bi.ravel(), minlength=na * nb).reshape(na, nb)


def cramers_v(a: np.ndarray, b: np.ndarray) -> float:
    table = contingency_table(a, b)
    if table.ndim != 2 or min(table.shape) < 2:
        return 0.0
    return float(association(table, method="cramer"))


def cramers_v_matrix(codes: pd.DataFrame) -> np.ndarray:
    names = list(codes.columns)
    k = len(names)
    v = np.eye(k)
    arrays = [codes[n].to_numpy() for n in names]
    for i in range(k):
        for j in range(i + 1, k):
            v[i, j] = v[j, i] = cramers_v(arrays[i], arrays[j])
    return v


def prune_collinear(matrix: FeatureMatrix, threshold: float) -> Tuple[FeatureMatrix, List[str]]:
    """Drop features until no pair's Cramér's V exceeds ``threshold``.

    The strongest pair goes first; of its two members the one with the larger mean V against the other retained
    features is dropped, the later name on a tie.

    Args:
        matrix: Coded features
        threshold: Maximum allowed pairwise V, in (0, 1]

    Returns:
        (pruned matrix, dropped feature names in drop order)
    """
    if not 0.0 < threshold <= 1.0:
        raise InputValidationError("collinearity threshold must lie in (0, 1]")
    names = list(matrix.feature_names)
    if len(names) < 2:
        return matrix, []

    v = cramers_v_matrix(matrix.codes)
    alive = list(range(len(names)))
    dropped: List[str] = []
    while len(alive) > 1:
        sub = v[np.ix_(alive, alive)].copy()
        np.fill_diagonal(sub, -1.0)
        flat = int(np.argmax(sub))
        i, j = divmod(flat, len(alive))
        if sub[i, j] <= threshold:
            break
        means = (sub.clip(min=0.0).sum(axis=1)) / (len(alive) - 1)
        a, b = alive[i], alive[j]
        ma, mb = means[i], means[j]
        if ma > mb:
            victim = a
        elif mb > ma:
            victim = b
        else:
            victim = a if names[a] > names[b] else b
        dropped.append(names[victim])
        logger.info(f"Dropped {names[victim]} (V={sub[i, j]:.3f}) in {matrix.stratum}",
                    extra={"stage": "collinearity", "subgroup": matrix.stratum, "feature": names[victim]})
        alive.remove(victim)

    kept = [names[i] for i in alive]
    return matrix.select(kept), dropped
