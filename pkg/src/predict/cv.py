"""Stratified k-fold cross-validation of the cost-sensitive SVM."""

import logging
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..core.config import SvmConfig
from ..core.errors import InsufficientDataError
from ..core.seeding import rng_for
from .metrics import Evaluation, evaluate
from .svm import train_cost_svm

logger = logging.getLogger(__name__)


def stratified_kfold(labels: Sequence[int], k: int = 10, seed: int = 0) -> np.ndarray:
    """Fold index per sample.

    Each class is shuffled with a seeded permutation and dealt round-robin. The dealer position carries over
    from one class to the next, so fold sizes differ by at most one overall.

    Raises:
        InsufficientDataError: If k < 2 or a class has fewer than k members
    """
    y = np.asarray(labels).astype(int)
    if k < 2:
        raise InsufficientDataError(f"Need at least 2 folds, got {k}")
    folds = np.full(y.size, -1, dtype=int)
    offset = 0
    for cls in (1, 0):
        members = np.flatnonzero(y == cls)
        if members.size < k:
            raise InsufficientDataError(f"Class {cls} has {members.size} members, fewer than {k} folds")
        shuffled = rng_for(seed, "folds", cls).permutation(members)
        folds[shuffled] = (np.arange(shuffled.size) + offset) % k
        offset = (offset + shuffled.size) % k
    return folds


class CrossValidation(BaseModel):
    """Out-of-fold scores and per-fold evaluations."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    folds: np.ndarray
    scores: np.ndarray = Field(..., description="Out-of-fold decision scores")
    evaluations: List[Evaluation]
    converged: bool

    def aucs(self) -> List[float]:
        return [e.auc for e in self.evaluations]

    def mean_auc(self) -> float:
        return float(np.mean(self.aucs()))


def cross_validate(x: np.ndarray, y: np.ndarray, config: SvmConfig, k: int = 10, seed: int = 0,
                   folds: Optional[np.ndarray] = None,
                   columns: Optional[Sequence[np.ndarray]] = None) -> CrossValidation:
    """Train on k-1 folds and score the held-out fold, k times.

    Args:
        x: Design matrix
        y: 0/1 labels
        config: SVM configuration
        k: Number of folds
        seed: Fold seed
        folds: Precomputed fold assignment; reused so several configs see identical splits
        columns: Per-fold boolean masks of the design columns to train on (default: all columns)

    Returns:
        CrossValidation
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y).astype(int)
    if folds is None:
        folds = stratified_kfold(y, k, seed)
    n_folds = int(folds.max()) + 1
    if columns is not None and len(columns) != n_folds:
        raise InsufficientDataError(f"{len(columns)} column masks for {n_folds} folds")
    scores = np.zeros(y.size)
    evaluations: List[Evaluation] = []
    converged = True
    for f in range(n_folds):
        test = folds == f
        xf = x if columns is None else x[:, np.asarray(columns[f], dtype=bool)]
        # an empty mask leaves only the bias, so the fold scores are constant
        model = train_cost_svm(xf[~test], y[~test], config)
        converged = converged and model.converged
        scores[test] = model.decision_function(xf[test])
        evaluations.append(evaluate(scores[test], y[test]))
    return CrossValidation(folds=folds, scores=scores, evaluations=evaluations, converged=converged)
