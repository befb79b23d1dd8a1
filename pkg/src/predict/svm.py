"""Cost-sensitive linear SVM trained by dual coordinate descent.

Solves min_w  lambda/2 * ||w||^2 + sum_i c_i * max(0, 1 - y_i * w.x_i)  with the bias folded into ``w`` as an
augmented constant feature. Cases carry cost ``positive_class_cost``; controls carry cost 1. Coordinates are
visited in natural order every epoch, so training is deterministic.
"""

import logging
from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..core.config import SvmConfig
from ..core.errors import InsufficientDataError

logger = logging.getLogger(__name__)


class SvmModel(BaseModel):
    """Linear decision function w.x + b."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    weights: np.ndarray
    bias: float
    objective: float = Field(..., description="Primal objective of the returned weights")
    objective_trace: List[float] = Field(default_factory=list, description="Best primal objective after each epoch")
    epochs: int
    converged: bool

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.weights + self.bias

    def predict(self, x: np.ndarray) -> np.ndarray:
        return (self.decision_function(x) >= 0.0).astype(int)


def sample_costs(y: np.ndarray, positive_class_cost: float) -> np.ndarray:
    return np.where(np.asarray(y) == 1, positive_class_cost, 1.0)


def primal_objective(w_aug: np.ndarray, x_aug: np.ndarray, signs: np.ndarray, costs: np.ndarray,
                     regularization: float) -> float:
    margins = signs * (x_aug @ w_aug)
    return float(0.5 * regularization * w_aug @ w_aug + np.sum(costs * np.maximum(0.0, 1.0 - margins)))


def svm_objective(model: SvmModel, x: np.ndarray, y: np.ndarray, costs: np.ndarray, regularization: float) -> float:
    """Primal objective of a trained model on (x, y) with per-sample costs."""
    x_aug = np.column_stack([np.asarray(x, dtype=float), np.ones(len(y))])
    w_aug = np.append(model.weights, model.bias)
    return primal_objective(w_aug, x_aug, np.where(np.asarray(y) == 1, 1.0, -1.0), costs, regularization)


def train_cost_svm(x: np.ndarray, y: np.ndarray, config: SvmConfig) -> SvmModel:
    """Train the class-weighted L1-hinge SVM.

    Args:
        x: n x m design
        y: 0/1 labels
        config: Cost, regularization and stopping rule

    Returns:
        SvmModel holding the best primal iterate; ``converged`` is False when max_passes ran out

    Raises:
        InsufficientDataError: If either class is missing
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    if x.ndim == 1:
        x = x[:, None]
    if y.size == 0 or y.min() == y.max():
        raise InsufficientDataError("SVM training needs both classes")

    n, m = x.shape
    x_aug = np.ascontiguousarray(np.column_stack([x, np.ones(n)]))
    signs = np.where(y == 1, 1.0, -1.0)
    costs = sample_costs(y, config.positive_class_cost)
    upper = costs / config.regularization
    q_diag = np.einsum("ij,ij->i", x_aug, x_aug)

    alpha = np.zeros(n)
    w = np.zeros(m + 1)
    best_w = w.copy()
    best = primal_objective(w, x_aug, signs, costs, config.regularization)
    trace: List[float] = []
    converged = False
    epochs = 0

    rows = list(x_aug)
    for epochs in range(1, config.max_passes + 1):
        pg_max, pg_min = -np.inf, np.inf
        for i in range(n):
            xi = rows[i]
            g = signs[i] * float(w @ xi) - 1.0
            a = alpha[i]
            if a == 0.0:
                pg = min(g, 0.0)
            elif a == upper[i]:
                pg = max(g, 0.0)
            else:
                pg = g
            pg_max = max(pg_max, pg)
            pg_min = min(pg_min, pg)
            if pg != 0.0:
                new_a = min(max(a - g / q_diag[i], 0.0), upper[i])
                w += (new_a - a) * signs[i] * xi
                alpha[i] = new_a
        obj = primal_objective(w, x_aug, signs, costs, config.regularization)
        if obj < best:
            best = obj
            best_w = w.copy()
        trace.append(best)
        if pg_max - pg_min < config.tolerance:
            converged = True
            break

    if not converged:
        logger.warning(f"SVM stopped after {epochs} epochs without meeting tolerance {config.tolerance}",
                       extra={"stage": "svm"})
    return SvmModel(weights=best_w[:-1].copy(), bias=float(best_w[-1]), objective=best, objective_trace=trace,
                    epochs=epochs, converged=converged)
