"""Maximum-likelihood logistic regression by Newton-Raphson (IRLS)."""

import logging
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg
from scipy.special import expit

from ..core.errors import CollinearityError, InsufficientDataError, SeparationError
from ..features.matrix import FeatureMatrix
from ..features.taxonomy import FeatureCoding

logger = logging.getLogger(__name__)

INTERCEPT = "(intercept)"
SCORE_TOL = 1e-8
REL_LL_TOL = 1e-10
MAX_ITER = 50
SEPARATION_BOUND = 15.0
MAX_HALVINGS = 30


class Design(BaseModel):
    """Numeric design matrix (no intercept column) with per-column provenance."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    x: np.ndarray
    y: np.ndarray
    columns: List[str]
    features: List[str] = Field(..., description="Source feature of each column")
    levels: List[Optional[str]] = Field(..., description="Nominal level of each column, None for ordinal")
    codings: List[FeatureCoding]

    def drop(self, names: List[str]) -> "Design":
        keep = [i for i, c in enumerate(self.columns) if c not in set(names)]
        return Design(
            x=self.x[:, keep],
            y=self.y,
            columns=[self.columns[i] for i in keep],
            features=[self.features[i] for i in keep],
            levels=[self.levels[i] for i in keep],
            codings=[self.codings[i] for i in keep],
        )


def design_width(matrix: FeatureMatrix) -> int:
    """Number of slope columns ``build_design`` produces for the matrix."""
    return sum(1 if s.coding == FeatureCoding.ORDINAL else len(s.levels) - 1 for s in matrix.specs)


def build_design(matrix: FeatureMatrix) -> Design:
    """Ordinal codes enter as numbers; nominal features expand to indicators against their control level."""
    blocks: List[np.ndarray] = []
    columns: List[str] = []
    features: List[str] = []
    levels: List[Optional[str]] = []
    codings: List[FeatureCoding] = []
    for spec in matrix.specs:
        codes = matrix.codes[spec.name].to_numpy()
        if spec.coding == FeatureCoding.ORDINAL:
            blocks.append(codes.astype(float)[:, None])
            columns.append(spec.name)
            features.append(spec.name)
            levels.append(None)
            codings.append(spec.coding)
            continue
        for i, level in enumerate(spec.levels):
            if level == spec.control_category:
                continue
            blocks.append((codes == i).astype(float)[:, None])
            columns.append(f"{spec.name}={level}")
            features.append(spec.name)
            levels.append(level)
            codings.append(spec.coding)
    n = len(matrix.ids)
    x = np.hstack(blocks) if blocks else np.zeros((n, 0))
    return Design(x=x, y=matrix.labels.astype(float), columns=columns, features=features, levels=levels,
                  codings=codings)


class LogisticModel(BaseModel):
    """Fitted coefficients (intercept first) and the state at the optimum."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    coefficients: np.ndarray
    design_columns: List[str]
    converged: bool
    iterations: int
    log_likelihood: float
    null_log_likelihood: float
    n: int
    max_score: float
    information: np.ndarray = Field(..., description="Observed information X'WX at the optimum")

    @property
    def intercept(self) -> float:
        return float(self.coefficients[0])

    @property
    def slopes(self) -> np.ndarray:
        return self.coefficients[1:]

    def linear_predictor(self, x: np.ndarray) -> np.ndarray:
        return self.coefficients[0] + np.asarray(x, dtype=float) @ self.coefficients[1:]

    def predict(self, x: np.ndarray) -> np.ndarray:
        return expit(self.linear_predictor(x))


def log_likelihood(beta: np.ndarray, x1: np.ndarray, y: np.ndarray) -> float:
    """Bernoulli log-likelihood for design ``x1`` (intercept column included)."""
    eta = x1 @ beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def _with_intercept(x: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(x.shape[0]), x])


def check_rank(x: np.ndarray, columns: List[str]) -> None:
    """Raise CollinearityError naming the aliased columns of ``[1, x]``."""
    x1 = _with_intercept(x)
    if x1.shape[1] == 1:
        return
    _, r, piv = linalg.qr(x1, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag[0] * max(x1.shape) * np.finfo(float).eps if diag.size else 0.0
    rank = int((diag > tol).sum())
    if rank < x1.shape[1]:
        names = [INTERCEPT] + list(columns)
        aliased = sorted(piv[rank:].tolist())
        raise CollinearityError([names[i] for i in aliased])


def fit_logistic_arrays(x: np.ndarray, y: np.ndarray, columns: Optional[List[str]] = None) -> LogisticModel:
    """Fit a logistic model to a numeric design.

    Starts from zero slopes with the intercept at the empirical logit and halves Newton steps that lower the
    likelihood. Stops when max |score| < 1e-8 or the relative log-likelihood change falls below 1e-10.

    Args:
        x: n x m design without intercept
        y: 0/1 outcomes
        columns: Column names (default x1..xm)

    Returns:
        LogisticModel

    Raises:
        InsufficientDataError: Without at least one case and one control
        CollinearityError: If [1, x] is rank deficient
        SeparationError: If coefficients diverge
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y, dtype=float)
    n, m = x.shape
    if columns is None:
        columns = [f"x{i + 1}" for i in range(m)]
    n1 = float(y.sum())
    if n1 <= 0 or n1 >= n:
        raise InsufficientDataError("logistic fit needs at least one case and one control")
    check_rank(x, columns)

    x1 = _with_intercept(x)
    ybar = n1 / n
    beta = np.zeros(m + 1)
    beta[0] = np.log(ybar / (1.0 - ybar))
    null_ll = float(n1 * np.log(ybar) + (n - n1) * np.log(1.0 - ybar))
    ll = log_likelihood(beta, x1, y)

    converged = False
    iterations = 0
    for iterations in range(1, MAX_ITER + 1):
        pi = expit(x1 @ beta)
        score = x1.T @ (y - pi)
        if np.max(np.abs(score)) < SCORE_TOL:
            converged = True
            iterations -= 1
            break
        info = x1.T @ (x1 * (pi * (1.0 - pi))[:, None])
        try:
            step = linalg.cho_solve(linalg.cho_factor(info), score)
        except linalg.LinAlgError:
            logger.debug("Information matrix lost definiteness during fitting", extra={"stage": "regression"})
            break
        t = 1.0
        candidate = beta + step
        new_ll = log_likelihood(candidate, x1, y)
        halvings = 0
        while new_ll < ll and halvings < MAX_HALVINGS:
            t /= 2.0
            candidate = beta + t * step
            new_ll = log_likelihood(candidate, x1, y)
            halvings += 1
        rel = abs(new_ll - ll) / max(abs(ll), 1e-300)
        beta, ll = candidate, new_ll
        if rel < REL_LL_TOL:
            converged = True
            break

    pi = expit(x1 @ beta)
    score = x1.T @ (y - pi)
    max_score = float(np.max(np.abs(score)))
    big = np.abs(beta[1:]) > SEPARATION_BOUND
    if big.any():
        boundary = bool(np.any((pi < 1e-8) | (pi > 1.0 - 1e-8)))
        if max_score > SCORE_TOL or boundary:
            offenders = [c for c, b in zip(columns, big) if b]
            raise SeparationError(
                f"Coefficients diverge (|B| > {SEPARATION_BOUND:g}) for: {', '.join(offenders)}", offenders
            )
    if not converged:
        logger.warning(f"Logistic fit stopped after {iterations} iterations, max |score| {max_score:.2e}",
                       extra={"stage": "regression"})

    info = x1.T @ (x1 * (pi * (1.0 - pi))[:, None])
    return LogisticModel(
        coefficients=beta,
        design_columns=list(columns),
        converged=converged,
        iterations=iterations,
        log_likelihood=log_likelihood(beta, x1, y),
        null_log_likelihood=null_ll,
        n=n,
        max_score=max_score,
        information=info,
    )


def fit_logistic(matrix: FeatureMatrix) -> LogisticModel:
    """Fit the main-effects model of a coded feature matrix."""
    design = build_design(matrix)
    return fit_logistic_arrays(design.x, design.y, design.columns)
