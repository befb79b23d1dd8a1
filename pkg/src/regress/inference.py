"""Wald inference on logistic coefficients: odds ratios, confidence intervals and BH-adjusted p-values."""

import math
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy import linalg, stats

from ..core.errors import NumericError
from ..features.taxonomy import FeatureCoding
from ..stats.multiple import bh_adjust
from .logistic import Design, LogisticModel

# z quantile used for the published 95% intervals
Z_975 = 1.959964


class RiskFactor(BaseModel):
    """One coefficient row: B, SE, Exp(B), 95% CI and p-values."""
    feature: str
    level: Optional[str] = Field(default=None, description="Nominal level, None for ordinal features")
    column: str = Field(..., description="Design column name")
    coding: FeatureCoding
    b: float
    se: float = Field(..., gt=0)
    exp_b: float
    ci_low: float
    ci_high: float
    z: float
    p_raw: float = Field(..., ge=0, le=1)
    p_bh: float = Field(..., ge=0, le=1)


def odds_ratio_ci(b: float, se: float, z: float = Z_975) -> Tuple[float, float, float]:
    """Exp(B) with its Wald interval exp(B -/+ z * SE)."""
    return math.exp(b), math.exp(b - z * se), math.exp(b + z * se)


def covariance(model: LogisticModel) -> np.ndarray:
    """Inverse observed information.

    Raises:
        NumericError: If the information matrix is not positive definite
    """
    try:
        factor = linalg.cho_factor(model.information)
    except linalg.LinAlgError as e:
        raise NumericError(f"Information matrix is not positive definite: {e}") from e
    cov = linalg.cho_solve(factor, np.eye(model.information.shape[0]))
    if not np.all(np.isfinite(cov)) or np.any(np.diag(cov) <= 0):
        raise NumericError("Covariance matrix has non-positive variances")
    return cov


def wald_risk_factors(model: LogisticModel, design: Design, family_size: Optional[int] = None) -> List[RiskFactor]:
    """Wald rows for every slope, BH-adjusted across the model's slopes.

    Args:
        model: Fitted model
        design: Design the model was fitted on, for column provenance
        family_size: BH family size when it exceeds the fitted slopes; the missing members count as p = 1

    Returns:
        One RiskFactor per design column, in design order
    """
    cov = covariance(model)
    se = np.sqrt(np.diag(cov))[1:]
    b = model.slopes
    z = b / se
    p_raw = np.clip(2.0 * stats.norm.sf(np.abs(z)), 0.0, 1.0)
    padding = max(0, (family_size or 0) - p_raw.size)
    p_bh = bh_adjust(p_raw.tolist() + [1.0] * padding)[: p_raw.size]
    rows = []
    for i, col in enumerate(design.columns):
        exp_b, lo, hi = odds_ratio_ci(float(b[i]), float(se[i]))
        rows.append(RiskFactor(
            feature=design.features[i],
            level=design.levels[i],
            column=col,
            coding=design.codings[i],
            b=float(b[i]),
            se=float(se[i]),
            exp_b=exp_b,
            ci_low=lo,
            ci_high=hi,
            z=float(z[i]),
            p_raw=float(p_raw[i]),
            p_bh=float(p_bh[i]),
        ))
    return rows
