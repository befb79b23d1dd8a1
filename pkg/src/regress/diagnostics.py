"""Goodness-of-fit diagnostics for a fitted logistic model."""

import logging
import math
from typing import Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy import stats

from .logistic import Design, LogisticModel

logger = logging.getLogger(__name__)

HL_GROUPS = 10


class FitDiagnostics(BaseModel):
    """Omnibus likelihood-ratio test, pseudo R-squared and Hosmer-Lemeshow test."""
    n: int
    omnibus_chi2: float = Field(..., ge=0)
    omnibus_df: int
    omnibus_p: float = Field(..., ge=0, le=1)
    minus2ll: float
    r2_cox_snell: float
    r2_nagelkerke: float
    hl_chi2: float = Field(..., ge=0)
    hl_df: int
    hl_p: float = Field(..., ge=0, le=1)
    hl_groups: int

    @model_validator(mode="after")
    def _r2_order(self) -> "FitDiagnostics":
        if not (0.0 <= self.r2_cox_snell <= self.r2_nagelkerke + 1e-12 <= 1.0 + 1e-12):
            raise ValueError("expected 0 <= Cox & Snell R2 <= Nagelkerke R2 <= 1")
        return self


def pseudo_r2(chi2: float, n: int, minus2ll: float) -> Tuple[float, float]:
    """Cox & Snell and Nagelkerke R-squared from the omnibus chi-square and the model's -2LL.

    Args:
        chi2: Omnibus likelihood-ratio chi-square
        n: Sample size
        minus2ll: -2 log-likelihood of the fitted model

    Returns:
        (Cox & Snell R2, Nagelkerke R2)
    """
    cs = 1.0 - math.exp(-chi2 / n)
    ceiling = 1.0 - math.exp(-(minus2ll + chi2) / n)
    nagelkerke = cs / ceiling if ceiling > 0 else 0.0
    return cs, nagelkerke


def hosmer_lemeshow(pi: np.ndarray, y: np.ndarray, groups: int = HL_GROUPS) -> Tuple[float, int, float, int]:
    """Hosmer-Lemeshow statistic over equal-count groups of predicted risk.

    Rows are ordered by (pi, row index); the group count drops to the number of distinct predictions when
    there are fewer than ``groups``.

    Returns:
        (chi2, df, p, groups used)
    """
    pi = np.asarray(pi, dtype=float)
    y = np.asarray(y, dtype=float)
    g = int(min(groups, np.unique(pi).size))
    if g < groups:
        logger.warning(f"Hosmer-Lemeshow collapsed to {g} groups ({np.unique(pi).size} distinct predictions)",
                       extra={"stage": "diagnostics"})
    order = np.lexsort((np.arange(pi.size), pi))
    chi2 = 0.0
    for part in np.array_split(order, g):
        observed1 = y[part].sum()
        expected1 = pi[part].sum()
        observed0 = part.size - observed1
        expected0 = part.size - expected1
        if expected1 > 0:
            chi2 += (observed1 - expected1) ** 2 / expected1
        if expected0 > 0:
            chi2 += (observed0 - expected0) ** 2 / expected0
    df = g - 2
    p = float(stats.chi2.sf(chi2, df)) if df > 0 else 1.0
    return float(chi2), df, p, g


def fit_diagnostics(model: LogisticModel, design: Design) -> FitDiagnostics:
    """Full diagnostic row for a fitted model.

    Args:
        model: Fitted model
        design: Design the model was fitted on

    Returns:
        FitDiagnostics
    """
    minus2ll = -2.0 * model.log_likelihood
    chi2 = max(0.0, -2.0 * model.null_log_likelihood - minus2ll)
    df = len(model.design_columns)
    omnibus_p = float(stats.chi2.sf(chi2, df)) if df > 0 else 1.0
    cs, nk = pseudo_r2(chi2, model.n, minus2ll)
    hl_chi2, hl_df, hl_p, g = hosmer_lemeshow(model.predict(design.x), design.y)
    return FitDiagnostics(
        n=model.n,
        omnibus_chi2=chi2,
        omnibus_df=df,
        omnibus_p=omnibus_p,
        minus2ll=minus2ll,
        r2_cox_snell=cs,
        r2_nagelkerke=nk,
        hl_chi2=hl_chi2,
        hl_df=hl_df,
        hl_p=hl_p,
        hl_groups=g,
    )
