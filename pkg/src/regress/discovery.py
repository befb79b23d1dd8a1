"""Per-subgroup risk-factor discovery: fit, diagnose, BH-filter and report."""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from ..core.errors import CollinearityError
from ..core.types import parse_stratum_key
from ..features.matrix import FeatureMatrix
from ..features.taxonomy import FeatureCoding
from ..stats.multiple import significance_stars
from .diagnostics import FitDiagnostics, fit_diagnostics
from .inference import RiskFactor, wald_risk_factors
from .logistic import INTERCEPT, Design, LogisticModel, build_design, fit_logistic_arrays

logger = logging.getLogger(__name__)

FACTOR_STARS = (0.05, 0.01, 0.001)

DIAGNOSTIC_COLUMNS = [
    "sex", "age", "size", "chi2", "df", "p", "minus2ll", "r2_cox_snell", "r2_nagelkerke", "hl_chi2", "hl_df", "hl_p",
]
FACTOR_COLUMNS = [
    "feature", "level", "coding", "sex", "age", "size", "b", "se", "exp_b", "ci_low", "ci_high", "p_raw", "p_bh",
    "stars",
]


class SubgroupDiscovery(BaseModel):
    """Fit, diagnostics and risk factors of one subgroup."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    subgroup: str
    size: int
    n_cases: int
    model: LogisticModel
    design: Design
    diagnostics: FitDiagnostics
    coefficients: List[RiskFactor] = Field(..., description="Every slope with Wald and BH statistics")
    factors: List[RiskFactor] = Field(..., description="Reported risk factors after the BH filter")
    aliased: List[str] = Field(default_factory=list, description="Design columns dropped for rank deficiency")

    @property
    def factor_features(self) -> List[str]:
        """Features with at least one BH-significant column."""
        seen: List[str] = []
        for f in self.factors:
            if f.feature not in seen:
                seen.append(f.feature)
        return seen


class DiscoveryReport(BaseModel):
    bh_level: float
    subgroups: List[SubgroupDiscovery]


def extreme_levels(significant: Sequence[RiskFactor]) -> List[RiskFactor]:
    """Keep ordinal rows; for each nominal feature keep a single level.

    The kept level is the one with the largest Exp(B) if its B > 0, or the smallest Exp(B) if its B < 0,
    which over the significant levels of a feature is the level with the largest |B|.
    """
    best: Dict[str, RiskFactor] = {}
    for rf in significant:
        if rf.coding != FeatureCoding.NOMINAL:
            continue
        current = best.get(rf.feature)
        if current is None or abs(rf.b) > abs(current.b):
            best[rf.feature] = rf
    return [rf for rf in significant if rf.coding == FeatureCoding.ORDINAL or best.get(rf.feature) is rf]


def _fit_with_refit(design: Design, subgroup: str) -> tuple:
    try:
        return design, fit_logistic_arrays(design.x, design.y, design.columns), []
    except CollinearityError as e:
        aliased = [c for c in e.columns if c != INTERCEPT]
        logger.warning(f"Refitting {subgroup} without aliased columns: {', '.join(aliased)}",
                       extra={"stage": "regression", "subgroup": subgroup})
        reduced = design.drop(aliased)
        return reduced, fit_logistic_arrays(reduced.x, reduced.y, reduced.columns), aliased


def discover_subgroup(matrix: FeatureMatrix, bh_level: float = 0.05,
                      family_size: Optional[int] = None) -> SubgroupDiscovery:
    """Fit the screened features of one subgroup and extract its risk factors.

    Args:
        matrix: Screened feature matrix of the subgroup
        bh_level: FDR level
        family_size: Candidate columns before screening; screened-out columns join the BH family at p = 1

    Returns:
        SubgroupDiscovery
    """
    design, model, aliased = _fit_with_refit(build_design(matrix), matrix.stratum)
    diagnostics = fit_diagnostics(model, design)
    coefficients = wald_risk_factors(model, design, family_size) if design.columns else []
    significant = [rf for rf in coefficients if rf.p_bh < bh_level]
    factors = extreme_levels(significant)
    logger.info(
        f"{matrix.stratum}: {len(factors)} risk factors from {len(design.columns)} columns "
        f"(omnibus chi2 {diagnostics.omnibus_chi2:.2f})",
        extra={"stage": "discovery", "subgroup": matrix.stratum},
    )
    return SubgroupDiscovery(
        subgroup=matrix.stratum,
        size=len(matrix.ids),
        n_cases=matrix.n_cases,
        model=model,
        design=design,
        diagnostics=diagnostics,
        coefficients=coefficients,
        factors=factors,
        aliased=aliased,
    )


def discover_risk_factors(matrices: Sequence[FeatureMatrix], bh_level: float = 0.05,
                          threads: int = 1) -> DiscoveryReport:
    """Run discovery on every subgroup; results keep the input order."""
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(lambda m: discover_subgroup(m, bh_level), matrices))
    return DiscoveryReport(bh_level=bh_level, subgroups=results)


def _sex_age(subgroup: str) -> tuple:
    sex, band = parse_stratum_key(subgroup)
    return sex.value.capitalize(), band.value


def diagnostics_table(report: DiscoveryReport) -> pd.DataFrame:
    rows = []
    for sub in report.subgroups:
        sex, age = _sex_age(sub.subgroup)
        d = sub.diagnostics
        rows.append({
            "sex": sex, "age": age, "size": sub.size, "chi2": d.omnibus_chi2, "df": d.omnibus_df,
            "p": d.omnibus_p, "minus2ll": d.minus2ll, "r2_cox_snell": d.r2_cox_snell,
            "r2_nagelkerke": d.r2_nagelkerke, "hl_chi2": d.hl_chi2, "hl_df": d.hl_df, "hl_p": d.hl_p,
        })
    return pd.DataFrame(rows, columns=DIAGNOSTIC_COLUMNS)


def risk_factor_table(report: DiscoveryReport) -> pd.DataFrame:
    """Reported factors, sorted by feature name then subgroup order."""
    rows = []
    for order, sub in enumerate(report.subgroups):
        sex, age = _sex_age(sub.subgroup)
        for rf in sub.factors:
            rows.append({
                "feature": rf.feature, "level": rf.level or "", "coding": rf.coding.value, "sex": sex,
                "age": age, "size": sub.size, "b": rf.b, "se": rf.se, "exp_b": rf.exp_b, "ci_low": rf.ci_low,
                "ci_high": rf.ci_high, "p_raw": rf.p_raw, "p_bh": rf.p_bh,
                "stars": significance_stars(rf.p_bh, FACTOR_STARS), "_order": order,
            })
    frame = pd.DataFrame(rows, columns=FACTOR_COLUMNS + ["_order"])
    frame = frame.sort_values(["feature", "_order"], kind="stable").drop(columns="_order")
    return frame.reset_index(drop=True)
