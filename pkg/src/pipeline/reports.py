"""Report tables that combine several stages, and reading a committed bundle back."""

import logging
from pathlib import Path
from typing import Any, Dict, List

import pandas as pd

from ..core.errors import InsufficientDataError, MissingInputError
from ..core.storage import MANIFEST_NAME, read_manifest
from ..core.types import AgeBand
from ..stats.hypothesis import scheirer_ray_hare

logger = logging.getLogger(__name__)

RANK_ANOVA_COLUMNS = ["measure", "source", "ss", "df", "ms_total", "h", "p_value"]
RANK_ANOVA_BANDS = [b.value for b in AgeBand if b != AgeBand.A65_74]
SOURCE_NAMES = {"A": "sex", "B": "age", "AxB": "sex_x_age"}

BUNDLE_FILES = [
    "selection_table.csv",
    "diagnostics.csv",
    "risk_factors.csv",
    "eval_report.csv",
    "roc_points.csv",
    "baseline_overlay.csv",
    "cost_sweep.csv",
    "placebo.csv",
    "subsamples.csv",
    "characteristics.csv",
    "rank_anova.csv",
]


def rank_anova_table(labels: pd.DataFrame, activity: pd.DataFrame, include_queries: bool = True) -> pd.DataFrame:
    """Scheirer-Ray-Hare of monthly activity by sex x age band over ages 15-64.

    Args:
        labels: Shoppers with columns id, sex, age_band
        activity: Monthly activity indexed by id
        include_queries: Analyse queries as well as purchases

    Returns:
        Rows per (measure, source); a measure whose design has empty cells is skipped
    """
    subset = labels[labels["age_band"].isin(RANK_ANOVA_BANDS)]
    measures = [("purchases", "purchases_per_month")]
    if include_queries:
        measures.insert(0, ("queries", "queries_per_month"))
    rows: List[Dict[str, Any]] = []
    for measure, column in measures:
        values = activity.loc[subset["id"], column].to_numpy(dtype=float)
        try:
            results = scheirer_ray_hare(values, subset["sex"].to_numpy(), subset["age_band"].to_numpy())
        except InsufficientDataError as e:
            logger.warning(f"Skipped rank ANOVA of {measure}: {e}", extra={"stage": "rank_anova"})
            continue
        for res in results:
            rows.append({
                "measure": measure, "source": SOURCE_NAMES[res.auxiliary["source"]], "ss": res.auxiliary["SS"],
                "df": res.df, "ms_total": res.auxiliary["MS_total"], "h": res.statistic, "p_value": res.p_value,
            })
    return pd.DataFrame(rows, columns=RANK_ANOVA_COLUMNS)


def summarize_bundle(bundle: str | Path) -> Dict[str, Any]:
    """Headline numbers of a committed bundle.

    Raises:
        MissingInputError: If the directory holds no manifest
    """
    path = Path(bundle)
    if not (path / MANIFEST_NAME).exists():
        raise MissingInputError(f"No report bundle at {path}")
    manifest = read_manifest(path)
    subsamples = pd.read_csv(path / "subsamples.csv", dtype={"age_band": str})
    factors = pd.read_csv(path / "risk_factors.csv")
    evals = pd.read_csv(path / "eval_report.csv")
    sweep = pd.read_csv(path / "cost_sweep.csv")

    all_auc = None
    all_row = evals[evals["subgroup"] == "All"]
    if len(all_row):
        all_auc = float(str(all_row["auc"].iloc[0]).split("±")[0])
    optimal = sweep[sweep["optimal"].astype(bool)]
    return {
        "disease": manifest.get("disease"),
        "subgroups": int((subsamples["retained"].astype(bool) & (subsamples["sex"] != "total")).sum()),
        "factors": int(len(factors)),
        "all_auc": all_auc,
        "optimal_costs": {str(r.subgroup): float(r.cost) for r in optimal.itertuples()},
        "config_hash": manifest.get("config_hash"),
    }
