"""Case versus control characteristics (age, sex, monthly activity)."""

import logging
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from ..core.errors import InsufficientDataError
from ..core.types import EventKind, LabelValue, Sex, StudyWindow, TestResult
from ..stats.hypothesis import mann_whitney, pearson_chi2, welch_t_samples

logger = logging.getLogger(__name__)

CHARACTERISTIC_COLUMNS = [
    "variable", "cases", "controls", "test", "statistic", "df", "p_value", "n_cases", "n_controls",
]


def monthly_activity(events: pd.DataFrame, ids: List[str], window: StudyWindow) -> pd.DataFrame:
    """Mean monthly query and purchase counts per shopper over the study year.

    Drug purchases are not counted as shopping activity.

    Returns:
        Frame indexed by id with columns queries_per_month and purchases_per_month
    """
    start = pd.Timestamp(window.observation_start)
    end = pd.Timestamp(window.performance_end)
    in_year = events[(events["ts"] >= start) & (events["ts"] <= end) & events["drug_code"].isna()]
    counts = in_year.groupby(["id", "kind"]).size().unstack(fill_value=0) if len(in_year) else pd.DataFrame()
    months = float(window.months())
    out = pd.DataFrame(index=pd.Index(ids, name="id"))
    for kind, col in ((EventKind.QUERY.value, "queries_per_month"), (EventKind.PURCHASE.value, "purchases_per_month")):
        series = counts[kind] if kind in counts.columns else pd.Series(dtype=float)
        out[col] = series.reindex(out.index, fill_value=0).astype(float) / months
    return out


def _mean_sd(values: np.ndarray) -> str:
    sd = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return f"{values.mean():.2f}±{sd:.2f}"


def _row(variable: str, cases: str, controls: str, test: str, result: TestResult,
         n_cases: int, n_controls: int) -> Dict[str, object]:
    return {
        "variable": variable, "cases": cases, "controls": controls, "test": test,
        "statistic": result.statistic, "df": result.df, "p_value": result.p_value,
        "n_cases": n_cases, "n_controls": n_controls,
    }


def cohort_characteristics(labels: pd.DataFrame, activity: Optional[pd.DataFrame] = None,
                           include_queries: bool = True) -> pd.DataFrame:
    """Compare cases against all eligible controls.

    Args:
        labels: Labeled roster (id, sex, age_years, label)
        activity: Output of :func:`monthly_activity`, indexed by id
        include_queries: Emit the query row (off when the cohort carries no query events)

    Returns:
        One row per characteristic with the test used and its result
    """
    cases = labels[labels["label"] == LabelValue.CASE.value]
    controls = labels[labels["label"] == LabelValue.CONTROL.value]
    n1, n0 = len(cases), len(controls)
    rows: List[Dict[str, object]] = []

    def attempt(name: str, fn) -> None:
        try:
            rows.append(fn())
        except InsufficientDataError as e:
            logger.warning(f"Skipped characteristic {name}: {e}", extra={"stage": "characteristics"})

    a1 = cases["age_years"].to_numpy(dtype=float)
    a0 = controls["age_years"].to_numpy(dtype=float)
    attempt("age", lambda: _row("age", _mean_sd(a1), _mean_sd(a0), "welch_t", welch_t_samples(a1, a0), n1, n0))

    def female_row() -> Dict[str, object]:
        f1 = int((cases["sex"] == Sex.FEMALE.value).sum())
        f0 = int((controls["sex"] == Sex.FEMALE.value).sum())
        result = pearson_chi2([[f1, n1 - f1], [f0, n0 - f0]])
        return _row("percent_female", f"{100.0 * f1 / max(n1, 1):.2f}%", f"{100.0 * f0 / max(n0, 1):.2f}%",
                    "pearson_chi2", result, n1, n0)

    attempt("percent_female", female_row)

    if activity is not None:
        columns = ["purchases_per_month"]
        if include_queries:
            columns.insert(0, "queries_per_month")
        for col in columns:
            v1 = activity.loc[cases["id"], col].to_numpy(dtype=float)
            v0 = activity.loc[controls["id"], col].to_numpy(dtype=float)
            attempt(col, lambda v1=v1, v0=v0, col=col: _row(
                col, _mean_sd(v1), _mean_sd(v0), "mann_whitney", mann_whitney(v1, v0), n1, n0))

    return pd.DataFrame(rows, columns=CHARACTERISTIC_COLUMNS)
