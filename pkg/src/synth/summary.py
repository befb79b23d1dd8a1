"""Per-stratum activity summary in the mean±SD layout."""

from typing import Dict, List

import numpy as np
import pandas as pd

from ..cohort.characteristics import monthly_activity
from ..core.errors import InsufficientDataError
from ..core.types import AgeBand, Sex, StudyWindow, age_band_for


def _sd(values: np.ndarray) -> float:
    return float(values.std(ddof=1)) if values.size > 1 else 0.0


def activity_statistics(events: pd.DataFrame, roster: pd.DataFrame,
                        window: StudyWindow = StudyWindow()) -> pd.DataFrame:
    """Mean and SD across shoppers of the per-shopper monthly query and purchase counts.

    Returns:
        One row per non-empty (sex, age_band) with n, query_mean, query_sd, purchase_mean, purchase_sd
    """
    if roster.empty:
        raise InsufficientDataError("Cannot summarize an empty cohort")
    activity = monthly_activity(events, [str(i) for i in roster["id"]], window)
    bands = roster["age_years"].map(lambda a: age_band_for(int(a)).value)
    rows: List[Dict[str, object]] = []
    for sex in Sex:
        for band in AgeBand:
            mask = ((roster["sex"] == sex.value) & (bands == band.value)).to_numpy()
            if not mask.any():
                continue
            q = activity["queries_per_month"].to_numpy()[mask]
            p = activity["purchases_per_month"].to_numpy()[mask]
            rows.append({
                "sex": sex.value, "age_band": band.value, "n": int(mask.sum()),
                "query_mean": float(q.mean()), "query_sd": _sd(q),
                "purchase_mean": float(p.mean()), "purchase_sd": _sd(p),
            })
    return pd.DataFrame(rows, columns=["sex", "age_band", "n", "query_mean", "query_sd", "purchase_mean",
                                       "purchase_sd"])


def emit_summary(events: pd.DataFrame, roster: pd.DataFrame, window: StudyWindow = StudyWindow()) -> pd.DataFrame:
    """Summary table with one row per (measure, age band) and ``mean±sd`` cells per sex.

    Cells of empty strata are blank.
    """
    stats = activity_statistics(events, roster, window)
    rows = []
    for measure, prefix in (("queries", "query"), ("purchases", "purchase")):
        for band in AgeBand:
            row = {"measure": measure, "age": band.value}
            for sex in Sex:
                hit = stats[(stats["sex"] == sex.value) & (stats["age_band"] == band.value)]
                row[sex.value] = (
                    f"{hit[f'{prefix}_mean'].iloc[0]:.2f}±{hit[f'{prefix}_sd'].iloc[0]:.2f}" if len(hit) else ""
                )
            rows.append(row)
    return pd.DataFrame(rows, columns=["measure", "age", *[s.value for s in Sex]])
