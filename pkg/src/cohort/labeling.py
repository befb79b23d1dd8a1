"""Health-status labeling from prescription-drug purchases.

A shopper becomes a case when the first catalog drug for the disease is bought inside the performance period.
Any catalog drug bought before the performance period (pre-study or during observation) excludes the shopper.
"""

import logging
from datetime import date
from typing import Optional

import pandas as pd

from ..core.errors import InputValidationError
from ..core.types import Disease, EventKind, Label, LabelValue, Shopper, StudyWindow, age_band_for
from .catalog import DrugCatalog

logger = logging.getLogger(__name__)

REASON_PRE_STUDY = "pre_study_drug"
REASON_OBSERVATION = "observation_drug"

LABEL_COLUMNS = ["id", "sex", "age_years", "age_band", "label", "first_drug_date", "reason"]


def assess_health_status(shopper: Shopper, catalog: DrugCatalog, window: StudyWindow, disease: Disease) -> Label:
    """Label one shopper for one disease.

    Args:
        shopper: Shopper with a time-ordered event stream
        catalog: Drug catalog (both diseases)
        window: Study window
        disease: Disease to label

    Returns:
        Label with value case, control or excluded

    Raises:
        InputValidationError: On an unsorted stream, an empty catalog or an unknown drug code
    """
    if len(catalog) == 0:
        raise InputValidationError("Drug catalog is empty")
    if not shopper.is_sorted():
        raise InputValidationError(f"Events of shopper {shopper.id} are not sorted by timestamp")

    disease_codes = catalog.codes(disease)
    all_codes = catalog.codes()
    first_case_date: Optional[date] = None

    for event in shopper.events:
        if event.kind != EventKind.PURCHASE or event.drug_code is None:
            continue
        if event.drug_code not in all_codes:
            raise InputValidationError(f"Drug code {event.drug_code} of shopper {shopper.id} is not in the catalog")
        zone = window.zone(event.timestamp)
        if zone == "pre_study":
            return Label(value=LabelValue.EXCLUDED, disease=disease, first_drug_date=event.timestamp,
                         reason=REASON_PRE_STUDY)
        if zone == "observation":
            return Label(value=LabelValue.EXCLUDED, disease=disease, first_drug_date=event.timestamp,
                         reason=REASON_OBSERVATION)
        if zone == "performance" and first_case_date is None and event.drug_code in disease_codes:
            first_case_date = event.timestamp

    if first_case_date is not None:
        return Label(value=LabelValue.CASE, disease=disease, first_drug_date=first_case_date)
    return Label(value=LabelValue.CONTROL, disease=disease)


def _check_sorted(events: pd.DataFrame) -> None:
    if events.empty:
        return
    ordered = events.groupby("id", sort=False)["ts"].is_monotonic_increasing
    if not ordered.all():
        bad = sorted(ordered[~ordered].index.astype(str))[:5]
        raise InputValidationError(f"Events are not sorted by timestamp for shoppers: {', '.join(bad)}")


def label_cohort(
    events: pd.DataFrame,
    roster: pd.DataFrame,
    catalog: DrugCatalog,
    window: StudyWindow,
    disease: Disease,
) -> pd.DataFrame:
    """Label every roster shopper; the bulk form of :func:`assess_health_status`.

    Args:
        events: Event table with columns id, ts, kind, category, amount, drug_code
        roster: Roster with columns id, sex, age_years
        catalog: Drug catalog
        window: Study window
        disease: Disease to label

    Returns:
        One row per roster shopper with columns id, sex, age_years, age_band, label, first_drug_date, reason
    """
    if len(catalog) == 0:
        raise InputValidationError("Drug catalog is empty")
    _check_sorted(events)

    drugs = events.loc[events["drug_code"].notna() & (events["kind"] == EventKind.PURCHASE.value),
                       ["id", "ts", "drug_code"]]
    unknown = set(drugs["drug_code"]) - catalog.codes()
    if unknown:
        raise InputValidationError(f"Drug codes not in the catalog: {', '.join(sorted(unknown))}")

    obs_start = pd.Timestamp(window.observation_start)
    perf_start = pd.Timestamp(window.performance_start)
    perf_end = pd.Timestamp(window.performance_end)

    early = drugs[drugs["ts"] < perf_start]
    first_early = early.groupby("id")["ts"].min()

    in_perf = drugs[(drugs["ts"] >= perf_start) & (drugs["ts"] <= perf_end)
                    & drugs["drug_code"].isin(catalog.codes(disease))]
    first_case = in_perf.groupby("id")["ts"].min()

    out = roster[["id", "sex", "age_years"]].copy()
    out["age_band"] = [age_band_for(int(a)).value for a in out["age_years"]]
    out["label"] = LabelValue.CONTROL.value
    out["first_drug_date"] = pd.NaT
    out["reason"] = None

    case_mask = out["id"].isin(first_case.index)
    out.loc[case_mask, "label"] = LabelValue.CASE.value
    out.loc[case_mask, "first_drug_date"] = out.loc[case_mask, "id"].map(first_case)

    excl_mask = out["id"].isin(first_early.index)
    early_dates = out.loc[excl_mask, "id"].map(first_early)
    out.loc[excl_mask, "label"] = LabelValue.EXCLUDED.value
    out.loc[excl_mask, "first_drug_date"] = early_dates
    out.loc[excl_mask, "reason"] = [REASON_PRE_STUDY if d < obs_start else REASON_OBSERVATION for d in early_dates]

    counts = out["label"].value_counts()
    logger.info(
        f"Labeled {len(out)} shoppers for {disease.value}: "
        f"{counts.get('case', 0)} cases, {counts.get('control', 0)} controls, {counts.get('excluded', 0)} excluded",
        extra={"stage": "labeling", "disease": disease.value},
    )
    return out.reset_index(drop=True)[LABEL_COLUMNS]
