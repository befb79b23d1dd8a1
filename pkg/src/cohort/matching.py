"""Demographically matched case-control sampling."""

import logging
from typing import Dict, List, Literal

import numpy as np
import pandas as pd

from ..core.errors import InputValidationError, ShortageError
from ..core.seeding import rng_for
from ..core.types import AgeBand, Disease, LabelValue, Sex, stratum_key

logger = logging.getLogger(__name__)

SAMPLE_COLUMNS = ["id", "sex", "age_band", "label", "match_group"]

ShortagePolicy = Literal["error", "trim"]


def _stratum_order() -> List[str]:
    return [stratum_key(sex, band) for sex in Sex for band in AgeBand]


def build_case_control_sample(
    pool: pd.DataFrame,
    disease: Disease,
    ratio: int,
    seed: int,
    shortage_policy: ShortagePolicy = "error",
) -> pd.DataFrame:
    """Match every case with ``ratio`` controls of the same sex and age band.

    Each stratum draws from its own generator, seeded by the master seed and the stratum key, so the result
    does not depend on the order in which strata are processed.

    Args:
        pool: Labeled shoppers (columns id, sex, age_band, label); excluded rows are ignored
        disease: Disease the labels refer to
        ratio: Controls per case
        seed: Master seed
        shortage_policy: ``error`` raises on any deficient stratum; ``trim`` drops random cases until it fits

    Returns:
        Sample rows (id, sex, age_band, label, match_group), each control tagged with its case's id

    Raises:
        ShortageError: When a stratum lacks controls and the policy is ``error``
    """
    if ratio < 1:
        raise InputValidationError("ratio must be at least 1")

    keys = pool["sex"].astype(str) + ":" + pool["age_band"].astype(str)
    cases_by: Dict[str, np.ndarray] = {}
    controls_by: Dict[str, np.ndarray] = {}
    for key in _stratum_order():
        in_stratum = keys == key
        cases_by[key] = np.sort(
            pool.loc[in_stratum & (pool["label"] == LabelValue.CASE.value), "id"].to_numpy(dtype=str)
        )
        controls_by[key] = np.sort(
            pool.loc[in_stratum & (pool["label"] == LabelValue.CONTROL.value), "id"].to_numpy(dtype=str)
        )

    deficient: Dict[str, Dict[str, int]] = {}
    for key in _stratum_order():
        n_cases, n_controls = len(cases_by[key]), len(controls_by[key])
        if n_cases and n_controls < ratio * n_cases:
            deficient[key] = {"cases": n_cases, "controls": n_controls, "needed": ratio * n_cases}
    if deficient and shortage_policy == "error":
        raise ShortageError(deficient)

    rows: List[Dict[str, str]] = []
    for key in _stratum_order():
        cases = cases_by[key]
        if len(cases) == 0:
            continue
        controls = controls_by[key]
        rng = rng_for(seed, "match", disease.value, key)
        if key in deficient:
            keep = len(controls) // ratio
            cases = np.sort(rng.choice(cases, size=keep, replace=False)) if keep else cases[:0]
            logger.warning(
                f"Trimmed {key} from {deficient[key]['cases']} to {keep} cases for lack of controls",
                extra={"stage": "matching", "subgroup": key},
            )
        drawn = rng.permutation(controls)[: ratio * len(cases)]
        sex, band = key.split(":", 1)
        for i, case_id in enumerate(cases):
            rows.append({"id": case_id, "sex": sex, "age_band": band, "label": LabelValue.CASE.value,
                         "match_group": case_id})
            for control_id in drawn[i * ratio:(i + 1) * ratio]:
                rows.append({"id": str(control_id), "sex": sex, "age_band": band,
                             "label": LabelValue.CONTROL.value, "match_group": case_id})

    sample = pd.DataFrame(rows, columns=SAMPLE_COLUMNS)
    n_cases = int((sample["label"] == LabelValue.CASE.value).sum())
    logger.info(
        f"Matched {n_cases} cases with {len(sample) - n_cases} controls at 1:{ratio}",
        extra={"stage": "matching", "disease": disease.value, "seed": seed},
    )
    return sample
