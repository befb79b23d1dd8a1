"""Sex x age-band subsamples and power-based filtering."""

import logging
from typing import List, Tuple

import pandas as pd
from pydantic import BaseModel, Field

from ..core.types import AgeBand, LabelValue, Sex, stratum_key, stratum_label

logger = logging.getLogger(__name__)


class Subsample(BaseModel):
    """One (sex, age_band) cell of a matched sample."""
    sex: Sex
    age_band: AgeBand
    members: List[str] = Field(default_factory=list, description="Shopper ids, cases and controls")
    case_count: int = Field(..., ge=0)
    control_count: int = Field(..., ge=0)

    @property
    def size(self) -> int:
        return self.case_count + self.control_count

    @property
    def key(self) -> str:
        return stratum_key(self.sex, self.age_band)

    @property
    def label(self) -> str:
        return stratum_label(self.sex, self.age_band)


def partition_subgroups(sample: pd.DataFrame, power_threshold: int) -> Tuple[List[Subsample], List[Subsample]]:
    """Split a matched sample into subsamples and drop the underpowered ones.

    Args:
        sample: Matched sample with columns id, sex, age_band, label
        power_threshold: Minimum subsample size

    Returns:
        (retained, dropped), both in sex then age-band order
    """
    retained: List[Subsample] = []
    dropped: List[Subsample] = []
    for sex in Sex:
        for band in AgeBand:
            cell = sample[(sample["sex"] == sex.value) & (sample["age_band"] == band.value)]
            if cell.empty:
                continue
            cases = int((cell["label"] == LabelValue.CASE.value).sum())
            sub = Subsample(
                sex=sex,
                age_band=band,
                members=[str(i) for i in cell["id"]],
                case_count=cases,
                control_count=len(cell) - cases,
            )
            if sub.size >= power_threshold:
                retained.append(sub)
            else:
                dropped.append(sub)
                logger.warning(
                    f"Dropped {sub.label} (n={sub.size}) below power threshold {power_threshold}",
                    extra={"stage": "partition", "subgroup": sub.key},
                )
    logger.info(
        f"Retained {len(retained)} subsamples totalling {sum(s.size for s in retained)} shoppers",
        extra={"stage": "partition"},
    )
    return retained, dropped


def subsample_table(retained: List[Subsample], dropped: List[Subsample]) -> pd.DataFrame:
    """Subsample bookkeeping: one row per non-empty cell plus a retained total."""
    rows = []
    for sub, kept in [(s, True) for s in retained] + [(s, False) for s in dropped]:
        rows.append({
            "sex": sub.sex.value,
            "age_band": sub.age_band.value,
            "cases": sub.case_count,
            "controls": sub.control_count,
            "size": sub.size,
            "retained": kept,
        })
    frame = pd.DataFrame(rows, columns=["sex", "age_band", "cases", "controls", "size", "retained"])
    order = {stratum_key(s, b): i for i, (s, b) in enumerate((s, b) for s in Sex for b in AgeBand)}
    # retained/dropped interleave in stratum order
    if not frame.empty:
        frame["_order"] = [order[f"{s}:{b}"] for s, b in zip(frame["sex"], frame["age_band"])]
        frame = frame.sort_values("_order").drop(columns="_order").reset_index(drop=True)
    total = {
        "sex": "total", "age_band": "", "cases": sum(s.case_count for s in retained),
        "controls": sum(s.control_count for s in retained), "size": sum(s.size for s in retained),
        "retained": True,
    }
    return pd.concat([frame, pd.DataFrame([total])], ignore_index=True)
