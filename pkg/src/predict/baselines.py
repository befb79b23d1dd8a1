"""Published reference operating points for the ROC overlay."""

from typing import List, Optional

import pandas as pd
from pydantic import BaseModel, Field

from ..core.types import Disease

OVERLAY_COLUMNS = ["disease", "method", "fpr", "tpr", "auc"]


class Baseline(BaseModel):
    method: str
    disease: Disease
    sensitivity: float = Field(..., ge=0.0, le=1.0)
    specificity: float = Field(..., ge=0.0, le=1.0)
    auc: float = Field(..., ge=0.0, le=1.0)
    ppv: Optional[float] = None
    npv: Optional[float] = None

    @property
    def fpr(self) -> float:
        return 1.0 - self.specificity


_D = Disease.DEPRESSION
_T2 = Disease.TYPE2_DIABETES

# EMR-based depression detection on 427 primary care patients
DEPRESSION_BASELINES: List[Baseline] = [
    Baseline(method="Diagnostic Code", disease=_D, sensitivity=0.77, specificity=0.76, auc=0.77, ppv=0.76, npv=0.77),
    Baseline(method="Problem List", disease=_D, sensitivity=0.49, specificity=0.78, auc=0.63, ppv=0.68, npv=0.61),
    Baseline(method="Medication List", disease=_D, sensitivity=0.56, specificity=0.88, auc=0.72, ppv=0.83, npv=0.67),
    Baseline(method="Combination of All EMR Fields", disease=_D, sensitivity=0.25, specificity=0.96, auc=0.61,
             ppv=0.86, npv=0.57),
]

# Questionnaire risk scores on 4336 survey participants
DIABETES_BASELINES: List[Baseline] = [
    Baseline(method="Cambridge Risk Model", disease=_T2, sensitivity=0.422, specificity=0.795, auc=0.676),
    Baseline(method="Danish Risk Score", disease=_T2, sensitivity=0.551, specificity=0.721, auc=0.690),
    Baseline(method="Indian Risk Score", disease=_T2, sensitivity=0.961, specificity=0.187, auc=0.675),
    Baseline(method="Rotterdam Study", disease=_T2, sensitivity=0.188, specificity=0.904, auc=0.631),
    Baseline(method="Finnish Risk Score", disease=_T2, sensitivity=0.395, specificity=0.804, auc=0.665),
    Baseline(method="Thai Risk Score", disease=_T2, sensitivity=0.868, specificity=0.326, auc=0.662),
    Baseline(method="Chinese Risk Score", disease=_T2, sensitivity=0.842, specificity=0.398, auc=0.673),
]

BASELINES = {_D: DEPRESSION_BASELINES, _T2: DIABETES_BASELINES}


def baselines_for(disease) -> List[Baseline]:
    """Reference methods of a disease; empty for anything unknown."""
    try:
        return list(BASELINES[Disease(disease)])
    except ValueError:
        return []


def baseline_overlay(disease) -> pd.DataFrame:
    """Overlay points as (1 - specificity, sensitivity)."""
    rows = [
        {"disease": b.disease.value, "method": b.method, "fpr": b.fpr, "tpr": b.sensitivity, "auc": b.auc}
        for b in baselines_for(disease)
    ]
    return pd.DataFrame(rows, columns=OVERLAY_COLUMNS)
