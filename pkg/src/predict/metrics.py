"""Threshold metrics, rank AUC and ROC points."""

from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from scipy import stats

from ..core.errors import InsufficientDataError, UndefinedMetricError

METRICS = ["sensitivity", "specificity", "ppv", "npv", "accuracy", "f1", "auc"]
ALL_ROW = "All"


class Confusion(BaseModel):
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


class Evaluation(BaseModel):
    """Metrics of one score vector at one threshold."""
    confusion: Confusion
    sensitivity: float = Field(..., ge=0.0, le=1.0)
    specificity: float = Field(..., ge=0.0, le=1.0)
    ppv: float = Field(..., ge=0.0, le=1.0)
    npv: float = Field(..., ge=0.0, le=1.0)
    accuracy: float = Field(..., ge=0.0, le=1.0)
    f1: float = Field(..., ge=0.0, le=1.0)
    auc: float = Field(..., ge=0.0, le=1.0)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def _check(scores: Sequence[float], labels: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(int)
    if s.shape != y.shape:
        raise InsufficientDataError(f"{s.size} scores for {y.size} labels")
    if not np.all(np.isfinite(s)):
        raise InsufficientDataError("Scores must be finite")
    return s, y


def rank_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """AUC as U/(n1*n0) with mid-ranks for tied scores.

    Raises:
        UndefinedMetricError: If only one class is present
    """
    s, y = _check(scores, labels)
    n1 = int((y == 1).sum())
    n0 = int((y == 0).sum())
    if n1 == 0 or n0 == 0:
        raise UndefinedMetricError("AUC is undefined for single-class labels")
    ranks = stats.rankdata(s)
    u = float(ranks[y == 1].sum()) - n1 * (n1 + 1) / 2.0
    return u / (n1 * n0)


def confusion_at(scores: Sequence[float], labels: Sequence[int], threshold: float = 0.0) -> Confusion:
    """Counts with ``score >= threshold`` predicted positive."""
    s, y = _check(scores, labels)
    pred = s >= threshold
    pos = y == 1
    return Confusion(
        tp=int((pred & pos).sum()), fp=int((pred & ~pos).sum()),
        tn=int((~pred & ~pos).sum()), fn=int((~pred & pos).sum()),
    )


def evaluate(scores: Sequence[float], labels: Sequence[int], threshold: float = 0.0) -> Evaluation:
    """Confusion-matrix metrics at ``threshold`` plus rank AUC.

    PPV, NPV and F1 are 0 when their denominators are empty.
    """
    c = confusion_at(scores, labels, threshold)
    sens = _ratio(c.tp, c.tp + c.fn)
    ppv = _ratio(c.tp, c.tp + c.fp)
    f1 = 2 * ppv * sens / (ppv + sens) if ppv + sens > 0 else 0.0
    return Evaluation(
        confusion=c,
        sensitivity=sens,
        specificity=_ratio(c.tn, c.tn + c.fp),
        ppv=ppv,
        npv=_ratio(c.tn, c.tn + c.fn),
        accuracy=_ratio(c.tp + c.tn, c.n),
        f1=f1,
        auc=rank_auc(scores, labels),
    )


def roc_points(scores: Sequence[float], labels: Sequence[int]) -> List[Tuple[float, float]]:
    """(fpr, tpr) at every distinct threshold, from (0, 0) to (1, 1)."""
    s, y = _check(scores, labels)
    n1 = int((y == 1).sum())
    n0 = int((y == 0).sum())
    if n1 == 0 or n0 == 0:
        raise UndefinedMetricError("ROC is undefined for single-class labels")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    tps = np.cumsum(y_sorted == 1)
    fps = np.cumsum(y_sorted == 0)
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s_sorted[1:] != s_sorted[:-1], True])
    points = [(0.0, 0.0)]
    points.extend((float(fps[i]) / n0, float(tps[i]) / n1) for i in ends)
    return points


def summarize_folds(rows: Sequence[Evaluation]) -> Dict[str, Tuple[float, float]]:
    """Mean and sample SD of each metric over folds."""
    out: Dict[str, Tuple[float, float]] = {}
    for m in METRICS:
        values = np.array([getattr(r, m) for r in rows], dtype=float)
        sd = float(values.std(ddof=1)) if values.size > 1 else 0.0
        out[m] = (float(values.mean()), sd)
    return out


class EvalReport(BaseModel):
    """Per-subgroup fold summaries and their All row."""
    subgroups: Dict[str, Dict[str, Tuple[float, float]]] = Field(default_factory=dict)

    def add(self, subgroup: str, folds: Sequence[Evaluation]) -> None:
        self.subgroups[subgroup] = summarize_folds(folds)

    def all_row(self) -> Dict[str, Tuple[float, float]]:
        """Mean and SD over the subgroup means."""
        out: Dict[str, Tuple[float, float]] = {}
        for m in METRICS:
            means = np.array([v[m][0] for v in self.subgroups.values()], dtype=float)
            sd = float(means.std(ddof=1)) if means.size > 1 else 0.0
            out[m] = (float(means.mean()), sd)
        return out

    def table(self, labels: Dict[str, str]) -> pd.DataFrame:
        """Table with ``mean±sd`` cells; ``labels`` maps subgroup keys to row names."""
        rows = []
        items = list(self.subgroups.items())
        if items:
            items.append((ALL_ROW, self.all_row()))
        for key, summary in items:
            row = {"subgroup": labels.get(key, key)}
            for m in METRICS:
                mean, sd = summary[m]
                row[m] = f"{mean:.3f}±{sd:.3f}"
            rows.append(row)
        return pd.DataFrame(rows, columns=["subgroup", *METRICS])
