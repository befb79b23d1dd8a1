"""Univariate chi-squared screening of coded features against the label."""

import logging
from typing import List, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy import stats

from ..core.errors import InsufficientDataError
from ..stats.multiple import significance_stars
from .collinearity import contingency_table
from .matrix import FeatureMatrix
from .taxonomy import FeatureCoding, FeatureSpec

logger = logging.getLogger(__name__)

SELECTION_STARS = (0.1, 0.05, 0.01, 0.001)
MIN_EXPECTED = 5.0
MAX_SPARSE_FRACTION = 0.2
TOTAL_ROW = "Total Selected"


class ScreenRow(BaseModel):
    """Screening outcome of one feature."""
    feature: str
    chi2: float = Field(..., ge=0.0)
    df: int = Field(..., ge=0)
    p_value: float = Field(..., ge=0.0, le=1.0)
    n_levels: int
    merged: bool = Field(default=False, description="Levels were merged to satisfy the expected-count rule")
    selected: bool


class ScreenResult(BaseModel):
    """Screening rows plus the matrix with merged codings carried forward."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    alpha: float
    rows: List[ScreenRow]
    matrix: FeatureMatrix

    @property
    def selected(self) -> List[str]:
        return [r.feature for r in self.rows if r.selected]

    def selected_matrix(self) -> FeatureMatrix:
        return self.matrix.select(self.selected)


def _sparse(table: np.ndarray) -> bool:
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / table.sum()
    return float((expected < MIN_EXPECTED).mean()) > MAX_SPARSE_FRACTION


def merge_smallest_level(codes: np.ndarray, spec: FeatureSpec) -> Tuple[np.ndarray, FeatureSpec]:
    """One merge step: ordinal folds its smallest level into the smaller neighbour, nominal into control."""
    base = 1 if spec.coding == FeatureCoding.ORDINAL else 0
    n = len(spec.levels)
    sizes = np.bincount(codes - base, minlength=n)
    levels = list(spec.levels)

    if spec.coding == FeatureCoding.ORDINAL:
        present = [i for i in range(n) if sizes[i] > 0]
        s = min(present, key=lambda i: (sizes[i], i))
        pos = present.index(s)
        neighbours = [present[p] for p in (pos - 1, pos + 1) if 0 <= p < len(present)]
        t = min(neighbours, key=lambda i: (sizes[i], i))
        lo, hi = min(s, t), max(s, t)
        levels[lo] = f"{levels[lo]}+{levels[hi]}"
        codes = np.where(codes == s + base, t + base, codes)
        codes = np.where(codes == hi + base, lo + base, codes)
        drop = hi
    else:
        control = levels.index(spec.control_category)
        candidates = [i for i in range(n) if i != control and sizes[i] > 0]
        s = min(candidates, key=lambda i: (sizes[i], i))
        codes = np.where(codes == s + base, control + base, codes)
        drop = s

    del levels[drop]
    codes = np.where(codes > drop + base, codes - 1, codes)
    return codes.astype(int), spec.model_copy(update={"levels": levels})


def screen_feature(codes: np.ndarray, labels: np.ndarray, spec: FeatureSpec,
                   alpha: float) -> Tuple[ScreenRow, np.ndarray, FeatureSpec]:
    """Chi-squared independence test of one feature against the label, merging sparse levels first."""
    merged = False
    table = contingency_table(codes, labels)
    while table.shape[0] >= 2 and _sparse(table):
        codes, spec = merge_smallest_level(codes, spec)
        merged = True
        table = contingency_table(codes, labels)

    if table.shape[0] < 2:
        row = ScreenRow(feature=spec.name, chi2=0.0, df=0, p_value=1.0, n_levels=table.shape[0],
                        merged=merged, selected=False)
        return row, codes, spec

    chi2, p, dof, _ = stats.chi2_contingency(table, correction=False)
    p = float(min(1.0, max(0.0, p)))
    row = ScreenRow(feature=spec.name, chi2=float(chi2), df=int(dof), p_value=p, n_levels=table.shape[0],
                    merged=merged, selected=p < alpha)
    return row, codes, spec


def screen_features(matrix: FeatureMatrix, alpha: float = 0.1) -> ScreenResult:
    """Keep features whose chi-squared p against the label is below ``alpha``.

    Args:
        matrix: Coded features of one stratum
        alpha: Screening level

    Returns:
        ScreenResult; its matrix carries any merged codings

    Raises:
        InsufficientDataError: If the stratum lacks cases or controls
    """
    labels = matrix.labels
    if labels.size == 0 or labels.min() == labels.max():
        raise InsufficientDataError(f"Screening {matrix.stratum} needs both cases and controls")

    rows: List[ScreenRow] = []
    current = matrix
    merged_names: List[str] = []
    for spec in matrix.specs:
        row, codes, coded = screen_feature(matrix.codes[spec.name].to_numpy(), labels, spec, alpha)
        rows.append(row)
        if row.merged:
            merged_names.append(spec.name)
            current = current.with_column(coded, codes)
            logger.info(f"Merged levels of {spec.name} to {len(coded.levels)} for the expected-count rule",
                        extra={"stage": "screening", "subgroup": matrix.stratum, "feature": spec.name})
    current = current.model_copy(update={"merged": merged_names})

    selected = sum(r.selected for r in rows)
    logger.info(f"Selected {selected} of {len(rows)} features in {matrix.stratum} at p < {alpha}",
                extra={"stage": "screening", "subgroup": matrix.stratum})
    return ScreenResult(alpha=alpha, rows=rows, matrix=current)


def selection_table(results: Sequence[Tuple[str, ScreenResult]]) -> pd.DataFrame:
    """Feature-by-subgroup star table with a selected-count row.

    Args:
        results: (column header, screening result) per subgroup, e.g. ``("Female 15-24 n=5660", result)``

    Returns:
        Frame with a ``feature`` column, one star column per subgroup and a final total row
    """
    headers = [h for h, _ in results]
    features = sorted({r.feature for _, res in results for r in res.rows})
    cells = {h: {r.feature: (significance_stars(r.p_value, SELECTION_STARS) if r.selected else "")
                 for r in res.rows} for h, res in results}
    frame = pd.DataFrame({"feature": features})
    for h in headers:
        frame[h] = [cells[h].get(f, "") for f in features]
    total = {"feature": TOTAL_ROW, **{h: str(len(res.selected)) for h, res in results}}
    return pd.concat([frame, pd.DataFrame([total])], ignore_index=True)
