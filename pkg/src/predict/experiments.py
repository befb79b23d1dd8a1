"""Cost sweep, factor-versus-placebo comparison and ROC curves."""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from ..core.config import SvmConfig
from ..core.errors import InsufficientDataError
from ..core.seeding import derive_seed
from ..features.matrix import FeatureMatrix
from ..features.screening import screen_feature
from ..regress.logistic import Design, build_design
from ..stats.hypothesis import wilcoxon_signed_rank
from .baselines import baseline_overlay
from .cv import CrossValidation, cross_validate, stratified_kfold
from .metrics import roc_points
from .svm import train_cost_svm

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["subgroup", "cost", "mean_auc", "sd_auc", "p_vs_best", "optimal"]
PLACEBO_COLUMNS = [
    "subgroup", "n_factors", "n_placebos", "factor_auc", "placebo_auc", "combined_auc", "p_factors_vs_placebos",
    "p_combined_vs_factors",
]
ROC_COLUMNS = ["sample", "fpr", "tpr"]
IN_SAMPLE = "in_sample"
OUT_OF_SAMPLE = "out_of_sample"


def design_arrays(matrix: FeatureMatrix) -> Tuple[np.ndarray, np.ndarray]:
    """Numeric (x, y) of a feature matrix using the regression coding."""
    design = build_design(matrix)
    return design.x, design.y.astype(int)


def fold_seed(seed: int, subgroup: str) -> int:
    return derive_seed(seed, "cv", subgroup)


def fold_feature_sets(matrix: FeatureMatrix, folds: np.ndarray, alpha: float,
                      candidates: Optional[Sequence[str]] = None) -> List[List[str]]:
    """Features passing the chi-squared screen on each fold's training rows.

    Held-out rows never reach the screen, so cross-validated AUCs carry no selection optimism.

    Args:
        matrix: Coded features of one subgroup
        folds: Fold index per row
        alpha: Screening level
        candidates: Features eligible for selection (default: all of the matrix)

    Returns:
        One list of selected feature names per fold, in matrix order
    """
    names = list(candidates) if candidates is not None else matrix.feature_names
    sets: List[List[str]] = []
    for f in range(int(folds.max()) + 1):
        train = folds != f
        labels = matrix.labels[train]
        chosen = []
        for name in names:
            row, _, _ = screen_feature(matrix.codes[name].to_numpy()[train], labels, matrix.spec(name), alpha)
            if row.selected:
                chosen.append(name)
        sets.append(chosen)
    return sets


def column_masks(design: Design, feature_sets: Sequence[Sequence[str]]) -> List[np.ndarray]:
    """Boolean design-column mask per fold for the given feature names."""
    features = np.asarray(design.features, dtype=object)
    return [np.isin(features, list(names)) for names in feature_sets]


def _wilcoxon_p(differences: Sequence[float]) -> Optional[float]:
    try:
        return wilcoxon_signed_rank(differences).p_value
    except InsufficientDataError:
        return None


class SweepPoint(BaseModel):
    cost: float
    aucs: List[float]
    p_vs_best: Optional[float] = Field(default=None, description="Wilcoxon p of the fold AUCs against the optimum")

    @property
    def mean_auc(self) -> float:
        return float(np.mean(self.aucs))

    @property
    def sd_auc(self) -> float:
        return float(np.std(self.aucs, ddof=1)) if len(self.aucs) > 1 else 0.0


class CostSweep(BaseModel):
    """Cross-validated AUC per cost; the optimum is the first cost with the largest mean."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    subgroup: str
    points: List[SweepPoint]
    best_index: int
    best_cv: CrossValidation

    @property
    def best_cost(self) -> float:
        return self.points[self.best_index].cost

    def table(self) -> pd.DataFrame:
        rows = [
            {"subgroup": self.subgroup, "cost": p.cost, "mean_auc": p.mean_auc, "sd_auc": p.sd_auc,
             "p_vs_best": p.p_vs_best, "optimal": i == self.best_index}
            for i, p in enumerate(self.points)
        ]
        return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def cost_sweep(x: np.ndarray, y: np.ndarray, cost_grid: Sequence[float], svm: SvmConfig, k: int = 10,
               seed: int = 0, subgroup: str = "", threads: int = 1, folds: Optional[np.ndarray] = None,
               columns: Optional[Sequence[np.ndarray]] = None) -> CostSweep:
    """Cross-validate every cost on the same folds and compare each against the best.

    Args:
        x: Design matrix
        y: 0/1 labels
        cost_grid: Positive-class costs, tried in order
        svm: Base SVM config; its positive_class_cost is replaced per grid point
        k: Folds
        seed: Fold seed
        subgroup: Name used in logs and tables
        threads: Grid points trained concurrently
        folds: Precomputed fold assignment (default: stratified folds from ``seed``)
        columns: Per-fold design-column masks, e.g. from in-fold screening

    Returns:
        CostSweep
    """
    if not cost_grid:
        raise InsufficientDataError("Cost grid is empty")
    if folds is None:
        folds = stratified_kfold(y, k, seed)

    def run(cost: float) -> CrossValidation:
        return cross_validate(x, y, svm.model_copy(update={"positive_class_cost": float(cost)}), folds=folds,
                              columns=columns)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        cvs = list(pool.map(run, cost_grid))

    means = [cv.mean_auc() for cv in cvs]
    best = int(np.argmax(means))
    best_aucs = np.array(cvs[best].aucs())
    points = [
        SweepPoint(cost=float(c), aucs=cv.aucs(),
                   p_vs_best=None if i == best else _wilcoxon_p(np.array(cv.aucs()) - best_aucs))
        for i, (c, cv) in enumerate(zip(cost_grid, cvs))
    ]
    logger.info(f"{subgroup}: optimal cost {points[best].cost:g} with mean AUC {means[best]:.3f}",
                extra={"stage": "cost_sweep", "subgroup": subgroup})
    return CostSweep(subgroup=subgroup, points=points, best_index=best, best_cv=cvs[best])


class PlaceboRow(BaseModel):
    subgroup: str
    n_factors: int
    n_placebos: int
    factor_auc: float
    placebo_auc: float
    combined_auc: float


class PlaceboReport(BaseModel):
    rows: List[PlaceboRow]
    p_factors_vs_placebos: Optional[float] = None
    p_combined_vs_factors: Optional[float] = None

    def table(self, labels: Dict[str, str]) -> pd.DataFrame:
        """Subgroup rows followed by an All row of means carrying the Wilcoxon p-values."""
        records = [{**r.model_dump(), "subgroup": labels.get(r.subgroup, r.subgroup)} for r in self.rows]
        if self.rows:
            records.append({
                "subgroup": "All",
                "n_factors": int(np.sum([r.n_factors for r in self.rows])),
                "n_placebos": int(np.sum([r.n_placebos for r in self.rows])),
                "factor_auc": float(np.mean([r.factor_auc for r in self.rows])),
                "placebo_auc": float(np.mean([r.placebo_auc for r in self.rows])),
                "combined_auc": float(np.mean([r.combined_auc for r in self.rows])),
                "p_factors_vs_placebos": self.p_factors_vs_placebos,
                "p_combined_vs_factors": self.p_combined_vs_factors,
            })
        return pd.DataFrame(records, columns=PLACEBO_COLUMNS)


class PlaceboInput(BaseModel):
    """One subgroup's candidate matrix, its risk-factor features and the cost to train with."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    matrix: FeatureMatrix = Field(..., description="Every candidate feature of the subgroup, before screening")
    factors: List[str]
    cost: float = 1.0
    alpha: float = Field(default=0.1, gt=0, lt=1, description="In-fold screening level for placebos")


def _placebo_row(item: PlaceboInput, svm: SvmConfig, k: int, seed: int) -> Optional[PlaceboRow]:
    matrix = item.matrix
    factors = [f for f in matrix.feature_names if f in set(item.factors)]
    placebos = [f for f in matrix.feature_names if f not in set(item.factors)]
    if not factors or not placebos:
        logger.warning(f"Skipping placebo comparison for {matrix.stratum}: {len(factors)} factors, "
                       f"{len(placebos)} placebos", extra={"stage": "placebo", "subgroup": matrix.stratum})
        return None
    config = svm.model_copy(update={"positive_class_cost": item.cost})
    folds = stratified_kfold(matrix.labels, k, fold_seed(seed, matrix.stratum))
    design = build_design(matrix)
    y = design.y.astype(int)
    screened = fold_feature_sets(matrix, folds, item.alpha, placebos)

    def auc(feature_sets: List[List[str]]) -> float:
        return cross_validate(design.x, y, config, folds=folds, columns=column_masks(design, feature_sets)).mean_auc()

    return PlaceboRow(subgroup=matrix.stratum, n_factors=len(factors), n_placebos=len(placebos),
                      factor_auc=auc([factors] * len(screened)), placebo_auc=auc(screened),
                      combined_auc=auc([factors + s for s in screened]))


def factor_placebo_experiment(items: Sequence[PlaceboInput], svm: SvmConfig, k: int = 10, seed: int = 0,
                              threads: int = 1) -> PlaceboReport:
    """Compare CV AUC of risk factors, placebo features and both, across subgroups.

    Placebos are the candidate features that are not risk factors; each fold keeps those passing the screen on
    its training rows. Subgroups lacking either set are skipped; the Wilcoxon p-values are None with fewer
    than 5 usable subgroups.
    """
    with ThreadPoolExecutor(max_workers=threads) as pool:
        rows = [r for r in pool.map(lambda it: _placebo_row(it, svm, k, seed), items) if r is not None]
    report = PlaceboReport(rows=rows)
    if rows:
        factor = np.array([r.factor_auc for r in rows])
        placebo = np.array([r.placebo_auc for r in rows])
        combined = np.array([r.combined_auc for r in rows])
        report.p_factors_vs_placebos = _wilcoxon_p(factor - placebo)
        report.p_combined_vs_factors = _wilcoxon_p(combined - factor)
        logger.info(f"Placebo experiment over {len(rows)} subgroups: factor AUC {factor.mean():.3f}, "
                    f"placebo AUC {placebo.mean():.3f}", extra={"stage": "placebo"})
    else:
        logger.warning("No subgroup has both risk factors and placebos", extra={"stage": "placebo"})
    return report


def in_sample_scores(x: np.ndarray, y: np.ndarray, svm: SvmConfig) -> np.ndarray:
    """Scores of a model trained and evaluated on the whole subgroup."""
    return train_cost_svm(x, y, svm).decision_function(x)


def roc_with_baselines(scores: Sequence[float], labels: Sequence[int], disease,
                       sample: str = IN_SAMPLE) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """ROC points labelled by sample, and the disease's published operating points."""
    points = roc_points(scores, labels)
    roc = pd.DataFrame([{"sample": sample, "fpr": f, "tpr": t} for f, t in points], columns=ROC_COLUMNS)
    return roc, baseline_overlay(disease)
