"""End-to-end pipeline: cohort, features, discovery, prediction and the report bundle."""

import logging
import platform
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional

import matplotlib
import numpy as np
import pandas as pd
import pydantic
import scipy
from pydantic import BaseModel, ConfigDict, Field

from .. import __version__
from ..cohort.catalog import DrugCatalog, load_catalog
from ..cohort.characteristics import cohort_characteristics, monthly_activity
from ..cohort.io import check_event_values, check_roster_values, check_study_year, read_events, read_roster
from ..cohort.labeling import label_cohort
from ..cohort.matching import build_case_control_sample
from ..cohort.subgroups import Subsample, partition_subgroups, subsample_table
from ..core.config import PipelineConfig, config_hash
from ..core.errors import InsufficientDataError, MissingInputError
from ..core.seeding import derive_seed
from ..core.storage import BundleWriter
from ..core.types import EventKind, LabelValue
from ..features.aggregate import aggregate_explicit
from ..features.collinearity import prune_collinear
from ..features.matrix import build_feature_matrix
from ..features.screening import ScreenResult, screen_features, selection_table
from ..features.taxonomy import Taxonomy, load_taxonomy
from ..predict.baselines import baseline_overlay
from ..predict.experiments import (
    IN_SAMPLE, OUT_OF_SAMPLE, CostSweep, PlaceboInput, PlaceboReport, column_masks, cost_sweep, design_arrays,
    factor_placebo_experiment, fold_feature_sets, fold_seed, in_sample_scores, roc_with_baselines,
)
from ..predict.cv import stratified_kfold
from ..predict.metrics import EvalReport
from ..regress.discovery import (
    DiscoveryReport, SubgroupDiscovery, diagnostics_table, discover_subgroup, risk_factor_table,
)
from ..regress.logistic import build_design, design_width
from ..synth.generator import generate_cohort
from .reports import rank_anova_table

logger = logging.getLogger(__name__)

TOOL_NAME = "riskmine"


class CohortInputs(BaseModel):
    """Events and roster ready for labeling."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    events: pd.DataFrame
    roster: pd.DataFrame
    catalog: DrugCatalog
    taxonomy: Taxonomy
    has_queries: bool
    synth_seed: Optional[int] = None


class SubgroupRun(BaseModel):
    """Feature and discovery stages of one subgroup."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    subsample: Subsample
    collinear: List[str] = Field(default_factory=list)
    screen: ScreenResult
    discovery: SubgroupDiscovery


class PredictionRun(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    subgroup: str
    sweep: CostSweep
    in_sample: np.ndarray
    labels: np.ndarray


class PipelineResult(BaseModel):
    """Where the bundle went and its headline numbers."""
    bundle: str
    subgroups: int
    factors: int
    all_auc: Optional[float] = None
    optimal_costs: Dict[str, float] = Field(default_factory=dict)


def check_inputs(config: PipelineConfig) -> None:
    """Fail before any output exists when required input files are absent.

    Raises:
        MissingInputError: For a missing file or when neither inputs nor a synth section are configured
    """
    paths = config.inputs
    if config.synth is None and not (paths.events_path and paths.roster_path):
        raise MissingInputError("Configure inputs.events_path and inputs.roster_path, or a synth section")
    required = [paths.catalog_path, paths.taxonomy_path]
    if config.synth is None:
        required += [paths.events_path, paths.roster_path]
    for p in required:
        if p and not Path(p).exists():
            raise MissingInputError(f"Input file not found: {p}")


def load_inputs(config: PipelineConfig) -> CohortInputs:
    """Generate a cohort or read and validate the configured files."""
    catalog = load_catalog(config.inputs.catalog_path)
    taxonomy = load_taxonomy(config.inputs.taxonomy_path, n_bins=config.n_bins)
    if config.synth is not None:
        cohort = generate_cohort(config.synth, config.effects, taxonomy, catalog, master_seed=config.seed)
        return CohortInputs(events=cohort.events, roster=cohort.roster, catalog=catalog, taxonomy=taxonomy,
                            has_queries=config.synth.emit_queries, synth_seed=cohort.seed)

    events = read_events(config.inputs.events_path)
    roster = read_roster(config.inputs.roster_path)
    check_event_values(events)
    check_study_year(events, config.window)
    check_roster_values(roster)
    has_queries = bool((events["kind"] == EventKind.QUERY.value).any())
    logger.info(f"Loaded {len(roster)} shoppers and {len(events)} events", extra={"stage": "inputs"})
    return CohortInputs(events=events, roster=roster, catalog=catalog, taxonomy=taxonomy, has_queries=has_queries)


def analyse_subgroup(sub: Subsample, sample: pd.DataFrame, explicit: pd.DataFrame, roster: pd.DataFrame,
                     taxonomy: Taxonomy, config: PipelineConfig) -> SubgroupRun:
    """Code, prune, screen and fit one subgroup."""
    labels = (sample.loc[sub.members, "label"] == LabelValue.CASE.value).to_numpy(dtype=int)
    matrix = build_feature_matrix(sub.key, sub.members, labels, explicit, roster, taxonomy, config.n_bins)
    matrix, collinear = prune_collinear(matrix, config.collinearity_threshold)
    screen = screen_features(matrix, config.screen_alpha)
    discovery = discover_subgroup(screen.selected_matrix(), config.bh_level, design_width(screen.matrix))
    return SubgroupRun(subsample=sub, collinear=collinear, screen=screen, discovery=discovery)


def predict_subgroup(screen: ScreenResult, config: PipelineConfig) -> Optional[PredictionRun]:
    """Cost sweep with in-fold screening plus in-sample scores at the optimal cost.

    Returns None when the subgroup cannot be predicted.
    """
    selected = screen.selected_matrix()
    stratum = selected.stratum
    if not selected.feature_names:
        logger.warning(f"No screened features in {stratum}; skipping prediction",
                       extra={"stage": "predict", "subgroup": stratum})
        return None
    design = build_design(screen.matrix)
    y = design.y.astype(int)
    seed = fold_seed(config.seed, stratum)
    try:
        folds = stratified_kfold(y, config.k_folds, seed)
        columns = column_masks(design, fold_feature_sets(screen.matrix, folds, config.screen_alpha))
        sweep = cost_sweep(design.x, y, config.effective_cost_grid(), config.svm, config.k_folds, seed, stratum,
                           folds=folds, columns=columns)
    except InsufficientDataError as e:
        logger.warning(f"Skipping prediction in {stratum}: {e}", extra={"stage": "predict", "subgroup": stratum})
        return None
    best = config.svm.model_copy(update={"positive_class_cost": sweep.best_cost})
    x_selected, _ = design_arrays(selected)
    return PredictionRun(subgroup=stratum, sweep=sweep, in_sample=in_sample_scores(x_selected, y, best), labels=y)


def _library_versions() -> Dict[str, str]:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "pydantic": pydantic.VERSION,
        "matplotlib": matplotlib.__version__,
    }


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """Run every stage and publish the report bundle atomically.

    Args:
        config: Pipeline configuration

    Returns:
        PipelineResult

    Raises:
        RiskmineError: From whichever stage failed; no bundle is written in that case
    """
    check_inputs(config)
    inputs = load_inputs(config)
    window, disease = config.window, config.disease

    labels = label_cohort(inputs.events, inputs.roster, inputs.catalog, window, disease)
    eligible = labels[labels["label"] != LabelValue.EXCLUDED.value].reset_index(drop=True)
    activity = monthly_activity(inputs.events, list(eligible["id"]), window)
    characteristics = cohort_characteristics(eligible, activity, include_queries=inputs.has_queries)

    match_seed = derive_seed(config.seed, "match")
    sample = build_case_control_sample(eligible, disease, config.ratio, match_seed, config.shortage_policy)
    retained, dropped = partition_subgroups(sample, config.power_threshold)
    if not retained:
        raise InsufficientDataError(f"No subsample reaches the power threshold {config.power_threshold}")

    member_ids = [i for sub in retained for i in sub.members]
    explicit = aggregate_explicit(inputs.events, inputs.taxonomy, window, member_ids).feature_values()
    roster = inputs.roster.assign(id=inputs.roster["id"].astype(str)).set_index("id")
    indexed_sample = sample.set_index("id")

    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        runs: List[SubgroupRun] = list(pool.map(
            lambda sub: analyse_subgroup(sub, indexed_sample, explicit, roster, inputs.taxonomy, config), retained
        ))
    discovery = DiscoveryReport(bh_level=config.bh_level, subgroups=[r.discovery for r in runs])
    selection = selection_table([(f"{r.subsample.label} n={r.subsample.size}", r.screen) for r in runs])

    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        predictions = [p for p in pool.map(lambda r: predict_subgroup(r.screen, config), runs)
                       if p is not None]
    row_labels = {r.subsample.key: f"{r.subsample.label} n={r.subsample.size}" for r in runs}
    evals = EvalReport()
    for p in predictions:
        evals.add(p.subgroup, p.sweep.best_cv.evaluations)
    sweep_table = pd.concat([p.sweep.table() for p in predictions], ignore_index=True) if predictions else \
        pd.DataFrame(columns=["subgroup", "cost", "mean_auc", "sd_auc", "p_vs_best", "optimal"])

    best_costs = {p.subgroup: p.sweep.best_cost for p in predictions}
    placebo_items = [
        PlaceboInput(matrix=r.screen.matrix, factors=r.discovery.factor_features,
                     cost=best_costs[r.subsample.key], alpha=config.screen_alpha)
        for r in runs if r.subsample.key in best_costs
    ]
    placebo = factor_placebo_experiment(placebo_items, config.svm, config.k_folds, config.seed, config.threads) \
        if placebo_items else PlaceboReport(rows=[])

    roc_frames: List[pd.DataFrame] = []
    overlay = baseline_overlay(disease)
    if predictions:
        pooled_y = np.concatenate([p.labels for p in predictions])
        for sample_name, scores in ((IN_SAMPLE, [p.in_sample for p in predictions]),
                                    (OUT_OF_SAMPLE, [p.sweep.best_cv.scores for p in predictions])):
            roc_frames.append(roc_with_baselines(np.concatenate(scores), pooled_y, disease, sample_name)[0])
    roc = pd.concat(roc_frames, ignore_index=True) if roc_frames else pd.DataFrame(columns=["sample", "fpr", "tpr"])

    rank_anova = rank_anova_table(eligible, activity, include_queries=inputs.has_queries)

    with BundleWriter(config.output_dir) as bundle:
        bundle.write_csv("selection_table.csv", selection)
        bundle.write_csv("diagnostics.csv", diagnostics_table(discovery))
        bundle.write_csv("risk_factors.csv", risk_factor_table(discovery))
        bundle.write_csv("eval_report.csv", evals.table(row_labels))
        bundle.write_csv("roc_points.csv", roc)
        bundle.write_csv("baseline_overlay.csv", overlay)
        bundle.write_csv("cost_sweep.csv", sweep_table)
        bundle.write_csv("placebo.csv", placebo.table(row_labels))
        bundle.write_csv("subsamples.csv", subsample_table(retained, dropped))
        bundle.write_csv("characteristics.csv", characteristics)
        bundle.write_csv("rank_anova.csv", rank_anova)
        if config.plots:
            from ..ui.plots import plot_cost_sweep, plot_roc
            bundle.write_with("roc.svg", lambda p: plot_roc(roc, overlay, p))
            bundle.write_with("cost_sweep.svg", lambda p: plot_cost_sweep(sweep_table, p))
        bundle.manifest.update({
            "tool": TOOL_NAME,
            "version": __version__,
            "disease": disease.value,
            "config_hash": config_hash(config),
            "libraries": _library_versions(),
            "seeds": {
                "master": config.seed,
                "synth": inputs.synth_seed,
                "match": match_seed,
                "folds": {p.subgroup: fold_seed(config.seed, p.subgroup) for p in predictions},
            },
        })

    all_auc = evals.all_row()["auc"][0] if evals.subgroups else None
    n_factors = sum(len(r.discovery.factors) for r in runs)
    logger.info(f"Pipeline finished: {len(runs)} subgroups, {n_factors} risk factors",
                extra={"stage": "pipeline", "disease": disease.value})
    return PipelineResult(bundle=str(config.output_dir), subgroups=len(runs), factors=n_factors, all_auc=all_auc,
                          optimal_costs=best_costs)
