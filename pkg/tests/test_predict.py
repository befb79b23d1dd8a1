"""Tests for the cost-sensitive SVM, metrics, stratified folds and prediction experiments."""

import numpy as np
import pytest
from scipy.special import expit

from conftest import make_matrix
from src.core.config import SvmConfig
from src.core.errors import InsufficientDataError, UndefinedMetricError
from src.core.types import Disease
from src.predict.baselines import DEPRESSION_BASELINES, DIABETES_BASELINES, baseline_overlay, baselines_for
from src.predict.cv import cross_validate, stratified_kfold
from src.predict.experiments import (
    IN_SAMPLE, PLACEBO_COLUMNS, SWEEP_COLUMNS, PlaceboInput, column_masks, cost_sweep, design_arrays,
    factor_placebo_experiment, fold_feature_sets, roc_with_baselines,
)
from src.predict.metrics import ALL_ROW, METRICS, EvalReport, confusion_at, evaluate, rank_auc, roc_points
from src.predict.svm import sample_costs, svm_objective, train_cost_svm
from src.regress.logistic import build_design
from src.stats.hypothesis import mann_whitney

# tiny overlapping set: solvable to machine precision in a few thousand epochs
OVERLAP_X = np.array([[0.0, 1.0], [1.0, 0.5], [2.0, 2.0], [0.5, 0.2], [1.5, 1.0], [2.5, 0.3]])
OVERLAP_Y = np.array([1, 1, 1, 0, 0, 0])

FAST_SVM = SvmConfig(tolerance=0.1, max_passes=20)


def exact(cost: float = 1.0, regularization: float = 1.0) -> SvmConfig:
    return SvmConfig(positive_class_cost=cost, regularization=regularization, tolerance=1e-12, max_passes=50000)


class TestSvm:
    def test_separable_toy_set(self):
        """A linearly separable set is fitted with zero training error."""
        x = np.array([[2, 2], [3, 3], [2, 3], [-2, -2], [-3, -2], [-2, -3]], dtype=float)
        y = np.array([1, 1, 1, 0, 0, 0])
        model = train_cost_svm(x, y, exact())
        assert model.predict(x).tolist() == y.tolist()

    def test_cost_equals_duplication(self):
        """Cost c on each case matches duplicating each case c times."""
        c = 3
        weighted = train_cost_svm(OVERLAP_X, OVERLAP_Y, exact(cost=c))
        pos = OVERLAP_Y == 1
        x_dup = np.vstack([OVERLAP_X] + [OVERLAP_X[pos]] * (c - 1))
        y_dup = np.concatenate([OVERLAP_Y] + [OVERLAP_Y[pos]] * (c - 1))
        duplicated = train_cost_svm(x_dup, y_dup, exact(cost=1))
        costs = sample_costs(OVERLAP_Y, c)
        assert svm_objective(weighted, OVERLAP_X, OVERLAP_Y, costs, 1.0) == pytest.approx(
            svm_objective(duplicated, OVERLAP_X, OVERLAP_Y, costs, 1.0), abs=1e-8)
        assert duplicated.objective == pytest.approx(weighted.objective, abs=1e-8)
        assert np.array_equal(weighted.predict(OVERLAP_X), duplicated.predict(OVERLAP_X))

    def test_large_cost_forces_sensitivity(self):
        """With a very large case cost every case scores on the positive side."""
        x = np.arange(1.0, 7.0)[:, None]
        y = np.array([0, 1, 0, 1, 0, 1])
        model = train_cost_svm(x, y, SvmConfig(positive_class_cost=1000.0, tolerance=1e-6, max_passes=20000))
        assert model.predict(x)[y == 1].tolist() == [1, 1, 1]

    def test_doubling_regularization_never_lowers_objective(self):
        low = train_cost_svm(OVERLAP_X, OVERLAP_Y, exact(regularization=1.0))
        high = train_cost_svm(OVERLAP_X, OVERLAP_Y, exact(regularization=2.0))
        assert high.objective >= low.objective - 1e-9

    def test_trace_is_non_increasing(self):
        model = train_cost_svm(OVERLAP_X, OVERLAP_Y, SvmConfig(max_passes=30, tolerance=1e-9))
        assert all(b <= a for a, b in zip(model.objective_trace, model.objective_trace[1:]))
        assert model.objective == model.objective_trace[-1]

    def test_deterministic(self):
        a = train_cost_svm(OVERLAP_X, OVERLAP_Y, SvmConfig())
        b = train_cost_svm(OVERLAP_X, OVERLAP_Y, SvmConfig())
        assert np.array_equal(a.weights, b.weights) and a.bias == b.bias

    def test_single_class(self):
        with pytest.raises(InsufficientDataError):
            train_cost_svm(OVERLAP_X, np.zeros(6), SvmConfig())


class TestMetrics:
    def test_worked_auc(self):
        """Three of four case-control pairs concordant gives 0.75."""
        assert rank_auc([0.9, 0.4, 0.5, 0.1], [1, 1, 0, 0]) == pytest.approx(0.75)

    def test_auc_equals_mann_whitney_u(self):
        """AUC = U / (n1 n0) on random scores, ties included."""
        rng = np.random.default_rng(9)
        for _ in range(1000):
            n = int(rng.integers(4, 40))
            labels = rng.integers(0, 2, n)
            labels[:2] = [0, 1]
            scores = np.round(rng.normal(size=n), 1)
            u = mann_whitney(scores[labels == 1], scores[labels == 0]).statistic
            expected = u / ((labels == 1).sum() * (labels == 0).sum())
            assert rank_auc(scores, labels) == pytest.approx(expected, abs=1e-10)

    def test_separated_scores(self):
        """Perfect separation gives AUC 1 and unit sensitivity and specificity at the gap."""
        ev = evaluate([2.0, 1.0, -1.0, -2.0], [1, 1, 0, 0])
        assert ev.auc == 1.0 and ev.sensitivity == 1.0 and ev.specificity == 1.0

    def test_metric_identities(self):
        """Accuracy and F1 follow from the confusion counts."""
        rng = np.random.default_rng(4)
        for _ in range(200):
            labels = np.r_[0, 1, rng.integers(0, 2, 30)]
            scores = rng.normal(size=labels.size)
            ev = evaluate(scores, labels)
            c = ev.confusion
            assert c.n == labels.size
            assert ev.accuracy == pytest.approx((c.tp + c.tn) / c.n)
            if ev.ppv + ev.sensitivity > 0:
                assert ev.f1 == pytest.approx(2 * ev.ppv * ev.sensitivity / (ev.ppv + ev.sensitivity))

    def test_threshold_is_inclusive(self):
        c = confusion_at([0.0, -0.1], [1, 0])
        assert (c.tp, c.tn) == (1, 1)

    def test_empty_denominators_are_zero(self):
        """No predicted positives leaves PPV and F1 at 0."""
        ev = evaluate([-1.0, -2.0, -3.0], [1, 0, 0])
        assert ev.ppv == 0.0 and ev.f1 == 0.0

    def test_single_class_auc_undefined(self):
        with pytest.raises(UndefinedMetricError):
            rank_auc([0.1, 0.2], [1, 1])
        with pytest.raises(UndefinedMetricError):
            roc_points([0.1, 0.2], [0, 0])


class TestRoc:
    def test_endpoints_and_area(self):
        """The curve runs from (0,0) to (1,1) and its trapezoid area is the rank AUC."""
        rng = np.random.default_rng(12)
        labels = np.r_[np.ones(30), np.zeros(50)].astype(int)
        scores = np.round(rng.normal(size=80) + labels, 1)
        points = roc_points(scores, labels)
        assert points[0] == (0.0, 0.0) and points[-1] == (1.0, 1.0)
        fpr, tpr = np.array(points).T
        assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)
        assert np.trapezoid(tpr, fpr) == pytest.approx(rank_auc(scores, labels), abs=1e-12)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(13)
        labels = rng.integers(0, 2, 60)
        labels[:2] = [0, 1]
        scores = rng.normal(size=60)
        assert roc_points(scores, labels) == roc_points(np.exp(3 * scores) + 7, labels)

    def test_baseline_overlays(self):
        """Overlays carry each published method as (1 - specificity, sensitivity)."""
        roc, overlay = roc_with_baselines([0.3, 0.1], [1, 0], Disease.DEPRESSION)
        assert set(roc["sample"]) == {IN_SAMPLE}
        code = overlay[overlay["method"] == "Diagnostic Code"].iloc[0]
        assert (code["fpr"], code["tpr"]) == pytest.approx((0.24, 0.77))
        indian = baseline_overlay(Disease.TYPE2_DIABETES).set_index("method").loc["Indian Risk Score"]
        assert (indian["fpr"], indian["tpr"]) == pytest.approx((0.813, 0.961))

    def test_unknown_disease_has_empty_overlay(self):
        roc, overlay = roc_with_baselines([0.3, 0.1], [1, 0], "influenza")
        assert overlay.empty and len(roc) == 3

    def test_baseline_catalog_sizes(self):
        assert len(DEPRESSION_BASELINES) == 4
        assert len(DIABETES_BASELINES) == 7
        assert baselines_for("depression") == DEPRESSION_BASELINES


class TestFolds:
    def test_divisible_classes(self):
        """100 cases and 900 controls give exactly 10/90 per fold."""
        labels = np.r_[np.ones(100), np.zeros(900)].astype(int)
        folds = stratified_kfold(labels, 10, seed=1)
        for f in range(10):
            assert (labels[folds == f] == 1).sum() == 10
            assert (labels[folds == f] == 0).sum() == 90

    def test_pigeonhole_counts(self):
        """13 cases over 10 folds leaves one or two per fold, with equal fold sizes."""
        labels = np.r_[np.ones(13), np.zeros(87)].astype(int)
        folds = stratified_kfold(labels, 10, seed=2)
        cases = [(labels[folds == f] == 1).sum() for f in range(10)]
        assert set(cases) == {1, 2}
        assert np.bincount(folds).tolist() == [10] * 10

    def test_seed_determinism(self):
        labels = np.r_[np.ones(20), np.zeros(80)].astype(int)
        assert np.array_equal(stratified_kfold(labels, 5, 3), stratified_kfold(labels, 5, 3))
        assert not np.array_equal(stratified_kfold(labels, 5, 3), stratified_kfold(labels, 5, 4))

    def test_small_class_rejected(self):
        with pytest.raises(InsufficientDataError):
            stratified_kfold(np.r_[np.ones(5), np.zeros(50)].astype(int), 10)

    def test_cross_validation_is_seed_stable(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(120, 2))
        y = (x[:, 0] + rng.normal(size=120) > 0).astype(int)
        a = cross_validate(x, y, FAST_SVM, k=5, seed=8)
        b = cross_validate(x, y, FAST_SVM, k=5, seed=8)
        assert a.aucs() == b.aucs()
        assert np.array_equal(a.scores, b.scores)
        assert len(a.evaluations) == 5

    def test_empty_column_mask_is_chance(self):
        """Training on no columns leaves a constant score and an AUC of 0.5 in every fold."""
        rng = np.random.default_rng(2)
        x = rng.normal(size=(100, 2))
        y = (x[:, 0] > 0).astype(int)
        folds = stratified_kfold(y, 5, 4)
        cv = cross_validate(x, y, FAST_SVM, folds=folds, columns=[np.zeros(2, dtype=bool)] * 5)
        assert cv.aucs() == [0.5] * 5
        with pytest.raises(InsufficientDataError):
            cross_validate(x, y, FAST_SVM, folds=folds, columns=[np.ones(2, dtype=bool)] * 4)


class TestEvalReport:
    def test_table_cells_and_all_row(self):
        """Cells read mean±sd to three decimals and the All row averages subgroup means."""
        report = EvalReport()
        report.add("female:15-24", [evaluate([1, -1, 1, -1], [1, 0, 0, 1]), evaluate([1, -1], [1, 0])])
        report.add("male:15-24", [evaluate([1, -1], [1, 0])])
        table = report.table({"female:15-24": "Female 15-24"})
        assert list(table.columns) == ["subgroup", *METRICS]
        assert list(table["subgroup"]) == ["Female 15-24", "male:15-24", ALL_ROW]
        assert table.loc[0, "auc"] == "0.750±0.354"
        assert table.loc[1, "auc"] == "1.000±0.000"
        assert table.loc[2, "auc"] == "0.875±0.177"


def _signal_matrix(seed: int, n: int = 200):
    rng = np.random.default_rng(seed)
    signal = rng.integers(1, 6, n)
    labels = (rng.uniform(size=n) < expit(1.5 * (signal - 3))).astype(int)
    columns = {"Signal": signal, "Noise": rng.integers(1, 6, n), "Static": rng.integers(1, 6, n)}
    return make_matrix(columns, labels, stratum=f"female:{seed}")


class TestExperiments:
    def test_single_cost_grid(self):
        """A one-point grid selects that cost and has no comparison p-value."""
        m = _signal_matrix(1)
        x, y = m.codes.to_numpy(dtype=float), m.labels
        sweep = cost_sweep(x, y, [1.0], FAST_SVM, k=5, seed=3, subgroup="s")
        assert sweep.best_cost == 1.0
        table = sweep.table()
        assert list(table.columns) == SWEEP_COLUMNS
        assert table["p_vs_best"].isna().all() and table["optimal"].tolist() == [True]

    def test_sweep_marks_first_best(self):
        m = _signal_matrix(2)
        sweep = cost_sweep(m.codes.to_numpy(dtype=float), m.labels, [1.0, 2.0, 4.0], FAST_SVM, k=5, seed=1,
                           threads=3)
        means = [p.mean_auc for p in sweep.points]
        assert sweep.best_index == int(np.argmax(means))
        assert sweep.points[sweep.best_index].p_vs_best is None
        assert len(sweep.best_cv.evaluations) == 5

    def test_factors_beat_placebos(self):
        """Signal features outperform noise placebos across subgroups."""
        items = [PlaceboInput(matrix=_signal_matrix(s), factors=["Signal"]) for s in range(6)]
        report = factor_placebo_experiment(items, FAST_SVM, k=5, seed=0, threads=2)
        assert len(report.rows) == 6
        assert all(r.factor_auc > r.placebo_auc for r in report.rows)
        assert report.p_factors_vs_placebos < 0.05
        assert 0.35 <= np.mean([r.placebo_auc for r in report.rows]) <= 0.65
        table = report.table({})
        assert list(table.columns) == PLACEBO_COLUMNS
        assert table.iloc[-1]["subgroup"] == "All"
        assert table.iloc[-1]["n_placebos"] == 12

    def test_subgroups_without_placebos_skipped(self):
        m = _signal_matrix(3).select(["Signal"])
        report = factor_placebo_experiment([PlaceboInput(matrix=m, factors=["Signal"])], FAST_SVM, k=5)
        assert report.rows == [] and report.p_factors_vs_placebos is None

    def test_fold_screening_ignores_held_out_rows(self):
        """Each fold's selection depends on its training rows only."""
        m = _signal_matrix(4, n=300)
        folds = stratified_kfold(m.labels, 5, 6)
        sets = fold_feature_sets(m, folds, 0.1)
        assert len(sets) == 5
        assert all("Signal" in s for s in sets)
        noise = m.codes["Noise"].to_numpy().copy()
        noise[folds == 0] = m.labels[folds == 0] * 4 + 1
        columns = {name: m.codes[name].to_numpy() for name in m.feature_names}
        leaked = make_matrix({**columns, "Noise": noise}, m.labels, specs=m.specs, stratum=m.stratum)
        assert fold_feature_sets(leaked, folds, 0.1)[0] == sets[0]
        assert all("Signal" not in s for s in fold_feature_sets(m, folds, 0.1, ["Noise", "Static"]))

    def test_column_masks_follow_feature_names(self):
        m = _signal_matrix(5)
        x, _ = design_arrays(m)
        masks = column_masks(build_design(m), [["Signal"], [], ["Noise", "Static"]])
        assert [mask.tolist() for mask in masks] == [[True, False, False], [False] * 3, [False, True, True]]
        assert all(mask.size == x.shape[1] for mask in masks)
