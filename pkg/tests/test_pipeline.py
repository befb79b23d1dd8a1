"""End-to-end pipeline tests on generated cohorts."""

import pandas as pd
import pytest

from src.core.config import PipelineConfig, SvmConfig
from src.core.errors import InsufficientDataError, MissingInputError
from src.core.storage import read_manifest
from src.pipeline.orchestrator import run_pipeline
from src.pipeline.reports import BUNDLE_FILES, summarize_bundle
from src.stats.hypothesis import wilcoxon_signed_rank
from src.synth.models import GeneratorConfig, PlantedEffect

FAST_SVM = SvmConfig(tolerance=0.1, max_passes=20)


def small_config(out, **updates) -> PipelineConfig:
    base = {
        "ratio": 4,
        "power_threshold": 250,
        "k_folds": 3,
        "cost_grid": [1.0, 4.0],
        "svm": FAST_SVM,
        "threads": 2,
        "plots": False,
        "shortage_policy": "trim",
        "output_dir": str(out),
        "synth": GeneratorConfig(n_shoppers=2000, seed=17, emit_queries=False,
                                 prevalence={"depression": 0.2, "type2_diabetes": 0.1}),
        "effects": [
            PlantedEffect(feature_name="Alcohol Preference", coefficient=1.5, level="baijiu"),
            PlantedEffect(feature_name="Snacks", coefficient=0.4),
        ],
    }
    return PipelineConfig(**{**base, **updates})


class TestRunPipeline:
    def test_bundle_contents(self, tmp_path):
        """A run publishes every report file plus a manifest."""
        result = run_pipeline(small_config(tmp_path / "bundle", plots=True))
        bundle = tmp_path / "bundle"
        for name in BUNDLE_FILES:
            assert (bundle / name).exists(), name
        manifest = read_manifest(bundle)
        assert manifest["tool"] == "riskmine"
        assert manifest["disease"] == "depression"
        assert sorted(manifest["files"]) == sorted(BUNDLE_FILES + ["cost_sweep.svg", "roc.svg"])
        assert (bundle / "roc.svg").read_text().lstrip().startswith("<?xml")
        assert result.subgroups >= 1

        summary = summarize_bundle(bundle)
        assert summary["subgroups"] == result.subgroups
        assert summary["factors"] == result.factors
        assert summary["all_auc"] == pytest.approx(result.all_auc, abs=5e-4)

    def test_fixed_seed_is_reproducible(self, tmp_path):
        """Two runs with the same seed write byte-identical report files."""
        run_pipeline(small_config(tmp_path / "a"))
        run_pipeline(small_config(tmp_path / "b", threads=1))
        assert read_manifest(tmp_path / "a")["files"] == read_manifest(tmp_path / "b")["files"]

    def test_missing_inputs_write_nothing(self, tmp_path):
        config = PipelineConfig(output_dir=str(tmp_path / "bundle"),
                                inputs={"events_path": str(tmp_path / "e.jsonl"),
                                        "roster_path": str(tmp_path / "r.csv")})
        with pytest.raises(MissingInputError):
            run_pipeline(config)
        assert not (tmp_path / "bundle").exists()

    def test_unreachable_threshold(self, tmp_path):
        """No subsample above the power threshold fails without a bundle."""
        with pytest.raises(InsufficientDataError):
            run_pipeline(small_config(tmp_path / "bundle", power_threshold=100000))
        assert not (tmp_path / "bundle").exists()


# Ten persona effects, independent of each other and of shopping volume; magnitudes from published B values.
PLANTED = [
    PlantedEffect(feature_name="Alcohol Preference", coefficient=2.153, level="baijiu"),
    PlantedEffect(feature_name="Tea Preference", coefficient=0.9, level="oolong"),
    PlantedEffect(feature_name="Sports Preference", coefficient=-0.8, level="fitness"),
    PlantedEffect(feature_name="Coffee Preference", coefficient=0.6, level="instant"),
    PlantedEffect(feature_name="Financial Status", coefficient=-0.483),
    PlantedEffect(feature_name="Body Weight", coefficient=0.451),
    PlantedEffect(feature_name="Income Level", coefficient=0.35),
    PlantedEffect(feature_name="Credit Score", coefficient=-0.25),
    PlantedEffect(feature_name="Added & Redeemed Coupons", coefficient=-0.2),
    PlantedEffect(feature_name="Posted Positive Reviews", coefficient=0.15),
]
REPLICATES = 20


def replicate_config(out, seed: int, effects) -> PipelineConfig:
    """20,000 shoppers at 5% prevalence matched 1:19."""
    return PipelineConfig(
        ratio=19, k_folds=5, cost_grid=[1.0, 19.0], svm=FAST_SVM, threads=4, plots=False, seed=seed,
        shortage_policy="trim", output_dir=str(out),
        synth=GeneratorConfig(n_shoppers=20000, seed=seed, emit_queries=False,
                              prevalence={"depression": 0.05, "type2_diabetes": 0.10}),
        effects=effects,
    )


def run_replicates(root, effects):
    runs = []
    for seed in range(REPLICATES):
        out = root / f"seed{seed}"
        result = run_pipeline(replicate_config(out, seed, effects))
        factors = pd.read_csv(out / "risk_factors.csv", keep_default_na=False)
        placebo = pd.read_csv(out / "placebo.csv")
        runs.append((result, factors, placebo[placebo["subgroup"] != "All"]))
    return runs


def is_planted(row) -> bool:
    for effect in PLANTED:
        if row["feature"] == effect.feature_name and row["level"] == (effect.level or ""):
            return (row["b"] > 0) == (effect.coefficient > 0)
    return False


@pytest.mark.slow
class TestRecovery:
    @pytest.fixture(scope="class")
    def planted_runs(self, tmp_path_factory):
        return run_replicates(tmp_path_factory.mktemp("planted"), PLANTED)

    @pytest.fixture(scope="class")
    def null_runs(self, tmp_path_factory):
        return run_replicates(tmp_path_factory.mktemp("null"), [])

    def test_planted_effects_recovered(self, planted_runs):
        """At least 80% of planted effects come back with the right sign at p_BH < 0.05."""
        hits = 0
        for _, factors, _ in planted_runs:
            assert (factors["p_bh"] < 0.05).all()
            correct = factors[factors.apply(is_planted, axis=1)] if len(factors) else factors
            hits += len({(f, lvl) for f, lvl in zip(correct["feature"], correct["level"])})
        assert hits / (len(PLANTED) * REPLICATES) >= 0.8

    def test_false_discovery_rate(self, planted_runs):
        """Reported rows outside the planted set stay at or below 10% over all replicates."""
        reported = pd.concat([factors for _, factors, _ in planted_runs], ignore_index=True)
        assert len(reported) > 0
        false = int((~reported.apply(is_planted, axis=1)).sum())
        assert false / len(reported) <= 0.10

    def test_factors_beat_placebos(self, planted_runs):
        """Risk-factor AUC exceeds placebo AUC across subgroups with Wilcoxon p < 0.05."""
        rows = pd.concat([placebo for _, _, placebo in planted_runs], ignore_index=True)
        diffs = (rows["factor_auc"] - rows["placebo_auc"]).to_numpy()
        assert diffs.mean() > 0
        assert wilcoxon_signed_rank(diffs).p_value < 0.05

    def test_null_cohort_reports_nothing(self, null_runs):
        """Without planted effects at least 90% of subgroup fits report no risk factor."""
        fits = sum(result.subgroups for result, _, _ in null_runs)
        dirty = sum(factors.groupby(["sex", "age"]).ngroups for _, factors, _ in null_runs)
        assert fits >= REPLICATES
        assert (fits - dirty) / fits >= 0.9

    def test_null_cohort_auc_near_chance(self, null_runs):
        """With no risk factors every screened feature is a placebo; their out-of-sample AUC is near 0.5."""
        aucs = [result.all_auc for result, _, _ in null_runs if result.all_auc is not None]
        assert len(aucs) >= REPLICATES - 2
        assert 0.45 <= sum(aucs) / len(aucs) <= 0.55
