"""Tests for logistic fitting, Wald inference, fit diagnostics and risk-factor discovery."""

import math

import numpy as np
import pandas as pd
import pytest
from scipy import optimize
from scipy.special import expit

from conftest import DATA_DIR, make_matrix, nominal_spec, ordinal_spec
from src.core.errors import CollinearityError, InsufficientDataError, SeparationError
from src.features.taxonomy import FeatureCoding
from src.regress.diagnostics import fit_diagnostics, hosmer_lemeshow, pseudo_r2
from src.regress.discovery import (
    FACTOR_COLUMNS, discover_risk_factors, discover_subgroup, extreme_levels, risk_factor_table,
)
from src.regress.inference import RiskFactor, odds_ratio_ci, wald_risk_factors
from src.regress.logistic import build_design, fit_logistic, fit_logistic_arrays, log_likelihood
from src.stats.multiple import bh_adjust


def _oracle_log_likelihood(x: np.ndarray, y: np.ndarray) -> float:
    """Coarse intercept grid, then a quasi-Newton polish of the negative log-likelihood."""
    x1 = np.column_stack([np.ones(len(y)), x])

    def nll(beta):
        return -log_likelihood(beta, x1, y)

    def grad(beta):
        return -(x1.T @ (y - expit(x1 @ beta)))

    grid = np.linspace(-4.0, 4.0, 81)
    start = np.zeros(x1.shape[1])
    start[0] = grid[int(np.argmin([nll(np.r_[g, np.zeros(x1.shape[1] - 1)]) for g in grid]))]
    res = optimize.minimize(nll, start, jac=grad, method="BFGS", options={"gtol": 1e-10, "maxiter": 2000})
    return -float(res.fun)


def simulated_matrix(n: int, slopes: dict, seed: int, intercept: float = -2.0):
    rng = np.random.default_rng(seed)
    columns = {name: rng.integers(1, 6, n) for name in slopes}
    eta = intercept + sum(b * (columns[name] - 3) for name, b in slopes.items())
    labels = (rng.uniform(size=n) < expit(eta)).astype(int)
    specs = [ordinal_spec(name, 5) for name in slopes]
    return make_matrix(columns, labels, specs=specs)


class TestLogisticFit:
    def test_matches_likelihood_oracle(self):
        """IRLS reaches the maximum likelihood found by an independent optimizer."""
        rng = np.random.default_rng(42)
        for trial in range(50):
            m = 1 + trial % 3
            x = rng.normal(size=(200, m))
            y = (rng.uniform(size=200) < expit(-0.3 + x @ rng.normal(0, 0.7, m))).astype(float)
            model = fit_logistic_arrays(x, y)
            assert model.converged
            assert model.log_likelihood == pytest.approx(_oracle_log_likelihood(x, y), abs=1e-6)

    def test_binary_covariate_closed_form(self):
        """With one binary covariate, B is the log odds ratio and SE the Woolf standard error."""
        a, b, c, d = 30, 70, 10, 90  # exposed cases, exposed controls, unexposed cases, unexposed controls
        x = np.r_[np.ones(a + b), np.zeros(c + d)]
        y = np.r_[np.ones(a), np.zeros(b), np.ones(c), np.zeros(d)]
        model = fit_logistic_arrays(x, y, ["exposed"])
        assert model.slopes[0] == pytest.approx(math.log(a * d / (b * c)), abs=1e-8)
        design = build_design(make_matrix({"Exposed": (x + 1).astype(int)}, y.astype(int)))
        (row,) = wald_risk_factors(fit_logistic_arrays(design.x, design.y, design.columns), design)
        assert row.se == pytest.approx(math.sqrt(1 / a + 1 / b + 1 / c + 1 / d), rel=1e-6)
        assert row.exp_b == pytest.approx(a * d / (b * c), rel=1e-6)

    def test_null_model_starts_at_empirical_logit(self):
        """Without slopes, the intercept is the empirical logit."""
        y = np.r_[np.ones(5), np.zeros(95)]
        model = fit_logistic_arrays(np.zeros((100, 0)), y, [])
        assert model.intercept == pytest.approx(math.log(5 / 95))
        assert model.log_likelihood == pytest.approx(model.null_log_likelihood)

    def test_separation_detected(self):
        """A perfectly separating covariate raises SeparationError naming it."""
        x = np.arange(1.0, 21.0)
        y = (x > 10).astype(float)
        with pytest.raises(SeparationError) as exc:
            fit_logistic_arrays(x, y, ["spend"])
        assert exc.value.columns == ["spend"]

    def test_rank_deficiency_names_column(self):
        """A duplicated column is reported as aliased."""
        rng = np.random.default_rng(0)
        a = rng.normal(size=100)
        x = np.column_stack([a, rng.normal(size=100), a])
        y = (rng.uniform(size=100) < 0.3).astype(float)
        with pytest.raises(CollinearityError) as exc:
            fit_logistic_arrays(x, y, ["a", "b", "a_copy"])
        assert len(exc.value.columns) == 1
        assert exc.value.columns[0] in {"a", "a_copy"}

    def test_single_class(self):
        with pytest.raises(InsufficientDataError):
            fit_logistic_arrays(np.ones((4, 1)), np.zeros(4))

    def test_score_vanishes_at_optimum(self):
        """Every converged fit leaves max |X'(y - pi)| at or below 1e-6."""
        rng = np.random.default_rng(8)
        for trial in range(20):
            m = 1 + trial % 4
            x = rng.normal(size=(1000, m))
            y = (rng.uniform(size=1000) < expit(-1.0 + x @ rng.normal(0, 0.5, m))).astype(float)
            model = fit_logistic_arrays(x, y)
            x1 = np.column_stack([np.ones(len(y)), x])
            assert model.converged
            assert np.max(np.abs(x1.T @ (y - expit(x1 @ model.coefficients)))) <= 1e-6
            assert model.max_score <= 1e-6

    @pytest.mark.parametrize("scale", [7.5, 0.2, -3.0])
    def test_column_scaling(self, scale):
        """Scaling a column by c divides its slope by c and leaves the likelihood unchanged."""
        rng = np.random.default_rng(21)
        x = rng.normal(size=(800, 3))
        y = (rng.uniform(size=800) < expit(-0.5 + x @ np.array([0.8, -0.4, 0.1]))).astype(float)
        base = fit_logistic_arrays(x, y)
        scaled_x = x.copy()
        scaled_x[:, 1] *= scale
        scaled = fit_logistic_arrays(scaled_x, y)
        assert scaled.slopes[1] == pytest.approx(base.slopes[1] / scale, rel=1e-6)
        assert scaled.slopes[[0, 2]] == pytest.approx(base.slopes[[0, 2]], rel=1e-6)
        assert scaled.intercept == pytest.approx(base.intercept, rel=1e-6)
        assert scaled.log_likelihood == pytest.approx(base.log_likelihood, rel=1e-10)


class TestDesign:
    def test_nominal_indicators_against_control(self):
        """Nominal features expand to one indicator per non-control level."""
        spec = nominal_spec("Alcohol Preference", ["no preference", "beer", "baijiu"])
        m = make_matrix({"Alcohol Preference": [0, 1, 2, 1], "Tea": [1, 2, 3, 1]}, [0, 1, 1, 0],
                        specs=[spec, ordinal_spec("Tea", 3)])
        design = build_design(m)
        assert design.columns == ["Alcohol Preference=beer", "Alcohol Preference=baijiu", "Tea"]
        assert design.levels == ["beer", "baijiu", None]
        assert design.x[:, 0].tolist() == [0, 1, 0, 1]
        assert design.x[:, 2].tolist() == [1, 2, 3, 1]


class TestPublishedInference:
    @pytest.fixture(scope="class")
    def rows(self):
        return pd.read_csv(DATA_DIR / "risk_factor_rows.csv")

    def test_odds_ratio_and_interval(self, rows):
        """Exp(B) and exp(B -/+ 1.96 SE) reproduce every published row to rounding."""
        assert len(rows) > 100
        for row in rows.itertuples(index=False):
            exp_b, lo, hi = odds_ratio_ci(row.b, row.se)
            assert exp_b == pytest.approx(row.exp_b, rel=0.0015)
            assert lo == pytest.approx(row.ci_low, rel=0.004)
            assert hi == pytest.approx(row.ci_high, rel=0.004)
            assert lo < exp_b < hi

    def test_interval_excludes_one_when_significant(self, rows):
        """Published factors have intervals on one side of 1 matching the sign of B."""
        for row in rows.itertuples(index=False):
            assert (row.ci_low > 1.0) if row.b > 0 else (row.ci_high < 1.0)


class TestDiagnostics:
    @pytest.fixture(scope="class")
    def rows(self):
        return pd.read_csv(DATA_DIR / "fit_diagnostics_rows.csv")

    def test_published_pseudo_r2(self, rows):
        """Cox & Snell and Nagelkerke R2 follow from chi2, n and -2LL for every published fit."""
        for row in rows.itertuples(index=False):
            cs, nk = pseudo_r2(row.chi2, int(row.size), row.minus2ll)
            assert cs == pytest.approx(row.r2_cox_snell, abs=6e-4)
            assert nk == pytest.approx(row.r2_nagelkerke, abs=6e-4)

    def test_fit_diagnostics_consistency(self):
        """Omnibus chi2 equals twice the log-likelihood gain and R2 values are ordered."""
        m = simulated_matrix(1500, {"Snacks": 0.6, "Tea": 0.0}, seed=3)
        model = fit_logistic(m)
        diag = fit_diagnostics(model, build_design(m))
        assert diag.omnibus_chi2 == pytest.approx(2 * (model.log_likelihood - model.null_log_likelihood))
        assert diag.omnibus_df == 2
        assert 0 <= diag.r2_cox_snell <= diag.r2_nagelkerke <= 1
        assert diag.hl_groups == 10 and diag.hl_df == 8

    def test_hosmer_lemeshow_collapses_groups(self):
        """Fewer distinct predictions than groups shrink the group count."""
        pi = np.repeat([0.1, 0.2, 0.3, 0.4], 25)
        y = np.zeros(100)
        chi2, df, p, g = hosmer_lemeshow(pi, y)
        assert g == 4 and df == 2
        assert chi2 > 0 and 0 <= p <= 1

    def test_hosmer_lemeshow_perfect_calibration(self):
        """Observed counts equal to expected counts give a zero statistic."""
        pi = np.repeat(np.linspace(0.1, 0.55, 10), 20)
        y = np.concatenate([np.r_[np.ones(int(round(p * 20))), np.zeros(20 - int(round(p * 20)))]
                            for p in np.linspace(0.1, 0.55, 10)])
        chi2, df, p, g = hosmer_lemeshow(pi, y)
        assert chi2 == pytest.approx(0.0, abs=1e-9)
        assert p == pytest.approx(1.0)


def _factor(feature, level, b, coding=FeatureCoding.NOMINAL) -> RiskFactor:
    exp_b, lo, hi = odds_ratio_ci(b, 0.1)
    return RiskFactor(feature=feature, level=level, column=f"{feature}={level}", coding=coding, b=b, se=0.1,
                      exp_b=exp_b, ci_low=lo, ci_high=hi, z=b / 0.1, p_raw=0.001, p_bh=0.002)


class TestDiscovery:
    def test_extreme_level_kept(self):
        """Only the level with the largest |B| of a nominal feature is reported."""
        rows = [_factor("Alcohol Preference", "beer", 0.4), _factor("Alcohol Preference", "baijiu", -0.9),
                _factor("Tea", None, 0.2, FeatureCoding.ORDINAL)]
        kept = extreme_levels(rows)
        assert [(r.feature, r.level) for r in kept] == [("Alcohol Preference", "baijiu"), ("Tea", None)]

    def test_extreme_level_by_odds_ratio(self):
        """A positive level wins with the largest Exp(B); a negative one with the smallest."""
        up = [_factor("Tea Preference", "green", 0.3), _factor("Tea Preference", "oolong", 0.8)]
        down = [_factor("Sports Preference", "running", -0.3), _factor("Sports Preference", "fitness", -0.7)]
        kept = extreme_levels(up + down)
        assert [r.level for r in kept] == ["oolong", "fitness"]
        assert kept[0].exp_b == max(r.exp_b for r in up)
        assert kept[1].exp_b == min(r.exp_b for r in down)

    def test_planted_effect_recovered(self):
        """A strong planted ordinal effect is reported with the right sign."""
        m = simulated_matrix(3000, {"Snacks": 0.7, "Tea": 0.0}, seed=11)
        result = discover_subgroup(m)
        assert "Snacks" in result.factor_features
        snacks = next(f for f in result.factors if f.feature == "Snacks")
        assert snacks.b == pytest.approx(0.7, abs=0.25)
        assert snacks.p_bh < 0.05
        assert len(result.coefficients) == 2

    def test_screened_out_columns_join_family(self):
        """Columns removed before the fit enter the BH family at p = 1."""
        m = simulated_matrix(1500, {"Snacks": 0.3, "Tea": 0.1}, seed=13)
        design = build_design(m)
        model = fit_logistic_arrays(design.x, design.y, design.columns)
        plain = wald_risk_factors(model, design)
        padded = wald_risk_factors(model, design, family_size=10)
        expected = bh_adjust([r.p_raw for r in plain] + [1.0] * 8)[:2]
        assert [r.p_bh for r in padded] == pytest.approx(expected)
        assert all(p.p_bh >= q.p_bh for p, q in zip(padded, plain))
        assert wald_risk_factors(model, design, family_size=1)[0].p_bh == pytest.approx(plain[0].p_bh)
        result = discover_subgroup(m, family_size=10)
        assert [r.p_bh for r in result.coefficients] == pytest.approx(expected)

    def test_aliased_columns_refit(self):
        """A duplicated feature is dropped and the subgroup refitted."""
        m = simulated_matrix(800, {"Snacks": 0.5}, seed=5)
        codes = m.codes["Snacks"].to_numpy()
        twin = make_matrix({"Snacks": codes, "Twin": codes}, m.labels,
                           specs=[ordinal_spec("Snacks", 5), ordinal_spec("Twin", 5)])
        result = discover_subgroup(twin)
        assert len(result.aliased) == 1
        assert len(result.design.columns) == 1

    def test_report_tables(self):
        """Factor rows sort by feature then subgroup and carry stars."""
        a = simulated_matrix(2500, {"Snacks": 0.8}, seed=1)
        b = simulated_matrix(2500, {"Snacks": 0.8}, seed=2).model_copy(update={"stratum": "male:25-34"})
        report = discover_risk_factors([a, b], threads=2)
        assert [s.subgroup for s in report.subgroups] == ["female:15-24", "male:25-34"]
        table = risk_factor_table(report)
        assert list(table.columns) == FACTOR_COLUMNS
        assert list(table["sex"]) == ["Female", "Male"]
        assert all(s.startswith("*") for s in table["stars"])
