"""Tests for cohort construction: catalog, labeling, ingestion, matching and subgroups."""

import numpy as np
import pandas as pd
import pytest

from conftest import DEPRESSION_DRUG, DIABETES_DRUG, day, events_frame
from src.cohort.catalog import ATC_PREFIXES, DrugCatalog, load_catalog
from src.cohort.characteristics import cohort_characteristics, monthly_activity
from src.cohort.io import (
    check_study_year, frames_from_shoppers, read_events, read_roster, shoppers_from_frames, write_events,
)
from src.cohort.labeling import (
    REASON_OBSERVATION, REASON_PRE_STUDY, assess_health_status, label_cohort,
)
from src.cohort.matching import build_case_control_sample
from src.cohort.subgroups import partition_subgroups, subsample_table
from src.core.errors import InputValidationError, MissingInputError, ShortageError
from src.core.types import AgeBand, Disease, Event, LabelValue, Sex, Shopper, age_band_for


def shopper(events, sid="s1", sex="female", age=30) -> Shopper:
    return Shopper(id=sid, sex=sex, age_years=age, events=[
        Event(timestamp=day(ts), kind="purchase", category="prescription_drugs" if code else "snacks",
              amount=10.0, drug_code=code)
        for ts, code in events
    ])


class TestCatalog:
    def test_shipped_catalog_prefixes(self, catalog):
        """Every shipped entry carries its disease's ATC prefix."""
        assert len(catalog.codes(Disease.DEPRESSION)) == 16
        assert len(catalog.codes(Disease.TYPE2_DIABETES)) == 22
        for entry in catalog.entries:
            assert entry.atc_code.startswith(ATC_PREFIXES[entry.disease])

    def test_disease_lookup(self, catalog):
        """Codes map back to their disease."""
        assert catalog.disease_of(DEPRESSION_DRUG) == Disease.DEPRESSION
        assert catalog.disease_of(DIABETES_DRUG) == Disease.TYPE2_DIABETES
        assert catalog.disease_of("X99") is None

    def test_duplicate_code_rejected(self, tmp_path):
        """A repeated ATC code fails validation."""
        path = tmp_path / "catalog.csv"
        path.write_text("generic_name,atc_code,disease\nA,N06AB03,depression\nB,N06AB03,depression\n")
        with pytest.raises(InputValidationError):
            load_catalog(path)

    def test_wrong_prefix_rejected(self):
        """A diabetes entry outside A10 is invalid."""
        with pytest.raises(ValueError):
            DrugCatalog(entries=[{"generic_name": "X", "atc_code": "N06AB03", "disease": "type2_diabetes"}])

    def test_missing_file(self, tmp_path):
        """A missing catalog file maps to MissingInputError."""
        with pytest.raises(MissingInputError):
            load_catalog(tmp_path / "nope.csv")


class TestHealthStatus:
    def test_case_in_performance_period(self, catalog, window):
        """First disease drug inside the performance period makes a case."""
        label = assess_health_status(shopper([("2018-03-01", None), ("2018-10-02", DEPRESSION_DRUG)]),
                                     catalog, window, Disease.DEPRESSION)
        assert label.value == LabelValue.CASE
        assert label.first_drug_date == day("2018-10-02")

    def test_no_drug_is_control(self, catalog, window):
        """A shopper without drug purchases is a control."""
        label = assess_health_status(shopper([("2018-03-01", None)]), catalog, window, Disease.DEPRESSION)
        assert label.value == LabelValue.CONTROL
        assert label.first_drug_date is None

    def test_observation_drug_excludes(self, catalog, window):
        """A drug bought during observation excludes the shopper."""
        label = assess_health_status(shopper([("2018-05-01", DEPRESSION_DRUG), ("2018-10-01", DEPRESSION_DRUG)]),
                                     catalog, window, Disease.DEPRESSION)
        assert label.value == LabelValue.EXCLUDED
        assert label.reason == REASON_OBSERVATION

    def test_pre_study_drug_excludes(self, catalog, window):
        """A drug bought before the study year excludes the shopper."""
        label = assess_health_status(shopper([("2017-12-20", DIABETES_DRUG)]), catalog, window, Disease.DEPRESSION)
        assert label.value == LabelValue.EXCLUDED
        assert label.reason == REASON_PRE_STUDY

    def test_other_disease_drug_in_performance_is_control(self, catalog, window):
        """A diabetes drug in the performance period does not make a depression case."""
        label = assess_health_status(shopper([("2018-10-01", DIABETES_DRUG)]), catalog, window, Disease.DEPRESSION)
        assert label.value == LabelValue.CONTROL

    def test_post_study_drug_is_control(self, catalog, window):
        """Drugs bought after the performance end never make a case."""
        label = assess_health_status(shopper([("2019-01-15", DEPRESSION_DRUG)]), catalog, window, Disease.DEPRESSION)
        assert label.value == LabelValue.CONTROL

    def test_period_boundaries(self, catalog, window):
        """Performance start and end days both count as performance."""
        for ts in ("2018-09-01", "2018-12-31"):
            label = assess_health_status(shopper([(ts, DEPRESSION_DRUG)]), catalog, window, Disease.DEPRESSION)
            assert label.value == LabelValue.CASE
        label = assess_health_status(shopper([("2018-08-31", DEPRESSION_DRUG)]), catalog, window, Disease.DEPRESSION)
        assert label.value == LabelValue.EXCLUDED

    def test_unsorted_stream_rejected(self, catalog, window):
        """Events out of time order are a validation error."""
        with pytest.raises(InputValidationError):
            assess_health_status(shopper([("2018-10-01", None), ("2018-02-01", None)]), catalog, window,
                                 Disease.DEPRESSION)

    def test_unknown_drug_code_rejected(self, catalog, window):
        """A drug code missing from the catalog is a validation error."""
        with pytest.raises(InputValidationError):
            assess_health_status(shopper([("2018-10-01", "N06ZZ99")]), catalog, window, Disease.DEPRESSION)

    def test_empty_catalog_rejected(self, window):
        """Labeling needs a non-empty catalog."""
        with pytest.raises(InputValidationError):
            assess_health_status(shopper([]), DrugCatalog(entries=[]), window, Disease.DEPRESSION)


class TestLabelCohort:
    def test_bulk_agrees_with_single_shopper(self, catalog, window):
        """The pandas labeler matches assess_health_status on every shopper."""
        shoppers = [
            shopper([("2018-02-01", None), ("2018-10-01", DEPRESSION_DRUG)], sid="a"),
            shopper([("2018-02-01", None)], sid="b", sex="male", age=50),
            shopper([("2018-04-01", DIABETES_DRUG)], sid="c"),
            shopper([("2017-11-01", DEPRESSION_DRUG), ("2018-10-01", DEPRESSION_DRUG)], sid="d"),
            shopper([("2018-09-15", DIABETES_DRUG), ("2018-11-01", DEPRESSION_DRUG)], sid="e", age=19),
            shopper([("2019-02-01", DEPRESSION_DRUG)], sid="f", age=70),
        ]
        events, roster = frames_from_shoppers(shoppers)
        bulk = label_cohort(events, roster, catalog, window, Disease.DEPRESSION).set_index("id")
        for s in shoppers:
            single = assess_health_status(s, catalog, window, Disease.DEPRESSION)
            assert bulk.loc[s.id, "label"] == single.value.value
            if single.first_drug_date is not None:
                assert bulk.loc[s.id, "first_drug_date"].date() == single.first_drug_date
            assert bulk.loc[s.id, "age_band"] == age_band_for(s.age_years).value


class TestIngestion:
    def test_events_round_trip_through_jsonl(self, tmp_path):
        """Written events read back with identical values."""
        events = events_frame([
            ("s1", "2018-01-05", "query", "snacks", 0.0, None),
            ("s1", "2018-10-01", "purchase", "prescription_drugs", 35.5, DEPRESSION_DRUG),
        ])
        path = tmp_path / "events.jsonl"
        write_events(path, events)
        back = read_events(path)
        assert list(back["ts"].dt.strftime("%Y-%m-%d")) == ["2018-01-05", "2018-10-01"]
        assert back["drug_code"].iloc[0] is None
        assert back["drug_code"].iloc[1] == DEPRESSION_DRUG

    def test_missing_event_file(self, tmp_path):
        """A missing event file maps to MissingInputError."""
        with pytest.raises(MissingInputError):
            read_events(tmp_path / "none.jsonl")

    def test_study_year_rejects_shopping_outside(self, window):
        """Non-drug events before the study start are rejected."""
        events = events_frame([("s1", "2017-12-31", "purchase", "snacks", 5.0, None)])
        with pytest.raises(InputValidationError):
            check_study_year(events, window)

    def test_study_year_allows_pre_study_drugs(self, window):
        """Drug purchases may precede the study year."""
        events = events_frame([("s1", "2017-12-31", "purchase", "prescription_drugs", 5.0, DEPRESSION_DRUG)])
        check_study_year(events, window)

    def test_roster_rejects_age_outside_bands(self, tmp_path):
        """Ages below 15 are unsupported."""
        path = tmp_path / "roster.csv"
        path.write_text("id,sex,age_years\ns1,female,14\n")
        with pytest.raises(InputValidationError):
            read_roster(path)

    def test_roster_blank_persona_is_none(self, tmp_path):
        """Blank persona cells read as missing."""
        path = tmp_path / "roster.csv"
        path.write_text("id,sex,age_years,body_weight\ns1,female,16,\ns2,male,40,heavy\n")
        roster = read_roster(path)
        assert roster["body_weight"].iloc[0] is None
        assert roster["body_weight"].iloc[1] == "heavy"

    def test_shoppers_keep_personas(self):
        """Frame to Shopper conversion carries personas and events."""
        events = events_frame([("s1", "2018-01-05", "purchase", "snacks", 3.0, None)])
        roster = pd.DataFrame({"id": ["s1"], "sex": ["male"], "age_years": [33], "body_weight": ["slim"]})
        (s,) = shoppers_from_frames(events, roster)
        assert s.personas == {"body_weight": "slim"}
        assert s.events[0].timestamp == day("2018-01-05")


def pool(n_cases: int, n_controls: int, sex: str = "female", band: str = "25-34", prefix: str = "p") -> pd.DataFrame:
    labels = [LabelValue.CASE.value] * n_cases + [LabelValue.CONTROL.value] * n_controls
    return pd.DataFrame({
        "id": [f"{prefix}{i:04d}" for i in range(len(labels))],
        "sex": sex, "age_band": band, "label": labels,
    })


class TestMatching:
    def test_ratio_and_groups(self):
        """Every case gets exactly ``ratio`` controls from its stratum."""
        frame = pd.concat([pool(5, 60), pool(3, 40, sex="male", band="45-54", prefix="m")], ignore_index=True)
        sample = build_case_control_sample(frame, Disease.DEPRESSION, ratio=9, seed=7)
        cases = sample[sample["label"] == "case"]
        assert len(cases) == 8
        for case_id in cases["id"]:
            group = sample[sample["match_group"] == case_id]
            assert (group["label"] == "control").sum() == 9
            assert group["sex"].nunique() == 1 and group["age_band"].nunique() == 1
        controls = sample[sample["label"] == "control"]
        assert controls["id"].is_unique

    def test_deterministic_and_order_free(self):
        """Same seed gives the same sample regardless of pool row order."""
        frame = pd.concat([pool(4, 50), pool(2, 30, sex="male", prefix="m")], ignore_index=True)
        a = build_case_control_sample(frame, Disease.DEPRESSION, 9, seed=11)
        b = build_case_control_sample(frame.sample(frac=1.0, random_state=3), Disease.DEPRESSION, 9, seed=11)
        pd.testing.assert_frame_equal(a, b)

    def test_shortage_error_names_stratum(self):
        """The error policy reports every deficient stratum."""
        with pytest.raises(ShortageError) as exc:
            build_case_control_sample(pool(3, 20), Disease.DEPRESSION, 9, seed=1)
        assert "female:25-34" in exc.value.deficient
        assert exc.value.deficient["female:25-34"]["needed"] == 27

    def test_shortage_trim(self):
        """The trim policy keeps as many cases as the controls support."""
        sample = build_case_control_sample(pool(3, 20), Disease.DEPRESSION, 9, seed=1, shortage_policy="trim")
        assert (sample["label"] == "case").sum() == 2
        assert (sample["label"] == "control").sum() == 18

    def test_excluded_rows_ignored(self):
        """Excluded shoppers are never drawn."""
        frame = pool(1, 10)
        frame.loc[frame.index[-1], "label"] = LabelValue.EXCLUDED.value
        sample = build_case_control_sample(frame, Disease.DEPRESSION, 9, seed=2)
        assert frame["id"].iloc[-1] not in set(sample["id"])


class TestSubgroups:
    def test_power_filter(self):
        """Subsamples below the threshold are dropped, the rest kept in stratum order."""
        frame = pd.concat([pool(10, 90), pool(2, 18, sex="male", prefix="m")], ignore_index=True)
        sample = build_case_control_sample(frame, Disease.DEPRESSION, 9, seed=4)
        retained, dropped = partition_subgroups(sample, power_threshold=50)
        assert [(s.sex, s.age_band) for s in retained] == [(Sex.FEMALE, AgeBand.A25_34)]
        assert retained[0].size == 100 and retained[0].case_count == 10
        assert dropped[0].size == 20
        table = subsample_table(retained, dropped)
        assert list(table["sex"]) == ["female", "male", "total"]
        assert table["size"].iloc[-1] == 100

    def test_threshold_zero_keeps_all(self):
        """A zero threshold drops nothing."""
        sample = build_case_control_sample(pool(1, 9), Disease.DEPRESSION, 9, seed=4)
        retained, dropped = partition_subgroups(sample, 0)
        assert len(retained) == 1 and not dropped


class TestCharacteristics:
    def test_rows_and_tests(self, window):
        """Age, sex and purchase rows use Welch, chi-squared and Mann-Whitney."""
        rng = np.random.default_rng(0)
        n = 60
        labels = pd.DataFrame({
            "id": [f"s{i}" for i in range(n)],
            "sex": ["female" if i % 3 else "male" for i in range(n)],
            "age_years": rng.integers(20, 60, n),
            "label": ["case" if i < 15 else "control" for i in range(n)],
        })
        events = events_frame([
            (f"s{i}", f"2018-{1 + i % 12:02d}-10", "purchase", "snacks", 5.0, None)
            for i in range(n) for _ in range(i % 4)
        ])
        activity = monthly_activity(events, list(labels["id"]), window)
        assert activity.loc["s3", "purchases_per_month"] == pytest.approx(3 / 12)
        assert activity.loc["s0", "queries_per_month"] == 0
        table = cohort_characteristics(labels, activity, include_queries=False)
        assert list(table["variable"]) == ["age", "percent_female", "purchases_per_month"]
        assert list(table["test"]) == ["welch_t", "pearson_chi2", "mann_whitney"]
        assert table["p_value"].between(0, 1).all()


BANDS = ["15-24", "25-34", "35-44", "45-54", "55-64", "65-74"]
# Published subsample sizes (cases plus matched controls), female bands then male bands.
PUBLISHED_CELLS = {
    Disease.DEPRESSION: (19, [5660, 6500, 6200, 3900, 920, 80, 7400, 13840, 10300, 5340, 920, 360]),
    Disease.TYPE2_DIABETES: (9, [2960, 6400, 4940, 2870, 1160, 160, 1600, 5520, 5930, 5040, 2000, 780]),
}


def published_pool(disease: Disease) -> pd.DataFrame:
    """Cases per cell as published, with a few spare controls beyond the ratio."""
    ratio, sizes = PUBLISHED_CELLS[disease]
    cells = []
    for i, size in enumerate(sizes):
        sex, band = ("female" if i < 6 else "male"), BANDS[i % 6]
        cases = size // (ratio + 1)
        cells.append(pool(cases, cases * ratio + 3, sex=sex, band=band, prefix=f"{sex[0]}{band}-"))
    return pd.concat(cells, ignore_index=True)


class TestPublishedSubsamples:
    @pytest.mark.parametrize("disease, cases, total, retained_total, dropped_keys", [
        (Disease.DEPRESSION, 3071, 61420, 59140,
         ["female:55-64", "female:65-74", "male:55-64", "male:65-74"]),
        (Disease.TYPE2_DIABETES, 3936, 39360, 38420, ["female:65-74", "male:65-74"]),
    ])
    def test_matched_sizes_and_power_filter(self, disease, cases, total, retained_total, dropped_keys):
        """Matching and the 1068 threshold reproduce the published subsample bookkeeping."""
        ratio, sizes = PUBLISHED_CELLS[disease]
        sample = build_case_control_sample(published_pool(disease), disease, ratio, seed=2019)
        assert int((sample["label"] == "case").sum()) == cases
        assert len(sample) == cases * (ratio + 1) == total
        retained, dropped = partition_subgroups(sample, power_threshold=1068)
        assert sum(s.size for s in retained) == retained_total
        assert [s.key for s in dropped] == dropped_keys
        assert sorted(s.size for s in retained + dropped) == sorted(sizes)
