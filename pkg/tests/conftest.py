"""Shared fixtures and small builders for the test suite."""

from datetime import date
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
import pytest

from src.cohort.catalog import DrugCatalog, load_catalog
from src.core.types import StudyWindow
from src.features.matrix import FeatureMatrix
from src.features.taxonomy import FeatureCoding, FeatureKind, FeatureSource, FeatureSpec, bin_levels

DATA_DIR = Path(__file__).parent / "data"

DEPRESSION_DRUG = "N06AB03"  # fluoxetine
DIABETES_DRUG = "A10BF01"  # acarbose


@pytest.fixture
def window() -> StudyWindow:
    return StudyWindow()


@pytest.fixture(scope="session")
def catalog() -> DrugCatalog:
    return load_catalog()


def ordinal_spec(name: str, n_levels: int = 5) -> FeatureSpec:
    return FeatureSpec(code=name.lower().replace(" ", "_"), name=name, kind=FeatureKind.EXPLICIT,
                       coding=FeatureCoding.ORDINAL, levels=bin_levels(n_levels), source=FeatureSource.CATEGORY)


def nominal_spec(name: str, levels: List[str], control: str = "no preference") -> FeatureSpec:
    return FeatureSpec(code=name.lower().replace(" ", "_"), name=name, kind=FeatureKind.IMPLICIT,
                       coding=FeatureCoding.NOMINAL, levels=levels, control_category=control,
                       source=FeatureSource.PERSONA)


def make_matrix(columns: dict, labels, specs: Optional[List[FeatureSpec]] = None,
                stratum: str = "female:15-24") -> FeatureMatrix:
    """Feature matrix from ``{name: codes}``; ordinal 1..k specs are inferred when ``specs`` is omitted."""
    labels = np.asarray(labels, dtype=int)
    ids = [f"s{i:04d}" for i in range(labels.size)]
    if specs is None:
        specs = [ordinal_spec(name, int(np.max(codes))) for name, codes in columns.items()]
    codes = pd.DataFrame({s.name: np.asarray(columns[s.name], dtype=int) for s in specs},
                         index=pd.Index(ids, name="id"))
    return FeatureMatrix(stratum=stratum, ids=ids, labels=labels, codes=codes, specs=specs)


def events_frame(rows: List[tuple]) -> pd.DataFrame:
    """Event frame from (id, iso date, kind, category, amount, drug_code) tuples."""
    frame = pd.DataFrame(rows, columns=["id", "ts", "kind", "category", "amount", "drug_code"])
    frame["ts"] = pd.to_datetime(frame["ts"], format="%Y-%m-%d")
    frame["amount"] = frame["amount"].astype(float)
    frame["drug_code"] = frame["drug_code"].where(frame["drug_code"].notna(), None)
    return frame


def day(iso: str) -> date:
    return date.fromisoformat(iso)
