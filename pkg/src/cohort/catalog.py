"""Prescription-drug catalog used to assess health status."""

import logging
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Set

import pandas as pd
from pydantic import BaseModel, Field, model_validator

from ..core.errors import InputValidationError, MissingInputError
from ..core.types import Disease

logger = logging.getLogger(__name__)

CATALOG_COLUMNS = ("generic_name", "atc_code", "disease")

# ATC prefixes a catalog entry must start with for its disease.
ATC_PREFIXES: Dict[Disease, tuple] = {
    Disease.DEPRESSION: ("N06", "D04"),
    Disease.TYPE2_DIABETES: ("A10",),
}


class DrugEntry(BaseModel):
    """One generic drug and its ATC code."""
    generic_name: str = Field(..., description="Generic drug name")
    atc_code: str = Field(..., description="WHO ATC code")
    disease: Disease


class DrugCatalog(BaseModel):
    """Set of drugs whose purchase signals a disease."""
    entries: List[DrugEntry] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_codes(self) -> "DrugCatalog":
        seen: Set[str] = set()
        for entry in self.entries:
            if entry.atc_code in seen:
                raise ValueError(f"duplicate ATC code {entry.atc_code}")
            seen.add(entry.atc_code)
            if not entry.atc_code.startswith(ATC_PREFIXES[entry.disease]):
                raise ValueError(
                    f"{entry.generic_name} ({entry.atc_code}) does not carry a {entry.disease.value} ATC prefix"
                )
        return self

    def codes(self, disease: Optional[Disease] = None) -> Set[str]:
        """ATC codes for one disease, or for all diseases when ``disease`` is None."""
        return {e.atc_code for e in self.entries if disease is None or e.disease == disease}

    def disease_of(self, atc_code: str) -> Optional[Disease]:
        for entry in self.entries:
            if entry.atc_code == atc_code:
                return entry.disease
        return None

    def __len__(self) -> int:
        return len(self.entries)


def default_catalog_path() -> Path:
    return Path(str(resources.files("src") / "data" / "drug_catalog.csv"))


def load_catalog(path: Optional[str | Path] = None) -> DrugCatalog:
    """Load a drug catalog CSV.

    Args:
        path: CSV with columns generic_name, atc_code, disease (default: shipped catalog)

    Returns:
        Validated DrugCatalog

    Raises:
        MissingInputError: If the file does not exist
        InputValidationError: If columns are missing or an entry is invalid
    """
    csv_path = Path(path) if path is not None else default_catalog_path()
    if not csv_path.exists():
        raise MissingInputError(f"Drug catalog not found: {csv_path}")

    frame = pd.read_csv(csv_path, dtype=str, keep_default_na=False)
    missing = [c for c in CATALOG_COLUMNS if c not in frame.columns]
    if missing:
        raise InputValidationError(f"Drug catalog {csv_path} lacks columns: {', '.join(missing)}")

    try:
        catalog = DrugCatalog(entries=frame[list(CATALOG_COLUMNS)].to_dict(orient="records"))
    except ValueError as e:
        raise InputValidationError(f"Invalid drug catalog {csv_path}: {e}") from e

    logger.info(f"Loaded {len(catalog)} catalog drugs from {csv_path.name}", extra={"stage": "catalog"})
    return catalog
