"""Lifestyle feature taxonomy."""

import logging
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd
from pydantic import BaseModel, Field, model_validator

from ..core.errors import InputValidationError, MissingInputError

logger = logging.getLogger(__name__)

TAXONOMY_COLUMNS = ("code", "name", "kind", "coding", "scale", "levels", "control_category", "source")
UNKNOWN_LEVEL = "unknown"


class FeatureKind(str, Enum):
    EXPLICIT = "explicit"
    IMPLICIT = "implicit"


class FeatureCoding(str, Enum):
    ORDINAL = "ordinal"
    NOMINAL = "nominal"


class FeatureSource(str, Enum):
    CATEGORY = "category"
    DERIVED = "derived"
    PERSONA = "persona"


class FeatureSpec(BaseModel):
    """How one lifestyle feature is coded."""
    code: str = Field(..., description="Event category or roster column the feature reads")
    name: str = Field(..., description="Display name used in reports")
    kind: FeatureKind
    coding: FeatureCoding
    scale: Optional[str] = Field(default=None, description="Ordinal direction, e.g. 'a few → a lot'")
    levels: List[str] = Field(default_factory=list, description="Ordered levels (ordinal) or level set (nominal)")
    control_category: Optional[str] = Field(default=None, description="Reference level of a nominal feature")
    source: FeatureSource

    @model_validator(mode="after")
    def _levels(self) -> "FeatureSpec":
        if self.coding == FeatureCoding.ORDINAL:
            if len(self.levels) < 2:
                raise ValueError(f"ordinal feature {self.name} needs at least two levels")
            if self.control_category is not None:
                raise ValueError(f"ordinal feature {self.name} cannot name a control category")
        else:
            if self.control_category is None or self.levels.count(self.control_category) != 1:
                raise ValueError(f"nominal feature {self.name} must list its control category exactly once")
        return self


def bin_levels(n_bins: int) -> List[str]:
    return [f"q{i}" for i in range(1, n_bins + 1)]


class Taxonomy(BaseModel):
    """All feature specs, addressable by display name or source code."""
    specs: List[FeatureSpec]

    @model_validator(mode="after")
    def _unique(self) -> "Taxonomy":
        for attr in ("name", "code"):
            values = [getattr(s, attr) for s in self.specs]
            dupes = sorted({v for v in values if values.count(v) > 1})
            if dupes:
                raise ValueError(f"duplicate feature {attr}s: {', '.join(dupes)}")
        return self

    def by_name(self) -> Dict[str, FeatureSpec]:
        return {s.name: s for s in self.specs}

    def by_code(self) -> Dict[str, FeatureSpec]:
        return {s.code: s for s in self.specs}

    def of_source(self, source: FeatureSource) -> List[FeatureSpec]:
        return [s for s in self.specs if s.source == source]

    def category_codes(self) -> List[str]:
        return [s.code for s in self.of_source(FeatureSource.CATEGORY)]

    def explicit(self) -> List[FeatureSpec]:
        return [s for s in self.specs if s.kind == FeatureKind.EXPLICIT]

    def personas(self) -> List[FeatureSpec]:
        return self.of_source(FeatureSource.PERSONA)

    def resolve(self, feature: str) -> FeatureSpec:
        """Look a feature up by display name or code."""
        spec = self.by_name().get(feature) or self.by_code().get(feature)
        if spec is None:
            raise InputValidationError(f"Unknown feature: {feature}")
        return spec


def default_taxonomy_path() -> Path:
    return Path(str(resources.files("src") / "data" / "feature_taxonomy.csv"))


def load_taxonomy(path: Optional[str | Path] = None, n_bins: int = 5) -> Taxonomy:
    """Load the feature taxonomy CSV.

    Explicit features carry no levels in the file; they get ``n_bins`` quantile levels.

    Args:
        path: Taxonomy CSV (default: shipped taxonomy)
        n_bins: Quantile bins for explicit features

    Returns:
        Validated Taxonomy
    """
    csv_path = Path(path) if path is not None else default_taxonomy_path()
    if not csv_path.exists():
        raise MissingInputError(f"Feature taxonomy not found: {csv_path}")
    frame = pd.read_csv(csv_path, dtype=str, keep_default_na=False)
    missing = [c for c in TAXONOMY_COLUMNS if c not in frame.columns]
    if missing:
        raise InputValidationError(f"Taxonomy {csv_path} lacks columns: {', '.join(missing)}")

    specs = []
    for rec in frame.to_dict(orient="records"):
        levels = [v for v in rec["levels"].split("|") if v] if rec["levels"] else []
        if rec["kind"] == FeatureKind.EXPLICIT.value and not levels:
            levels = bin_levels(n_bins)
        try:
            specs.append(FeatureSpec(
                code=rec["code"],
                name=rec["name"],
                kind=rec["kind"],
                coding=rec["coding"],
                scale=rec["scale"] or None,
                levels=levels,
                control_category=rec["control_category"] or None,
                source=rec["source"],
            ))
        except ValueError as e:
            raise InputValidationError(f"Invalid taxonomy row {rec['code']}: {e}") from e
    try:
        taxonomy = Taxonomy(specs=specs)
    except ValueError as e:
        raise InputValidationError(f"Invalid taxonomy {csv_path}: {e}") from e
    logger.info(f"Loaded {len(specs)} feature specs from {csv_path.name}", extra={"stage": "taxonomy"})
    return taxonomy
