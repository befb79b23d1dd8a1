"""Per-stratum coded feature matrix."""

import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..core.errors import InputValidationError
from .discretize import discretize
from .taxonomy import UNKNOWN_LEVEL, FeatureCoding, FeatureKind, FeatureSpec, Taxonomy, bin_levels

logger = logging.getLogger(__name__)


class FeatureMatrix(BaseModel):
    """Coded lifestyle features and the binary label of one stratum.

    Ordinal columns hold codes 1..len(levels); nominal columns hold indices into their spec's level list.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    stratum: str = Field(..., description="Stratum key, e.g. female:15-24")
    ids: List[str]
    labels: np.ndarray = Field(..., description="1 for cases, 0 for controls")
    codes: pd.DataFrame = Field(..., description="One integer column per feature, named by feature name")
    specs: List[FeatureSpec] = Field(..., description="Column specs with the levels realized in this stratum")
    degenerate: List[str] = Field(default_factory=list, description="Features with a single level")
    merged: List[str] = Field(default_factory=list, description="Features whose levels were merged for screening")

    @model_validator(mode="after")
    def _consistent(self) -> "FeatureMatrix":
        if list(self.codes.columns) != [s.name for s in self.specs]:
            raise ValueError("codes columns must match specs")
        if len(self.codes) != len(self.ids) or self.labels.shape != (len(self.ids),):
            raise ValueError("ids, labels and codes must have one entry per shopper")
        for spec in self.specs:
            col = self.codes[spec.name].to_numpy()
            lo, hi = (1, len(spec.levels)) if spec.coding == FeatureCoding.ORDINAL else (0, len(spec.levels) - 1)
            if col.size and (col.min() < lo or col.max() > hi):
                raise ValueError(f"codes of {spec.name} outside {lo}..{hi}")
        return self

    @property
    def feature_names(self) -> List[str]:
        return [s.name for s in self.specs]

    @property
    def n_cases(self) -> int:
        return int(self.labels.sum())

    def spec(self, name: str) -> FeatureSpec:
        for s in self.specs:
            if s.name == name:
                return s
        raise KeyError(name)

    def select(self, names: List[str]) -> "FeatureMatrix":
        """Keep only the named features, in matrix order."""
        keep = [s for s in self.specs if s.name in set(names)]
        return self.model_copy(update={
            "codes": self.codes[[s.name for s in keep]].copy(),
            "specs": keep,
        })

    def with_column(self, spec: FeatureSpec, codes: np.ndarray) -> "FeatureMatrix":
        """Replace one feature's coding."""
        new_codes = self.codes.copy()
        new_codes[spec.name] = codes.astype(int)
        specs = [spec if s.name == spec.name else s for s in self.specs]
        return FeatureMatrix(stratum=self.stratum, ids=self.ids, labels=self.labels, codes=new_codes,
                             specs=specs, degenerate=self.degenerate, merged=self.merged)


def _compact(codes: np.ndarray, levels: List[str], base: int,
             keep: Optional[str] = None) -> Tuple[np.ndarray, List[str]]:
    """Drop unobserved levels and renumber codes from ``base``; ``keep`` survives even when unobserved."""
    observed = set(np.unique(codes).tolist())
    kept = [i for i in range(len(levels)) if (i + base) in observed or levels[i] == keep]
    remap = {old + base: new + base for new, old in enumerate(kept)}
    return np.array([remap[c] for c in codes], dtype=int), [levels[i] for i in kept]


def code_persona(spec: FeatureSpec, values: pd.Series) -> Tuple[np.ndarray, FeatureSpec]:
    """Code a persona column; ordinal gaps take the stratum mode, nominal gaps become ``unknown``."""
    unknown = set(values.dropna()) - set(spec.levels)
    if unknown:
        raise InputValidationError(f"Unknown levels for {spec.name}: {', '.join(sorted(map(str, unknown)))}")
    missing = values.isna().to_numpy()

    if spec.coding == FeatureCoding.ORDINAL:
        index = {lvl: i + 1 for i, lvl in enumerate(spec.levels)}
        codes = np.array([index.get(v, 0) if isinstance(v, str) else 0 for v in values], dtype=int)
        if missing.all():
            return np.ones(len(values), dtype=int), spec
        if missing.any():
            counts = np.bincount(codes[~missing])
            codes[missing] = int(np.argmax(counts))
        codes, levels = _compact(codes, spec.levels, base=1)
        return codes, spec.model_copy(update={"levels": levels})

    levels = list(spec.levels)
    if missing.any():
        levels.append(UNKNOWN_LEVEL)
    index = {lvl: i for i, lvl in enumerate(levels)}
    codes = np.array([index[v] if isinstance(v, str) else index[UNKNOWN_LEVEL] for v in values], dtype=int)
    codes, levels = _compact(codes, levels, base=0, keep=spec.control_category)
    return codes, spec.model_copy(update={"levels": levels})


def build_feature_matrix(
    stratum: str,
    ids: List[str],
    labels: np.ndarray,
    explicit_values: pd.DataFrame,
    roster: pd.DataFrame,
    taxonomy: Taxonomy,
    n_bins: int,
) -> FeatureMatrix:
    """Code every taxonomy feature for one stratum.

    Args:
        stratum: Stratum key
        ids: Member shopper ids (cases and controls)
        labels: 0/1 label per member
        explicit_values: Raw explicit values indexed by id, columns keyed by taxonomy code
        roster: Roster indexed by id carrying persona columns
        taxonomy: Feature taxonomy
        n_bins: Quantile bins for explicit features

    Returns:
        FeatureMatrix with degenerate features listed but not coded
    """
    columns: Dict[str, np.ndarray] = {}
    specs: List[FeatureSpec] = []
    degenerate: List[str] = []

    for spec in taxonomy.specs:
        if spec.kind == FeatureKind.EXPLICIT:
            if spec.code not in explicit_values.columns:
                continue
            binning = discretize(explicit_values.loc[ids, spec.code].to_numpy(dtype=float), n_bins)
            if binning.degenerate:
                degenerate.append(spec.name)
                continue
            columns[spec.name] = binning.codes
            specs.append(spec.model_copy(update={"levels": bin_levels(binning.n_levels)}))
        else:
            if spec.code not in roster.columns:
                continue
            codes, coded = code_persona(spec, roster.loc[ids, spec.code])
            if len(np.unique(codes)) < 2:
                degenerate.append(spec.name)
                continue
            columns[spec.name] = codes
            specs.append(coded)

    for name in degenerate:
        logger.warning(f"Feature {name} is degenerate in {stratum}", extra={"stage": "features",
                                                                              "subgroup": stratum,
                                                                              "feature": name})
    codes_frame = pd.DataFrame(columns, index=pd.Index(ids, name="id"), columns=[s.name for s in specs])
    return FeatureMatrix(
        stratum=stratum,
        ids=list(ids),
        labels=np.asarray(labels, dtype=int),
        codes=codes_frame,
        specs=specs,
        degenerate=degenerate,
    )
