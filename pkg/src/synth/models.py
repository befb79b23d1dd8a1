"""Generator configuration models and their activity defaults."""

from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from ..core.types import AgeBand, Disease, Sex, StudyWindow, parse_stratum_key, stratum_key


class CountModel(BaseModel):
    """Location/scale of a right-skewed monthly count."""
    mean: float = Field(..., gt=0, description="Mean monthly count")
    sd: float = Field(..., gt=0, description="Standard deviation across shoppers")


# Sampled shopper mix (10000 users); the >=65 column maps onto 65-74.
DEFAULT_DEMOGRAPHIC_COUNTS: Dict[str, int] = {
    "female:15-24": 1414, "female:25-34": 2433, "female:35-44": 1339,
    "female:45-54": 450, "female:55-64": 27, "female:65-74": 5,
    "male:15-24": 1141, "male:25-34": 1719, "male:35-44": 1059,
    "male:45-54": 378, "male:55-64": 35, "male:65-74": 0,
}

_QUERY_TABLE: Dict[str, Tuple[float, float]] = {
    "female:15-24": (69.18, 65.12), "female:25-34": (48.16, 49.00), "female:35-44": (42.35, 51.43),
    "female:45-54": (36.49, 42.66), "female:55-64": (22.04, 19.56),
    "male:15-24": (40.31, 42.20), "male:25-34": (38.68, 41.80), "male:35-44": (39.13, 45.29),
    "male:45-54": (38.95, 40.91), "male:55-64": (34.51, 46.23),
}

_PURCHASE_TABLE: Dict[str, Tuple[float, float]] = {
    "female:15-24": (15.49, 10.77), "female:25-34": (16.27, 13.85), "female:35-44": (13.68, 13.76),
    "female:45-54": (10.91, 10.70), "female:55-64": (10.38, 11.24),
    "male:15-24": (9.35, 8.06), "male:25-34": (11.21, 11.46), "male:35-44": (11.08, 10.76),
    "male:45-54": (10.83, 10.99), "male:55-64": (14.27, 11.34),
}


def _with_oldest_band(table: Dict[str, Tuple[float, float]]) -> Dict[str, CountModel]:
    models = {k: CountModel(mean=m, sd=s) for k, (m, s) in table.items()}
    for sex in Sex:
        models[stratum_key(sex, AgeBand.A65_74)] = models[stratum_key(sex, AgeBand.A55_64)]
    return models


def default_demographic_mix() -> Dict[str, float]:
    total = sum(DEFAULT_DEMOGRAPHIC_COUNTS.values())
    return {k: v / total for k, v in DEFAULT_DEMOGRAPHIC_COUNTS.items()}


def default_query_models() -> Dict[str, CountModel]:
    return _with_oldest_band(_QUERY_TABLE)


def default_purchase_models() -> Dict[str, CountModel]:
    return _with_oldest_band(_PURCHASE_TABLE)


class EffectScope(BaseModel):
    """One (sex, age_band, disease) cell a planted effect applies to."""
    sex: Sex
    age_band: AgeBand
    disease: Disease


class PlantedEffect(BaseModel):
    """Ground-truth log-odds contribution of one feature."""
    feature_name: str = Field(..., description="Feature name as listed in the taxonomy")
    coefficient: float = Field(..., description="Log-odds per ordinal step, or for the named nominal level")
    level: Optional[str] = Field(default=None, description="Nominal level the coefficient applies to")
    applies_to: List[EffectScope] = Field(default_factory=list)

    @field_validator("coefficient")
    @classmethod
    def _finite(cls, v: float) -> float:
        if v != v or abs(v) == float("inf"):
            raise ValueError("coefficient must be finite")
        return v


class GeneratorConfig(BaseModel):
    """Synthetic cohort parameters."""
    n_shoppers: int = Field(default=20000, gt=0, description="Number of shoppers to generate")
    seed: Optional[int] = Field(default=None, description="Generator seed; derived from the master seed when unset")
    demographic_mix: Dict[str, float] = Field(default_factory=default_demographic_mix)
    monthly_query_model: Dict[str, CountModel] = Field(default_factory=default_query_models)
    monthly_purchase_model: Dict[str, CountModel] = Field(default_factory=default_purchase_models)
    prevalence: Dict[Disease, float] = Field(
        default_factory=lambda: {Disease.DEPRESSION: 0.05, Disease.TYPE2_DIABETES: 0.10}
    )
    window: StudyWindow = Field(default_factory=StudyWindow)
    n_bins: int = Field(default=5, ge=2, description="Bins used to code explicit features for planted effects")
    observation_drug_rate: float = Field(default=0.0, ge=0.0, lt=1.0)
    max_refills: int = Field(default=2, ge=0)
    emit_queries: bool = Field(default=True, description="Materialize individual query events")
    calibration_bounds: Tuple[float, float] = Field(default=(-20.0, 20.0))

    @field_validator("demographic_mix")
    @classmethod
    def _mix_sums_to_one(cls, v: Dict[str, float]) -> Dict[str, float]:
        for key, p in v.items():
            parse_stratum_key(key)
            if p < 0:
                raise ValueError(f"negative probability for {key}")
        if abs(sum(v.values()) - 1.0) > 1e-9:
            raise ValueError("demographic_mix must sum to 1")
        return v

    @field_validator("prevalence")
    @classmethod
    def _prevalence_range(cls, v: Dict[Disease, float]) -> Dict[Disease, float]:
        for disease, rate in v.items():
            if not 0.0 < rate < 0.5:
                raise ValueError(f"prevalence for {disease.value} must lie in (0, 0.5)")
        return v

    @model_validator(mode="after")
    def _models_cover_mix(self) -> "GeneratorConfig":
        for key, p in self.demographic_mix.items():
            if p > 0 and (key not in self.monthly_query_model or key not in self.monthly_purchase_model):
                raise ValueError(f"no activity model for stratum {key}")
        lo, hi = self.calibration_bounds
        if not lo < hi:
            raise ValueError("calibration_bounds must be increasing")
        return self
