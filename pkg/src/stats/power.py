"""A priori sample size for a single logistic covariate."""

import math

from pydantic import BaseModel, Field, model_validator
from scipy import stats

from ..core.errors import ConfigError

# Subsample size the study design filtered on.
REFERENCE_SAMPLE_SIZE = 1068


class PowerSpec(BaseModel):
    """Inputs of the sample size computation."""
    odds_ratio: float = Field(default=1.49, gt=0, description="Detectable odds ratio per unit covariate")
    alpha: float = Field(default=0.05, gt=0, lt=1, description="Two-sided significance level")
    power: float = Field(default=0.8, gt=0, lt=1, description="Target power")
    p0: float = Field(default=0.5, gt=0, lt=1, description="Baseline event probability")
    r2_other: float = Field(default=0.8, ge=0, lt=1, description="R-squared of the covariate on the others")

    @model_validator(mode="after")
    def _effect(self) -> "PowerSpec":
        if self.odds_ratio == 1.0:
            raise ValueError("odds_ratio = 1 has no effect to detect")
        return self


class PowerReport(BaseModel):
    """Computed sample size next to the reference design value."""
    required_n: int
    raw_n: float
    reference_n: int = REFERENCE_SAMPLE_SIZE
    relative_gap: float
    formula: str = "hsieh"


def raw_sample_size(spec: PowerSpec) -> float:
    """Uninflated-by-ceiling sample size (Hsieh, continuous covariate, variance inflation)."""
    log_or = math.log(spec.odds_ratio)
    if log_or == 0.0:
        raise ConfigError("odds_ratio = 1 has no effect to detect")
    z_alpha = stats.norm.ppf(1.0 - spec.alpha / 2.0)
    z_power = stats.norm.ppf(spec.power)
    base = (z_alpha + z_power) ** 2 / (spec.p0 * (1.0 - spec.p0) * log_or ** 2)
    return float(base / (1.0 - spec.r2_other))


def power_sample_size(spec: PowerSpec) -> int:
    """Required subsample size, rounded up.

    Args:
        spec: Effect size, error rates and covariate structure

    Returns:
        Smallest integer n meeting the power target
    """
    # guard against 987.0000000001-style float noise before the ceiling
    return int(math.ceil(round(raw_sample_size(spec), 9)))


def power_report(spec: PowerSpec) -> PowerReport:
    raw = raw_sample_size(spec)
    n = int(math.ceil(round(raw, 9)))
    return PowerReport(
        required_n=n,
        raw_n=raw,
        relative_gap=abs(n - REFERENCE_SAMPLE_SIZE) / REFERENCE_SAMPLE_SIZE,
    )
