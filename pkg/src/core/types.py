"""Core domain types shared across riskmine modules."""

from datetime import date
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from .errors import InputValidationError


class Sex(str, Enum):
    """Shopper sex as recorded in the roster."""
    FEMALE = "female"
    MALE = "male"


class AgeBand(str, Enum):
    """Decade age bands starting at 15."""
    A15_24 = "15-24"
    A25_34 = "25-34"
    A35_44 = "35-44"
    A45_54 = "45-54"
    A55_64 = "55-64"
    A65_74 = "65-74"

    @property
    def bounds(self) -> Tuple[int, int]:
        lo, hi = self.value.split("-")
        return int(lo), int(hi)


class Disease(str, Enum):
    """Chronic diseases with a drug-based case definition."""
    DEPRESSION = "depression"
    TYPE2_DIABETES = "type2_diabetes"


class EventKind(str, Enum):
    QUERY = "query"
    PURCHASE = "purchase"


class LabelValue(str, Enum):
    CASE = "case"
    CONTROL = "control"
    EXCLUDED = "excluded"


MIN_AGE = 15
MAX_AGE = 74


def age_band_for(age_years: int) -> AgeBand:
    """Map an age in years to its decade band.

    Args:
        age_years: Age at the start of the study year

    Returns:
        The enclosing AgeBand

    Raises:
        InputValidationError: If the age falls outside 15-74
    """
    if age_years < MIN_AGE or age_years > MAX_AGE:
        raise InputValidationError(f"Age {age_years} outside supported range {MIN_AGE}-{MAX_AGE}")
    for band in AgeBand:
        lo, hi = band.bounds
        if lo <= age_years <= hi:
            return band
    raise InputValidationError(f"No age band for {age_years}")  # unreachable


def stratum_key(sex: Sex, age_band: AgeBand) -> str:
    """Canonical text key for a (sex, age_band) stratum, e.g. ``female:15-24``."""
    return f"{Sex(sex).value}:{AgeBand(age_band).value}"


def parse_stratum_key(key: str) -> Tuple[Sex, AgeBand]:
    sex, band = key.split(":", 1)
    return Sex(sex), AgeBand(band)


def stratum_label(sex: Sex, age_band: AgeBand) -> str:
    """Human-readable stratum label used in report tables."""
    return f"{Sex(sex).value.capitalize()} {AgeBand(age_band).value}"


class StudyWindow(BaseModel):
    """Observation and performance periods of the study year."""
    observation_start: date = Field(default=date(2018, 1, 1), description="First day of the observation period")
    performance_start: date = Field(default=date(2018, 9, 1), description="First day of the performance period")
    performance_end: date = Field(default=date(2018, 12, 31), description="Last day of the performance period")

    @model_validator(mode="after")
    def _ordered(self) -> "StudyWindow":
        if not (self.observation_start < self.performance_start <= self.performance_end):
            raise ValueError("observation must precede a non-empty performance period")
        return self

    @property
    def observation_end(self) -> date:
        """Last day of the observation period (adjacent to performance start)."""
        return date.fromordinal(self.performance_start.toordinal() - 1)

    def zone(self, day: date) -> str:
        """Classify a date as pre_study, observation, performance or post_study."""
        if day < self.observation_start:
            return "pre_study"
        if day < self.performance_start:
            return "observation"
        if day <= self.performance_end:
            return "performance"
        return "post_study"

    def months(self) -> int:
        """Number of calendar months spanned by the study year."""
        start, end = self.observation_start, self.performance_end
        return (end.year - start.year) * 12 + end.month - start.month + 1


class Event(BaseModel):
    """A single query or purchase."""
    timestamp: date = Field(..., description="Calendar date of the event")
    kind: EventKind = Field(..., description="query or purchase")
    category: str = Field(..., description="Taxonomy code of the product category")
    amount: float = Field(default=0.0, ge=0.0, description="Currency units; 0 for queries")
    drug_code: Optional[str] = Field(default=None, description="ATC code when the item is a catalog drug")

    @model_validator(mode="after")
    def _query_amount(self) -> "Event":
        if self.kind == EventKind.QUERY and self.amount != 0:
            raise ValueError("query events carry no amount")
        return self


class Shopper(BaseModel):
    """Demographics plus the raw event stream of one shopper."""
    id: str = Field(..., description="Opaque shopper identifier")
    sex: Sex
    age_years: int = Field(..., description="Age in years at the start of the study")
    events: List[Event] = Field(default_factory=list, description="Time-ordered event stream")
    personas: Dict[str, Optional[str]] = Field(default_factory=dict, description="Persona level per persona code")

    @field_validator("age_years")
    @classmethod
    def _age_supported(cls, v: int) -> int:
        age_band_for(v)
        return v

    @property
    def age_band(self) -> AgeBand:
        return age_band_for(self.age_years)

    def is_sorted(self) -> bool:
        return all(a.timestamp <= b.timestamp for a, b in zip(self.events, self.events[1:]))


class Label(BaseModel):
    """Health-status label for one shopper and disease."""
    value: LabelValue
    disease: Disease
    first_drug_date: Optional[date] = None
    reason: Optional[str] = Field(default=None, description="Why a shopper was excluded")


class TestResult(BaseModel):
    """Outcome of a hypothesis test."""
    __test__ = False  # keep pytest from collecting this model

    statistic: float = Field(..., description="Test statistic (t', chi2, U, W, H, ...)")
    df: Optional[float] = Field(default=None, description="Degrees of freedom, possibly fractional")
    p_value: float = Field(..., ge=0.0, le=1.0, description="Two-sided p-value")
    auxiliary: Dict[str, Any] = Field(default_factory=dict, description="Named extras such as z, U, SS, MS")

    @field_validator("statistic")
    @classmethod
    def _finite(cls, v: float) -> float:
        if v != v or v in (float("inf"), float("-inf")):
            raise ValueError("statistic must be finite")
        return v
