"""Configuration management with environment overrides."""

import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import yaml
from pydantic import BaseModel, Field, ValidationError, model_validator

from ..stats.power import PowerSpec
from ..synth.models import GeneratorConfig, PlantedEffect
from .errors import ConfigError, MissingInputError
from .types import Disease, StudyWindow

logger = logging.getLogger(__name__)

DEFAULT_RATIOS: Dict[Disease, int] = {Disease.DEPRESSION: 19, Disease.TYPE2_DIABETES: 9}


class SvmConfig(BaseModel):
    """Cost-sensitive linear SVM configuration."""
    positive_class_cost: float = Field(default=1.0, gt=0, description="Hinge-loss weight of each case")
    regularization: float = Field(default=1.0, gt=0, description="L2 penalty weight (lambda)")
    tolerance: float = Field(default=0.01, gt=0, description="Projected-gradient stopping tolerance")
    max_passes: int = Field(default=200, gt=0, description="Maximum coordinate-descent epochs")


class InputConfig(BaseModel):
    """Input file locations. Unset catalog/taxonomy fall back to the shipped files."""
    events_path: Optional[str] = Field(default=None, description="JSON-lines event file")
    roster_path: Optional[str] = Field(default=None, description="Shopper roster CSV")
    catalog_path: Optional[str] = Field(default=None, description="Drug catalog CSV")
    taxonomy_path: Optional[str] = Field(default=None, description="Feature taxonomy CSV")


class PipelineConfig(BaseModel):
    """End-to-end pipeline configuration."""
    disease: Disease = Field(default=Disease.DEPRESSION)
    window: StudyWindow = Field(default_factory=StudyWindow)
    ratio: Optional[int] = Field(default=None, ge=1, description="Controls per case; 19 or 9 by disease when unset")
    power_threshold: int = Field(default=1068, ge=0, description="Minimum subsample size")
    screen_alpha: float = Field(default=0.1, gt=0, lt=1, description="Chi-squared screening level")
    bh_level: float = Field(default=0.05, gt=0, lt=1, description="FDR level for risk factors")
    n_bins: int = Field(default=5, ge=2, description="Quantile bins for explicit features")
    collinearity_threshold: float = Field(default=0.7, gt=0, le=1, description="Maximum pairwise Cramer's V")
    k_folds: int = Field(default=10, ge=2)
    seed: int = Field(default=2018, ge=0, description="Master seed")
    cost_grid: Optional[List[float]] = Field(default=None, description="Positive-class costs to sweep")
    shortage_policy: Literal["error", "trim"] = Field(default="error", description="Deficient strata: raise or trim")
    svm: SvmConfig = Field(default_factory=SvmConfig)
    power: PowerSpec = Field(default_factory=PowerSpec)
    threads: int = Field(default=1, ge=1, description="Worker pool size")
    plots: bool = Field(default=True, description="Render SVG plots into the bundle")
    inputs: InputConfig = Field(default_factory=InputConfig)
    output_dir: str = Field(default="out/bundle")
    synth: Optional[GeneratorConfig] = Field(default=None, description="Generate a cohort instead of reading inputs")
    effects: List[PlantedEffect] = Field(default_factory=list, description="Planted effects for the generator")

    @model_validator(mode="after")
    def _resolve_defaults(self) -> "PipelineConfig":
        if self.ratio is None:
            self.ratio = DEFAULT_RATIOS[self.disease]
        if self.cost_grid is not None:
            if not self.cost_grid:
                raise ValueError("cost_grid must not be empty")
            if any(c <= 0 for c in self.cost_grid):
                raise ValueError("cost_grid entries must be positive")
        return self

    def effective_cost_grid(self) -> List[float]:
        """Configured grid, or {1, r/4, r/2, r, 2r} for control:case ratio r."""
        if self.cost_grid:
            return list(self.cost_grid)
        r = float(self.ratio or 1)
        grid: List[float] = []
        for c in (1.0, r / 4, r / 2, r, 2 * r):
            if c not in grid:
                grid.append(c)
        return grid


def config_hash(config: PipelineConfig) -> str:
    """SHA-256 of the canonical JSON dump."""
    payload = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def load_config(config_path: Optional[str] = None) -> PipelineConfig:
    """Load configuration from file with environment overrides.

    Args:
        config_path: Path to a JSON config file (default: configs/demo.json)

    Returns:
        Loaded configuration

    Raises:
        MissingInputError: If an explicit path does not exist
        ConfigError: If the file does not validate
    """
    explicit = config_path is not None
    if config_path is None:
        config_path = "configs/demo.json"

    config_dict: Dict[str, Any] = {}
    if Path(config_path).exists():
        with open(config_path, "r") as f:
            config_dict = yaml.safe_load(f) or {}
    elif explicit:
        raise MissingInputError(f"Config file not found: {config_path}")
    else:
        logger.warning(f"No config at {config_path}; using defaults", extra={"stage": "config"})

    if seed := os.getenv("RISKMINE_SEED"):
        config_dict["seed"] = int(seed)
    if threads := os.getenv("RISKMINE_THREADS"):
        config_dict["threads"] = int(threads)
    if output_dir := os.getenv("RISKMINE_OUTPUT_DIR"):
        config_dict["output_dir"] = output_dir

    try:
        return PipelineConfig(**config_dict)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration in {config_path}: {e}") from e
