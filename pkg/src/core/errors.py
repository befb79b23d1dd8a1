"""Exception hierarchy shared by every pipeline stage."""

from typing import Dict, List, Optional, Sequence


class RiskmineError(Exception):
    """Base class for all riskmine failures.

    Every subclass maps to CLI exit code 1 unless it overrides ``exit_code``.
    """

    exit_code: int = 1


class ConfigError(RiskmineError):
    """Configuration is invalid or infeasible."""


class CalibrationError(ConfigError):
    """Intercept bisection could not bracket the target prevalence."""


class MissingInputError(RiskmineError):
    """A required input file does not exist."""

    exit_code = 2


class UsageError(RiskmineError):
    """Command-line usage problem detected after argument parsing."""

    exit_code = 2


class InputValidationError(RiskmineError):
    """Input records violate an ingestion rule."""


class ShortageError(RiskmineError):
    """Not enough demographically matched controls."""

    def __init__(self, deficient: Dict[str, Dict[str, int]]):
        self.deficient = deficient
        parts = [
            f"{key} (cases={v['cases']}, controls={v['controls']}, needed={v['needed']})"
            for key, v in sorted(deficient.items())
        ]
        super().__init__("Insufficient matching controls in: " + "; ".join(parts))


class SeparationError(RiskmineError):
    """Logistic coefficients diverge under (quasi-)complete separation."""

    def __init__(self, message: str, columns: Optional[Sequence[str]] = None):
        self.columns: List[str] = list(columns or [])
        super().__init__(message)


class CollinearityError(RiskmineError):
    """Design matrix is rank deficient."""

    def __init__(self, columns: Sequence[str]):
        self.columns: List[str] = list(columns)
        super().__init__(f"Design matrix is rank deficient; aliased columns: {', '.join(self.columns)}")


class NumericError(RiskmineError):
    """Numerical failure, e.g. a non positive-definite information matrix."""


class InsufficientDataError(RiskmineError):
    """Too few observations for the requested computation."""


class UndefinedMetricError(RiskmineError):
    """Metric is undefined for the given labels (e.g. AUC with one class)."""
