"""Hypothesis tests used for cohort characteristics and model comparisons.

All tails and quantiles come from ``scipy.stats``. Each test returns a :class:`TestResult` whose ``auxiliary``
mapping carries the intermediate quantities a report needs (U, z, SS, MS, ...).
"""

import logging
import math
from typing import Dict, List, Sequence

import numpy as np
from scipy import linalg, stats

from ..core.errors import InsufficientDataError, InputValidationError
from ..core.types import TestResult

logger = logging.getLogger(__name__)


def _clip_p(p: float) -> float:
    return float(min(1.0, max(0.0, p)))


def welch_t(mean1: float, sd1: float, n1: int, mean2: float, sd2: float, n2: int) -> TestResult:
    """Two-sample t-test with unequal variances from summary statistics.

    Args:
        mean1, sd1, n1: First group summary
        mean2, sd2, n2: Second group summary

    Returns:
        TestResult with t', Welch-Satterthwaite df and two-sided p
    """
    if n1 < 2 or n2 < 2:
        raise InsufficientDataError("welch_t needs at least two observations per group")
    if sd1 <= 0 or sd2 <= 0:
        raise InsufficientDataError("welch_t needs positive standard deviations")
    v1 = sd1 ** 2 / n1
    v2 = sd2 ** 2 / n2
    se = math.sqrt(v1 + v2)
    t = (mean1 - mean2) / se
    df = (v1 + v2) ** 2 / (v1 ** 2 / (n1 - 1) + v2 ** 2 / (n2 - 1))
    p = 2.0 * stats.t.sf(abs(t), df)
    return TestResult(statistic=t, df=df, p_value=_clip_p(p), auxiliary={"se": se, "mean_diff": mean1 - mean2})


def welch_t_samples(sample1: Sequence[float], sample2: Sequence[float]) -> TestResult:
    """Welch test on raw samples (sample SD, ddof 1)."""
    a = np.asarray(sample1, dtype=float)
    b = np.asarray(sample2, dtype=float)
    if a.size < 2 or b.size < 2:
        raise InsufficientDataError("welch_t needs at least two observations per group")
    return welch_t(a.mean(), a.std(ddof=1), a.size, b.mean(), b.std(ddof=1), b.size)


def pearson_chi2(table: Sequence[Sequence[float]]) -> TestResult:
    """Pearson chi-squared test of independence without continuity correction."""
    observed = np.asarray(table, dtype=float)
    if observed.ndim != 2 or min(observed.shape) < 2:
        raise InputValidationError("pearson_chi2 needs an r x c table with r, c >= 2")
    if (observed.sum(axis=0) == 0).any() or (observed.sum(axis=1) == 0).any():
        raise InsufficientDataError("pearson_chi2: contingency table has a zero marginal")
    chi2, p, dof, expected = stats.chi2_contingency(observed, correction=False)
    return TestResult(
        statistic=float(chi2),
        df=float(dof),
        p_value=_clip_p(p),
        auxiliary={"n": float(observed.sum()), "min_expected": float(expected.min())},
    )


def _mwu_z(u: float, n1: int, n2: int, tie_term: float = 0.0) -> float:
    n = n1 + n2
    mean_u = n1 * n2 / 2.0
    var_u = n1 * n2 * (n + 1) / 12.0
    if tie_term:
        var_u -= n1 * n2 * tie_term / (12.0 * n * (n - 1))
    if var_u <= 0:
        return 0.0
    return (u - mean_u) / math.sqrt(var_u)


def mann_whitney_from_u(u: float, n1: int, n2: int) -> TestResult:
    """Normal approximation for a known U without tie or continuity correction."""
    if n1 < 1 or n2 < 1:
        raise InsufficientDataError("mann_whitney needs non-empty samples")
    z = _mwu_z(u, n1, n2)
    p = 2.0 * stats.norm.sf(abs(z))
    return TestResult(
        statistic=float(u),
        p_value=_clip_p(p),
        auxiliary={"U1": float(u), "U2": float(n1 * n2 - u), "z": z, "n1": n1, "n2": n2},
    )


def mann_whitney(sample1: Sequence[float], sample2: Sequence[float], tie_correction: bool = False) -> TestResult:
    """Mann-Whitney U test with mid-rank ties.

    The statistic is U of ``sample1``; swapping samples negates z.

    Args:
        sample1: First sample
        sample2: Second sample
        tie_correction: Shrink the variance for tied ranks

    Returns:
        TestResult with U, z and two-sided p
    """
    a = np.asarray(sample1, dtype=float)
    b = np.asarray(sample2, dtype=float)
    n1, n2 = a.size, b.size
    if n1 == 0 or n2 == 0:
        raise InsufficientDataError("mann_whitney needs non-empty samples")
    ranks = stats.rankdata(np.concatenate([a, b]))
    u1 = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    tie_term = 0.0
    if tie_correction:
        _, counts = np.unique(np.concatenate([a, b]), return_counts=True)
        tie_term = float(((counts ** 3) - counts).sum())
    z = _mwu_z(u1, n1, n2, tie_term)
    p = 2.0 * stats.norm.sf(abs(z))
    return TestResult(
        statistic=u1,
        p_value=_clip_p(p),
        auxiliary={"U1": u1, "U2": float(n1 * n2 - u1), "z": z, "n1": n1, "n2": n2,
                   "tie_corrected": tie_correction},
    )


def wilcoxon_signed_rank(differences: Sequence[float], min_pairs: int = 5) -> TestResult:
    """Wilcoxon signed-rank test, normal approximation, zero differences dropped.

    The statistic is T = min(W+, W-), so z is never positive.
    """
    d = np.asarray(differences, dtype=float)
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        raise InsufficientDataError("wilcoxon_signed_rank: all differences are zero")
    if n < min_pairs:
        raise InsufficientDataError(f"wilcoxon_signed_rank needs {min_pairs} non-zero differences, got {n}")
    ranks = stats.rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    t = min(w_plus, w_minus)
    mean_t = n * (n + 1) / 4.0
    var_t = n * (n + 1) * (2 * n + 1) / 24.0
    _, counts = np.unique(np.abs(d), return_counts=True)
    var_t -= float(((counts ** 3) - counts).sum()) / 48.0
    z = (t - mean_t) / math.sqrt(var_t) if var_t > 0 else 0.0
    p = 2.0 * stats.norm.sf(abs(z))
    return TestResult(
        statistic=t,
        p_value=_clip_p(p),
        auxiliary={"W_plus": w_plus, "W_minus": w_minus, "z": z, "n": n},
    )


def h_from_ss(ss: float, ms_total: float, df: int) -> TestResult:
    """Scheirer-Ray-Hare H for one effect from its sum of squares on ranks."""
    if ms_total <= 0:
        raise InsufficientDataError("MS_total must be positive")
    h = ss / ms_total
    return TestResult(statistic=h, df=float(df), p_value=_clip_p(stats.chi2.sf(h, df)),
                      auxiliary={"SS": ss, "MS_total": ms_total})


def _dummies(codes: np.ndarray, n_levels: int) -> np.ndarray:
    """Treatment-coded indicator columns (first level as reference)."""
    return (codes[:, None] == np.arange(1, n_levels)[None, :]).astype(float)


def _model_ss(y: np.ndarray, blocks: List[np.ndarray]) -> float:
    x = np.column_stack([np.ones(y.size)] + blocks)
    coef, *_ = linalg.lstsq(x, y)
    fitted = x @ coef
    return float(((fitted - y.mean()) ** 2).sum())


def scheirer_ray_hare(values: Sequence[float], factor_a: Sequence, factor_b: Sequence) -> List[TestResult]:
    """Two-way ANOVA on ranks with sequential sums of squares.

    Args:
        values: Response values
        factor_a: First factor labels (entered first)
        factor_b: Second factor labels

    Returns:
        Results for A, B and A x B, in that order. Each auxiliary carries ``source``, SS, df and MS_total.
    """
    y = np.asarray(values, dtype=float)
    a_levels, a_codes = np.unique(np.asarray(factor_a), return_inverse=True)
    b_levels, b_codes = np.unique(np.asarray(factor_b), return_inverse=True)
    if y.size != a_codes.size or y.size != b_codes.size:
        raise InputValidationError("values and factors must have equal length")
    na, nb = a_levels.size, b_levels.size
    if na < 2 or nb < 2:
        raise InsufficientDataError("scheirer_ray_hare needs at least two levels per factor")
    cell_counts = np.zeros((na, nb), dtype=int)
    np.add.at(cell_counts, (a_codes, b_codes), 1)
    if (cell_counts == 0).any():
        empty = [f"{a_levels[i]} x {b_levels[j]}" for i, j in zip(*np.nonzero(cell_counts == 0))]
        raise InsufficientDataError(f"scheirer_ray_hare: empty design cells: {', '.join(empty)}")

    r = stats.rankdata(y)
    n = r.size
    ss_total = float(((r - r.mean()) ** 2).sum())
    ms_total = ss_total / (n - 1)

    da = _dummies(a_codes, na)
    db = _dummies(b_codes, nb)
    dab = np.column_stack([da[:, i] * db[:, j] for i in range(na - 1) for j in range(nb - 1)])
    ss_a = _model_ss(r, [da])
    ss_ab_additive = _model_ss(r, [da, db])
    ss_full = _model_ss(r, [da, db, dab])
    components: Dict[str, tuple] = {
        "A": (ss_a, na - 1),
        "B": (ss_ab_additive - ss_a, nb - 1),
        "AxB": (ss_full - ss_ab_additive, (na - 1) * (nb - 1)),
    }
    ss_error = ss_total - ss_full
    results = []
    for source, (ss, df) in components.items():
        res = h_from_ss(ss, ms_total, df)
        res.auxiliary.update({
            "source": source,
            "SS_error": ss_error,
            "df_error": n - na * nb,
            "SS_total": ss_total,
            "df_total": n - 1,
        })
        results.append(res)
    return results
