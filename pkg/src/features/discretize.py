"""Quantile binning of explicit feature values."""

from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..core.errors import InputValidationError


class Binning(BaseModel):
    """Ordinal codes 1..k and the edges that produced them."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    codes: np.ndarray
    edges: List[float]
    degenerate: bool

    @property
    def n_levels(self) -> int:
        return int(self.codes.max()) if self.codes.size else 0


def discretize(values, n_bins: int) -> Binning:
    """Bin values at their pooled quantiles.

    Edges are the inverted-CDF quantiles at i/n_bins, so they are always data values and a value equal to an edge
    falls into the lower bin. Duplicate edges collapse; codes are renumbered to 1..k. A column with a single
    code is degenerate.

    Args:
        values: Raw values for every shopper of the stratum
        n_bins: Requested number of bins (at least 2)

    Returns:
        Binning with codes in 1..k, k <= n_bins
    """
    if n_bins < 2:
        raise InputValidationError("n_bins must be at least 2")
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return Binning(codes=np.zeros(0, dtype=int), edges=[], degenerate=True)

    qs = np.arange(1, n_bins) / n_bins
    edges = np.unique(np.quantile(x, qs, method="inverted_cdf"))
    raw = np.searchsorted(edges, x, side="left")
    present, codes = np.unique(raw, return_inverse=True)
    return Binning(
        codes=codes.astype(int) + 1,
        edges=[float(e) for e in edges],
        degenerate=present.size < 2,
    )
