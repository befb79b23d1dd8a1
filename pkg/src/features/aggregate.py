"""Observation-period purchase aggregation."""

import logging
from typing import List

import pandas as pd
from pydantic import BaseModel, ConfigDict

from ..core.errors import InputValidationError
from ..core.types import EventKind, StudyWindow
from .taxonomy import FeatureSource, Taxonomy

logger = logging.getLogger(__name__)

DERIVED_CODES = ("purchase_frequency", "purchase_amount", "spending_per_purchase", "product_categories")


class ExplicitValues(BaseModel):
    """Raw explicit lifestyle values per shopper (rows ordered as requested)."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    counts: pd.DataFrame
    spend: pd.DataFrame
    derived: pd.DataFrame

    def feature_values(self) -> pd.DataFrame:
        """Counts per category next to the derived features, columns keyed by taxonomy code."""
        return pd.concat([self.counts, self.derived], axis=1)


def aggregate_explicit(
    events: pd.DataFrame,
    taxonomy: Taxonomy,
    window: StudyWindow,
    shopper_ids: List[str],
) -> ExplicitValues:
    """Per-category purchase counts and spend over the observation period.

    Queries and drug purchases contribute nothing, nor does anything dated in the performance period.

    Args:
        events: Event frame (id, ts, kind, category, amount, drug_code)
        taxonomy: Feature taxonomy naming the purchase categories
        window: Study window
        shopper_ids: Shoppers to aggregate, in output row order

    Returns:
        ExplicitValues with zero rows for untouched categories

    Raises:
        InputValidationError: On an event outside the study year or an unknown purchase category
    """
    categories = taxonomy.category_codes()
    index = pd.Index([str(i) for i in shopper_ids], name="id")
    shopping = events[events["drug_code"].isna() & events["id"].isin(index)]

    start = pd.Timestamp(window.observation_start)
    outside = (shopping["ts"] < start) | (shopping["ts"] > pd.Timestamp(window.performance_end))
    if outside.any():
        raise InputValidationError(f"{int(outside.sum())} events fall outside the study year")

    purchases = shopping[shopping["kind"] == EventKind.PURCHASE.value]
    unknown = set(purchases["category"]) - set(categories)
    if unknown:
        raise InputValidationError(f"Unknown purchase categories: {', '.join(sorted(map(str, unknown)))}")

    observed = purchases[purchases["ts"] < pd.Timestamp(window.performance_start)]
    if observed.empty:
        counts = pd.DataFrame(0, index=index, columns=categories)
        spend = pd.DataFrame(0.0, index=index, columns=categories)
    else:
        grouped = observed.groupby(["id", "category"])["amount"]
        counts = grouped.size().unstack(fill_value=0).reindex(index=index, columns=categories, fill_value=0)
        spend = grouped.sum().unstack(fill_value=0.0).reindex(index=index, columns=categories, fill_value=0.0)
    counts = counts.astype(int)
    spend = spend.astype(float)

    n = counts.sum(axis=1)
    total = spend.sum(axis=1)
    derived = pd.DataFrame({
        "purchase_frequency": n,
        "purchase_amount": total,
        "spending_per_purchase": (total / n.where(n > 0)).fillna(0.0),
        "product_categories": (counts > 0).sum(axis=1),
    }, index=index)
    wanted = [s.code for s in taxonomy.of_source(FeatureSource.DERIVED)]
    derived = derived[[c for c in DERIVED_CODES if c in wanted]]

    logger.debug(f"Aggregated {len(observed)} observation-period purchases for {len(index)} shoppers",
                 extra={"stage": "features"})
    return ExplicitValues(counts=counts, spend=spend, derived=derived)
