"""Synthetic shopper cohorts with planted disease-risk structure.

Activity, personas and purchases are drawn per shopper from generators keyed by the shopper index; labels are
drawn per (disease, stratum) after calibrating the intercept to the target prevalence; drug purchases are drawn
per case. Every generator is derived from one cohort seed, so a fixed seed gives a byte-identical cohort.
"""

import logging
import math
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict
from scipy import optimize
from scipy.special import expit

from ..cohort.catalog import DrugCatalog, load_catalog
from ..cohort.io import EVENT_COLUMNS, ROSTER_BASE_COLUMNS
from ..core.errors import CalibrationError, ConfigError
from ..core.seeding import derive_seed, rng_for
from ..core.types import AgeBand, Disease, EventKind, LabelValue, Sex, StudyWindow, parse_stratum_key
from ..features.aggregate import aggregate_explicit
from ..features.discretize import discretize
from ..features.taxonomy import FeatureCoding, FeatureKind, FeatureSpec, Taxonomy, load_taxonomy
from .models import CountModel, GeneratorConfig, PlantedEffect

logger = logging.getLogger(__name__)

DRUG_CATEGORY = "prescription_drugs"
PERSONA_MIN_AGE = 18
ORDINAL_PERSONA_PROBS = (0.1, 0.2, 0.4, 0.2, 0.1)
NOMINAL_CONTROL_PROB = 0.55
AMOUNT_SIGMA = 0.5
DRUG_PRICE = 35.0

# (relative popularity, typical price) per purchase category; synthetic defaults
CATEGORY_PROFILES: Dict[str, Tuple[float, float]] = {
    "snacks": (3.0, 25.0), "tea": (1.0, 60.0), "tea_beverages": (1.5, 20.0), "candies": (1.5, 18.0),
    "cereals": (2.0, 30.0), "meats": (2.0, 45.0), "coffee_mixes": (1.2, 35.0), "chinese_tonics": (0.5, 120.0),
    "home_healthcare": (0.8, 80.0), "books": (0.8, 40.0), "ebooks": (1.0, 15.0), "haircare_services": (0.4, 90.0),
    "haircare_products": (1.0, 50.0), "skincare": (1.5, 110.0), "bodycare": (1.2, 45.0),
    "childrens_clothing": (0.8, 70.0), "childrens_toys": (0.7, 60.0), "womens_clothing": (2.0, 120.0),
    "mens_clothing": (1.2, 130.0), "womens_shoes": (1.0, 150.0), "mens_shoes": (0.7, 160.0),
    "sneakers": (0.8, 220.0), "auto_parts": (0.5, 140.0), "second_hand": (0.4, 200.0),
    "kitchen_appliances": (0.6, 250.0), "tableware": (0.7, 40.0), "video_games": (0.5, 100.0),
    "sports_articles": (0.6, 90.0), "pet_supplies": (0.6, 70.0), "toiletries": (2.0, 30.0),
    "outdoor_gear": (0.4, 180.0), "diapers": (0.5, 90.0),
}
DEFAULT_PROFILE = (1.0, 50.0)

TRUTH_COLUMNS = [
    "kind", "disease", "sex", "age_band", "feature", "level", "coefficient", "target_prevalence",
    "realized_prevalence", "n",
]


class SyntheticCohort(BaseModel):
    """Generated shoppers in tabular form plus the ground truth behind them."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    seed: int
    events: pd.DataFrame
    roster: pd.DataFrame
    truth: pd.DataFrame
    labels: pd.DataFrame

    def shoppers(self):
        """Materialize Shopper records (slow for large cohorts)."""
        from ..cohort.io import shoppers_from_frames
        return shoppers_from_frames(self.events, self.roster)


def lognormal_params(model: CountModel) -> Tuple[float, float]:
    """(mu, sigma) of the lognormal with the model's mean and SD."""
    sigma2 = math.log1p((model.sd / model.mean) ** 2)
    return math.log(model.mean) - sigma2 / 2.0, math.sqrt(sigma2)


def _month_grid(window: StudyWindow) -> Tuple[np.ndarray, np.ndarray]:
    first = np.datetime64(window.observation_start.strftime("%Y-%m"), "M")
    months = first + np.arange(window.months())
    starts = months.astype("datetime64[D]")
    lengths = ((months + 1).astype("datetime64[D]") - starts).astype(int)
    return starts, lengths


def _spread_over_months(rng: np.random.Generator, monthly: np.ndarray, starts: np.ndarray,
                        lengths: np.ndarray) -> np.ndarray:
    month_idx = np.repeat(np.arange(monthly.size), monthly)
    offsets = rng.integers(0, lengths[month_idx])
    return starts[month_idx] + offsets.astype("timedelta64[D]")


def _persona_probs(spec: FeatureSpec) -> np.ndarray:
    n = len(spec.levels)
    if spec.coding == FeatureCoding.ORDINAL:
        return np.array(ORDINAL_PERSONA_PROBS) if n == len(ORDINAL_PERSONA_PROBS) else np.full(n, 1.0 / n)
    probs = np.full(n, (1.0 - NOMINAL_CONTROL_PROB) / (n - 1))
    probs[spec.levels.index(spec.control_category)] = NOMINAL_CONTROL_PROB
    return probs


def validate_effects(effects: List[PlantedEffect], taxonomy: Taxonomy) -> List[FeatureSpec]:
    """Resolve each effect's feature and check its level.

    Raises:
        ConfigError: For an unknown feature or a level that does not fit the feature's coding
    """
    specs = []
    for effect in effects:
        spec = taxonomy.by_name().get(effect.feature_name) or taxonomy.by_code().get(effect.feature_name)
        if spec is None:
            raise ConfigError(f"Planted effect names unknown feature {effect.feature_name!r}")
        if spec.coding == FeatureCoding.NOMINAL:
            if effect.level is None or effect.level not in spec.levels or effect.level == spec.control_category:
                raise ConfigError(f"Nominal effect on {spec.name} needs a non-control level of {spec.levels}")
        elif effect.level is not None:
            raise ConfigError(f"Ordinal effect on {spec.name} cannot name a level")
        specs.append(spec)
    return specs


def _applies(effect: PlantedEffect, sex: Sex, band: AgeBand, disease: Disease) -> bool:
    if not effect.applies_to:
        return True
    return any(s.sex == sex and s.age_band == band and s.disease == disease for s in effect.applies_to)


def calibrate_intercept(offsets: np.ndarray, target: float, bounds: Tuple[float, float]) -> float:
    """Intercept b0 with mean(logistic(b0 + offsets)) = target, found by bisection.

    Raises:
        CalibrationError: If the bounds do not bracket the target
    """
    lo, hi = bounds

    def gap(b0: float) -> float:
        return float(expit(b0 + offsets).mean()) - target

    g_lo, g_hi = gap(lo), gap(hi)
    if g_lo > 0 or g_hi < 0:
        raise CalibrationError(
            f"Prevalence {target} is not reachable with intercepts in [{lo}, {hi}] "
            f"(range {g_lo + target:.4f}..{g_hi + target:.4f})"
        )
    if g_lo == 0:
        return lo
    if g_hi == 0:
        return hi
    return float(optimize.bisect(gap, lo, hi, xtol=1e-12, maxiter=200))


class _ShopperDraw(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    ts: np.ndarray
    kind: np.ndarray
    category: np.ndarray
    amount: np.ndarray


def _draw_shopper(seed: int, index: int, stratum: str, config: GeneratorConfig, categories: List[str],
                  popularity: np.ndarray, prices: np.ndarray, starts: np.ndarray,
                  lengths: np.ndarray) -> _ShopperDraw:
    rng = rng_for(seed, "shopper", index)
    n_months = starts.size

    mu_p, sig_p = lognormal_params(config.monthly_purchase_model[stratum])
    purchase_rate = rng.lognormal(mu_p, sig_p)
    purchase_months = rng.poisson(purchase_rate, size=n_months)
    weights = popularity * rng.gamma(2.0, 0.5, size=len(categories))
    weights = weights / weights.sum()
    spend_factor = rng.lognormal(-AMOUNT_SIGMA ** 2 / 2, AMOUNT_SIGMA)

    p_ts = _spread_over_months(rng, purchase_months, starts, lengths)
    p_cat = rng.choice(len(categories), size=p_ts.size, p=weights)
    noise = rng.lognormal(-AMOUNT_SIGMA ** 2 / 2, AMOUNT_SIGMA, size=p_ts.size)
    p_amount = np.round(prices[p_cat] * spend_factor * noise, 2)

    if config.emit_queries:
        mu_q, sig_q = lognormal_params(config.monthly_query_model[stratum])
        query_months = rng.poisson(rng.lognormal(mu_q, sig_q), size=n_months)
        q_ts = _spread_over_months(rng, query_months, starts, lengths)
        q_cat = rng.choice(len(categories), size=q_ts.size, p=weights)
    else:
        q_ts = np.zeros(0, dtype="datetime64[D]")
        q_cat = np.zeros(0, dtype=int)

    cats = np.asarray(categories, dtype=object)
    return _ShopperDraw(
        ts=np.concatenate([q_ts, p_ts]),
        kind=np.concatenate([np.full(q_ts.size, EventKind.QUERY.value, dtype=object),
                             np.full(p_ts.size, EventKind.PURCHASE.value, dtype=object)]),
        category=np.concatenate([cats[q_cat], cats[p_cat]]),
        amount=np.concatenate([np.zeros(q_ts.size), p_amount]),
    )


def _draw_personas(seed: int, index: int, age: int, specs: List[FeatureSpec]) -> Dict[str, Optional[str]]:
    if age < PERSONA_MIN_AGE:
        return {s.code: None for s in specs}
    rng = rng_for(seed, "persona", index)
    return {s.code: s.levels[int(rng.choice(len(s.levels), p=_persona_probs(s)))] for s in specs}


def _feature_values(spec: FeatureSpec, ids: List[str], roster: pd.DataFrame, explicit: pd.DataFrame,
                    n_bins: int) -> np.ndarray:
    """Per-shopper covariate used by planted effects (ordinal code, or raw level for nominal)."""
    if spec.kind == FeatureKind.EXPLICIT:
        return discretize(explicit.loc[ids, spec.code].to_numpy(dtype=float), n_bins).codes.astype(float)
    values = roster.loc[ids, spec.code]
    if spec.coding == FeatureCoding.NOMINAL:
        return values.to_numpy(dtype=object)
    index = {lvl: i + 1 for i, lvl in enumerate(spec.levels)}
    codes = np.array([index[v] if isinstance(v, str) else 0 for v in values], dtype=float)
    if (codes == 0).all():
        return np.zeros(codes.size)
    if (codes == 0).any():
        present = codes[codes > 0].astype(int)
        codes[codes == 0] = float(np.argmax(np.bincount(present)))
    return codes


def generate_cohort(
    config: GeneratorConfig,
    effects: Optional[List[PlantedEffect]] = None,
    taxonomy: Optional[Taxonomy] = None,
    catalog: Optional[DrugCatalog] = None,
    master_seed: int = 0,
) -> SyntheticCohort:
    """Generate a synthetic cohort.

    Args:
        config: Generator configuration
        effects: Planted feature effects (log-odds per ordinal step or for a nominal level)
        taxonomy: Feature taxonomy (default: shipped taxonomy with ``config.n_bins`` bins)
        catalog: Drug catalog (default: shipped catalog)
        master_seed: Used to derive the cohort seed when ``config.seed`` is unset

    Returns:
        SyntheticCohort with events, roster, per-disease truth labels and the truth table

    Raises:
        ConfigError: For effects that do not fit the taxonomy
        CalibrationError: If a stratum's prevalence cannot be calibrated
    """
    effects = list(effects or [])
    taxonomy = taxonomy or load_taxonomy(n_bins=config.n_bins)
    catalog = catalog or load_catalog()
    effect_specs = validate_effects(effects, taxonomy)
    seed = config.seed if config.seed is not None else derive_seed(master_seed, "synth")
    window = config.window

    keys = [k for k, p in config.demographic_mix.items() if p > 0]
    probs = np.array([config.demographic_mix[k] for k in keys])
    demo_rng = rng_for(seed, "demographics")
    strata = [keys[i] for i in demo_rng.choice(len(keys), size=config.n_shoppers, p=probs / probs.sum())]
    ages = np.empty(config.n_shoppers, dtype=int)
    for i, key in enumerate(strata):
        lo, hi = parse_stratum_key(key)[1].bounds
        ages[i] = int(demo_rng.integers(lo, hi + 1))
    width = len(str(config.n_shoppers - 1))
    ids = [f"s{i:0{width}d}" for i in range(config.n_shoppers)]

    categories = taxonomy.category_codes()
    popularity = np.array([CATEGORY_PROFILES.get(c, DEFAULT_PROFILE)[0] for c in categories])
    prices = np.array([CATEGORY_PROFILES.get(c, DEFAULT_PROFILE)[1] for c in categories])
    starts, lengths = _month_grid(window)
    persona_specs = taxonomy.personas()

    draws: List[_ShopperDraw] = []
    roster_rows = []
    for i, (sid, key, age) in enumerate(zip(ids, strata, ages)):
        draws.append(_draw_shopper(seed, i, key, config, categories, popularity, prices, starts, lengths))
        sex, _ = parse_stratum_key(key)
        roster_rows.append({"id": sid, "sex": sex.value, "age_years": int(age),
                            **_draw_personas(seed, i, int(age), persona_specs)})
    roster = pd.DataFrame(roster_rows, columns=ROSTER_BASE_COLUMNS + [s.code for s in persona_specs])
    sizes = [d.ts.size for d in draws]
    shopping = pd.DataFrame({
        "id": np.repeat(np.asarray(ids, dtype=object), sizes),
        "ts": np.concatenate([d.ts for d in draws]).astype("datetime64[ns]"),
        "kind": np.concatenate([d.kind for d in draws]),
        "category": np.concatenate([d.category for d in draws]),
        "amount": np.concatenate([d.amount for d in draws]),
        "drug_code": None,
    })

    by_key: Dict[str, List[str]] = {}
    for sid, key in zip(ids, strata):
        by_key.setdefault(key, []).append(sid)
    roster_by_id = roster.set_index("id")
    explicit = aggregate_explicit(shopping, taxonomy, window, ids).feature_values() if effects else None

    drug_rows: List[Dict[str, object]] = []
    excluded = _plant_exclusions(seed, ids, config, catalog, window, drug_rows)
    label_rows: List[Dict[str, str]] = [
        {"id": sid, "disease": d.value, "label": LabelValue.EXCLUDED.value}
        for sid in sorted(excluded) for d in config.prevalence
    ]
    truth_rows: List[Dict[str, object]] = []

    for disease, target in config.prevalence.items():
        codes = sorted(catalog.codes(disease))
        for key in sorted(by_key, key=lambda k: list(config.demographic_mix).index(k)):
            sex, band = parse_stratum_key(key)
            members = [s for s in by_key[key] if s not in excluded]
            if not members:
                continue
            offsets = np.zeros(len(members))
            for effect, spec in zip(effects, effect_specs):
                if not _applies(effect, sex, band, disease):
                    continue
                values = _feature_values(spec, members, roster_by_id, explicit, config.n_bins)
                if spec.coding == FeatureCoding.NOMINAL:
                    offsets += effect.coefficient * (values == effect.level)
                else:
                    offsets += effect.coefficient * values
                truth_rows.append({
                    "kind": "effect", "disease": disease.value, "sex": sex.value, "age_band": band.value,
                    "feature": spec.name, "level": effect.level or "", "coefficient": effect.coefficient,
                    "target_prevalence": None, "realized_prevalence": None, "n": len(members),
                })
            b0 = calibrate_intercept(offsets, target, config.calibration_bounds)
            rng = rng_for(seed, "label", disease.value, key)
            y = rng.random(len(members)) < expit(b0 + offsets)
            truth_rows.append({
                "kind": "intercept", "disease": disease.value, "sex": sex.value, "age_band": band.value,
                "feature": "", "level": "", "coefficient": b0, "target_prevalence": target,
                "realized_prevalence": float(y.mean()), "n": len(members),
            })
            for sid, is_case in zip(members, y):
                label_rows.append({"id": sid, "disease": disease.value,
                                   "label": LabelValue.CASE.value if is_case else LabelValue.CONTROL.value})
                if is_case:
                    _plant_case_drugs(seed, sid, disease, codes, config, window, drug_rows)
        logger.info(f"Calibrated {disease.value} across {len(by_key)} strata",
                    extra={"stage": "synth", "disease": disease.value, "seed": seed})

    drugs = pd.DataFrame(drug_rows, columns=EVENT_COLUMNS)
    drugs["ts"] = pd.to_datetime(drugs["ts"]).astype("datetime64[ns]")
    events = pd.concat([shopping, drugs], ignore_index=True) if len(drugs) else shopping
    position = {sid: i for i, sid in enumerate(ids)}
    order = np.lexsort((np.arange(len(events)), events["ts"].to_numpy(), events["id"].map(position).to_numpy()))
    events = events.iloc[order].reset_index(drop=True)[EVENT_COLUMNS]

    labels = pd.DataFrame(label_rows, columns=["id", "disease", "label"])
    labels["_pos"] = labels["id"].map(position)
    labels = labels.sort_values(["disease", "_pos"], kind="stable").drop(columns="_pos").reset_index(drop=True)
    truth = pd.DataFrame(truth_rows, columns=TRUTH_COLUMNS)
    logger.info(f"Generated {config.n_shoppers} shoppers with {len(events)} events",
                extra={"stage": "synth", "seed": seed})
    return SyntheticCohort(seed=seed, events=events, roster=roster, truth=truth, labels=labels)


def _day_between(rng: np.random.Generator, first: np.datetime64, last: np.datetime64) -> np.datetime64:
    span = int((last - first).astype(int))
    return first + np.timedelta64(int(rng.integers(0, span + 1)), "D")


def _drug_row(sid: str, day: np.datetime64, code: str, rng: np.random.Generator) -> Dict[str, object]:
    amount = round(DRUG_PRICE * float(rng.lognormal(-AMOUNT_SIGMA ** 2 / 2, AMOUNT_SIGMA)), 2)
    return {"id": sid, "ts": day, "kind": EventKind.PURCHASE.value, "category": DRUG_CATEGORY,
            "amount": amount, "drug_code": code}


def _plant_case_drugs(seed: int, sid: str, disease: Disease, codes: List[str], config: GeneratorConfig,
                      window: StudyWindow, rows: List[Dict[str, object]]) -> None:
    rng = rng_for(seed, "drug", disease.value, sid)
    start = np.datetime64(window.performance_start.isoformat(), "D")
    end = np.datetime64(window.performance_end.isoformat(), "D")
    first = _day_between(rng, start, end)
    code = codes[int(rng.integers(0, len(codes)))]
    rows.append(_drug_row(sid, first, code, rng))
    for _ in range(int(rng.integers(0, config.max_refills + 1))):
        rows.append(_drug_row(sid, _day_between(rng, first, end), code, rng))


def _plant_exclusions(seed: int, ids: List[str], config: GeneratorConfig, catalog: DrugCatalog,
                      window: StudyWindow, rows: List[Dict[str, object]]) -> set:
    if config.observation_drug_rate <= 0:
        return set()
    rng = rng_for(seed, "exclusion")
    chosen = rng.random(len(ids)) < config.observation_drug_rate
    codes = sorted(catalog.codes())
    start = np.datetime64(window.observation_start.isoformat(), "D")
    end = np.datetime64(window.observation_end.isoformat(), "D")
    excluded = set()
    for sid, pick in zip(ids, chosen):
        if pick:
            rows.append(_drug_row(sid, _day_between(rng, start, end), codes[int(rng.integers(0, len(codes)))], rng))
            excluded.add(sid)
    return excluded
