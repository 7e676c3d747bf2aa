"""Per-sample feature vectors and the wide feature table."""
from __future__ import annotations

import bisect
import csv
import datetime as dt
import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .ingest import EntityStore, Sample, add_years, parse_date
from .network import CentralityCache, CentralityTable, investor_features
from .text.competition import CompetitionConfig, CompetitorSet, DocUniverse, FundingTotals, competition_features, find_competitors

log = logging.getLogger(__name__)

FEATURES = (
    "n_startups_region",
    "founded_age_days",
    "total_funding_usd",
    "n_rounds",
    "days_since_last_round",
    "last_round_usd",
    "days_since_first_round",
    "has_seed",
    "has_a",
    "has_b",
    "has_c",
    "has_d",
    "n_investors",
    "max_inv_centrality",
    "mean_inv_centrality",
    "sum_inv_centrality",
    "max_portfolio",
    "n_articles",
    "news_increase",
    "n_founders",
    "n_previous_startups",
    "comp_count",
    "comp_funding_usd",
    "comp_funding_1y_usd",
)
FLAGS = ("has_seed", "has_a", "has_b", "has_c", "has_d")
COMPETITION = ("comp_count", "comp_funding_usd", "comp_funding_1y_usd")
NETWORK = ("n_investors", "max_inv_centrality", "mean_inv_centrality", "sum_inv_centrality", "max_portfolio")

_FLAG_TYPES = {"seed": "has_seed", "series_a": "has_a", "series_b": "has_b", "series_c": "has_c", "series_d": "has_d"}

FEATURE_SETS = {
    "full": FEATURES,
    "without-competition": tuple(f for f in FEATURES if f not in COMPETITION),
    "without-network": tuple(f for f in FEATURES if f not in NETWORK),
    "without-extrinsic": tuple(f for f in FEATURES if f not in COMPETITION + NETWORK),
}


def feature_set(name_or_list) -> tuple[str, ...]:
    """Resolve a named feature set or validate a custom list of feature names."""
    if isinstance(name_or_list, str):
        if name_or_list not in FEATURE_SETS:
            raise ValueError(f"unknown feature set {name_or_list!r}; known: {', '.join(FEATURE_SETS)}")
        return FEATURE_SETS[name_or_list]
    names = tuple(name_or_list)
    unknown = [n for n in names if n not in FEATURES]
    if unknown:
        raise ValueError(f"unknown feature(s): {', '.join(unknown)}")
    return names


def scaled_mask(names: Sequence[str]) -> np.ndarray:
    """Which columns get the power transform (every non-flag column)."""
    return np.array([n not in FLAGS for n in names], dtype=bool)


def news_increase(store: EntityStore, company_id: str, as_of: dt.date) -> float:
    """Smoothed year-on-year growth of news mentions."""
    one = add_years(as_of, -1)
    two = add_years(as_of, -2)
    recent = store.mentions_between(company_id, one, as_of)
    before = store.mentions_between(company_id, two, one)
    return (recent + 1.0) / (before + 1.0)


def founder_counts(store: EntityStore, company_id: str) -> tuple[int, int]:
    """(number of founders, companies they founded earlier than this one)."""
    founders = store.founders_by_company.get(company_id, [])
    founded = store.companies[company_id].founded_on
    previous = 0
    for p in founders:
        for other in p.founded_company_ids:
            if other != company_id and store.companies[other].founded_on < founded:
                previous += 1
    return len(founders), previous


class RegionCounts:
    def __init__(self, store: EntityStore):
        by_region: dict[str, list[dt.date]] = {}
        for c in store.companies.values():
            by_region.setdefault(c.region, []).append(c.founded_on)
        self._dates = {r: sorted(ds) for r, ds in by_region.items()}

    def __call__(self, region: str, as_of: dt.date) -> int:
        return bisect.bisect_right(self._dates.get(region, []), as_of)


def assemble(sample: Sample, store: EntityStore, competitors: CompetitorSet | None,
             centrality: CentralityTable, *, totals: FundingTotals | None = None,
             regions: RegionCounts | None = None) -> np.ndarray:
    """Feature vector of one sample, in :data:`FEATURES` order.

    Only records dated on or before ``sample.as_of`` are used. A missing
    competitor set yields zero competition features.
    """
    as_of = sample.as_of
    company = store.companies[sample.company_id]
    rounds = store.rounds_until(company.id, as_of)
    regions = regions or RegionCounts(store)
    v = dict.fromkeys(FEATURES, 0.0)

    v["n_startups_region"] = regions(company.region, as_of)
    v["founded_age_days"] = max(0, (as_of - company.founded_on).days)
    if rounds:
        amounts = [store.amount(r) for r in rounds]
        v["total_funding_usd"] = sum(amounts)
        v["n_rounds"] = len(rounds)
        v["days_since_last_round"] = (as_of - rounds[-1].announced_on).days
        v["last_round_usd"] = amounts[-1]
        v["days_since_first_round"] = (as_of - rounds[0].announced_on).days
        for r in rounds:
            if r.round_type in _FLAG_TYPES:
                v[_FLAG_TYPES[r.round_type]] = 1.0

    n_inv, mx, mean, total, portfolio = investor_features(sample, centrality, store)
    v["n_investors"] = n_inv
    v["max_inv_centrality"] = mx
    v["mean_inv_centrality"] = mean
    v["sum_inv_centrality"] = total
    v["max_portfolio"] = portfolio

    v["n_articles"] = store.mentions_between(company.id, dt.date.min, as_of)
    v["news_increase"] = news_increase(store, company.id, as_of)
    v["n_founders"], v["n_previous_startups"] = founder_counts(store, company.id)

    if competitors is not None:
        count, funding, funding_1y = competition_features(sample, competitors, store, totals)
        v["comp_count"] = count
        v["comp_funding_usd"] = funding
        v["comp_funding_1y_usd"] = funding_1y
    return np.array([float(v[f]) for f in FEATURES])


@dataclass
class FeatureTable:
    samples: list[Sample]
    X: np.ndarray
    columns: tuple[str, ...] = FEATURES

    def __len__(self):
        return len(self.samples)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    @property
    def as_of(self) -> np.ndarray:
        return np.array([np.datetime64(s.as_of, "D") for s in self.samples], dtype="datetime64[D]")

    def select(self, names: Sequence[str]) -> np.ndarray:
        idx = [self.columns.index(n) for n in names]
        return self.X[:, idx]

    def subset(self, mask) -> "FeatureTable":
        mask = np.asarray(mask)
        idx = np.flatnonzero(mask) if mask.dtype == bool else mask
        return FeatureTable([self.samples[i] for i in idx], self.X[idx], self.columns)

    def cohort(self, cohort: str) -> "FeatureTable":
        return self.subset(np.array([s.cohort == cohort for s in self.samples], dtype=bool))


class FeatureBuilder:
    """Assembles feature vectors for many samples, sharing per-date caches.

    Samples whose company has no description vector are dropped (their
    count is kept in ``dropped_no_description``) when a universe is given.
    """

    def __init__(self, store: EntityStore, universe: DocUniverse | None,
                 centrality: CentralityCache | None = None, config: CompetitionConfig | None = None,
                 competitor_sets: Mapping[tuple[str, dt.date], CompetitorSet] | None = None):
        self.store = store
        self.competitor_sets = competitor_sets
        self.universe = universe
        self.config = config
        self.centrality = centrality or CentralityCache(store)
        self.totals = FundingTotals(store)
        self.regions = RegionCounts(store)
        self.missing_founders = 0
        self.dropped_no_description = 0

    def competitors(self, company_id: str, as_of: dt.date) -> CompetitorSet | None:
        if self.universe is None or company_id not in self.universe:
            return None
        if self.competitor_sets is not None and (company_id, as_of) in self.competitor_sets:
            return self.competitor_sets[(company_id, as_of)]
        return find_competitors(company_id, self.universe, self.config, as_of)

    def vector(self, sample: Sample) -> np.ndarray:
        return assemble(
            sample, self.store, self.competitors(sample.company_id, sample.as_of),
            self.centrality(sample.as_of), totals=self.totals, regions=self.regions,
        )

    def build(self, samples: Sequence[Sample]) -> FeatureTable:
        kept, rows = [], []
        self.missing_founders = 0
        self.dropped_no_description = 0
        for s in samples:
            if self.universe is not None and s.company_id not in self.universe:
                self.dropped_no_description += 1
                continue
            if s.company_id not in self.store.founders_by_company:
                self.missing_founders += 1
            kept.append(s)
            rows.append(self.vector(s))
        if self.dropped_no_description:
            log.warning("dropped %d sample(s) without a usable description", self.dropped_no_description)
        X = np.array(rows, dtype=np.float64).reshape(len(rows), len(FEATURES))
        return FeatureTable(kept, X)


META = ("company_id", "as_of", "cohort", "label", "horizon_years")


def write_features(table: FeatureTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(META + tuple(table.columns))
        for s, row in zip(table.samples, table.X):
            w.writerow([s.company_id, s.as_of.isoformat(), s.cohort, int(s.label), s.horizon_years]
                       + [repr(float(x)) for x in row])


def read_features(path) -> FeatureTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header[:len(META)]) != META:
            raise ValueError(f"{path}: feature file must start with columns {', '.join(META)}")
        columns = tuple(header[len(META):])
        samples, rows = [], []
        for rec in reader:
            samples.append(Sample(rec[0], parse_date(rec[1]), rec[2], rec[3] == "1", int(rec[4])))
            rows.append([float(x) for x in rec[len(META):]])
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(columns))
    return FeatureTable(samples, X, columns)
