"""Seeded generator of startup ecosystems with planted success signals.

Companies are spread over sectors with Zipf-distributed sizes; each sector
owns a keyword pool so descriptions from the same sector read alike. Rounds
follow a stage progression (seed, A, B, C, D, then later rounds) in which the
log-odds of raising again within the horizon is

    base[stage] + founder_effect * previous startups of the founders
                + competition_effect * same-sector companies founded so far   (seed only)
                + network_effect * max investor betweenness                   (A and B only)

Investors are chosen by preferential attachment on portfolio size, and
investor betweenness is refreshed at every semester boundary.
"""
from __future__ import annotations

import csv
import datetime as dt
import heapq
import itertools
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .ingest import ROUND_TYPES, semester_ends
from .network import InvestorGraph, betweenness

STAGES = ("seed", "series_a", "series_b", "series_c", "series_d", "other")
_NEXT = {"seed": "series_a", "series_a": "series_b", "series_b": "series_c",
         "series_c": "series_d", "series_d": "other", "other": "other"}
_MEDIAN_USD = {"seed": 1.0e6, "series_a": 6.0e6, "series_b": 18.0e6, "series_c": 35.0e6,
               "series_d": 60.0e6, "other": 12.0e6}
_N_INVESTORS = {"seed": (1, 2), "series_a": (2, 3), "series_b": (2, 4), "series_c": (2, 4),
                "series_d": (2, 4), "other": (1, 3)}

_GENERIC = (
    "platform customers solution software service data team market users mobile online business "
    "network technology product analytics cloud management digital tools companies enterprise "
    "marketplace app experience partners global innovative leading provider access simple secure "
    "smart real time based help people world industry professionals community services"
).split()
_FILLER = ("the", "and", "for", "a", "with", "our", "to", "of", "in", "that", "is", "we")
_ONSETS = ("b", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "cr", "dr",
           "gl", "pr", "st", "tr", "sk", "pl", "fl", "gr", "sh", "th", "ch", "qu")
_VOWELS = ("a", "e", "i", "o", "u", "ai", "ea", "io", "ou", "y")
_CODAS = ("", "n", "r", "s", "x", "l", "m", "t", "ck", "nd", "rt", "sh")


@dataclass
class ScenarioSpec:
    n_companies: int = 5000
    n_investors: int = 300
    n_sectors: int = 30
    start: dt.date = dt.date(2004, 1, 1)
    end: dt.date = dt.date(2017, 12, 31)
    competition_effect: float = -0.03
    network_effect: float = 30.0
    founder_effect: float = 0.3
    seed: int = 1
    n_regions: int = 12
    sector_zipf: float = 0.7
    sector_words: int = 20
    seed_rate: float = 0.85
    base_seed: float = 1.6
    base_a: float = -1.2
    base_b: float = -1.0
    base_late: float = -0.5
    exit_share: float = 0.12
    undisclosed_share: float = 0.25
    corporate_share: float = 0.05

    def __post_init__(self):
        for name in ("start", "end"):
            if isinstance(getattr(self, name), str):
                setattr(self, name, dt.date.fromisoformat(getattr(self, name)))

    def validate(self):
        if min(self.n_companies, self.n_investors, self.n_sectors, self.n_regions) < 1:
            raise ValueError("scenario sizes must be >= 1")
        if (self.end - self.start).days < 730:
            raise ValueError("scenario time span must cover at least two years")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario key(s): {', '.join(sorted(unknown))}")
        d = dict(d)
        for k in ("start", "end"):
            if isinstance(d.get(k), str):
                d[k] = dt.date.fromisoformat(d[k])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["start"] = self.start.isoformat()
        d["end"] = self.end.isoformat()
        return d


@dataclass
class Scenario:
    spec: ScenarioSpec
    companies: list[dict]
    rounds: list[dict]
    people: list[dict]
    news: list[dict]
    truth: list[dict] = field(default_factory=list)

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        tables = {
            "companies": (("id", "name", "founded_on", "region", "description", "tags", "status", "status_date"), self.companies),
            "rounds": (("id", "company_id", "announced_on", "round_type", "amount_usd", "investor_ids"), self.rounds),
            "people": (("id", "founded_company_ids"), self.people),
            "news": (("company_id", "published_on"), self.news),
            "truth": (("round_id", "company_id", "round_type", "announced_on", "sector", "n_competitors",
                       "max_centrality", "probability", "success"), self.truth),
        }
        paths = {}
        for kind, (cols, rows) in tables.items():
            path = out / f"{kind}.csv"
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(cols)
                for r in rows:
                    w.writerow([_fmt(r.get(c)) for c in cols])
            paths[kind] = path
        return paths


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, dt.date):
        return v.isoformat()
    if isinstance(v, (list, tuple)):
        return "|".join(v)
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def _pseudo_words(rng: np.random.Generator, n: int, taken: set) -> list[str]:
    out = []
    while len(out) < n:
        k = rng.integers(2, 4)
        w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))] for _ in range(k))
        w += _CODAS[rng.integers(len(_CODAS))]
        if w not in taken and len(w) > 3:
            taken.add(w)
            out.append(w)
    return out


def _zipf_probs(n: int, s: float) -> np.ndarray:
    p = 1.0 / np.arange(1, n + 1) ** s
    return p / p.sum()


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


class _Generator:
    def __init__(self, spec: ScenarioSpec):
        spec.validate()
        self.spec = spec
        self.rng = np.random.default_rng(spec.seed)
        self.events = []
        self.seq = itertools.count()

    def days(self, lo, hi):
        return dt.timedelta(days=int(self.rng.integers(lo, hi + 1)))

    def schedule(self, when: dt.date, kind: str, company: int, stage: str | None = None):
        if when <= self.spec.end:
            heapq.heappush(self.events, (when, next(self.seq), kind, company, stage))

    def description(self, sector: int) -> str:
        rng = self.rng
        pool = self.sector_pools[sector]
        n_words = int(rng.integers(14, 24))
        words = []
        if rng.random() < 0.6:
            words += list(self.sector_phrases[sector])
        while len(words) < n_words:
            if rng.random() < 0.7:
                words.append(pool[min(int(rng.zipf(1.6)) - 1, len(pool) - 1) if rng.random() < 0.5 else rng.integers(len(pool))])
            else:
                words.append(_GENERIC[rng.integers(len(_GENERIC))])
        out = []
        for w in words:
            if rng.random() < 0.25:
                out.append(_FILLER[rng.integers(len(_FILLER))])
            out.append(w)
        if rng.random() < 0.2:
            out.append(f"{int(rng.integers(2, 99))}+")
        text = " ".join(out)
        return text[0].upper() + text[1:] + "."

    def run(self) -> Scenario:
        spec, rng = self.spec, self.rng
        taken = set(_GENERIC) | set(_FILLER)
        self.sector_pools = [_pseudo_words(rng, spec.sector_words, taken) for _ in range(spec.n_sectors)]
        self.sector_phrases = [tuple(_pseudo_words(rng, 2, taken)) for _ in range(spec.n_sectors)]
        regions = [f"region_{k:02d}" for k in range(spec.n_regions)]

        span = (spec.end - spec.start).days - 365
        founded = sorted(spec.start + dt.timedelta(days=int(x)) for x in rng.integers(0, span, spec.n_companies))
        sector = rng.choice(spec.n_sectors, size=spec.n_companies, p=_zipf_probs(spec.n_sectors, spec.sector_zipf))
        region = rng.choice(spec.n_regions, size=spec.n_companies, p=_zipf_probs(spec.n_regions, 1.0))
        width = len(str(spec.n_companies))
        self.company_ids = [f"c{k:0{width}d}" for k in range(spec.n_companies)]
        self.founded = founded
        self.sector = sector
        self.status = ["operating"] * spec.n_companies
        self.status_date: list[dt.date | None] = [None] * spec.n_companies

        # founders: serial founders re-used from earlier companies
        people: list[list[int]] = []
        self.previous = np.zeros(spec.n_companies, dtype=np.int64)
        for c in range(spec.n_companies):
            if rng.random() < 0.15:
                continue
            n_f = min(5, 1 + int(rng.poisson(0.8)))
            for _ in range(n_f):
                if people and rng.random() < 0.15:
                    p = int(rng.integers(len(people)))
                    if c in people[p]:
                        continue
                    self.previous[c] += len(people[p])
                    people[p].append(c)
                else:
                    people.append([c])

        n_corporate = min(int(round(spec.corporate_share * spec.n_investors)), spec.n_companies)
        corporate = [self.company_ids[k] for k in rng.choice(spec.n_companies, n_corporate, replace=False)]
        self.investor_ids = corporate + [f"inv{k:04d}" for k in range(spec.n_investors - n_corporate)]
        self.investor_index = {v: k for k, v in enumerate(self.investor_ids)}
        self.portfolio = np.zeros(spec.n_investors)
        self.backers: list[list[int]] = [[] for _ in range(spec.n_companies)]
        self.edges: dict[tuple[int, int], int] = {}
        self.centrality = np.zeros(spec.n_investors)
        self.first_disclosed: dt.date | None = None
        self.sector_founded: dict[int, list[dt.date]] = {}
        for c in range(spec.n_companies):
            self.sector_founded.setdefault(int(sector[c]), []).append(founded[c])

        for c in range(spec.n_companies):
            if rng.random() < spec.seed_rate:
                self.schedule(founded[c] + self.days(30, 400), "round", c, "seed")
        boundaries = iter(semester_ends(spec.start, spec.end))
        next_boundary = next(boundaries, None)

        rounds, truth = [], []
        while self.events:
            when, _, kind, c, stage = heapq.heappop(self.events)
            while next_boundary is not None and next_boundary < when:
                self.refresh_centrality()
                next_boundary = next(boundaries, None)
            if kind == "round":
                rounds.append(self.raise_round(c, when, stage, len(rounds)))
                truth.append(self.decide(c, when, stage, rounds[-1]["id"]))
            elif kind in ("acquired", "ipo", "closed"):
                self.status[c] = kind
                self.status_date[c] = when

        companies = [
            {
                "id": self.company_ids[c], "name": f"Company {c}", "founded_on": founded[c],
                "region": regions[region[c]], "description": self.description(int(sector[c])),
                "tags": (f"sector_{int(sector[c]):02d}",), "status": self.status[c],
                "status_date": self.status_date[c],
            }
            for c in range(spec.n_companies)
        ]
        people_rows = [
            {"id": f"p{k:05d}", "founded_company_ids": tuple(self.company_ids[c] for c in cs)}
            for k, cs in enumerate(people)
        ]
        news = []
        for c in range(spec.n_companies):
            n = int(rng.pareto(1.3) * 2)
            span_c = (spec.end - founded[c]).days
            for off in sorted(rng.integers(0, max(1, span_c), size=min(n, 200))):
                news.append({"company_id": self.company_ids[c], "published_on": founded[c] + dt.timedelta(days=int(off))})
        return Scenario(spec, companies, rounds, people_rows, news, truth)

    def refresh_centrality(self):
        names = [str(k) for k in range(self.spec.n_investors)]
        active = set(np.flatnonzero(self.portfolio > 0).tolist())
        graph = InvestorGraph([names[k] for k in active],
                              {(min(names[i], names[j]), max(names[i], names[j])): w for (i, j), w in self.edges.items()})
        table = betweenness(graph)
        self.centrality = np.array([table[n] for n in names])

    def raise_round(self, c: int, when: dt.date, stage: str, k: int) -> dict:
        rng, spec = self.rng, self.spec
        lo, hi = _N_INVESTORS[stage]
        n_new = int(rng.integers(lo, hi + 1))
        chosen = [i for i in self.backers[c] if rng.random() < 0.5]
        weights = self.portfolio + 1.0
        weights[chosen] = 0.0
        own = self.investor_index.get(self.company_ids[c])
        if own is not None:
            weights[own] = 0.0
        n_new = min(n_new, int(np.count_nonzero(weights)))
        if n_new:
            chosen += rng.choice(spec.n_investors, n_new, replace=False, p=weights / weights.sum()).tolist()
        for i in chosen:
            if i not in self.backers[c]:
                for j in self.backers[c]:
                    key = (min(i, j), max(i, j))
                    self.edges[key] = self.edges.get(key, 0) + 1
                self.backers[c].append(i)
                self.portfolio[i] += 1
        amount = float(round(_MEDIAN_USD[stage] * math.exp(0.7 * rng.standard_normal()), -3))
        # keep amounts disclosed until an earlier disclosed round exists to impute from
        if rng.random() < spec.undisclosed_share and self.first_disclosed is not None and self.first_disclosed < when:
            amount = None
        elif self.first_disclosed is None:
            self.first_disclosed = when
        return {
            "id": f"r{k:06d}", "company_id": self.company_ids[c], "announced_on": when, "round_type": stage,
            "amount_usd": amount, "investor_ids": tuple(self.investor_ids[i] for i in chosen),
        }

    def decide(self, c: int, when: dt.date, stage: str, round_id: str) -> dict:
        rng, spec = self.rng, self.spec
        dates = self.sector_founded[int(self.sector[c])]
        n_comp = sum(1 for d in dates if d <= when) - 1
        max_cent = max((self.centrality[i] for i in self.backers[c]), default=0.0)
        base = {"seed": spec.base_seed, "series_a": spec.base_a, "series_b": spec.base_b}.get(stage, spec.base_late)
        logit = base + spec.founder_effect * self.previous[c]
        if stage == "seed":
            logit += spec.competition_effect * n_comp
        if stage in ("series_a", "series_b"):
            logit += spec.network_effect * max_cent
        p = _sigmoid(logit)
        success = bool(rng.random() < p)
        if success:
            if rng.random() < spec.exit_share:
                kind = "ipo" if stage in ("series_c", "series_d", "other") and rng.random() < 0.3 else "acquired"
                self.schedule(when + self.days(200, 700), kind, c)
            else:
                self.schedule(when + self.days(200, 700), "round", c, _NEXT[stage])
        else:
            u = rng.random()
            if u < 0.5:
                self.schedule(when + self.days(950, 1500), "closed", c)
            elif u < 0.7:
                self.schedule(when + self.days(1100, 1600), "round", c, "other")
        return {
            "round_id": round_id, "company_id": self.company_ids[c], "round_type": stage, "announced_on": when,
            "sector": int(self.sector[c]), "n_competitors": n_comp, "max_centrality": float(max_cent),
            "probability": p, "success": success,
        }


def generate(spec: ScenarioSpec) -> Scenario:
    """Simulate one ecosystem; deterministic for a given ``spec.seed``."""
    assert set(ROUND_TYPES) == set(STAGES)
    return _Generator(spec).run()
