"""Entity loading, semester snapshots and sample labelling.

Input is one CSV file per entity (companies, rounds, people, news) with
ISO-8601 dates. Multi-valued fields (tags, investor ids, founded company ids)
are pipe-separated.
"""
from __future__ import annotations

import bisect
import csv
import datetime as dt
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

log = logging.getLogger(__name__)

STATUSES = ("operating", "acquired", "ipo", "closed")
ROUND_TYPES = ("seed", "series_a", "series_b", "series_c", "series_d", "other")
COHORTS = ("all", "seed", "series_a", "series_b")

SCHEMAS = {
    "companies": ("id", "name", "founded_on", "region", "description", "tags", "status", "status_date"),
    "rounds": ("id", "company_id", "announced_on", "round_type", "amount_usd", "investor_ids"),
    "people": ("id", "founded_company_ids"),
    "news": ("company_id", "published_on"),
}


class IngestError(ValueError):
    """Malformed input row or file."""

    def __init__(self, message, path=None, line=None, column=None):
        self.path = str(path) if path is not None else None
        self.line = line
        self.column = column
        where = ":".join(str(p) for p in (self.path, line) if p is not None)
        if column:
            where += f" [{column}]"
        super().__init__(f"{where}: {message}" if where else message)


class SchemaError(IngestError):
    pass


class IngestWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Company:
    id: str
    name: str
    founded_on: dt.date
    region: str
    description: str
    tags: tuple[str, ...] = ()
    status: str = "operating"
    status_date: dt.date | None = None

    @property
    def exit_date(self) -> dt.date | None:
        """Date of acquisition or IPO, if any."""
        if self.status in ("acquired", "ipo"):
            return self.status_date
        return None


@dataclass(frozen=True)
class FundingRound:
    id: str
    company_id: str
    announced_on: dt.date
    round_type: str
    amount_usd: float | None
    investor_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class Person:
    id: str
    founded_company_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class NewsMention:
    company_id: str
    published_on: dt.date


@dataclass(frozen=True)
class Sample:
    company_id: str
    as_of: dt.date
    cohort: str
    label: bool
    horizon_years: int


# -- dates -------------------------------------------------------------------

def parse_date(text: str) -> dt.date:
    return dt.date.fromisoformat(text.strip())


def add_years(d: dt.date, years: int) -> dt.date:
    try:
        return d.replace(year=d.year + years)
    except ValueError:  # Feb 29
        return d.replace(year=d.year + years, day=28)


def semester_end(d: dt.date) -> dt.date:
    """The Jun-30 / Dec-31 boundary closing the semester containing ``d``."""
    return dt.date(d.year, 6, 30) if d.month <= 6 else dt.date(d.year, 12, 31)


def previous_boundary(boundary: dt.date) -> dt.date:
    if boundary.month == 6:
        return dt.date(boundary.year - 1, 12, 31)
    return dt.date(boundary.year, 6, 30)


def semester_ends(start: dt.date, end: dt.date) -> list[dt.date]:
    """Semester boundaries b with start <= b <= end."""
    out = []
    b = semester_end(start)
    while b <= end:
        out.append(b)
        b = dt.date(b.year, 12, 31) if b.month == 6 else dt.date(b.year + 1, 6, 30)
    return out


# -- store -------------------------------------------------------------------

@dataclass
class EntityStore:
    """Immutable in-memory view of the four entity collections with indexes."""

    companies: dict[str, Company]
    rounds: tuple[FundingRound, ...]
    people: tuple[Person, ...] = ()
    news: tuple[NewsMention, ...] = ()
    dropped: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.rounds = tuple(sorted(self.rounds, key=lambda r: (r.announced_on, r.id)))
        self.rounds_by_company: dict[str, list[FundingRound]] = {}
        for r in self.rounds:
            self.rounds_by_company.setdefault(r.company_id, []).append(r)
        self._round_dates = {
            cid: [r.announced_on for r in rs] for cid, rs in self.rounds_by_company.items()
        }
        self.news_dates: dict[str, list[dt.date]] = {}
        for n in self.news:
            self.news_dates.setdefault(n.company_id, []).append(n.published_on)
        for dates in self.news_dates.values():
            dates.sort()
        self.founders_by_company: dict[str, list[Person]] = {}
        for p in self.people:
            for cid in dict.fromkeys(p.founded_company_ids):
                self.founders_by_company.setdefault(cid, []).append(p)
        self._disclosed: dict[str | None, tuple[list[dt.date], list[float]]] = {}
        by_type: dict[str | None, list[tuple[dt.date, float]]] = {}
        for r in self.rounds:
            if r.amount_usd is not None:
                by_type.setdefault(r.round_type, []).append((r.announced_on, r.amount_usd))
                by_type.setdefault(None, []).append((r.announced_on, r.amount_usd))
        for key, pairs in by_type.items():
            pairs.sort()
            self._disclosed[key] = ([p[0] for p in pairs], [p[1] for p in pairs])
        self._amounts = {r.id: impute_amount(r, self) for r in self.rounds}

    def rounds_until(self, company_id: str, as_of: dt.date) -> list[FundingRound]:
        """Rounds of a company announced on or before ``as_of``."""
        rs = self.rounds_by_company.get(company_id, [])
        return rs[: bisect.bisect_right(self._round_dates[company_id], as_of)] if rs else []

    def amount(self, r: FundingRound) -> float:
        """Disclosed or imputed amount of a round."""
        return self._amounts[r.id]

    def mentions_between(self, company_id: str, lo: dt.date, hi: dt.date) -> int:
        """News mentions with lo < published_on <= hi."""
        dates = self.news_dates.get(company_id, ())
        return bisect.bisect_right(dates, hi) - bisect.bisect_right(dates, lo)

    def investors_until(self, as_of: dt.date) -> set[str]:
        out = set()
        for r in self.rounds:
            if r.announced_on > as_of:
                break
            out.update(r.investor_ids)
        return out

    def restricted(self, as_of: dt.date) -> "EntityStore":
        """A copy without any record dated after ``as_of``.

        Company statuses that occur later are reset to operating.
        """
        companies = {}
        for c in self.companies.values():
            if c.founded_on > as_of:
                continue
            if c.status_date is not None and c.status_date > as_of:
                c = Company(c.id, c.name, c.founded_on, c.region, c.description, c.tags)
            companies[c.id] = c
        rounds = [r for r in self.rounds if r.announced_on <= as_of]
        people = [
            Person(p.id, tuple(x for x in p.founded_company_ids if x in companies))
            for p in self.people
        ]
        news = [n for n in self.news if n.published_on <= as_of and n.company_id in companies]
        return EntityStore(companies, tuple(rounds), tuple(people), tuple(news))


def impute_amount(r: FundingRound, store: EntityStore) -> float:
    """Disclosed amount, else the median of same-type disclosed amounts to date.

    Only rounds announced on or before ``r`` enter the median. Falls back to
    the median over all round types, then to 0 with a warning.
    """
    if r.amount_usd is not None:
        return float(r.amount_usd)
    for key in (r.round_type, None):
        dates, amounts = store._disclosed.get(key, ((), ()))
        k = bisect.bisect_right(dates, r.announced_on)
        if k:
            return float(np.median(amounts[:k]))
    warnings.warn(f"no disclosed amounts to impute round {r.id}", IngestWarning, stacklevel=2)
    return 0.0


# -- loading -----------------------------------------------------------------

def _split(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split("|") if x.strip())


class _RowReader:
    def __init__(self, path: Path, kind: str):
        self.path = path
        self.kind = kind

    def __iter__(self):
        with open(self.path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in SCHEMAS[self.kind] if c not in header]
            if missing:
                raise SchemaError(
                    f"missing column(s) {', '.join(missing)} in {self.kind} file",
                    self.path, 1, missing[0],
                )
            for row in reader:
                self.line = reader.line_num
                yield row

    def error(self, column, message):
        return IngestError(message, self.path, self.line, column)

    def date(self, row, column, optional=False):
        text = (row.get(column) or "").strip()
        if not text:
            if optional:
                return None
            raise self.error(column, "missing date")
        try:
            return parse_date(text)
        except ValueError:
            raise self.error(column, f"bad date {text!r}") from None

    def choice(self, row, column, allowed):
        value = (row.get(column) or "").strip()
        if value not in allowed:
            raise self.error(column, f"{value!r} not one of {', '.join(allowed)}")
        return value

    def required(self, row, column):
        value = (row.get(column) or "").strip()
        if not value:
            raise self.error(column, "empty value")
        return value


def _read_companies(path):
    rows = _RowReader(path, "companies")
    out: dict[str, Company] = {}
    for row in rows:
        cid = rows.required(row, "id")
        if cid in out:
            raise rows.error("id", f"duplicate company id {cid!r}")
        status = rows.choice(row, "status", STATUSES)
        status_date = rows.date(row, "status_date", optional=True)
        if (status_date is None) != (status == "operating"):
            raise rows.error("status_date", "status_date must be set iff status is not operating")
        out[cid] = Company(
            id=cid,
            name=row.get("name") or "",
            founded_on=rows.date(row, "founded_on"),
            region=(row.get("region") or "").strip(),
            description=row.get("description") or "",
            tags=_split(row.get("tags") or ""),
            status=status,
            status_date=status_date,
        )
    return out


def _read_rounds(path):
    rows = _RowReader(path, "rounds")
    out = []
    seen = set()
    for row in rows:
        rid = rows.required(row, "id")
        if rid in seen:
            raise rows.error("id", f"duplicate round id {rid!r}")
        seen.add(rid)
        text = (row.get("amount_usd") or "").strip()
        amount = None
        if text:
            try:
                amount = float(text)
            except ValueError:
                raise rows.error("amount_usd", f"bad number {text!r}") from None
            if not np.isfinite(amount) or amount < 0:
                raise rows.error("amount_usd", f"amount must be finite and non-negative, got {text!r}")
        out.append(FundingRound(
            id=rid,
            company_id=rows.required(row, "company_id"),
            announced_on=rows.date(row, "announced_on"),
            round_type=rows.choice(row, "round_type", ROUND_TYPES),
            amount_usd=amount,
            investor_ids=_split(row.get("investor_ids") or ""),
        ))
    return out


def _read_people(path):
    rows = _RowReader(path, "people")
    return [Person(rows.required(row, "id"), _split(row.get("founded_company_ids") or "")) for row in rows]


def _read_news(path):
    rows = _RowReader(path, "news")
    return [NewsMention(rows.required(row, "company_id"), rows.date(row, "published_on")) for row in rows]


def entity_paths(data_dir) -> dict[str, Path]:
    data_dir = Path(data_dir)
    return {kind: data_dir / f"{kind}.csv" for kind in SCHEMAS}


def load_entities(paths: Mapping[str, str | Path] | str | Path) -> EntityStore:
    """Load the entity CSV files into an :class:`EntityStore`.

    ``paths`` is either a data directory holding ``companies.csv``,
    ``rounds.csv``, ``people.csv`` and ``news.csv``, or a mapping from entity
    kind to file path. People and news files are optional.

    Rows with dangling foreign keys are dropped with an :class:`IngestWarning`;
    the number dropped per kind is kept in ``store.dropped``.
    """
    if not isinstance(paths, Mapping):
        paths = entity_paths(paths)
    paths = {k: Path(v) for k, v in paths.items()}
    for kind in ("companies", "rounds"):
        if kind not in paths or not paths[kind].exists():
            raise IngestError(f"{kind} file not found", paths.get(kind))

    companies = _read_companies(paths["companies"])
    dropped = {"rounds": 0, "people": 0, "news": 0}

    rounds = []
    for r in _read_rounds(paths["rounds"]):
        company = companies.get(r.company_id)
        if company is None:
            dropped["rounds"] += 1
            continue
        if r.announced_on < company.founded_on:
            dropped["rounds"] += 1
            continue
        rounds.append(r)

    people = []
    if "people" in paths and paths["people"].exists():
        for p in _read_people(paths["people"]):
            if all(cid in companies for cid in p.founded_company_ids):
                people.append(p)
            else:
                dropped["people"] += 1

    news = []
    if "news" in paths and paths["news"].exists():
        for n in _read_news(paths["news"]):
            if n.company_id in companies:
                news.append(n)
            else:
                dropped["news"] += 1

    for kind, count in dropped.items():
        if count:
            warnings.warn(
                f"dropped {count} {kind} row(s) with unresolved or inconsistent company references",
                IngestWarning, stacklevel=2,
            )
    return EntityStore(companies, tuple(rounds), tuple(people), tuple(news), dropped)


# -- samples -----------------------------------------------------------------

def qualifies(round_type: str, cohort: str) -> bool:
    if cohort == "all":
        return True
    return round_type == cohort


def label_for(store: EntityStore, company_id: str, as_of: dt.date, horizon_years: int) -> bool:
    """True iff a round, acquisition or IPO falls in (as_of, as_of + horizon]."""
    hi = add_years(as_of, horizon_years)
    dates = store._round_dates.get(company_id, [])
    i = bisect.bisect_right(dates, as_of)
    if i < len(dates) and dates[i] <= hi:
        return True
    exit_date = store.companies[company_id].exit_date
    return exit_date is not None and as_of < exit_date <= hi


def build_samples(
    store: EntityStore,
    start: dt.date,
    end: dt.date,
    horizon_years: int = 2,
    cohort: str = "all",
) -> list[Sample]:
    """One labelled sample per (company, semester) with a qualifying round.

    Semesters close on Jun-30 and Dec-31; a round qualifies for the semester
    ending at ``b`` when announced in (previous boundary, b]. Companies
    acquired or listed on or before ``b`` are skipped.
    """
    if not start < end:
        raise ValueError("start must precede end")
    if horizon_years < 1:
        raise ValueError("horizon_years must be >= 1")
    if cohort not in COHORTS:
        raise ValueError(f"unknown cohort {cohort!r}")

    boundaries = semester_ends(start, end)
    if not boundaries:
        return []
    lo = previous_boundary(boundaries[0])
    keys = set()
    for r in store.rounds:
        if r.announced_on <= lo or r.announced_on > boundaries[-1]:
            continue
        if qualifies(r.round_type, cohort):
            keys.add((r.company_id, semester_end(r.announced_on)))

    samples = []
    for company_id, as_of in sorted(keys):
        exit_date = store.companies[company_id].exit_date
        if exit_date is not None and exit_date <= as_of:
            continue
        samples.append(Sample(
            company_id, as_of, cohort, label_for(store, company_id, as_of, horizon_years), horizon_years
        ))
    return samples


SAMPLE_COLUMNS = ("company_id", "as_of", "cohort", "label", "horizon_years")


def write_samples(samples: Iterable[Sample], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAMPLE_COLUMNS)
        for s in samples:
            w.writerow([s.company_id, s.as_of.isoformat(), s.cohort, int(s.label), s.horizon_years])


def read_samples(path) -> list[Sample]:
    path = Path(path)
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in SAMPLE_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(f"missing column(s) {', '.join(missing)}", path, 1, missing[0])
        for row in reader:
            try:
                out.append(Sample(
                    row["company_id"], parse_date(row["as_of"]), row["cohort"],
                    row["label"].strip() in ("1", "true", "True"), int(row["horizon_years"]),
                ))
            except ValueError as exc:
                raise IngestError(str(exc), path, reader.line_num) from None
    return out
