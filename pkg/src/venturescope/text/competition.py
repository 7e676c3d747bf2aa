"""Description similarity, competitor sets and competition features."""
from __future__ import annotations

import bisect
import datetime as dt
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..ingest import EntityStore, Sample, add_years
from .sif import DocVector


@dataclass(frozen=True)
class CompetitionConfig:
    min_sim: float = 0.5
    sif_a: float = 1e-3

    def __post_init__(self):
        if not -1.0 <= self.min_sim <= 1.0:
            raise ValueError("min_sim must lie in [-1, 1]")
        if self.sif_a <= 0:
            raise ValueError("sif_a must be positive")


@dataclass(frozen=True)
class CompetitorSet:
    company_id: str
    competitors: tuple[tuple[str, float], ...] = ()

    def __len__(self):
        return len(self.competitors)

    @property
    def ids(self) -> list[str]:
        return [c for c, _ in self.competitors]


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def _unit_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return np.divide(m, norms, out=np.zeros_like(m), where=norms > 0)


class DocUniverse:
    """Embedded companies with a precomputed thresholded similarity graph.

    All pairs are scored exactly with blocked products of unit vectors; only
    the upper-triangular blocks are computed and mirrored, so the stored
    relation is exactly symmetric.
    """

    def __init__(self, docs: Sequence[DocVector], founded_on: dict[str, dt.date],
                 config: CompetitionConfig = CompetitionConfig(), block: int = 1024):
        self.config = config
        self.ids = [d.company_id for d in docs]
        self.index = {cid: i for i, cid in enumerate(self.ids)}
        self.founded = np.array(
            [np.datetime64(founded_on[cid], "D") for cid in self.ids], dtype="datetime64[D]"
        )
        m = np.array([d.vector for d in docs], dtype=np.float64).reshape(len(docs), -1)
        self.unit = _unit_rows(m)
        self._neighbors = self._threshold_graph(block)

    def __len__(self):
        return len(self.ids)

    def __contains__(self, company_id):
        return company_id in self.index

    def _threshold_graph(self, block):
        n = len(self.ids)
        rows: list[list[np.ndarray]] = [[] for _ in range(n)]
        sims: list[list[np.ndarray]] = [[] for _ in range(n)]
        t = self.config.min_sim
        for i0 in range(0, n, block):
            a = self.unit[i0:i0 + block]
            for j0 in range(i0, n, block):
                s = a @ self.unit[j0:j0 + block].T
                ii, jj = np.nonzero(s >= t)
                vals = s[ii, jj]
                gi, gj = ii + i0, jj + j0
                keep = gi < gj
                gi, gj, vals = gi[keep], gj[keep], vals[keep]
                for x, y, v in ((gi, gj, vals), (gj, gi, vals)):
                    order = np.argsort(x, kind="stable")
                    x, y, v = x[order], y[order], v[order]
                    cuts = np.flatnonzero(np.diff(x)) + 1
                    for xs, ys, vs in zip(np.split(x, cuts), np.split(y, cuts), np.split(v, cuts)):
                        if len(xs):
                            rows[xs[0]].append(ys)
                            sims[xs[0]].append(vs)
        out = []
        for r, s in zip(rows, sims):
            if r:
                r = np.concatenate(r)
                s = np.concatenate(s)
                order = np.lexsort((r, -s))
                out.append((r[order], s[order]))
            else:
                out.append((np.empty(0, dtype=np.int64), np.empty(0)))
        return out

    def similarities(self, company_id: str) -> np.ndarray:
        """Similarity of one company to every company in the universe."""
        return self.unit @ self.unit[self.index[company_id]]

    def neighbors(self, company_id: str, as_of: dt.date | None = None) -> tuple[np.ndarray, np.ndarray]:
        idx, sims = self._neighbors[self.index[company_id]]
        if as_of is not None:
            keep = self.founded[idx] <= np.datetime64(as_of, "D")
            idx, sims = idx[keep], sims[keep]
        return idx, sims


def find_competitors(target: DocVector | str, universe: DocUniverse, config: CompetitionConfig | None = None,
                     as_of: dt.date | None = None) -> CompetitorSet:
    """Companies founded by ``as_of`` whose similarity to ``target`` is >= min_sim.

    Sorted by decreasing similarity; the target itself is never included.
    """
    cid = target.company_id if isinstance(target, DocVector) else target
    if cid not in universe:
        raise KeyError(f"company {cid!r} has no description vector")
    if config is not None and config.min_sim != universe.config.min_sim:
        raise ValueError("universe was indexed with a different min_sim")
    idx, sims = universe.neighbors(cid, as_of)
    return CompetitorSet(cid, tuple((universe.ids[i], float(s)) for i, s in zip(idx, sims)))


class FundingTotals:
    """Cumulative and trailing-year funding per company, cached per date."""

    def __init__(self, store: EntityStore):
        self.store = store
        self._dates: dict[str, list[dt.date]] = {}
        self._cum: dict[str, np.ndarray] = {}
        for cid, rounds in store.rounds_by_company.items():
            self._dates[cid] = [r.announced_on for r in rounds]
            self._cum[cid] = np.concatenate([[0.0], np.cumsum([store.amount(r) for r in rounds])])
        self._cache: dict[dt.date, dict[str, tuple[float, float]]] = {}

    def until(self, company_id: str, as_of: dt.date) -> float:
        dates = self._dates.get(company_id)
        if not dates:
            return 0.0
        return float(self._cum[company_id][bisect.bisect_right(dates, as_of)])

    def at(self, as_of: dt.date) -> dict[str, tuple[float, float]]:
        """company id -> (funding to date, funding in the trailing year)."""
        if as_of not in self._cache:
            year_ago = add_years(as_of, -1)
            snap = {}
            for cid in self._dates:
                total = self.until(cid, as_of)
                snap[cid] = (total, total - self.until(cid, year_ago))
            self._cache[as_of] = snap
        return self._cache[as_of]


def competition_features(sample: Sample, competitors: CompetitorSet, store: EntityStore,
                         totals: FundingTotals | None = None) -> tuple[int, float, float]:
    """(number of competitors, their funding to date, their funding in the last year).

    Funding counts rounds announced on or before the sample date; the last
    year is the window (as_of - 1 year, as_of].
    """
    if not len(competitors):
        return 0, 0.0, 0.0
    if totals is None:
        totals = FundingTotals(store)
    snap = totals.at(sample.as_of)
    total = 0.0
    last_year = 0.0
    for cid in competitors.ids:
        t, y = snap.get(cid, (0.0, 0.0))
        total += t
        last_year += y
    return len(competitors), total, last_year


def similarity_decay(universe: DocUniverse, company_ids: Iterable[str]) -> dict[str, np.ndarray]:
    """Descending similarity curves of selected companies against the universe."""
    out = {}
    for cid in company_ids:
        s = universe.similarities(cid)
        s = np.delete(s, universe.index[cid])
        out[cid] = np.sort(s)[::-1]
    return out
