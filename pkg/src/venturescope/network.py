"""Co-investment graph and betweenness-based investor features."""
from __future__ import annotations

import csv
import datetime as dt
import heapq
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Mapping

from .ingest import EntityStore, Sample


@dataclass
class InvestorGraph:
    """Undirected co-investment graph; ``edges`` maps sorted (i, j) to a weight."""

    nodes: list[str]
    edges: dict[tuple[str, str], float]
    as_of: dt.date | None = None

    def __post_init__(self):
        self.nodes = sorted(self.nodes)

    def weight(self, i: str, j: str) -> float:
        return self.edges.get((i, j) if i < j else (j, i), 0)

    def neighbors(self) -> dict[str, dict[str, float]]:
        adj: dict[str, dict[str, float]] = {v: {} for v in self.nodes}
        for (i, j), w in self.edges.items():
            adj[i][j] = w
            adj[j][i] = w
        return adj

    def rescaled(self, factor: float) -> "InvestorGraph":
        return InvestorGraph(list(self.nodes), {k: w * factor for k, w in self.edges.items()}, self.as_of)


@dataclass
class CentralityTable:
    betweenness: dict[str, float]
    portfolio_size: dict[str, int] = field(default_factory=dict)
    as_of: dt.date | None = None

    def __getitem__(self, investor_id):
        return self.betweenness.get(investor_id, 0.0)


def portfolios(store: EntityStore, as_of: dt.date) -> dict[str, set[str]]:
    """Investor id -> companies it backed in rounds announced on or before ``as_of``."""
    out: dict[str, set[str]] = defaultdict(set)
    for r in store.rounds:
        if r.announced_on > as_of:
            break
        for inv in r.investor_ids:
            out[inv].add(r.company_id)
    return dict(out)


def build_coinvestment_graph(store: EntityStore, as_of: dt.date) -> InvestorGraph:
    """Investors linked with weight = number of distinct companies they both backed."""
    backers: dict[str, set[str]] = defaultdict(set)
    nodes = set()
    for r in store.rounds:
        if r.announced_on > as_of:
            break
        backers[r.company_id].update(r.investor_ids)
        nodes.update(r.investor_ids)
    edges: dict[tuple[str, str], int] = defaultdict(int)
    for invs in backers.values():
        for i, j in combinations(sorted(invs), 2):
            edges[(i, j)] += 1
    return InvestorGraph(list(nodes), dict(edges), as_of)


def _edge_lengths(weights) -> list:
    """Exact edge lengths proportional to 1/weight.

    Integer weights map to integers lcm(weights) / w, anything else to
    Fractions, so that equal-length paths compare equal.
    """
    weights = list(weights)
    if any(w <= 0 for w in weights):
        raise ValueError("edge weights must be positive")
    if all(float(w).is_integer() for w in weights):
        ints = [int(w) for w in weights]
        scale = math.lcm(*set(ints)) if ints else 1
        return [scale // w for w in ints]
    return [1 / Fraction(w) for w in weights]


def betweenness_raw(graph: InvestorGraph) -> dict[str, float]:
    """Unnormalized betweenness summed over ordered (source, target) pairs.

    Brandes' accumulation over Dijkstra shortest-path DAGs; edge length is
    1/weight so that stronger ties are closer.
    """
    index = {v: k for k, v in enumerate(graph.nodes)}
    n = len(index)
    adj: list[list[tuple[int, object]]] = [[] for _ in range(n)]
    keys = list(graph.edges)
    for (i, j), length in zip(keys, _edge_lengths(graph.edges[k] for k in keys)):
        a, b = index[i], index[j]
        if a == b:
            continue
        adj[a].append((b, length))
        adj[b].append((a, length))

    cb = [0.0] * n
    for s in range(n):
        stack = []
        preds: list[list[int]] = [[] for _ in range(n)]
        sigma = [0] * n
        sigma[s] = 1
        dist = {s: 0}
        done = [False] * n
        heap = [(0, s)]
        while heap:
            d, v = heapq.heappop(heap)
            if done[v]:
                continue
            done[v] = True
            stack.append(v)
            for w, length in adj[v]:
                nd = d + length
                old = dist.get(w)
                if old is None or nd < old:
                    dist[w] = nd
                    sigma[w] = sigma[v]
                    preds[w] = [v]
                    heapq.heappush(heap, (nd, w))
                elif nd == old:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = [0.0] * n
        while stack:
            w = stack.pop()
            coeff = (1.0 + delta[w]) / sigma[w]
            for v in preds[w]:
                delta[v] += sigma[v] * coeff
            if w != s:
                cb[w] += delta[w]
    return {v: cb[k] for v, k in index.items()}


def betweenness(graph: InvestorGraph, portfolio_size: Mapping[str, int] | None = None) -> CentralityTable:
    """Betweenness normalized by 2 / ((n - 1)(n - 2)); all zero when n < 3."""
    raw = betweenness_raw(graph)
    n = len(graph.nodes)
    if n < 3:
        scores = {v: 0.0 for v in graph.nodes}
    else:
        # raw counts every unordered pair twice
        scale = 1.0 / ((n - 1) * (n - 2))
        scores = {v: c * scale for v, c in raw.items()}
    return CentralityTable(scores, dict(portfolio_size or {}), graph.as_of)


def centrality_at(store: EntityStore, as_of: dt.date) -> CentralityTable:
    graph = build_coinvestment_graph(store, as_of)
    sizes = {inv: len(cs) for inv, cs in portfolios(store, as_of).items()}
    return betweenness(graph, sizes)


class CentralityCache:
    """Centrality tables keyed by snapshot date."""

    def __init__(self, store: EntityStore):
        self.store = store
        self._tables: dict[dt.date, CentralityTable] = {}

    def __call__(self, as_of: dt.date) -> CentralityTable:
        if as_of not in self._tables:
            self._tables[as_of] = centrality_at(self.store, as_of)
        return self._tables[as_of]

    def put(self, table: CentralityTable):
        self._tables[table.as_of] = table


def company_investors(store: EntityStore, company_id: str, as_of: dt.date) -> list[str]:
    seen = {}
    for r in store.rounds_until(company_id, as_of):
        for inv in r.investor_ids:
            seen.setdefault(inv, None)
    return list(seen)


def investor_features(sample: Sample, table: CentralityTable, store: EntityStore):
    """(n_investors, max, mean and sum of investor centrality, max portfolio size)."""
    invs = company_investors(store, sample.company_id, sample.as_of)
    if not invs:
        return 0, 0.0, 0.0, 0.0, 0
    c = [table[i] for i in invs]
    return (
        len(invs),
        max(c),
        sum(c) / len(c),
        sum(c),
        max(table.portfolio_size.get(i, 0) for i in invs),
    )


def write_centrality(table: CentralityTable, path, with_date: bool = False, mode: str = "w") -> None:
    with open(path, mode, newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["investor_id", "betweenness", "portfolio_size"]
        if with_date:
            header = ["as_of"] + header
        if mode == "w":
            w.writerow(header)
        for inv in sorted(table.betweenness):
            row = [inv, repr(table.betweenness[inv]), table.portfolio_size.get(inv, 0)]
            if with_date:
                row = [table.as_of.isoformat()] + row
            w.writerow(row)


def read_centrality(path) -> dict[dt.date | None, CentralityTable]:
    tables: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            as_of = dt.date.fromisoformat(row["as_of"]) if row.get("as_of") else None
            t = tables.setdefault(as_of, CentralityTable({}, {}, as_of))
            t.betweenness[row["investor_id"]] = float(row["betweenness"])
            t.portfolio_size[row["investor_id"]] = int(row["portfolio_size"])
    return tables


def write_edges(graph: InvestorGraph, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "weight"])
        for (i, j) in sorted(graph.edges):
            w.writerow([i, j, graph.edges[(i, j)]])
