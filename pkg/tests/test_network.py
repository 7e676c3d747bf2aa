import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import D, company, make_store, round_
from oracles import brute_force_betweenness
from venturescope.ingest import Sample
from venturescope.network import (
    CentralityTable, InvestorGraph, betweenness, build_coinvestment_graph, centrality_at, investor_features,
    read_centrality, write_centrality,
)


def random_graph(rng, n, p, max_weight=3):
    nodes = [f"v{i:02d}" for i in range(n)]
    edges = {}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                edges[(nodes[i], nodes[j])] = int(rng.integers(1, max_weight + 1))
    return InvestorGraph(nodes, edges)


def test_two_investors_in_one_round(tmp_path):
    store = make_store(tmp_path, companies=[company("a")], rounds=[round_("r1", "a", "2010-01-01", investors="x|y")])
    g = build_coinvestment_graph(store, D("2010-12-31"))
    assert g.edges == {("x", "y"): 1}


def test_weight_counts_distinct_shared_companies(tmp_path):
    store = make_store(tmp_path, companies=[company("a"), company("b")], rounds=[
        round_("r1", "a", "2010-01-01", investors="x|y"),
        round_("r2", "a", "2010-06-01", "series_a", investors="x|y"),
        round_("r3", "b", "2010-03-01", investors="x"),
        round_("r4", "b", "2011-03-01", "series_a", investors="y"),
    ])
    assert build_coinvestment_graph(store, D("2010-12-31")).edges == {("x", "y"): 1}
    assert build_coinvestment_graph(store, D("2011-12-31")).edges == {("x", "y"): 2}


def test_solo_investor_is_isolated(tmp_path):
    store = make_store(tmp_path, companies=[company("a"), company("b")], rounds=[
        round_("r1", "a", "2010-01-01", investors="x|y"), round_("r2", "b", "2010-01-01", investors="z")])
    g = build_coinvestment_graph(store, D("2010-12-31"))
    assert "z" in g.nodes
    assert all("z" not in e for e in g.edges)


def test_path_graph_middle_node():
    c = betweenness(InvestorGraph(["a", "b", "c"], {("a", "b"): 1, ("b", "c"): 1}))
    assert c["b"] == pytest.approx(1.0, abs=1e-15) and c["a"] == 0.0 and c["c"] == 0.0


def test_complete_graph_all_zero():
    nodes = list("abcde")
    g = InvestorGraph(nodes, {(a, b): 2 for i, a in enumerate(nodes) for b in nodes[i + 1:]})
    assert all(v == 0.0 for v in betweenness(g).betweenness.values())


def test_tiny_graphs_are_zero():
    assert betweenness(InvestorGraph(["a", "b"], {("a", "b"): 1})).betweenness == {"a": 0.0, "b": 0.0}


def test_heavier_edge_is_shorter():
    # a-b-c strongly tied (weight 2 each: length 1/2 + 1/2 = 1) versus direct a-c with weight 1 (length 1): tie
    g = InvestorGraph(["a", "b", "c"], {("a", "b"): 2, ("b", "c"): 2, ("a", "c"): 1})
    assert betweenness(g)["b"] == pytest.approx(0.5)
    g3 = InvestorGraph(["a", "b", "c"], {("a", "b"): 3, ("b", "c"): 3, ("a", "c"): 1})
    assert betweenness(g3)["b"] == pytest.approx(1.0)


def test_random_graphs_match_enumeration():
    rng = np.random.default_rng(7)
    for _ in range(25):
        g = random_graph(rng, int(rng.integers(3, 13)), rng.uniform(0.15, 0.6))
        got = betweenness(g).betweenness
        want = brute_force_betweenness(g.nodes, g.edges)
        for v in g.nodes:
            assert got[v] == pytest.approx(want[v], abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 10), st.floats(0.2, 0.8), st.integers(0, 10_000), st.sampled_from([0.5, 2.0, 7.0]))
def test_uniform_rescaling_leaves_centrality_unchanged(n, p, seed, factor):
    g = random_graph(np.random.default_rng(seed), n, p)
    a = betweenness(g).betweenness
    b = betweenness(g.rescaled(factor)).betweenness
    assert all(a[v] == pytest.approx(b[v], abs=1e-12) for v in g.nodes)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 12), st.floats(0.1, 0.9), st.integers(0, 10_000))
def test_centrality_is_bounded(n, p, seed):
    values = betweenness(random_graph(np.random.default_rng(seed), n, p)).betweenness.values()
    assert all(0.0 <= v <= 1.0 + 1e-12 for v in values)


def test_investor_feature_arithmetic(tmp_path):
    store = make_store(tmp_path, companies=[company("a")], rounds=[round_("r1", "a", "2010-01-01", investors="x|y")])
    table = CentralityTable({"x": 0.1, "y": 0.3}, {"x": 1, "y": 1})
    n, mx, mean, total, portfolio = investor_features(Sample("a", D("2010-06-30"), "all", False, 2), table, store)
    assert (n, portfolio) == (2, 1)
    assert (mx, mean, total) == pytest.approx((0.3, 0.2, 0.4))


def test_no_investors_gives_zeros(tmp_path):
    store = make_store(tmp_path, companies=[company("a")], rounds=[round_("r1", "a", "2010-01-01")])
    assert investor_features(Sample("a", D("2010-06-30"), "all", False, 2), CentralityTable({}), store) == (0, 0.0, 0.0, 0.0, 0)


def test_max_portfolio_counts_distinct_companies(tmp_path):
    store = make_store(tmp_path, companies=[company("a"), company("b"), company("c")], rounds=[
        round_("r1", "a", "2010-01-01", investors="x"),
        round_("r2", "a", "2010-02-01", "series_a", investors="x"),
        round_("r3", "b", "2010-03-01", investors="x"),
        round_("r4", "c", "2010-04-01", investors="x|y"),
    ])
    table = centrality_at(store, D("2010-06-30"))
    _, _, _, _, portfolio = investor_features(Sample("c", D("2010-06-30"), "all", False, 2), table, store)
    assert portfolio == 3


def test_centrality_file_round_trip(tmp_path):
    t1 = CentralityTable({"x": 0.25, "y": 0.0}, {"x": 3, "y": 1}, D("2010-06-30"))
    t2 = CentralityTable({"x": 0.5}, {"x": 4}, D("2010-12-31"))
    write_centrality(t1, tmp_path / "c.csv", with_date=True)
    write_centrality(t2, tmp_path / "c.csv", with_date=True, mode="a")
    back = read_centrality(tmp_path / "c.csv")
    assert back[D("2010-06-30")].betweenness == t1.betweenness
    assert back[D("2010-12-31")].portfolio_size == t2.portfolio_size
