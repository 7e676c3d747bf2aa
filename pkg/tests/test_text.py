import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import D, company, make_store, round_
from venturescope.ingest import Sample
from venturescope.text import (
    CompetitionConfig, CompetitorSet, DocUniverse, DocVector, EmbeddingSpace, VectorFormatError,
    competition_features, cosine_similarity, find_competitors, learn_bigrams, preprocess, read_vectors,
    sif_embed, tokenize, train_word2vec, write_vectors,
)
from venturescope.text.preprocess import bigram_score, stopwords
from venturescope.text.sif import first_component, remove_first_component, weighted_average
from venturescope.text.word2vec import load_space, save_space


# -- preprocessing -------------------------------------------------------------

def test_tokens_drop_digits_and_punctuation():
    assert tokenize("New York's 12 AI Labs!") == ["new", "york", "ai", "labs"]


def test_stopword_list_is_the_standard_english_one():
    sw = stopwords()
    assert len(sw) == 179
    assert {"the", "and", "s", "t", "yourselves", "wouldn"} <= sw


def test_nine_words_excluded_ten_kept():
    nine = "robots deliver groceries quickly across dense urban neighborhoods daily"
    assert preprocess(nine) is None
    assert preprocess(nine + " nationwide") is not None


def test_new_york_merges_when_always_adjacent():
    corpus = [["new", "york", "startup", f"w{i}"] for i in range(40)] + [[f"x{i}", f"y{i}"] for i in range(200)]
    table = learn_bigrams(corpus)
    assert ("new", "york") in table
    assert table.apply(["new", "york", "startup"]) == ["new_york", "startup"]


def test_bigram_score_by_hand():
    # c_ab = 40, c_a = c_b = 40, N = 1000 -> (40 - 5) * 1000 / 1600
    assert bigram_score(40, 40, 40, 1000) == pytest.approx(21.875)


def test_single_cooccurrence_not_merged():
    corpus = [["solar", "panel"]] + [["solar", f"a{i}"] for i in range(3)] + [["panel", f"b{i}"] for i in range(3)]
    assert ("solar", "panel") not in learn_bigrams(corpus)


def test_never_adjacent_words_not_merged():
    corpus = [["alpha", "x", "beta"]] * 30
    table = learn_bigrams(corpus)
    assert ("alpha", "beta") not in table


def test_bigram_merge_is_greedy_left_to_right():
    corpus = [["a", "b", "c"]] * 50 + [[f"z{i}"] for i in range(500)]
    table = learn_bigrams(corpus)
    assert ("a", "b") in table and ("b", "c") in table
    assert table.apply(["a", "b", "c"]) == ["a_b", "c"]


# -- word2vec ------------------------------------------------------------------

def _two_topic_corpus(seed=0, n_docs=300):
    rng = np.random.default_rng(seed)
    topics = [[f"sea{i}" for i in range(12)], [f"sky{i}" for i in range(12)]]
    return [list(rng.choice(topics[k % 2], size=10)) for k in range(n_docs)]


def test_word2vec_separates_disjoint_topics():
    space = train_word2vec(_two_topic_corpus(), h=32, seed=3)
    toks = space.tokens
    V = space.vectors / np.linalg.norm(space.vectors, axis=1, keepdims=True)
    topic = np.array([t.startswith("sea") for t in toks])
    S = V @ V.T
    same = topic[:, None] == topic[None, :]
    np.fill_diagonal(same, False)
    cross = topic[:, None] != topic[None, :]
    assert S[same].mean() > S[cross].mean() + 0.2


def test_word2vec_one_token_corpus_errors():
    with pytest.raises(ValueError):
        train_word2vec([["lonely"]], h=8)


def test_word2vec_is_deterministic():
    corpus = _two_topic_corpus(n_docs=60)
    a = train_word2vec(corpus, h=16, seed=5)
    b = train_word2vec(corpus, h=16, seed=5)
    assert a.vocabulary == b.vocabulary
    assert np.array_equal(a.vectors, b.vectors)


def test_vector_file_round_trip(tmp_path):
    space = train_word2vec(_two_topic_corpus(n_docs=60), h=8, seed=1)
    save_space(space, tmp_path / "v.bin")
    tokens, vectors = read_vectors(tmp_path / "v.bin")
    assert tokens == space.tokens
    assert np.array_equal(vectors, space.vectors)
    again = load_space(tmp_path / "v.bin", _two_topic_corpus(n_docs=60))
    assert np.allclose(again.frequencies, space.frequencies)


def test_vector_file_bad_magic(tmp_path):
    write_vectors(tmp_path / "v.bin", ["a"], np.ones((1, 3)))
    data = bytearray((tmp_path / "v.bin").read_bytes())
    data[:5] = b"XXXXX"
    (tmp_path / "v.bin").write_bytes(bytes(data))
    with pytest.raises(VectorFormatError, match="magic"):
        read_vectors(tmp_path / "v.bin")


def test_vector_file_truncated(tmp_path):
    write_vectors(tmp_path / "v.bin", ["a", "b"], np.ones((2, 3)))
    data = (tmp_path / "v.bin").read_bytes()
    (tmp_path / "v.bin").write_bytes(data[:-5])
    with pytest.raises(VectorFormatError):
        read_vectors(tmp_path / "v.bin")


# -- SIF -----------------------------------------------------------------------

def _space(tokens, freqs, dim=5, seed=0):
    rng = np.random.default_rng(seed)
    return EmbeddingSpace({t: i for i, t in enumerate(tokens)}, rng.normal(size=(len(tokens), dim)).astype(np.float32),
                          np.asarray(freqs, dtype=np.float64))


def test_equal_frequencies_give_plain_average():
    space = _space(["a", "b", "c", "d"], [0.25] * 4)
    docs = [["a", "b"], ["b", "c", "d"], ["a", "a", "d"]]
    got = weighted_average(space, docs, a=1e-3)
    w = 1e-3 / (1e-3 + 0.25)
    for row, doc in zip(got, docs):
        plain = np.mean([space[t].astype(np.float64) for t in doc], axis=0)
        assert np.allclose(row / w, plain, atol=1e-12, rtol=0)


def test_identical_documents_project_to_zero():
    space = _space(["a", "b", "c"], [0.5, 0.3, 0.2])
    out = sif_embed(space, [["a", "b"]] * 4)
    assert all(np.allclose(d.vector, 0.0, atol=1e-12) for d in out)


def test_sif_matches_eigendecomposition_oracle():
    space = _space(["a", "b", "c", "d", "e"], [0.4, 0.3, 0.15, 0.1, 0.05], dim=6, seed=2)
    docs = [["a", "c"], ["b", "d", "e"], ["a", "e", "e"]]
    raw = np.array([
        sum(1e-3 / (1e-3 + space.frequency(t)) * space[t].astype(np.float64) for t in doc) / len(doc) for doc in docs
    ])
    vals, vecs = np.linalg.eigh(raw.T @ raw)
    u = vecs[:, np.argmax(vals)]
    expected = raw - np.outer(raw @ u, u)
    got = np.array([d.vector for d in sif_embed(space, docs)])
    assert np.allclose(got, expected, atol=1e-8, rtol=0)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(2, 8)), elements=st.floats(-5, 5)))
def test_projection_is_orthogonal_to_removed_component(m):
    if np.linalg.norm(m) < 1e-6:
        return
    out, u = remove_first_component(m)
    assert np.max(np.abs(out @ u)) < 1e-8


def test_document_without_vocabulary_warns_and_is_zero():
    space = _space(["a", "b"], [0.5, 0.5])
    with pytest.warns(UserWarning):
        rows = weighted_average(space, [["zzz"], ["a"]])
    assert np.all(rows[0] == 0)


def test_first_component_is_unit():
    rng = np.random.default_rng(0)
    u = first_component(rng.normal(size=(10, 4)))
    assert np.linalg.norm(u) == pytest.approx(1.0)


# -- similarity and competitors ------------------------------------------------

def test_cosine_identical_vectors():
    assert cosine_similarity([3.0, 4.0], [3.0, 4.0]) == pytest.approx(1.0, abs=1e-15)


def test_cosine_orthogonal():
    assert cosine_similarity([1.0, 0.0], [0.0, 2.0]) == 0.0


def test_cosine_hand_value():
    assert cosine_similarity([1.0, 0.0], [1.0, 1.0]) == pytest.approx(0.70710678, abs=1e-8)


def test_cosine_zero_vector_is_zero():
    assert cosine_similarity([0.0, 0.0], [1.0, 1.0]) == 0.0


def test_cosine_shape_mismatch():
    with pytest.raises(ValueError):
        cosine_similarity([1.0, 0.0], [1.0, 0.0, 0.0])


vec = arrays(np.float64, 6, elements=st.floats(-1e3, 1e3).filter(lambda x: x == 0 or abs(x) > 1e-3))


@given(vec, vec, st.floats(1e-3, 1e3))
def test_cosine_properties(a, b, k):
    s = cosine_similarity(a, b)
    assert s == pytest.approx(cosine_similarity(b, a), abs=1e-12)
    assert -1.0 - 1e-12 <= s <= 1.0 + 1e-12
    assert cosine_similarity(k * a, b) == pytest.approx(s, abs=1e-12)


def _universe(n=50, dim=8, seed=0, min_sim=0.5):
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(4, dim))
    docs = [DocVector(f"c{i:02d}", centers[i % 4] + 0.6 * rng.normal(size=dim), 10) for i in range(n)]
    founded = {d.company_id: dt.date(2005, 1, 1) + dt.timedelta(days=int(rng.integers(0, 3000))) for d in docs}
    return docs, founded, DocUniverse(docs, founded, CompetitionConfig(min_sim=min_sim), block=7)


def test_competitors_match_exhaustive_scan():
    docs, founded, universe = _universe()
    as_of = dt.date(2010, 6, 30)
    for target in docs:
        expected = []
        for other in docs:
            if other.company_id == target.company_id or founded[other.company_id] > as_of:
                continue
            s = cosine_similarity(target.vector, other.vector)
            if s >= 0.5:
                expected.append(other.company_id)
        got = find_competitors(target, universe, as_of=as_of)
        assert sorted(got.ids) == sorted(expected)
        sims = [s for _, s in got.competitors]
        assert sims == sorted(sims, reverse=True)


def test_identical_description_is_competitor_with_similarity_one():
    v = np.array([1.0, 2.0, 3.0])
    docs = [DocVector("a", v, 10), DocVector("b", v.copy(), 10), DocVector("c", -v, 10)]
    founded = dict.fromkeys("abc", dt.date(2000, 1, 1))
    got = find_competitors("a", DocUniverse(docs, founded))
    assert got.ids == ["b"]
    assert got.competitors[0][1] == pytest.approx(1.0, abs=1e-12)


def test_empty_universe_gives_empty_set():
    target = DocVector("a", np.ones(3), 10)
    universe = DocUniverse([target], {"a": dt.date(2000, 1, 1)})
    assert len(find_competitors(target, universe)) == 0


def test_similarity_graph_is_symmetric():
    docs, _, universe = _universe(n=40, seed=4)
    for d in docs:
        for other in find_competitors(d, universe).ids:
            assert d.company_id in find_competitors(other, universe).ids


def _comp_store(tmp_path, date):
    return make_store(tmp_path, companies=[company("t"), company("c")],
                      rounds=[round_("r1", "c", date, "seed", amount="2000000")])


def test_no_competitors_gives_zero_features(tmp_path):
    store = _comp_store(tmp_path, "2012-01-01")
    sample = Sample("t", D("2012-06-30"), "all", False, 2)
    assert competition_features(sample, CompetitorSet("t", ()), store) == (0, 0.0, 0.0)


def test_competitor_round_six_months_back(tmp_path):
    store = _comp_store(tmp_path, "2012-01-01")
    sample = Sample("t", D("2012-06-30"), "all", False, 2)
    assert competition_features(sample, CompetitorSet("t", (("c", 0.9),)), store) == (1, 2e6, 2e6)


def test_competitor_round_eighteen_months_back(tmp_path):
    store = _comp_store(tmp_path, "2011-01-01")
    sample = Sample("t", D("2012-06-30"), "all", False, 2)
    assert competition_features(sample, CompetitorSet("t", (("c", 0.9),)), store) == (1, 2e6, 0.0)


def test_competitor_round_after_as_of_ignored(tmp_path):
    store = _comp_store(tmp_path, "2012-07-01")
    sample = Sample("t", D("2012-06-30"), "all", False, 2)
    assert competition_features(sample, CompetitorSet("t", (("c", 0.9),)), store) == (1, 0.0, 0.0)
