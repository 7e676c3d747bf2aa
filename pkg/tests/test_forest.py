import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from venturescope.models.forest import (
    ForestModel, ModelFormatError, Tree, gini, load_forest, rf_predict_proba, rf_train, save_forest,
    stratified_bootstrap,
)


def blobs(n, seed, gap=4.0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    X = rng.standard_normal((n, 3))
    X[:, 0] += gap * y
    return X, y


def test_gini_values():
    assert gini([]) == 0.0
    assert gini([1, 1, 1]) == 0.0
    assert gini([0, 1]) == 0.5


def test_constant_feature_predicts_class_prior():
    y = np.array([1] * 30 + [0] * 70)
    X = np.ones((100, 1))
    model = rf_train(X, y, n_trees=20, seed=1)
    assert np.allclose(rf_predict_proba(model, X), 0.3)


def test_separable_data_generalizes():
    X, y = blobs(400, 0)
    Xt, yt = blobs(400, 1)
    model = rf_train(X, y, n_trees=30, seed=0)
    acc = np.mean((rf_predict_proba(model, Xt) >= 0.5) == yt)
    assert acc >= 0.95


def test_xor_is_learned():
    rng = np.random.default_rng(2)
    X = rng.uniform(-1, 1, (400, 2))
    y = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(int)
    model = rf_train(X, y, n_trees=30, max_features=2, seed=0)
    assert np.mean((model.predict_proba(X) >= 0.5) == y) >= 0.95


def _stump(leaf_values):
    return Tree(np.array([0, -1, -1]), np.array([0.5, 0.0, 0.0]), np.array([1, -1, -1]), np.array([2, -1, -1]),
                np.array([0.5, *leaf_values]))


def test_pure_leaf_and_averaging_by_hand():
    x = np.array([[0.0]])
    assert rf_predict_proba(ForestModel([_stump([1.0, 0.0])], 1), x)[0] == 1.0
    assert rf_predict_proba(ForestModel([_stump([1.0, 0.0]), _stump([0.0, 1.0])], 1), x)[0] == 0.5


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000))
def test_probabilities_in_unit_interval(seed):
    X, y = blobs(60, seed, gap=0.5)
    p = rf_train(X, y, n_trees=5, seed=seed).predict_proba(np.random.default_rng(seed).normal(0, 3, (50, 3)))
    assert np.all((p >= 0) & (p <= 1))


def test_invariant_under_monotone_feature_transform():
    X, y = blobs(200, 3, gap=1.0)
    X[:, 1] = np.abs(X[:, 1]) + 0.1
    Z = X.copy()
    Z[:, 0] = np.exp(X[:, 0])
    Z[:, 1] = np.log(X[:, 1]) * 3 + 2
    a = rf_train(X, y, n_trees=10, seed=5)
    b = rf_train(Z, y, n_trees=10, seed=5)
    assert np.array_equal(a.predict_proba(X), b.predict_proba(Z))


def test_stratified_bootstrap_keeps_class_counts():
    y = np.array([0] * 17 + [1] * 5)
    idx = stratified_bootstrap(y, np.random.default_rng(0))
    assert len(idx) == len(y)
    assert y[idx].sum() == 5


def test_single_class_rejected():
    with pytest.raises(ValueError):
        rf_train(np.zeros((5, 2)), np.zeros(5))


def test_dimension_mismatch_rejected():
    X, y = blobs(50, 0)
    model = rf_train(X, y, n_trees=3)
    with pytest.raises(ValueError, match="expected 3 features"):
        model.predict_proba(np.zeros((2, 4)))


def test_thread_count_does_not_change_result():
    X, y = blobs(150, 4, gap=1.0)
    a = rf_train(X, y, n_trees=12, seed=9, threads=1).predict_proba(X)
    b = rf_train(X, y, n_trees=12, seed=9, threads=4).predict_proba(X)
    assert np.array_equal(a, b)


def test_file_round_trip(tmp_path):
    X, y = blobs(120, 6, gap=1.0)
    model = rf_train(X, y, n_trees=8, seed=2, feature_names=["a", "b", "c"])
    save_forest(model, tmp_path / "m.vsrf")
    back = load_forest(tmp_path / "m.vsrf")
    assert back.feature_names == ["a", "b", "c"]
    assert (back.n_trees, back.max_features, back.seed) == (8, model.max_features, 2)
    assert np.array_equal(back.predict_proba(X), model.predict_proba(X))


def test_bad_magic(tmp_path):
    path = tmp_path / "m.vsrf"
    path.write_bytes(b"NOPE!" + bytes(40))
    with pytest.raises(ModelFormatError, match="magic"):
        load_forest(path)


@pytest.mark.parametrize("damage", ["truncate", "append", "child"])
def test_corrupt_files_rejected(tmp_path, damage):
    X, y = blobs(80, 7)
    path = tmp_path / "m.vsrf"
    save_forest(rf_train(X, y, n_trees=2, seed=0), path)
    data = bytearray(path.read_bytes())
    if damage == "truncate":
        data = data[:-7]
    elif damage == "append":
        data += b"\x00"
    else:
        # first tree's left array begins after header, name count, tree count, node count, features, thresholds
        (n,) = np.frombuffer(bytes(data[33:37]), "<u4")
        off = 37 + 4 * n + 8 * n
        data[off:off + 4] = np.array([10 ** 6], "<i4").tobytes()
    path.write_bytes(bytes(data))
    with pytest.raises(ModelFormatError):
        load_forest(path)
