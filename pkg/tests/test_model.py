import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXTURES
from nephrofp.metrics import auroc
from nephrofp.model import (
    LEAF_LAMBDA,
    BinMapper,
    Dataset,
    DegenerateLabels,
    EnsembleModel,
    ForestParams,
    FormatVersionMismatch,
    GbdtParams,
    ShapeMismatch,
    Tree,
    deserialize,
    load_model,
    predict_proba,
    save_model,
    serialize,
    train_gbdt,
    train_random_forest,
)
from nephrofp.model.io import MAGIC
from nephrofp.model.tree import BinnedData, grow_gbdt_tree
from oracles import exact_gbdt_split, exact_gbdt_tree_predict, exact_gini_tree_predict, separable_toy


@pytest.fixture(scope="module")
def toy():
    X, y = separable_toy()
    return Dataset(X, y, ["x0", "x1"])


@pytest.fixture(scope="module")
def toy_gbdt(toy):
    return train_gbdt(toy, GbdtParams(n_trees=50, seed=0))


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


# ---- data validation ------------------------------------------------------------

def test_dataset_shape_checks():
    with pytest.raises(ShapeMismatch):
        Dataset(np.zeros((3, 2)), [0, 1], ["a", "b"])
    with pytest.raises(ShapeMismatch):
        Dataset(np.zeros((2, 2)), [0, 1], ["a"])
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan], [1.0]]), [0, 1], ["a"])
    with pytest.raises(ValueError):
        Dataset(np.array([[0.5], [1.0]]), [0, 1], ["a"], binary_columns=(0,))


def test_degenerate_labels():
    data = Dataset(np.arange(10.0).reshape(5, 2), np.ones(5), ["a", "b"])
    with pytest.raises(DegenerateLabels):
        train_gbdt(data, GbdtParams(n_trees=2))
    with pytest.raises(DegenerateLabels):
        train_random_forest(data, ForestParams(n_trees=2))


def test_predict_shape_mismatch(toy_gbdt):
    with pytest.raises(ShapeMismatch):
        toy_gbdt.predict_proba(np.zeros((4, 3)))


def test_param_validation():
    for kwargs in ({"n_trees": -1}, {"learning_rate": 0}, {"learning_rate": 1.5}, {"n_bins": 1},
                   {"n_bins": 300}, {"subsample": 0}):
        with pytest.raises(ValueError):
            GbdtParams(**kwargs)
    with pytest.raises(ValueError):
        ForestParams(max_features=0)


# ---- learning ---------------------------------------------------------------------

def test_gbdt_toy_auroc(toy, toy_gbdt):
    assert auroc(toy_gbdt.predict_proba(toy.features), toy.labels) >= 0.99


def test_gbdt_loss_trace_non_increasing(toy_gbdt):
    trace = np.array(toy_gbdt.loss_trace)
    assert len(trace) == 51
    assert np.all(np.diff(trace) <= 1e-9)


def test_gbdt_loss_monotone_at_default_params(toy):
    model = train_gbdt(toy)
    assert np.all(np.diff(model.loss_trace) <= 1e-9)


def test_forest_toy_auroc(toy):
    model = train_random_forest(toy, ForestParams(n_trees=50, seed=0))
    assert auroc(model.predict_proba(toy.features), toy.labels) >= 0.99


def test_gbdt_golden_vector(toy, toy_gbdt):
    golden = np.array([float(v) for v in (FIXTURES / "gbdt_toy_golden.txt").read_text().split()])
    np.testing.assert_allclose(toy_gbdt.predict_proba(toy.features), golden, rtol=1e-12, atol=0)


def test_constant_feature_predicts_base_rate():
    y = np.array([0, 1, 0, 0, 1, 0, 0, 0] * 5)
    data = Dataset(np.full((40, 1), 3.0), y, ["c"])
    model = train_gbdt(data, GbdtParams(n_trees=10, min_samples_leaf=1))
    np.testing.assert_allclose(model.predict_proba(data.features), y.mean(), rtol=1e-12)
    forest = train_random_forest(data, ForestParams(n_trees=10, bootstrap=False))
    np.testing.assert_allclose(forest.predict_proba(data.features), y.mean(), rtol=1e-12)


def test_zero_trees_is_sigmoid_of_base(toy):
    model = train_gbdt(toy, GbdtParams(n_trees=0))
    rate = toy.labels.mean()
    assert model.base_score == pytest.approx(np.log(rate / (1 - rate)))
    np.testing.assert_allclose(model.predict_proba(toy.features[:7]), sigmoid(model.base_score), rtol=1e-14)


def test_all_zero_leaf_tree_changes_nothing(toy, toy_gbdt):
    X = toy.features
    zero = Tree(np.array([0, -1, -1]), np.array([0.1, 0, 0.0]), np.array([3, -1, -1]),
                np.array([1, -1, -1]), np.array([2, -1, -1]), np.zeros(3))
    extended = EnsembleModel("gbdt", [*toy_gbdt.trees, zero], toy_gbdt.base_score,
                             toy_gbdt.learning_rate, toy_gbdt.n_features)
    np.testing.assert_array_equal(extended.predict_proba(X), toy_gbdt.predict_proba(X))


def test_tree_depth_within_limit(toy):
    model = train_gbdt(toy, GbdtParams(n_trees=5, max_depth=3, min_samples_leaf=1))
    assert max(t.depth() for t in model.trees) <= 3


def test_balance_classes_shifts_base():
    X, _ = separable_toy(300, seed=3)
    data = Dataset(X, (X[:, 0] > 1.0).astype(int), ["a", "b"])
    plain = train_gbdt(data, GbdtParams(n_trees=0))
    balanced = train_gbdt(data, GbdtParams(n_trees=0, balance_classes=True))
    assert plain.base_score < 0
    assert balanced.base_score == pytest.approx(0.0, abs=1e-12)


# ---- histogram splits versus exact splits ---------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.integers(20, 200), st.integers(1, 5), st.integers(2, 12),
       st.integers(1, 3), st.integers(1, 10))
def test_histogram_tree_equals_exact_tree(seed, n, d, card, depth, min_leaf):
    # continuous gradient statistics so that no two candidate splits tie exactly
    rng = np.random.default_rng(seed)
    X = rng.integers(0, card, size=(n, d)).astype(float) * 0.7
    grad = rng.normal(size=n) + 0.3 * X[:, 0]
    hess = rng.uniform(0.05, 0.25, size=n)
    binned = BinnedData.from_mapper(BinMapper.fit(X, 256), X)
    tree = grow_gbdt_tree(binned, np.arange(n), grad, hess, np.ones(n), max_depth=depth,
                          min_samples_leaf=min_leaf, lam=LEAF_LAMBDA)
    expected = exact_gbdt_tree_predict(X, grad, hess, LEAF_LAMBDA, min_leaf, depth)
    np.testing.assert_allclose(tree.predict(X), expected, rtol=1e-9, atol=1e-12)


def test_first_boosting_tree_matches_exact_gains():
    X, y = separable_toy(200, seed=4)
    X = np.round(X * 4) / 4
    model = train_gbdt(Dataset(X, y, ["a", "b"]), GbdtParams(n_trees=1, learning_rate=1.0, max_depth=1,
                                                             min_samples_leaf=5))
    p = sigmoid(model.base_score)
    gain, f, t = exact_gbdt_split(X, p - y, np.full(len(y), p * (1 - p)), LEAF_LAMBDA, 5)
    tree = model.trees[0]
    assert (tree.feature[0], tree.threshold[0]) == (f, pytest.approx(t))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000), st.integers(10, 120), st.integers(1, 4))
def test_single_forest_tree_equals_plain_tree(seed, n, d):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = (X[:, 0] + rng.normal(scale=0.8, size=n) > 0).astype(int)
    if y.min() == y.max():
        return
    model = train_random_forest(Dataset(X, y, [f"f{j}" for j in range(d)]),
                                ForestParams(n_trees=1, bootstrap=False, max_features=d, seed=seed))
    expected = np.clip(exact_gini_tree_predict(X, y), 1e-6, 1 - 1e-6)
    np.testing.assert_allclose(model.predict_proba(X), expected, rtol=1e-12)


def test_forest_deterministic(toy):
    a = train_random_forest(toy, ForestParams(n_trees=10, seed=7))
    b = train_random_forest(toy, ForestParams(n_trees=10, seed=7))
    assert serialize(a) == serialize(b)
    c = train_random_forest(toy, ForestParams(n_trees=10, seed=8))
    assert serialize(a) != serialize(c)


def test_gbdt_row_permutation_invariance():
    rng = np.random.default_rng(11)
    X = rng.integers(0, 6, size=(150, 3)).astype(float)
    y = (X[:, 0] + X[:, 1] + rng.normal(size=150) > 5).astype(int)
    perm = rng.permutation(150)
    a = train_gbdt(Dataset(X, y, ["a", "b", "c"]), GbdtParams(n_trees=10, min_samples_leaf=5))
    b = train_gbdt(Dataset(X[perm], y[perm], ["a", "b", "c"]), GbdtParams(n_trees=10, min_samples_leaf=5))
    np.testing.assert_allclose(a.predict_proba(X), b.predict_proba(X), rtol=1e-9)


def test_fingerprint_columns_split_between_zero_and_one():
    rng = np.random.default_rng(5)
    n = 400
    cont = rng.normal(size=(n, 3))
    bits = (rng.random((n, 1024)) < 0.05).astype(float)
    logit = cont[:, 0] + 2.0 * bits[:, 17] - 1.5 * bits[:, 900]
    y = (rng.random(n) < sigmoid(logit)).astype(int)
    X = np.hstack([cont, bits])
    data = Dataset(X, y, [f"c{j}" for j in range(1027)], binary_columns=tuple(range(3, 1027)))
    for model in (train_gbdt(data, GbdtParams(n_trees=20, min_samples_leaf=5)),
                  train_random_forest(data, ForestParams(n_trees=10))):
        binary_splits = 0
        for t in model.trees:
            internal = t.feature >= 3
            binary_splits += internal.sum()
            assert np.all((t.threshold[internal] > 0) & (t.threshold[internal] < 1))
        assert binary_splits > 0


def test_bin_mapper_thresholds_are_midpoints():
    X = np.array([[1.0], [2.0], [4.0], [4.0]])
    mapper = BinMapper.fit(X, 256)
    assert list(mapper.transform(X)[0]) == [0, 1, 2, 2]


def test_bin_mapper_caps_bins():
    X = np.arange(1000.0)[:, None]
    mapper = BinMapper.fit(X, 16)
    assert int(mapper.transform(X).max()) <= 15


# ---- serialization -------------------------------------------------------------------

def test_roundtrip_bit_identical(toy, toy_gbdt, tmp_path):
    rng = np.random.default_rng(0)
    rows = rng.normal(scale=2.0, size=(100, 2))
    forest = train_random_forest(toy, ForestParams(n_trees=5))
    for model in (toy_gbdt, forest):
        back = deserialize(serialize(model))
        np.testing.assert_array_equal(back.predict_proba(rows), model.predict_proba(rows))
        assert back.kind == model.kind and back.params == model.params
        save_model(model, tmp_path / f"{model.kind}.nfpm")
        again = load_model(tmp_path / f"{model.kind}.nfpm")
        np.testing.assert_array_equal(again.predict_proba(rows), model.predict_proba(rows))
    assert serialize(deserialize(serialize(toy_gbdt))) == serialize(toy_gbdt)


def test_empty_model_roundtrip(toy):
    model = train_gbdt(toy, GbdtParams(n_trees=0))
    back = deserialize(serialize(model))
    assert back.trees == []
    np.testing.assert_array_equal(back.predict_proba(toy.features), model.predict_proba(toy.features))


def test_corrupted_header(toy_gbdt):
    blob = serialize(toy_gbdt)
    assert blob[:4] == MAGIC
    with pytest.raises(FormatVersionMismatch):
        deserialize(b"XXXX" + blob[4:])
    with pytest.raises(FormatVersionMismatch):
        deserialize(blob[:4] + (99).to_bytes(2, "little") + blob[6:])
    with pytest.raises(FormatVersionMismatch):
        deserialize(blob[:-3])
    with pytest.raises(FormatVersionMismatch):
        deserialize(blob + b"\0")
    with pytest.raises(FormatVersionMismatch):
        deserialize(b"")


def test_predict_proba_range(toy, toy_gbdt):
    X = np.random.default_rng(1).normal(scale=50, size=(200, 2))
    for model in (toy_gbdt, train_random_forest(toy, ForestParams(n_trees=3))):
        p = predict_proba(model, X)
        assert np.all((p > 0) & (p < 1))
