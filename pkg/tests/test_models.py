import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ugdp import models
from ugdp.errors import SchemaError, TrainingError
from ugdp.models.trees import Tree, grow_tree
from ugdp.tabular import Dataset

from conftest import make_schema, random_dataset


def separable(n=200, seed=0):
    g = np.random.default_rng(seed)
    rows = g.integers(0, 3, (n, 2)).astype(np.int64)
    labels = ((rows[:, 0] == 1) | (rows[:, 1] == 2)).astype(np.int8)
    return Dataset(make_schema([3, 3]), rows, labels)


def leaf(value, width=2):
    return Tree([-1], [-1], [-1], [value], np.zeros((1, width), bool), [0])


# -- AUC ----------------------------------------------------------------------

def test_auc_examples():
    assert models.auc([0.9, 0.4, 0.6, 0.1], [1, 0, 1, 0]) == 1.0
    assert models.auc([0.9, 0.6, 0.4, 0.1], [1, 0, 1, 0]) == 0.75
    assert models.auc([0.3] * 6, [1, 0, 1, 0, 0, 1]) == 0.5
    assert models.auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    with pytest.raises(ValueError):
        models.auc([0.1, 0.2], [1, 1])


def _pair_auc(s, y):
    pos = [a for a, b in zip(s, y) if b == 1]
    neg = [a for a, b in zip(s, y) if b == 0]
    tot = sum((a > b) + 0.5 * (a == b) for a in pos for b in neg)
    return tot / (len(pos) * len(neg))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=2, max_size=40))
def test_auc_matches_pair_enumeration(pairs):
    s = [a / 6 for a, _ in pairs]
    y = [int(b) for _, b in pairs]
    if len(set(y)) < 2:
        return
    assert models.auc(s, y) == pytest.approx(_pair_auc(s, y), abs=1e-12)
    # invariant under strictly increasing maps
    assert models.auc(np.exp(3 * np.array(s)), y) == pytest.approx(models.auc(s, y), abs=1e-12)


def test_auc_complement_without_ties():
    g = np.random.default_rng(0)
    s = g.random(50)
    y = (g.random(50) < 0.4).astype(int)
    assert models.auc(s, y) + models.auc(1 - s, y) == pytest.approx(1.0, abs=1e-12)


def test_roc_points_endpoints():
    pts = models.roc_points([0.9, 0.6, 0.4, 0.1], [1, 0, 1, 0])
    assert pts[0][1:] == (0.0, 0.0) and pts[-1][1:] == (1.0, 1.0)
    # trapezoid area equals the AUC
    fpr = [p[1] for p in pts]
    tpr = [p[2] for p in pts]
    assert np.trapezoid(tpr, fpr) == pytest.approx(0.75)


# -- fitting ------------------------------------------------------------------

def test_separable_training_auc():
    ds = separable()
    rf = models.fit_random_forest(ds, models.ForestParams(n_trees=20), seed=1)
    gbt = models.fit_gbt(ds, models.GbtParams(n_rounds=30, max_depth=2), seed=1)
    assert models.auc(models.predict_proba(rf, ds), ds.labels) == 1.0
    assert models.auc(models.predict_proba(gbt, ds), ds.labels) == 1.0


def test_independent_labels_cv_auc_near_half():
    ds = random_dataset(1000, [4, 3, 5], seed=3)
    for kind, grid in (("random_forest", {"n_trees": [30], "min_leaf": [20]}),
                       ("gbt", {"n_rounds": [20], "max_depth": [2], "min_leaf": [20]})):
        res = models.cross_validate(ds, kind, grid, k=5, seed=0)
        assert abs(res.mean_auc - 0.5) < 0.05


def test_gbt_single_depth0_round_is_newton_step():
    ds = random_dataset(57, [3], seed=5)
    params = models.GbtParams(n_rounds=1, max_depth=0, learning_rate=0.3, base_score=0.0)
    model = models.fit_gbt(ds, params)
    n, pos = len(ds), int(ds.labels.sum())
    step = 0.3 * (pos - 0.5 * n) / (0.25 * n)
    expected = 1 / (1 + math.exp(-step))
    assert np.allclose(models.predict_proba(model, ds), expected, rtol=0, atol=1e-15)


def test_gbt_without_trees_and_forest_mean():
    schema = make_schema([2])
    ds = Dataset(schema, np.array([[0], [1]]), np.array([0, 1], dtype=np.int8))
    gbt = models.GbtModel([], 0.0, models.GbtParams(n_rounds=0), 0, schema)
    assert models.predict_proba(gbt, ds).tolist() == [0.5, 0.5]
    forest = models.ForestModel([leaf(0.2), leaf(0.6)], models.ForestParams(n_trees=2), 0, schema)
    assert models.predict_proba(forest, ds) == pytest.approx([0.4, 0.4], abs=1e-15)
    one = models.ForestModel([leaf(1.0)], models.ForestParams(n_trees=1), 0, schema)
    assert models.predict_proba(one, ds).tolist() == [1 - 1e-6, 1 - 1e-6]


def test_forest_is_exact_mean_of_trees():
    ds = random_dataset(300, [3, 4, 2], seed=1, p=lambda r: 0.2 + 0.5 * (r[:, 1] == 2))
    rf = models.fit_random_forest(ds, models.ForestParams(n_trees=7, max_depth=4), seed=2)
    direct = np.mean([t.predict(ds.rows) for t in rf.trees], axis=0)
    assert np.array_equal(models.predict_proba(rf, ds), models.clamp(direct))
    for t in rf.trees:
        assert t.max_depth <= 4
        leaves = t.feature < 0
        assert np.all((t.value[leaves] >= 0) & (t.value[leaves] <= 1))


def test_gbt_loss_non_increasing_and_range():
    ds = random_dataset(400, [3, 4, 2], seed=4, p=lambda r: 0.1 + 0.6 * (r[:, 0] == 0))
    gbt = models.fit_gbt(ds, models.GbtParams(n_rounds=40, max_depth=3), seed=0)
    loss = np.array(gbt.train_loss)
    assert np.all(np.diff(loss) <= 1e-12)
    p = models.predict_proba(gbt, ds)
    assert p.min() >= 1e-6 and p.max() <= 1 - 1e-6


def test_fit_determinism_and_round_trip():
    ds = random_dataset(300, [3, 4, 2], seed=2, p=lambda r: 0.3 + 0.4 * (r[:, 2] == 1))
    for kind, params in (("random_forest", models.ForestParams(n_trees=5)),
                         ("gbt", models.GbtParams(n_rounds=10))):
        a = models.fit_model(kind, ds, params, 9)
        b = models.fit_model(kind, ds, params, 9)
        assert np.array_equal(models.predict_proba(a, ds), models.predict_proba(b, ds))
        doc = json.loads(json.dumps(models.model_to_dict(a)))
        back = models.model_from_dict(doc)
        assert np.array_equal(models.predict_proba(back, ds), models.predict_proba(a, ds))


def test_training_errors():
    schema = make_schema([2])
    ds = Dataset(schema, np.array([[0], [1], [0]]), np.ones(3, dtype=np.int8))
    with pytest.raises(TrainingError):
        models.fit_random_forest(ds)
    with pytest.raises(TrainingError):
        models.fit_gbt(ds)
    good = random_dataset(50, [2], seed=0)
    model = models.fit_gbt(good, models.GbtParams(n_rounds=2))
    with pytest.raises(SchemaError):
        models.predict_proba(model, random_dataset(5, [3], seed=0))


def test_categorical_split_groups_values():
    # values {0, 2} positive, {1, 3} negative: one subset split separates them
    rows = np.tile(np.arange(4), 25)[:, None]
    y = np.isin(rows[:, 0], [0, 2]).astype(float)
    tree, _ = grow_tree(rows, [4], y, np.ones(100), max_depth=1, min_leaf=1)
    node = tree.node(0)
    assert set(node.values) in ({0, 2}, {1, 3})
    assert sorted(tree.predict(rows[:4])) == [0.0, 0.0, 1.0, 1.0]


# -- calibration --------------------------------------------------------------

def test_platt_calibrated_input_is_identity():
    g = np.random.default_rng(0)
    p = g.uniform(0.05, 0.95, 10_000)
    y = (g.random(10_000) < p).astype(int)
    cal = models.calibrate_platt(p, y)
    assert abs(cal.a - 1) < 0.1 and abs(cal.b) < 0.1


def test_platt_constant_and_inverted():
    y = np.array([0, 1] * 50)
    cal = models.calibrate_platt(np.full(100, 0.5), y)
    assert np.allclose(cal.probs, 0.5, atol=1e-6)
    g = np.random.default_rng(1)
    true = g.uniform(0.05, 0.95, 5000)
    yy = (g.random(5000) < true).astype(int)
    assert models.calibrate_platt(1 - true, yy).a < 0


def test_platt_degenerate_and_folds():
    with pytest.warns(UserWarning):
        cal = models.calibrate_platt([0.2, 0.3], [1, 1])
    assert cal.degenerate and cal.a == 1 and cal.b == 0
    g = np.random.default_rng(2)
    p = g.uniform(0.05, 0.95, 300)
    y = (g.random(300) < p).astype(int)
    folds = [(np.arange(100, 300), np.arange(100)), (np.arange(100), np.arange(100, 300))]
    cal = models.calibrate_platt(p, y, folds)
    a0, b0 = cal.fold_params[0]
    expected = models.clamp(models.sigmoid(a0 * models.logit(p[:100]) + b0))
    assert np.allclose(cal.probs[:100], expected, atol=1e-12)


# -- cross-validation ---------------------------------------------------------

def test_cross_validate_selection():
    ds = separable(300, seed=3)
    one = models.cross_validate(ds, "gbt", [{"n_rounds": 5}], k=3, seed=0)
    assert one.best_params == models.GbtParams(n_rounds=5)
    res = models.cross_validate(ds, "random_forest",
                                {"n_trees": [10], "max_depth": [0, 3]}, k=3, seed=0)
    assert res.best_params.max_depth == 3
    again = models.cross_validate(ds, "random_forest",
                                  {"n_trees": [10], "max_depth": [0, 3]}, k=3, seed=0)
    assert again.best_params == res.best_params and again.mean_auc == res.mean_auc
    # equal AUC: the smaller model wins
    tie = models.cross_validate(ds, "gbt", {"n_rounds": [60, 30], "max_depth": [2]}, k=3, seed=0)
    if tie.table[0][1] == tie.table[1][1]:
        assert tie.best_params.n_rounds == 30
    with pytest.raises(ValueError):
        models.cross_validate(ds, "gbt", [], k=3)
