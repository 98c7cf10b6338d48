import json

import numpy as np
import pandas as pd
import pytest

from tabkit.data import make_dataset
from tabkit.models import (
    ColumnCountError,
    SearchSpaceError,
    SearchSpec,
    SingleClassError,
    compare_classifiers,
    cross_val_score,
    enumerate_configs,
    expand_dotted,
    feature_importances,
    fit_classifier,
    fit_dtree,
    fit_linsvm,
    fit_logreg,
    fit_rforest,
    fit_simple,
    hyper_search,
    linsvm_objective_and_grad,
    logreg_loss_and_grad,
    model_from_dict,
    model_to_dict,
    ovr_targets,
    supports_importances,
)
from tabkit.numkit import finite_diff_grad, relative_error
from utils import ModelError


def _train_accuracy(model, ds):
    return float(np.mean(model.predict(ds.X) == ds.y))


def _one_d(xs, ys):
    return make_dataset(np.array(xs, dtype=float).reshape(-1, 1), ys)


# ─── LOGISTIC REGRESSION ───────────────────────────────────────────
def test_logreg_separates_two_points():
    model = fit_logreg(_one_d([-1.0, 1.0], [0, 1]))
    assert model.predict(np.array([[-1.0], [1.0]])).tolist() == [0, 1]


def test_logreg_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(4, 3))
    Y = np.eye(3)[[0, 1, 2, 1]]
    theta = rng.normal(scale=0.3, size=(4, 3))
    _, grad = logreg_loss_and_grad(theta, X, Y, l2=0.1)
    numeric = finite_diff_grad(lambda t: logreg_loss_and_grad(t, X, Y, l2=0.1)[0], theta)
    assert relative_error(grad, numeric) < 1e-4


def test_logreg_huge_penalty_shrinks_weights(linear_ds):
    model = fit_logreg(linear_ds, {'l2': 1e6})
    assert np.linalg.norm(model.params['coef']) < 1e-2


def test_logreg_single_class():
    with pytest.raises(SingleClassError):
        fit_logreg(_one_d([1.0, 2.0, 3.0], [0, 0, 0]))


def test_logreg_rejects_negative_penalty(linear_ds):
    with pytest.raises(ModelError):
        fit_logreg(linear_ds, {'l2': -1.0})


def test_logreg_learns_linear_boundary(linear_ds):
    assert _train_accuracy(fit_logreg(linear_ds), linear_ds) > 0.9


# ─── TREES AND FORESTS ─────────────────────────────────────────────
def test_dtree_pure_data_is_single_leaf():
    model = fit_dtree(make_dataset(np.arange(6, dtype=float).reshape(-1, 2), [1, 1, 1], class_names=['a', 'b']))
    assert len(model.params['feature']) == 1
    assert model.predict(np.array([[9.0, 9.0]])).tolist() == [1]


def test_dtree_solves_xor(xor_ds):
    model = fit_dtree(xor_ds, {'max_depth': 2})
    assert _train_accuracy(model, xor_ds) == 1.0


def test_dtree_depth_zero_is_majority_stump():
    ds = _one_d([0, 1, 2, 3, 4], [1, 1, 1, 0, 0])
    model = fit_dtree(ds, {'max_depth': 0})
    assert len(model.params['feature']) == 1
    assert set(model.predict(ds.X).tolist()) == {1}


def test_dtree_splits_at_midpoints():
    model = fit_dtree(_one_d([1.0, 2.0, 4.0, 6.0], [0, 0, 1, 1]))
    assert model.params['threshold'][0] == 3.0


def test_dtree_splits_never_increase_impurity(three_class_ds):
    tree = fit_dtree(three_class_ds, {'max_depth': 4}).params
    for node in np.flatnonzero(tree['feature'] >= 0):
        l, r, n = tree['left'][node], tree['right'][node], tree['n_node_samples'][node]
        child = (tree['n_node_samples'][l] * tree['impurity'][l]
                 + tree['n_node_samples'][r] * tree['impurity'][r]) / n
        assert child <= tree['impurity'][node] + 1e-12


def test_single_tree_forest_equals_tree(three_class_ds):
    config = {'max_depth': 3, 'max_features': None}
    forest = fit_rforest(three_class_ds, dict(config, n_trees=1, bootstrap=False), seed=5)
    tree = fit_dtree(three_class_ds, config, seed=5)
    assert np.array_equal(forest.predict(three_class_ds.X), tree.predict(three_class_ds.X))


def test_forest_importances_sum_to_one(linear_ds):
    model = fit_rforest(linear_ds, {'n_trees': 10})
    imp = feature_importances(model)
    assert imp.sum() == pytest.approx(1.0, abs=1e-9)
    assert imp[0] > max(imp[2], imp[3])
    assert supports_importances(model)


def test_forest_independent_of_thread_count(linear_ds):
    serial = fit_rforest(linear_ds, {'n_trees': 8, 'max_workers': 1}, seed=9)
    parallel = fit_rforest(linear_ds, {'n_trees': 8, 'max_workers': 4}, seed=9)
    for name, array in serial.params.items():
        assert np.array_equal(array, parallel.params[name])


def test_importances_unavailable_for_linear_models(linear_ds):
    model = fit_logreg(linear_ds, {'epochs': 5})
    assert not supports_importances(model)
    with pytest.raises(ModelError):
        feature_importances(model)


# ─── LINEAR SVM ────────────────────────────────────────────────────
def test_linsvm_separable_signs():
    ds = _one_d([-2.0, -1.0, 1.0, 2.0], [0, 0, 1, 1])
    model = fit_linsvm(ds)
    margins = model.decision_function(ds.X)
    assert margins.shape == (4, 1)
    assert np.array_equal(margins[:, 0] > 0, ds.y == 1)


def test_hinge_gradient_away_from_kinks():
    X = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 1.0], [-1.0, 1.0], [0.5, -2.0], [1.5, 0.3]])
    T = ovr_targets(np.array([0, 1, 0, 1, 1, 0]), 2)
    theta = np.array([[0.7], [-0.4], [0.1]])
    margins = T * (X @ theta[:2] + theta[2])
    assert np.all(np.abs(margins - 1) > 0.2)
    _, grad = linsvm_objective_and_grad(theta, X, T, 1.0)
    numeric = finite_diff_grad(lambda t: linsvm_objective_and_grad(t, X, T, 1.0)[0], theta)
    assert relative_error(grad, numeric) < 1e-4


def test_linsvm_three_classes_has_three_columns(three_class_ds):
    model = fit_linsvm(three_class_ds, {'epochs': 50})
    assert model.decision_function(three_class_ds.X).shape == (90, 3)
    with pytest.raises(ModelError):
        model.predict_proba(three_class_ds.X)


def test_linsvm_single_class():
    with pytest.raises(SingleClassError):
        fit_linsvm(_one_d([0.0, 1.0], [1, 1]))


# ─── SIMPLE BASELINES ──────────────────────────────────────────────
def test_zeror_predicts_majority():
    ds = _one_d([5.0, 6.0, 7.0], [0, 0, 1])
    model = fit_simple('zeror', ds)
    assert model.predict(np.array([[100.0], [-3.0]])).tolist() == [0, 0]


def test_zeror_tie_goes_to_lowest_code():
    model = fit_simple('zeror', _one_d([1.0, 2.0], [1, 0]))
    assert model.predict(np.array([[0.0]])).tolist() == [0]


def test_knn_one_neighbour_memorises(linear_ds):
    model = fit_simple('knn', linear_ds, config={'k': 1})
    assert _train_accuracy(model, linear_ds) == 1.0


def test_knn_k_larger_than_n():
    with pytest.raises(ModelError):
        fit_simple('knn', _one_d([0.0, 1.0], [0, 1]), config={'k': 3})


def test_gnb_midpoint_goes_to_nearer_class():
    model = fit_simple('gnb', _one_d([-1.0, 1.0, 9.0, 11.0], [0, 0, 1, 1]))
    assert model.predict(np.array([[4.9], [5.1]])).tolist() == [0, 1]


def test_fit_simple_rejects_other_kinds(linear_ds):
    with pytest.raises(ModelError):
        fit_simple('logreg', linear_ds)


# ─── SHARED CONTRACT ───────────────────────────────────────────────
@pytest.mark.parametrize("kind", ['logreg', 'dtree', 'rforest', 'knn', 'gnb', 'zeror', 'lrforest', 'svtree'])
def test_predict_agrees_with_proba(kind, three_class_ds):
    config = {'n_trees': 10} if kind == 'rforest' else None
    model = fit_classifier(kind, three_class_ds.X, three_class_ds.y, config, seed=1)
    proba = model.predict_proba(three_class_ds.X)
    assert np.allclose(proba.sum(axis=1), 1.0, atol=1e-9)
    assert (proba >= 0).all()
    assert np.array_equal(model.predict(three_class_ds.X), np.argmax(proba, axis=1))
    assert set(model.predict(three_class_ds.X).tolist()) <= {0, 1, 2}


def test_refit_reproduces_params(linear_ds):
    a = fit_logreg(linear_ds, {'batch_strategy': 'mini_batch:16', 'epochs': 20}, seed=3)
    b = fit_logreg(linear_ds, {'batch_strategy': 'mini_batch:16', 'epochs': 20}, seed=3)
    assert np.array_equal(a.params['coef'], b.params['coef'])


def test_params_are_read_only(linear_ds):
    model = fit_logreg(linear_ds, {'epochs': 5})
    with pytest.raises(ValueError):
        model.params['coef'][0, 0] = 1.0


def test_wrong_column_count(linear_ds):
    model = fit_logreg(linear_ds, {'epochs': 5})
    with pytest.raises(ColumnCountError):
        model.predict(np.zeros((2, 3)))


def test_unknown_kind(linear_ds):
    with pytest.raises(ModelError, match="Unknown model kind"):
        fit_classifier('perceptron', linear_ds.X, linear_ds.y)


# ─── SEARCH ────────────────────────────────────────────────────────
def test_grid_search_table_and_best(three_class_ds):
    spec = SearchSpec('grid', {'max_depth': [1, 2]}, cv_folds=3, seed=0)
    best, table = hyper_search('dtree', three_class_ds, spec)
    assert len(table) == 2
    assert list(table.columns) == ['candidate', 'max_depth', 'mean_score', 'std_score']
    top = table['mean_score'].max()
    first_top = table[table['mean_score'] == top].iloc[0]
    assert best['max_depth'] == first_top['max_depth']


def test_random_search_is_deterministic():
    spec = SearchSpec('random', {'k': {'low': 1, 'high': 9}, 'p': [0.1, 0.2]}, n_draws=5, seed=11)
    first = enumerate_configs(spec)
    assert first == enumerate_configs(spec)
    assert len(first) == 5
    assert all(1 <= c['k'] <= 9 and isinstance(c['k'], int) for c in first)


def test_grid_product_size():
    spec = SearchSpec('grid', {'a': [1, 2, 3], 'b': ['x', 'y']})
    assert len(enumerate_configs(spec)) == 6


def test_search_spec_validation():
    with pytest.raises(SearchSpaceError):
        SearchSpec('grid', {})
    with pytest.raises(SearchSpaceError):
        SearchSpec('grid', {'k': [1]}, cv_folds=1)
    with pytest.raises(SearchSpaceError):
        SearchSpec('bayes', {'k': [1]})


def test_search_rejects_unknown_hyperparameter(linear_ds):
    with pytest.raises(SearchSpaceError):
        hyper_search('knn', linear_ds, SearchSpec('grid', {'depth': [1]}))


def test_dotted_names_reach_ensemble_components():
    assert expand_dotted({'forest.n_trees': 10, 'meta.l2': 0.1}) == {'forest': {'n_trees': 10}, 'meta': {'l2': 0.1}}


def test_cross_val_score_per_fold(linear_ds):
    scores = cross_val_score('knn', {'k': 3}, linear_ds, k=4, seed=0)
    assert scores.shape == (4,)
    assert np.all((scores >= 0) & (scores <= 1))


def test_compare_classifiers_table(three_class_ds):
    table = compare_classifiers(['zeror', 'knn'], three_class_ds, k=3)
    assert isinstance(table, pd.DataFrame)
    assert list(table.columns) == ['model', 'accuracy', 'precision', 'recall', 'f1']
    knn, zeror = table.set_index('model').loc['knn'], table.set_index('model').loc['zeror']
    assert knn['accuracy'] > zeror['accuracy']


# ─── EXPORT ────────────────────────────────────────────────────────
@pytest.mark.parametrize("kind", ['logreg', 'rforest', 'linsvm', 'gnb', 'lrforest', 'svtree'])
def test_export_round_trip_is_bit_exact(kind, three_class_ds):
    config = {'n_trees': 5} if kind == 'rforest' else None
    model = fit_classifier(kind, three_class_ds.X, three_class_ds.y, config, seed=2,
                           class_names=three_class_ds.class_names)
    doc = json.loads(json.dumps(model_to_dict(model)))
    back = model_from_dict(doc)
    assert doc['format_version'] == 1
    assert back.class_names == ['a', 'b', 'c']
    assert np.array_equal(back.predict(three_class_ds.X), model.predict(three_class_ds.X))
    assert np.array_equal(back.scores(three_class_ds.X), model.scores(three_class_ds.X))


def test_import_rejects_other_versions(linear_ds):
    doc = model_to_dict(fit_logreg(linear_ds, {'epochs': 5}))
    doc['format_version'] = 2
    with pytest.raises(ModelError):
        model_from_dict(doc)
