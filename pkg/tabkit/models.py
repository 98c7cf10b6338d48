# tabkit/models.py - Baseline classifiers, model registry, search and export

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from config import CONFIG, FORMAT_VERSION, MODEL_DEFAULTS, SEARCH_DEFAULTS, merged
from utils import ModelError, measure_performance
from tabkit.metrics import classification_report, score
from tabkit.numkit import (
    NonFiniteError,
    OptimizerState,
    ShapeMismatchError,
    epoch_schedule,
    optimizer_step,
    seeded_rng,
    softmax,
)

logger = logging.getLogger(__name__)


class SingleClassError(ModelError):
    pass


class NotFittedError(ModelError):
    pass


class ColumnCountError(ModelError):
    pass


class SearchSpaceError(ModelError):
    pass

# ─── MODEL CONTAINER ───────────────────────────────────────────────
@dataclass(frozen=True, eq=False)
class ClassifierModel:
    """A fitted classifier: kind, hyperparameters and named parameter arrays"""

    kind: str
    config: dict
    params: Dict[str, np.ndarray]
    classes: np.ndarray
    seed: int
    n_features: int
    class_names: Optional[List[str]] = None
    preprocessing: Optional[dict] = None

    def __post_init__(self):
        for array in self.params.values():
            array.flags.writeable = False

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def has_proba(self) -> bool:
        return _REGISTRY[self.kind].proba is not None

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features:
            raise ColumnCountError(f"{self.kind} expects {self.n_features} columns, got {X.shape[1]}")
        return X

    def predict_proba(self, X) -> np.ndarray:
        spec = _REGISTRY[self.kind]
        if spec.proba is None:
            raise ModelError(f"{self.kind} provides decision_function, not predict_proba")
        return spec.proba(self, self._check(X))

    def decision_function(self, X) -> np.ndarray:
        spec = _REGISTRY[self.kind]
        if spec.decision is None:
            raise ModelError(f"{self.kind} has no decision_function")
        return spec.decision(self, self._check(X))

    def predict(self, X) -> np.ndarray:
        X = self._check(X)
        spec = _REGISTRY[self.kind]
        if spec.proba is not None:
            return np.argmax(spec.proba(self, X), axis=1)
        scores = spec.decision(self, X)
        if scores.shape[1] == 1:
            return (scores[:, 0] > 0).astype(np.int64)
        return np.argmax(scores, axis=1)

    def score_for_class(self, X, k) -> np.ndarray:
        """Probability of class k, or its one-vs-rest margin"""
        if self.has_proba:
            return self.predict_proba(X)[:, k]
        scores = self.decision_function(X)
        if scores.shape[1] == 1:
            return scores[:, 0] if k == 1 else -scores[:, 0]
        return scores[:, k]

    def scores(self, X) -> np.ndarray:
        """Per-class scores used by curves (probabilities when available)"""
        if self.has_proba:
            return self.predict_proba(X)
        scores = self.decision_function(X)
        return np.column_stack([-scores[:, 0], scores[:, 0]]) if scores.shape[1] == 1 else scores


@dataclass
class KindSpec:
    fit: Callable
    proba: Optional[Callable] = None
    decision: Optional[Callable] = None
    to_dict: Optional[Callable] = None
    from_dict: Optional[Callable] = None
    importances: Optional[Callable] = None


_REGISTRY: Dict[str, KindSpec] = {}


def register_kind(kind: str, spec: KindSpec):
    _REGISTRY[kind] = spec


def registered_kinds() -> List[str]:
    return sorted(_REGISTRY)


def _validate_xy(X, y, n_classes=None):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if X.ndim != 2:
        raise ShapeMismatchError(f"X must be 2-D, got shape {X.shape}")
    if X.shape[0] != len(y):
        raise ShapeMismatchError(f"X has {X.shape[0]} rows but y has {len(y)}")
    if X.shape[0] == 0:
        raise ShapeMismatchError("Cannot fit on zero rows")
    if not np.isfinite(X).all():
        raise NonFiniteError("X contains missing or non-finite values; impute before fitting")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    if y.min() < 0 or y.max() >= n_classes:
        raise ShapeMismatchError(f"Class codes must lie in 0..{n_classes - 1}")
    return X, y, int(n_classes)


def _require_two_classes(kind, y):
    if len(np.unique(y)) < 2:
        raise SingleClassError(f"{kind} needs at least 2 classes in y")


def fit_classifier(kind: str, X, y, config: Optional[dict] = None, seed: int = 42,
                   n_classes: Optional[int] = None, class_names=None):
    """Fit any registered kind on arrays; ``config`` overrides MODEL_DEFAULTS[kind]"""
    if kind not in _REGISTRY:
        raise ModelError(f"Unknown model kind: {kind}", known=registered_kinds())
    X, y, n_classes = _validate_xy(X, y, n_classes)
    cfg = merged(MODEL_DEFAULTS.get(kind, {}), config)
    model = _REGISTRY[kind].fit(X, y, cfg, int(seed), n_classes)
    if class_names is not None:
        model = _with_class_names(model, list(class_names))
    return model


def _with_class_names(model, names):
    if isinstance(model, ClassifierModel):
        return ClassifierModel(model.kind, model.config, dict(model.params), model.classes,
                               model.seed, model.n_features, names, model.preprocessing)
    model.class_names = names
    return model


def _new_model(kind, cfg, params, n_classes, seed, n_features):
    return ClassifierModel(kind, cfg, params, np.arange(n_classes), seed, n_features)


def fit_dataset(kind, train, config=None, seed=42):
    if train.y is None:
        raise ModelError("Training data has no target column")
    return fit_classifier(kind, train.X, train.y, config, seed, train.n_classes, train.class_names)


def fit_logreg(train, config=None, seed=42):
    return fit_dataset('logreg', train, config, seed)


def fit_dtree(train, config=None, seed=42):
    return fit_dataset('dtree', train, config, seed)


def fit_rforest(train, config=None, seed=42):
    return fit_dataset('rforest', train, config, seed)


def fit_linsvm(train, config=None, seed=42):
    return fit_dataset('linsvm', train, config, seed)


def fit_simple(kind, train, seed=42, config=None):
    if kind not in ('knn', 'gnb', 'zeror'):
        raise ModelError(f"fit_simple handles knn, gnb and zeror, not {kind}")
    return fit_dataset(kind, train, config, seed)

# ─── LOGISTIC REGRESSION ───────────────────────────────────────────
def _one_hot(y, n_classes):
    return np.eye(n_classes)[y]


def logreg_loss_and_grad(theta, X, Y, l2=0.0):
    """Mean softmax cross-entropy plus (l2/2)||W||^2 and its gradient.

    ``theta`` packs the (d+1) x K matrix whose last row is the intercept.
    """
    d = X.shape[1]
    K = Y.shape[1]
    theta = np.asarray(theta, dtype=np.float64).reshape(d + 1, K)
    W, b = theta[:d], theta[d]
    P = softmax(X @ W + b)
    n = X.shape[0]
    loss = -np.sum(Y * np.log(np.clip(P, 1e-300, None))) / n + 0.5 * l2 * np.sum(W * W)
    diff = (P - Y) / n
    grad = np.vstack([X.T @ diff + l2 * W, diff.sum(axis=0)])
    return float(loss), grad


def _fit_logreg(X, y, cfg, seed, n_classes):
    _require_two_classes('logreg', y)
    l2 = float(cfg['l2'])
    if l2 < 0:
        raise ModelError(f"l2 must be >= 0, got {l2}")
    n, d = X.shape
    Y = _one_hot(y, n_classes)
    state = OptimizerState(cfg.get('optimizer', 'sgd'), float(cfg['lr']),
                           batch_strategy=cfg.get('batch_strategy', 'batch'))
    theta = np.zeros((d + 1, n_classes))
    rng = seeded_rng(seed)

    for epoch in range(int(cfg['epochs'])):
        for batch in epoch_schedule(n, state.batch_strategy, rng.split(epoch)):
            _, grad = logreg_loss_and_grad(theta, X[batch], Y[batch], 0.0)
            theta, state = optimizer_step(state, theta, grad)
            # proximal L2 step keeps large penalties stable
            theta[:d] /= 1.0 + state.learning_rate * l2
        if not np.isfinite(theta).all():
            raise NonFiniteError(f"logreg weights diverged at epoch {epoch}; lower lr")

    params = {'coef': theta[:d].copy(), 'intercept': theta[d].copy()}
    logger.info(f"logreg fitted: {n} rows, {d} features, {n_classes} classes")
    return _new_model('logreg', cfg, params, n_classes, seed, d)


def _logreg_proba(model, X):
    return softmax(X @ model.params['coef'] + model.params['intercept'])

# ─── DECISION TREES ────────────────────────────────────────────────
def resolve_max_features(max_features, d: int) -> int:
    if max_features is None:
        return d
    if max_features == 'sqrt':
        return max(1, math.ceil(math.sqrt(d)))
    if max_features == 'log2':
        return max(1, math.ceil(math.log2(d))) if d > 1 else 1
    if isinstance(max_features, float) and 0 < max_features <= 1:
        return max(1, math.ceil(max_features * d))
    value = int(max_features)
    if value < 1:
        raise ModelError(f"max_features must be >= 1, got {max_features}")
    return min(value, d)


def _gini(counts: np.ndarray) -> np.ndarray:
    totals = counts.sum(axis=-1, keepdims=True)
    p = np.divide(counts, totals, out=np.zeros_like(counts, dtype=np.float64), where=totals > 0)
    return 1.0 - np.sum(p * p, axis=-1)


def _best_split(X, y, n_classes, features, min_samples_leaf):
    """Lowest weighted child Gini over candidate features.

    Ties go to the lowest feature index, then the lowest threshold.
    Returns (feature, threshold, weighted_impurity) or None.
    """
    n = len(y)
    parent = np.bincount(y, minlength=n_classes).astype(np.float64)
    n_left = np.arange(1, n, dtype=np.float64)
    n_right = n - n_left
    size_ok = (n_left >= min_samples_leaf) & (n_right >= min_samples_leaf)
    best = None

    for f in features:
        order = np.argsort(X[:, f], kind='stable')
        xs = X[order, f]
        left = np.cumsum(np.eye(n_classes)[y[order]], axis=0)[:-1]
        right = parent - left
        weighted = (n_left * _gini(left) + n_right * _gini(right)) / n
        valid = size_ok & (xs[:-1] < xs[1:])
        if not valid.any():
            continue
        weighted = np.where(valid, weighted, np.inf)
        i = int(np.argmin(weighted))
        if best is None or weighted[i] < best[2]:
            threshold = (xs[i] + xs[i + 1]) / 2.0
            if threshold >= xs[i + 1]:
                threshold = xs[i]
            best = (int(f), float(threshold), float(weighted[i]))
    return best


def grow_tree(X, y, n_classes, max_depth=None, min_samples_leaf=1, max_features=None,
              rng=None) -> Dict[str, np.ndarray]:
    """CART with Gini impurity, stored as flat node arrays (leaf feature = -1)"""
    n, d = X.shape
    m = resolve_max_features(max_features, d)
    feature, threshold, left, right, value, n_samples, impurity = [], [], [], [], [], [], []

    def new_node(idx):
        counts = np.bincount(y[idx], minlength=n_classes).astype(np.float64)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(counts / counts.sum())
        n_samples.append(len(idx))
        impurity.append(float(_gini(counts)))
        return len(feature) - 1

    root = new_node(np.arange(n))
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if impurity[node] <= 0.0:
            continue
        if max_depth is not None and depth >= max_depth:
            continue
        if len(idx) < 2 * min_samples_leaf:
            continue
        if m < d:
            candidates = np.sort(rng.choice(d, m, replace=False))
        else:
            candidates = np.arange(d)
        found = _best_split(X[idx], y[idx], n_classes, candidates, min_samples_leaf)
        if found is None:
            continue
        f, thr, child_impurity = found
        if child_impurity > impurity[node] + 1e-12:
            continue
        go_left = X[idx, f] <= thr
        left_idx, right_idx = idx[go_left], idx[~go_left]
        feature[node] = f
        threshold[node] = thr
        left[node] = new_node(left_idx)
        right[node] = new_node(right_idx)
        # right pushed first so the left subtree is numbered first
        stack.append((right[node], right_idx, depth + 1))
        stack.append((left[node], left_idx, depth + 1))

    return {
        'feature': np.array(feature, dtype=np.int64),
        'threshold': np.array(threshold, dtype=np.float64),
        'left': np.array(left, dtype=np.int64),
        'right': np.array(right, dtype=np.int64),
        'value': np.array(value, dtype=np.float64).reshape(len(feature), n_classes),
        'n_node_samples': np.array(n_samples, dtype=np.int64),
        'impurity': np.array(impurity, dtype=np.float64),
    }


def tree_importances(tree, d: int) -> np.ndarray:
    imp = np.zeros(d)
    for node in np.flatnonzero(tree['feature'] >= 0):
        l, r = tree['left'][node], tree['right'][node]
        imp[tree['feature'][node]] += (
            tree['n_node_samples'][node] * tree['impurity'][node]
            - tree['n_node_samples'][l] * tree['impurity'][l]
            - tree['n_node_samples'][r] * tree['impurity'][r]
        )
    total = imp.sum()
    return imp / total if total > 0 else imp


def apply_tree(tree, X) -> np.ndarray:
    """Leaf index per row; NaN comparisons route right"""
    node = np.zeros(len(X), dtype=np.int64)
    while True:
        feat = tree['feature'][node]
        rows = np.flatnonzero(feat >= 0)
        if rows.size == 0:
            return node
        at = node[rows]
        go_left = X[rows, feat[rows]] <= tree['threshold'][at]
        node[rows] = np.where(go_left, tree['left'][at], tree['right'][at])


_TREE_FIELDS = ('feature', 'threshold', 'left', 'right', 'value', 'n_node_samples', 'impurity')


def pack_trees(trees) -> Dict[str, np.ndarray]:
    params = {name: np.concatenate([t[name] for t in trees]) for name in _TREE_FIELDS}
    params['tree_offsets'] = np.cumsum([0] + [len(t['feature']) for t in trees]).astype(np.int64)
    return params


def unpack_trees(params) -> List[Dict[str, np.ndarray]]:
    offsets = params['tree_offsets']
    return [{name: params[name][offsets[i]:offsets[i + 1]] for name in _TREE_FIELDS}
            for i in range(len(offsets) - 1)]


def _forest_proba(model, X):
    trees = unpack_trees(model.params)
    proba = np.zeros((len(X), model.n_classes))
    for tree in trees:
        proba += tree['value'][apply_tree(tree, X)]
    return proba / len(trees)


def _forest_importances(model):
    trees = unpack_trees(model.params)
    imp = np.mean([tree_importances(t, model.n_features) for t in trees], axis=0)
    total = imp.sum()
    return imp / total if total > 0 else imp


def _fit_dtree(X, y, cfg, seed, n_classes):
    tree = grow_tree(X, y, n_classes, cfg.get('max_depth'), int(cfg.get('min_samples_leaf', 1)),
                     cfg.get('max_features'), seeded_rng(seed))
    logger.info(f"dtree fitted: {len(tree['feature'])} nodes")
    return _new_model('dtree', cfg, pack_trees([tree]), n_classes, seed, X.shape[1])


def _fit_rforest(X, y, cfg, seed, n_classes):
    n_trees = int(cfg['n_trees'])
    if n_trees < 1:
        raise ModelError(f"n_trees must be >= 1, got {n_trees}")
    n = X.shape[0]
    root = seeded_rng(seed)

    def grow(i):
        stream = root.split(i)
        idx = stream.integers(0, n, n) if cfg.get('bootstrap', True) else np.arange(n)
        return grow_tree(X[idx], y[idx], n_classes, cfg.get('max_depth'),
                         int(cfg.get('min_samples_leaf', 1)), cfg.get('max_features'), stream)

    workers = int(cfg.get('max_workers') or CONFIG['max_workers'])
    with ThreadPoolExecutor(max_workers=workers) as pool:
        trees = list(pool.map(grow, range(n_trees)))
    logger.info(f"rforest fitted: {n_trees} trees on {n} rows")
    return _new_model('rforest', cfg, pack_trees(trees), n_classes, seed, X.shape[1])

# ─── LINEAR SVM ────────────────────────────────────────────────────
def ovr_targets(y, n_classes) -> np.ndarray:
    """+1/-1 targets; a single column (class 1 positive) when binary"""
    if n_classes == 2:
        return np.where(y == 1, 1.0, -1.0).reshape(-1, 1)
    return np.where(np.eye(n_classes)[y] > 0, 1.0, -1.0)


def linsvm_objective_and_grad(theta, X, T, C, n_total=None):
    """||w||^2 / (2 C n) + mean hinge, summed over one-vs-rest columns"""
    d = X.shape[1]
    m = T.shape[1]
    theta = np.asarray(theta, dtype=np.float64).reshape(d + 1, m)
    W, b = theta[:d], theta[d]
    n = X.shape[0]
    n_total = n_total or n
    margins = T * (X @ W + b)
    active = (margins < 1).astype(np.float64)
    loss = np.sum(W * W) / (2 * C * n_total) + np.sum(np.maximum(0.0, 1 - margins)) / n
    coeff = -(T * active) / n
    grad = np.vstack([X.T @ coeff + W / (C * n_total), coeff.sum(axis=0)])
    return float(loss), grad


def _fit_linsvm(X, y, cfg, seed, n_classes):
    _require_two_classes('linsvm', y)
    C = float(cfg['C'])
    if C <= 0:
        raise ModelError(f"C must be > 0, got {C}")
    n, d = X.shape
    T = ovr_targets(y, n_classes)
    state = OptimizerState(cfg.get('optimizer', 'sgd'), float(cfg['lr']),
                           batch_strategy=cfg.get('batch_strategy', 'batch'))
    theta = np.zeros((d + 1, T.shape[1]))
    rng = seeded_rng(seed)
    for epoch in range(int(cfg['epochs'])):
        for batch in epoch_schedule(n, state.batch_strategy, rng.split(epoch)):
            _, grad = linsvm_objective_and_grad(theta, X[batch], T[batch], C, n)
            theta, state = optimizer_step(state, theta, grad)
        if not np.isfinite(theta).all():
            raise NonFiniteError(f"linsvm weights diverged at epoch {epoch}")
    params = {'coef': theta[:d].copy(), 'intercept': theta[d].copy()}
    logger.info(f"linsvm fitted: {T.shape[1]} one-vs-rest scorers")
    return _new_model('linsvm', cfg, params, n_classes, seed, d)


def _linsvm_decision(model, X):
    return X @ model.params['coef'] + model.params['intercept']

# ─── SIMPLE BASELINES ──────────────────────────────────────────────
def _fit_knn(X, y, cfg, seed, n_classes):
    k = int(cfg['k'])
    if k < 1 or k > len(y):
        raise ModelError(f"knn needs 1 <= k <= n (k={k}, n={len(y)})")
    params = {'X': X.copy(), 'y': y.copy()}
    return _new_model('knn', cfg, params, n_classes, seed, X.shape[1])


def _knn_proba(model, X):
    train_X, train_y = model.params['X'], model.params['y']
    k = int(model.config['k'])
    proba = np.zeros((len(X), model.n_classes))
    for start in range(0, len(X), 512):
        chunk = X[start:start + 512]
        dist = ((chunk[:, None, :] - train_X[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argsort(dist, axis=1, kind='stable')[:, :k]
        votes = train_y[nearest]
        for c in range(model.n_classes):
            proba[start:start + len(chunk), c] = (votes == c).sum(axis=1) / k
    return proba


def _fit_gnb(X, y, cfg, seed, n_classes):
    floor = float(cfg.get('var_floor', 1e-9))
    d = X.shape[1]
    mean = np.zeros((n_classes, d))
    var = np.ones((n_classes, d))
    prior = np.zeros(n_classes)
    for c in range(n_classes):
        rows = X[y == c]
        if len(rows):
            mean[c] = rows.mean(axis=0)
            var[c] = np.maximum(rows.var(axis=0), floor)
            prior[c] = len(rows) / len(y)
    return _new_model('gnb', cfg, {'mean': mean, 'var': var, 'prior': prior}, n_classes, seed, d)


def _gnb_proba(model, X):
    mean, var, prior = model.params['mean'], model.params['var'], model.params['prior']
    with np.errstate(divide='ignore'):
        log_prior = np.log(prior)
    ll = -0.5 * (np.log(2 * np.pi * var)[None] + (X[:, None, :] - mean[None]) ** 2 / var[None]).sum(axis=2)
    joint = ll + log_prior
    joint -= joint.max(axis=1, keepdims=True)
    p = np.exp(joint)
    return p / p.sum(axis=1, keepdims=True)


def _fit_zeror(X, y, cfg, seed, n_classes):
    prior = np.bincount(y, minlength=n_classes) / len(y)
    return _new_model('zeror', cfg, {'prior': prior}, n_classes, seed, X.shape[1])


def _zeror_proba(model, X):
    return np.tile(model.params['prior'], (len(X), 1))


register_kind('logreg', KindSpec(_fit_logreg, proba=_logreg_proba))
register_kind('dtree', KindSpec(_fit_dtree, proba=_forest_proba, importances=_forest_importances))
register_kind('rforest', KindSpec(_fit_rforest, proba=_forest_proba, importances=_forest_importances))
register_kind('linsvm', KindSpec(_fit_linsvm, decision=_linsvm_decision))
register_kind('knn', KindSpec(_fit_knn, proba=_knn_proba))
register_kind('gnb', KindSpec(_fit_gnb, proba=_gnb_proba))
register_kind('zeror', KindSpec(_fit_zeror, proba=_zeror_proba))


def supports_importances(model) -> bool:
    spec = _REGISTRY.get(model.kind)
    return spec is not None and spec.importances is not None


def feature_importances(model) -> np.ndarray:
    """Normalized impurity-decrease importances of tree-based kinds"""
    spec = _REGISTRY.get(model.kind)
    if spec is None or spec.importances is None:
        raise ModelError(f"{model.kind} does not provide feature importances")
    return spec.importances(model)

# ─── CROSS-VALIDATION & SEARCH ─────────────────────────────────────
def cross_val_score(kind, config, ds, k=5, seed=42, metric='accuracy') -> np.ndarray:
    from tabkit.data import kfold_splits

    scores = []
    for train_idx, valid_idx in kfold_splits(ds, k, seed):
        model = fit_classifier(kind, ds.X[train_idx], ds.y[train_idx], config, seed, ds.n_classes)
        scores.append(score(metric, ds.y[valid_idx], model.predict(ds.X[valid_idx]), ds.n_classes))
    return np.array(scores)


@dataclass
class SearchSpec:
    strategy: str = SEARCH_DEFAULTS['strategy']  # grid | random
    space: dict = field(default_factory=dict)
    cv_folds: int = SEARCH_DEFAULTS['cv_folds']
    metric: str = SEARCH_DEFAULTS['metric']
    seed: int = 42
    n_draws: int = SEARCH_DEFAULTS['n_draws']

    def __post_init__(self):
        if not self.space:
            raise SearchSpaceError("Search space is empty")
        if self.cv_folds < 2:
            raise SearchSpaceError(f"cv_folds must be >= 2, got {self.cv_folds}")
        if self.strategy not in ('grid', 'random'):
            raise SearchSpaceError(f"Unknown search strategy: {self.strategy}")
        if self.metric not in ('accuracy', 'f1_macro'):
            raise SearchSpaceError(f"Unknown search metric: {self.metric}")
        for name, values in self.space.items():
            if isinstance(values, dict):
                if not {'low', 'high'} <= set(values):
                    raise SearchSpaceError(f"Range for {name} needs 'low' and 'high'")
            elif not isinstance(values, (list, tuple)) or len(values) == 0:
                raise SearchSpaceError(f"Values for {name} must be a nonempty list or a range")


def _plain(value):
    return value.item() if isinstance(value, np.generic) else value


def enumerate_configs(spec: SearchSpec) -> List[dict]:
    names = list(spec.space)
    if spec.strategy == 'grid':
        for name in names:
            if isinstance(spec.space[name], dict):
                raise SearchSpaceError(f"Grid search needs value lists; {name} is a range")
        return [dict(zip(names, combo)) for combo in itertools.product(*(spec.space[n] for n in names))]

    rng = seeded_rng(spec.seed)
    configs = []
    for _ in range(int(spec.n_draws)):
        config = {}
        for name in names:
            values = spec.space[name]
            if isinstance(values, dict):
                low, high = values['low'], values['high']
                if isinstance(low, int) and isinstance(high, int):
                    config[name] = int(rng.integers(low, high + 1))
                else:
                    config[name] = float(rng.uniform(low, high))
            else:
                config[name] = _plain(values[int(rng.integers(0, len(values)))])
        configs.append(config)
    return configs


def expand_dotted(config: dict) -> dict:
    """{'forest.n_trees': 10} -> {'forest': {'n_trees': 10}} for ensemble components"""
    nested = {}
    for key, value in config.items():
        parts = str(key).split('.')
        target = nested
        for part in parts[:-1]:
            target = target.setdefault(part, {})
        target[parts[-1]] = value
    return nested


@measure_performance
def hyper_search(kind, train, spec: SearchSpec, base_config=None) -> Tuple[dict, pd.DataFrame]:
    """Score every candidate config by mean CV metric; first best wins ties.

    Returns the best config (nested, ready for fit_classifier) and one table
    row per candidate in enumeration order.
    """
    if kind not in _REGISTRY:
        raise ModelError(f"Unknown model kind: {kind}")
    known = set(MODEL_DEFAULTS.get(kind, {}))
    unknown = sorted(name for name in spec.space if str(name).split('.')[0] not in known)
    if unknown:
        raise SearchSpaceError(f"{kind} has no hyperparameters {unknown}", kind=kind)
    configs = enumerate_configs(spec)

    def evaluate(config):
        full = merged(base_config or {}, expand_dotted(config))
        return cross_val_score(kind, full, train, spec.cv_folds, spec.seed, spec.metric)

    with ThreadPoolExecutor(max_workers=CONFIG['max_workers']) as pool:
        fold_scores = list(pool.map(evaluate, configs))

    rows = []
    for i, (config, scores) in enumerate(zip(configs, fold_scores)):
        row = {'candidate': i}
        row.update(config)
        row['mean_score'] = float(scores.mean())
        row['std_score'] = float(scores.std())
        rows.append(row)
    table = pd.DataFrame(rows)
    best = int(np.argmax(table['mean_score'].to_numpy()))
    logger.info(f"{spec.strategy} search over {len(configs)} configs: best {spec.metric} "
                f"{table['mean_score'].iloc[best]:.4f}")
    return merged(base_config or {}, expand_dotted(configs[best])), table


@measure_performance
def compare_classifiers(kinds, ds, k=5, seed=42, overrides=None) -> pd.DataFrame:
    """Comparative table: mean CV accuracy and macro precision/recall/F1 per kind"""
    from tabkit.data import kfold_splits

    folds = kfold_splits(ds, k, seed)
    rows = []
    for kind in kinds:
        config = (overrides or {}).get(kind)
        fold_rows = []
        for train_idx, valid_idx in folds:
            model = fit_classifier(kind, ds.X[train_idx], ds.y[train_idx], config, seed, ds.n_classes)
            names = ds.class_names or [str(c) for c in range(ds.n_classes)]
            report = classification_report(ds.y[valid_idx], model.predict(ds.X[valid_idx]), names)
            fold_rows.append([report.accuracy, report.macro_avg['precision'],
                              report.macro_avg['recall'], report.macro_avg['f1']])
        mean = np.mean(fold_rows, axis=0)
        rows.append({'model': kind, 'accuracy': mean[0], 'precision': mean[1],
                     'recall': mean[2], 'f1': mean[3]})
        logger.info(f"✓ {kind}: CV accuracy {mean[0]:.4f}")
    return pd.DataFrame(rows, columns=['model', 'accuracy', 'precision', 'recall', 'f1'])

# ─── EXPORT / IMPORT ───────────────────────────────────────────────
def _array_to_doc(array: np.ndarray) -> dict:
    return {'dtype': str(array.dtype), 'shape': list(array.shape), 'values': array.reshape(-1).tolist()}


def _array_from_doc(doc) -> np.ndarray:
    return np.array(doc['values'], dtype=doc['dtype']).reshape(doc['shape'])


def model_to_dict(model) -> dict:
    """Portable JSON-ready document; floats survive exactly via repr"""
    spec = _REGISTRY.get(model.kind)
    if spec is not None and spec.to_dict is not None:
        doc = spec.to_dict(model)
    else:
        doc = {
            'kind': model.kind,
            'config': model.config,
            'classes': model.classes.tolist(),
            'class_names': model.class_names,
            'seed': model.seed,
            'n_features': model.n_features,
            'params': {name: _array_to_doc(arr) for name, arr in sorted(model.params.items())},
        }
    doc['format_version'] = FORMAT_VERSION
    if getattr(model, 'preprocessing', None) is not None:
        doc['preprocessing'] = model.preprocessing
    return doc


def model_from_dict(doc: dict):
    if doc.get('format_version') != FORMAT_VERSION:
        raise ModelError(f"Unsupported model format_version: {doc.get('format_version')}")
    kind = doc.get('kind')
    if kind not in _REGISTRY:
        raise ModelError(f"Unknown model kind in document: {kind}")
    spec = _REGISTRY[kind]
    if spec.from_dict is not None:
        model = spec.from_dict(doc)
    else:
        model = ClassifierModel(
            kind=kind,
            config=doc['config'],
            params={name: _array_from_doc(arr) for name, arr in doc['params'].items()},
            classes=np.array(doc['classes'], dtype=np.int64),
            seed=int(doc['seed']),
            n_features=int(doc['n_features']),
            class_names=doc.get('class_names'),
        )
    return with_preprocessing(model, doc.get('preprocessing'))


def with_preprocessing(model, preprocessing):
    if preprocessing is None:
        return model
    if isinstance(model, ClassifierModel):
        return ClassifierModel(model.kind, model.config, dict(model.params), model.classes,
                               model.seed, model.n_features, model.class_names, preprocessing)
    model.preprocessing = preprocessing
    return model
