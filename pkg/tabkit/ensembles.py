# tabkit/ensembles.py - Stacked classifiers: logistic regression forest and support vector tree

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from utils import ModelError
from tabkit.models import (
    ClassifierModel,
    ColumnCountError,
    KindSpec,
    fit_classifier,
    model_from_dict,
    model_to_dict,
    register_kind,
    _require_two_classes,
)
from tabkit.numkit import derive_seed

logger = logging.getLogger(__name__)

BASE_STREAM = 0
META_STREAM = 1


def augmentation(base: ClassifierModel, X) -> np.ndarray:
    """Columns appended to X: class probabilities, or decision margins for SVMs"""
    if base.has_proba:
        return base.predict_proba(X)
    return base.decision_function(X)


@dataclass(eq=False)
class StackedModel:
    """Base model whose outputs are appended to X before the meta model"""

    kind: str
    config: dict
    base: ClassifierModel
    meta: ClassifierModel
    augmentation_width: int
    seed: int
    class_names: Optional[List[str]] = None
    preprocessing: Optional[dict] = None

    def __post_init__(self):
        if self.meta.n_features != self.base.n_features + self.augmentation_width:
            raise ModelError(f"{self.kind}: meta expects {self.meta.n_features} columns, "
                             f"base gives {self.base.n_features} + {self.augmentation_width}")
        if not np.array_equal(self.base.classes, self.meta.classes):
            raise ModelError(f"{self.kind}: base and meta classes differ")

    @property
    def n_features(self) -> int:
        return self.base.n_features

    @property
    def classes(self) -> np.ndarray:
        return self.meta.classes

    @property
    def n_classes(self) -> int:
        return self.meta.n_classes

    @property
    def has_proba(self) -> bool:
        return True

    def combined(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features:
            raise ColumnCountError(f"{self.kind} expects {self.n_features} columns, got {X.shape[1]}")
        return np.hstack([X, augmentation(self.base, X)])

    def predict_proba(self, X) -> np.ndarray:
        return self.meta.predict_proba(self.combined(X))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def score_for_class(self, X, k) -> np.ndarray:
        return self.predict_proba(X)[:, k]

    def scores(self, X) -> np.ndarray:
        return self.predict_proba(X)


class LRForestModel(StackedModel):
    @property
    def forest(self) -> ClassifierModel:
        return self.base


class SVTreeModel(StackedModel):
    @property
    def svm(self) -> ClassifierModel:
        return self.base

    @property
    def tree(self) -> ClassifierModel:
        return self.meta


_MODEL_TYPES = {'lrforest': LRForestModel, 'svtree': SVTreeModel, 'stack': StackedModel}


def _fit_stack(kind, base_kind, base_key, meta_kind, meta_key):
    def fit(X, y, cfg, seed, n_classes):
        _require_two_classes(kind, y)
        base = fit_classifier(base_kind, X, y, cfg.get(base_key), derive_seed(seed, BASE_STREAM), n_classes)
        extra = augmentation(base, X)
        meta = fit_classifier(meta_kind, np.hstack([X, extra]), y, cfg.get(meta_key),
                              derive_seed(seed, META_STREAM), n_classes)
        logger.info(f"{kind} fitted: {X.shape[1]} + {extra.shape[1]} columns into {meta_kind}")
        return _MODEL_TYPES[kind](kind, cfg, base, meta, extra.shape[1], seed)
    return fit


def _stack_to_dict(model: StackedModel) -> dict:
    return {
        'kind': model.kind,
        'config': model.config,
        'seed': model.seed,
        'class_names': model.class_names,
        'augmentation_width': model.augmentation_width,
        'base': model_to_dict(model.base),
        'meta': model_to_dict(model.meta),
    }


def _stack_from_dict(doc) -> StackedModel:
    return _MODEL_TYPES[doc['kind']](
        doc['kind'],
        doc['config'],
        model_from_dict(doc['base']),
        model_from_dict(doc['meta']),
        int(doc['augmentation_width']),
        int(doc['seed']),
        doc.get('class_names'),
    )


def _stack_proba(model, X):
    return model.predict_proba(X)


for _kind, _base, _base_key, _meta, _meta_key in (
    ('lrforest', 'rforest', 'forest', 'logreg', 'meta'),
    ('svtree', 'linsvm', 'svm', 'dtree', 'tree'),
):
    register_kind(_kind, KindSpec(
        fit=_fit_stack(_kind, _base, _base_key, _meta, _meta_key),
        proba=_stack_proba,
        to_dict=_stack_to_dict,
        from_dict=_stack_from_dict,
    ))

# ─── PUBLIC OPERATIONS ─────────────────────────────────────────────
def lrforest_fit(train, rf_config=None, lr_config=None, seed=42) -> LRForestModel:
    """Random forest class probabilities appended to X, then logistic regression"""
    config = {'forest': rf_config or {}, 'meta': lr_config or {}}
    return fit_classifier('lrforest', train.X, train.y, config, seed, train.n_classes, train.class_names)


def lrforest_predict(model: LRForestModel, X) -> np.ndarray:
    return model.predict(X)


def svtree_fit(train, svm_config=None, tree_config=None, seed=42) -> SVTreeModel:
    """Linear SVM margins appended to X, then a decision tree"""
    config = {'svm': svm_config or {}, 'tree': tree_config or {}}
    return fit_classifier('svtree', train.X, train.y, config, seed, train.n_classes, train.class_names)


def svtree_predict(model: SVTreeModel, X) -> np.ndarray:
    return model.predict(X)


def stack_fit(base_model: ClassifierModel, train, meta_kind='logreg', meta_config=None, seed=42) -> StackedModel:
    """Fit a meta model on [X | outputs of an already-fitted base model]"""
    X = np.asarray(train.X, dtype=np.float64)
    extra = augmentation(base_model, X)
    meta = fit_classifier(meta_kind, np.hstack([X, extra]), train.y, meta_config,
                          derive_seed(seed, META_STREAM), train.n_classes)
    config = {'base_kind': base_model.kind, 'meta_kind': meta_kind, 'meta': meta_config or {}}
    return StackedModel('stack', config, base_model, meta, extra.shape[1], seed, train.class_names)


def _refuse_stack_fit(X, y, cfg, seed, n_classes):
    raise ModelError("Custom stacks are built with stack_fit from a fitted base model")


register_kind('stack', KindSpec(
    fit=_refuse_stack_fit,
    proba=_stack_proba,
    to_dict=_stack_to_dict,
    from_dict=_stack_from_dict,
))
