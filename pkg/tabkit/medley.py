# tabkit/medley.py - Model-dependent local interpretation and explainer benchmarks

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config import CONFIG, MEDLEY_DEFAULTS, merged
from utils import ModelError, measure_performance
from tabkit.data import Dataset, SplitSpec, make_dataset, train_test_split
from tabkit.metrics import accuracy_score
from tabkit.models import fit_classifier
from tabkit.numkit import (
    ShapeMismatchError,
    derive_seed,
    seeded_rng,
    sigmoid,
    spearman_correlation,
)

logger = logging.getLogger(__name__)

# ─── MODEL SPECS ───────────────────────────────────────────────────
@dataclass(frozen=True)
class ModelSpec:
    """Everything needed to refit a clone: kind, hyperparameters and seed"""

    kind: str
    config: dict = field(default_factory=dict)
    seed: int = 42

    def fit(self, X, y, n_classes=None):
        return fit_classifier(self.kind, X, y, self.config, self.seed, n_classes)


def as_model_spec(obj) -> ModelSpec:
    """Accept a ModelSpec, a fitted model or a {kind, config, seed} mapping"""
    if isinstance(obj, ModelSpec):
        return obj
    if isinstance(obj, dict):
        if 'kind' not in obj:
            raise ModelError("Model handle has no kind; cannot refit")
        return ModelSpec(obj['kind'], obj.get('config') or {}, int(obj.get('seed', 42)))
    kind = getattr(obj, 'kind', None)
    config = getattr(obj, 'config', None)
    if kind is None or config is None:
        raise ModelError("Model handle carries no kind/config; cannot refit a clone")
    return ModelSpec(kind, config, int(getattr(obj, 'seed', 42)))


def _instance(x, d) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != d:
        raise ShapeMismatchError(f"Instance has {x.shape[0]} values but the model expects {d}")
    return x


def _predicted_class(model, x) -> int:
    return int(model.predict(x.reshape(1, -1))[0])

# ─── EXPLANATION ───────────────────────────────────────────────────
@dataclass
class Explanation:
    instance: np.ndarray
    predicted_class: int
    drop_scores: np.ndarray
    perm_scores: np.ndarray
    combined_scores: np.ndarray
    baseline_accuracy: float
    feature_names: List[str] = field(default_factory=list)
    instance_effects: Optional[np.ndarray] = None
    class_name: Optional[str] = None
    eval_on: str = "train"

    def records(self) -> List[dict]:
        names = self.feature_names or [f"x{j}" for j in range(len(self.combined_scores))]
        rows = []
        for j, name in enumerate(names):
            row = {
                'name': name,
                'drop': float(self.drop_scores[j]),
                'perm': float(self.perm_scores[j]),
                'combined': float(self.combined_scores[j]),
            }
            if self.instance_effects is not None:
                row['effect'] = float(self.instance_effects[j])
            rows.append(row)
        return rows

    def to_dict(self) -> dict:
        return {
            'instance': self.instance.tolist(),
            'predicted_class': self.predicted_class,
            'class_name': self.class_name,
            'baseline_accuracy': self.baseline_accuracy,
            'eval_on': self.eval_on,
            'features': self.records(),
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.records())

# ─── GLOBAL IMPORTANCES ────────────────────────────────────────────
def drop_column_importances(model_config, train: Dataset, eval_data: Optional[Dataset] = None):
    """Baseline accuracy minus accuracy of a clone refit with column j zeroed.

    The clone is scored on ``eval_data`` (train by default) with the same
    column zeroed. Returns ``(importances, baseline)``.
    """
    spec = as_model_spec(model_config)
    eval_data = eval_data if eval_data is not None else train
    n_classes = max(train.n_classes, eval_data.n_classes)
    baseline_model = spec.fit(train.X, train.y, n_classes)
    baseline = accuracy_score(eval_data.y, baseline_model.predict(eval_data.X))

    def refit_without(j):
        X_train = train.X.copy()
        X_train[:, j] = 0.0
        X_eval = eval_data.X.copy()
        X_eval[:, j] = 0.0
        clone = spec.fit(X_train, train.y, n_classes)
        return baseline - accuracy_score(eval_data.y, clone.predict(X_eval))

    with ThreadPoolExecutor(max_workers=CONFIG['max_workers']) as pool:
        importances = np.array(list(pool.map(refit_without, range(train.n_features))))
    logger.info(f"Drop-column importances over {train.n_features} refits (baseline {baseline:.4f})")
    return importances, baseline


def permutation_importance_draws(model, eval_data: Dataset, n_repeats: int = 5, seed: int = 42) -> np.ndarray:
    """(d, n_repeats) accuracy losses; draw (j, r) uses stream j * n_repeats + r"""
    if n_repeats < 1:
        raise ModelError(f"n_repeats must be >= 1, got {n_repeats}")
    X, y = eval_data.X, eval_data.y
    baseline = accuracy_score(y, model.predict(X))
    root = seeded_rng(seed)
    draws = np.zeros((X.shape[1], n_repeats))
    for j in range(X.shape[1]):
        for r in range(n_repeats):
            order = root.split(j * n_repeats + r).permutation(len(y))
            shuffled = X.copy()
            shuffled[:, j] = X[order, j]
            draws[j, r] = baseline - accuracy_score(y, model.predict(shuffled))
    return draws


def permutation_importances(model, eval_data: Dataset, n_repeats: int = 5, seed: int = 42) -> np.ndarray:
    """Mean accuracy loss when column j is shuffled against the fixed model"""
    return permutation_importance_draws(model, eval_data, n_repeats, seed).mean(axis=1)


def instance_effects(model, x) -> np.ndarray:
    """Drop in the predicted-class score when x_j alone is set to 0"""
    x = _instance(x, model.n_features)
    k = _predicted_class(model, x)
    modified = np.repeat(x.reshape(1, -1), len(x), axis=0)
    modified[np.arange(len(x)), np.arange(len(x))] = 0.0
    base = model.score_for_class(x.reshape(1, -1), k)[0]
    return base - model.score_for_class(modified, k)


@measure_performance
def medley_interpret(model_config, train: Dataset, x, eval_data: Optional[Dataset] = None,
                     n_repeats: Optional[int] = None, seed: Optional[int] = None) -> Explanation:
    """Drop-column plus permutation scores for one instance of a refittable model"""
    spec = as_model_spec(model_config)
    x = _instance(x, train.n_features)
    n_repeats = n_repeats or MEDLEY_DEFAULTS['n_repeats']
    seed = spec.seed if seed is None else seed
    evaluated = eval_data if eval_data is not None else train

    drop, baseline = drop_column_importances(spec, train, evaluated)
    model = spec.fit(train.X, train.y, max(train.n_classes, evaluated.n_classes))
    perm = permutation_importances(model, evaluated, n_repeats, seed)
    k = _predicted_class(model, x)
    return Explanation(
        instance=x,
        predicted_class=k,
        drop_scores=drop,
        perm_scores=perm,
        combined_scores=drop + perm,
        baseline_accuracy=float(baseline),
        feature_names=train.feature_names,
        instance_effects=instance_effects(model, x),
        class_name=train.class_names[k] if train.class_names and k < len(train.class_names) else None,
        eval_on="train" if eval_data is None else "held-out",
    )

# ─── COMPETING EXPLAINERS ──────────────────────────────────────────
def local_linear_explain(model, x, train: Union[Dataset, np.ndarray], config: Optional[dict] = None) -> np.ndarray:
    """Weighted ridge surrogate of the predicted-class score around x.

    Perturbations are Gaussian with per-feature scale equal to the train std;
    coefficients are returned in original feature units.
    """
    cfg = merged({
        'n_samples': MEDLEY_DEFAULTS['lime_samples'],
        'kernel_width': MEDLEY_DEFAULTS['lime_kernel_width'],
        'ridge': MEDLEY_DEFAULTS['lime_ridge'],
        'seed': 42,
    }, config)
    x = _instance(x, model.n_features)
    train_X = train.X if isinstance(train, Dataset) else np.asarray(train, dtype=np.float64)
    scale = train_X.std(axis=0)
    varying = scale > 0
    if not varying.any():
        raise ModelError("Every feature has zero spread; perturbations would be identical")

    d = len(x)
    n_samples = int(cfg['n_samples'])
    width = cfg['kernel_width'] or 0.75 * np.sqrt(d)
    rng = seeded_rng(int(cfg['seed']))
    noise = rng.normal(size=(n_samples, d))
    noise[0] = 0.0
    noise[:, ~varying] = 0.0
    samples = x + noise * scale

    k = _predicted_class(model, x)
    target = model.score_for_class(samples, k)
    dist2 = np.sum(noise[:, varying] ** 2, axis=1)
    weights = np.exp(-dist2 / width ** 2)

    A = np.column_stack([np.ones(n_samples), noise[:, varying]])
    penalty = float(cfg['ridge']) * np.eye(A.shape[1])
    penalty[0, 0] = 0.0
    AtW = A.T * weights
    beta = np.linalg.solve(AtW @ A + penalty, AtW @ target)

    coef = np.zeros(d)
    coef[varying] = beta[1:] / scale[varying]
    return coef


def greedy_explain(model, x, K: Optional[int] = None) -> List[Tuple[int, float]]:
    """Repeatedly zero the feature whose removal most lowers the predicted-class score.

    Returns ``[(feature, reduction), ...]`` in pick order; ties pick the lower index.
    """
    x = _instance(x, model.n_features)
    d = len(x)
    K = d if K is None else int(K)
    if K < 1 or K > d:
        raise ModelError(f"K must satisfy 1 <= K <= d (K={K}, d={d})")
    k = _predicted_class(model, x)
    current = x.copy()
    remaining = list(range(d))
    picks = []
    for _ in range(K):
        base = model.score_for_class(current.reshape(1, -1), k)[0]
        candidates = np.repeat(current.reshape(1, -1), len(remaining), axis=0)
        candidates[np.arange(len(remaining)), remaining] = 0.0
        reductions = base - model.score_for_class(candidates, k)
        best = int(np.argmax(reductions))
        feature = remaining.pop(best)
        picks.append((feature, float(reductions[best])))
        current[feature] = 0.0
    return picks


def greedy_scores(model, x, K: Optional[int] = None) -> np.ndarray:
    """Pick order as a score vector: first pick highest, unpicked features 0"""
    picks = greedy_explain(model, x, K)
    scores = np.zeros(model.n_features)
    for position, (feature, _) in enumerate(picks):
        scores[feature] = len(picks) - position
    return scores


def parzen_explain(model, x, train: Union[Dataset, np.ndarray], bandwidth: float = 1.0,
                   target_class: Optional[int] = None) -> np.ndarray:
    """Gradient at x of a Gaussian Parzen-window estimate of the model's class probability"""
    if not bandwidth > 0:
        raise ModelError(f"bandwidth must be > 0, got {bandwidth}")
    train_X = train.X if isinstance(train, Dataset) else np.asarray(train, dtype=np.float64)
    if len(train_X) == 0:
        raise ModelError("Parzen explanation needs a nonempty training set")
    x = _instance(x, model.n_features)
    labels = model.predict(train_X)
    k = _predicted_class(model, x) if target_class is None else int(target_class)

    diff = train_X - x
    log_kernel = -np.sum(diff * diff, axis=1) / (2 * bandwidth ** 2)
    weights = np.exp(log_kernel - log_kernel.max())
    weights /= weights.sum()
    member = (labels == k).astype(np.float64)
    p = float(np.dot(weights, member))
    return (weights * (member - p)) @ diff / bandwidth ** 2

# ─── GOLD-FEATURE BENCHMARK ────────────────────────────────────────
@dataclass
class GoldDataset:
    dataset: Dataset
    gold_features: Tuple[int, ...]
    coefficients: np.ndarray
    generator_config: dict


def generate_gold(config: Optional[dict] = None) -> GoldDataset:
    """Standard-normal X with K informative features and a logistic label draw"""
    cfg = merged({'d': MEDLEY_DEFAULTS['gold_d'], 'K': MEDLEY_DEFAULTS['gold_k'],
                  'n': MEDLEY_DEFAULTS['gold_n'], 'coef_low': 1.0, 'coef_high': 3.0,
                  'seed': 42}, config)
    d, K, n = int(cfg['d']), int(cfg['K']), int(cfg['n'])
    if K < 1 or K > d:
        raise ModelError(f"K must satisfy 1 <= K <= d (K={K}, d={d})")
    root = seeded_rng(int(cfg['seed']))
    X = root.split(0).normal(size=(n, d))
    gold = tuple(sorted(int(j) for j in root.split(1).choice(d, K, replace=False)))
    coef_stream = root.split(2)
    coefficients = np.zeros(d)
    magnitudes = coef_stream.uniform(cfg['coef_low'], cfg['coef_high'], size=K)
    signs = np.where(coef_stream.uniform(size=K) < 0.5, -1.0, 1.0)
    coefficients[list(gold)] = magnitudes * signs
    u = root.split(3).uniform(size=n)
    y = (sigmoid(X @ coefficients) > u).astype(np.int64)
    dataset = make_dataset(X, y, [f"x{j}" for j in range(d)], class_names=['0', '1'])
    return GoldDataset(dataset, gold, coefficients, cfg)


def default_gold_suite(n_datasets=None, d=None, K=None, n=None, seed=42) -> List[GoldDataset]:
    n_datasets = n_datasets or MEDLEY_DEFAULTS['gold_datasets']
    base = {'d': d or MEDLEY_DEFAULTS['gold_d'], 'K': K or MEDLEY_DEFAULTS['gold_k'],
            'n': n or MEDLEY_DEFAULTS['gold_n']}
    return [generate_gold(dict(base, seed=derive_seed(seed, i))) for i in range(n_datasets)]


@dataclass
class ExplainContext:
    """Per-dataset inputs handed to explainer callables"""

    model: object
    spec: ModelSpec
    train: Dataset
    seed: int
    cache: dict = field(default_factory=dict)


def _medley_scores(ctx: ExplainContext, x):
    # drop and permutation parts depend on train only; reuse across instances
    if 'medley' not in ctx.cache:
        drop, _ = drop_column_importances(ctx.spec, ctx.train)
        perm = permutation_importances(ctx.model, ctx.train, MEDLEY_DEFAULTS['n_repeats'], ctx.seed)
        ctx.cache['medley'] = drop + perm
    return ctx.cache['medley']


def _permutation_scores(ctx: ExplainContext, x):
    if 'perm' not in ctx.cache:
        ctx.cache['perm'] = permutation_importances(ctx.model, ctx.train, MEDLEY_DEFAULTS['n_repeats'], ctx.seed)
    return ctx.cache['perm']


EXPLAINERS: Dict[str, Callable] = {
    'medley': _medley_scores,
    'permutation': _permutation_scores,
    'local_linear': lambda ctx, x: local_linear_explain(ctx.model, x, ctx.train, {'seed': ctx.seed}),
    'greedy': lambda ctx, x: greedy_scores(ctx.model, x, MEDLEY_DEFAULTS['greedy_k']),
    'parzen': lambda ctx, x: parzen_explain(ctx.model, x, ctx.train, MEDLEY_DEFAULTS['parzen_bandwidth']),
}


def top_k_features(scores, K: int) -> np.ndarray:
    """Indices of the K largest |score|; ties go to the lower index"""
    return np.argsort(-np.abs(np.asarray(scores, dtype=np.float64)), kind='stable')[:K]


@measure_performance
def recall_on_gold(explainer, suite: Sequence[GoldDataset], model_kind: Optional[str] = None,
                   n_instances: Optional[int] = None, seed: int = 42, model_config=None) -> float:
    """Mean |top-K ∩ gold| / K over every explained test instance of every dataset.

    ``explainer`` is a key of EXPLAINERS or a callable ``(ctx, x) -> scores``.
    """
    if not suite:
        raise ModelError("Gold suite is empty")
    fn = EXPLAINERS.get(explainer) if isinstance(explainer, str) else explainer
    if fn is None:
        raise ModelError(f"Unknown explainer: {explainer}", known=sorted(EXPLAINERS))
    model_kind = model_kind or MEDLEY_DEFAULTS['gold_model']
    n_instances = n_instances or MEDLEY_DEFAULTS['gold_instances']

    recalls = []
    for i, gold in enumerate(suite):
        train, test = train_test_split(gold.dataset, SplitSpec(0.3, False, derive_seed(seed, i)))
        spec = ModelSpec(model_kind, model_config or {}, derive_seed(seed, i))
        ctx = ExplainContext(spec.fit(train.X, train.y, train.n_classes), spec, train, seed)
        K = len(gold.gold_features)
        truth = set(gold.gold_features)
        for x in test.X[:n_instances]:
            picked = top_k_features(fn(ctx, x), K)
            recalls.append(len(truth.intersection(int(j) for j in picked)) / K)
    name = explainer if isinstance(explainer, str) else getattr(explainer, '__name__', 'custom')
    result = float(np.mean(recalls))
    logger.info(f"✓ {name} recall on gold: {result:.4f} over {len(recalls)} instances")
    return result


def compare_explainers(model_config, train: Dataset, x, seed: int = 42) -> dict:
    """Every explainer on one instance plus the permutation-vs-MEDLEY pattern check"""
    explanation = medley_interpret(model_config, train, x, seed=seed)
    spec = as_model_spec(model_config)
    model = spec.fit(train.X, train.y, train.n_classes)
    x = explanation.instance
    scores = {
        'medley': explanation.combined_scores,
        'drop': explanation.drop_scores,
        'permutation': explanation.perm_scores,
        'local_linear': local_linear_explain(model, x, train, {'seed': seed}),
        'greedy': greedy_scores(model, x),
        'parzen': parzen_explain(model, x, train, MEDLEY_DEFAULTS['parzen_bandwidth']),
    }
    top_medley = int(top_k_features(explanation.combined_scores, 1)[0])
    top_perm = int(top_k_features(explanation.perm_scores, 1)[0])
    return {
        'explanation': explanation,
        'scores': scores,
        'pattern': {
            'spearman_perm_vs_medley': spearman_correlation(explanation.perm_scores,
                                                            explanation.combined_scores),
            'top_feature_medley': train.feature_names[top_medley],
            'top_feature_permutation': train.feature_names[top_perm],
            'top_feature_agrees': top_medley == top_perm,
        },
    }


def scores_frame(feature_names, scores: Dict[str, np.ndarray]) -> pd.DataFrame:
    frame = pd.DataFrame({'feature': list(feature_names)})
    for name, values in scores.items():
        frame[name] = np.asarray(values, dtype=np.float64)
    return frame
