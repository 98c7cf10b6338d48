# tabkit/tabgan.py - GAN-based tabular augmentation and synthetic regression data

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import ADVERSARIAL_DEFAULTS, GAN_DEFAULTS, GAN_PIPE_DEFAULTS, merged
from utils import DataError, ModelError, measure_performance
from tabkit.data import CATEGORICAL, ColumnMeta, Dataset
from tabkit.metrics import roc_curve
from tabkit.models import fit_classifier
from tabkit.numkit import (
    OptimizerState,
    ShapeMismatchError,
    derive_seed,
    optimizer_step,
    seeded_rng,
    sigmoid,
)
from tabkit.syneval import ks_statistic

logger = logging.getLogger(__name__)

OUTPUT_INIT_SCALE = 0.1
MONITOR_ROWS = 1000


class CategoricalColumnsError(DataError):
    pass

# ─── MULTI-LAYER PERCEPTRON ────────────────────────────────────────
def layer_shapes(widths: Sequence[int]) -> List[Tuple[int, int]]:
    return [(widths[i], widths[i + 1]) for i in range(len(widths) - 1)]


def n_params(widths: Sequence[int]) -> int:
    return sum(a * b + b for a, b in layer_shapes(widths))


def unflatten(theta: np.ndarray, widths: Sequence[int]):
    """(W, b) views into the flat parameter vector, input layer first"""
    layers, offset = [], 0
    for a, b in layer_shapes(widths):
        W = theta[offset:offset + a * b].reshape(a, b)
        offset += a * b
        layers.append((W, theta[offset:offset + b]))
        offset += b
    return layers


def mlp_init(widths: Sequence[int], rng) -> np.ndarray:
    """He-normal weights, zero biases; the output layer is scaled down"""
    parts = []
    shapes = layer_shapes(widths)
    for i, (a, b) in enumerate(shapes):
        std = math.sqrt(2.0 / a)
        if i == len(shapes) - 1:
            std *= OUTPUT_INIT_SCALE
        parts.append(rng.normal(size=a * b) * std)
        parts.append(np.zeros(b))
    return np.concatenate(parts)


def mlp_forward(theta, widths, X):
    """ReLU hidden layers and a linear output; returns (output, cache)"""
    layers = unflatten(theta, widths)
    activations, pre = [X], []
    h = X
    for i, (W, b) in enumerate(layers):
        z = h @ W + b
        pre.append(z)
        h = z if i == len(layers) - 1 else np.maximum(z, 0.0)
        activations.append(h)
    return h, (activations, pre)


def mlp_backward(theta, widths, cache, grad_out):
    """Gradient w.r.t. the flat parameters and w.r.t. the network input"""
    activations, pre = cache
    layers = unflatten(theta, widths)
    grads = []
    delta = grad_out
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        if i < len(layers) - 1:
            delta = delta * (pre[i] > 0)
        grads.append((activations[i].T @ delta, delta.sum(axis=0)))
        delta = delta @ W.T
    flat = []
    for gW, gb in reversed(grads):
        flat.append(gW.reshape(-1))
        flat.append(gb)
    return np.concatenate(flat), delta


def _softplus(z):
    return np.logaddexp(0.0, z)

# ─── GAN LOSSES ────────────────────────────────────────────────────
def discriminator_loss_and_grad(theta_d, disc_widths, real, fake):
    """Binary cross-entropy averaged over the 2m real+fake rows"""
    X = np.vstack([real, fake])
    logits, cache = mlp_forward(theta_d, disc_widths, X)
    logits = logits[:, 0]
    m = len(X)
    labels = np.r_[np.ones(len(real)), np.zeros(len(fake))]
    loss = float(np.sum(labels * _softplus(-logits) + (1 - labels) * _softplus(logits)) / m)
    grad_logits = ((sigmoid(logits) - labels) / m).reshape(-1, 1)
    grad, _ = mlp_backward(theta_d, disc_widths, cache, grad_logits)
    return loss, grad


def generator_loss_and_grad(theta_g, gen_widths, theta_d, disc_widths, z):
    """Non-saturating generator loss mean(-log D(G(z)))"""
    fake, g_cache = mlp_forward(theta_g, gen_widths, z)
    logits, d_cache = mlp_forward(theta_d, disc_widths, fake)
    logits = logits[:, 0]
    m = len(z)
    loss = float(np.sum(_softplus(-logits)) / m)
    grad_logits = ((sigmoid(logits) - 1.0) / m).reshape(-1, 1)
    _, grad_fake = mlp_backward(theta_d, disc_widths, d_cache, grad_logits)
    grad, _ = mlp_backward(theta_g, gen_widths, g_cache, grad_fake)
    return loss, grad

# ─── GAN MODEL ─────────────────────────────────────────────────────
@dataclass
class GanModel:
    gen_widths: List[int]
    disc_widths: List[int]
    theta_g: np.ndarray
    theta_d: np.ndarray
    opt_g: OptimizerState
    opt_d: OptimizerState
    params: dict
    epoch: int = 0
    best_loss: float = math.inf
    patience_counter: int = 0
    best_epoch: Optional[int] = None
    history: List[dict] = field(default_factory=list)

    @property
    def noise_dim(self) -> int:
        return self.gen_widths[0]

    @property
    def n_features(self) -> int:
        return self.gen_widths[-1]

    def discriminate(self, X) -> np.ndarray:
        logits, _ = mlp_forward(self.theta_d, self.disc_widths, np.asarray(X, dtype=np.float64))
        return sigmoid(logits[:, 0])


def gan_init(d: int, params: Optional[dict] = None, seed: int = 42) -> GanModel:
    cfg = merged(GAN_DEFAULTS, params)
    hidden = [int(w) for w in cfg['hidden']]
    gen_widths = [int(cfg['noise_dim'])] + hidden + [d]
    disc_widths = [d] + hidden + [1]
    root = seeded_rng(seed)
    return GanModel(
        gen_widths=gen_widths,
        disc_widths=disc_widths,
        theta_g=mlp_init(gen_widths, root.split(0)),
        theta_d=mlp_init(disc_widths, root.split(1)),
        opt_g=OptimizerState('adam', float(cfg['lr'])),
        opt_d=OptimizerState('adam', float(cfg['lr'])),
        params=cfg,
    )


def _numeric_matrix(real) -> np.ndarray:
    if isinstance(real, Dataset):
        categorical = [c.name for c in real.columns if c.kind == CATEGORICAL]
        if categorical:
            raise CategoricalColumnsError(
                f"GAN augmentation needs numeric columns; encode or drop {categorical} first "
                f"(discrete codes have no notion of continuity)", columns=categorical)
        X = real.X
    else:
        X = np.asarray(real, dtype=np.float64)
    if not np.isfinite(X).all():
        raise DataError("GAN training data has missing cells; impute first")
    return X


def fit_score(fake: np.ndarray, real: np.ndarray) -> float:
    """Mean per-column KS statistic plus the mean absolute correlation gap; 0 is a perfect match"""
    d = real.shape[1]
    ks = float(np.mean([ks_statistic(fake[:, j], real[:, j]) for j in range(d)]))
    if d < 2:
        return ks
    with np.errstate(invalid='ignore', divide='ignore'):
        gap = np.nan_to_num(np.corrcoef(fake, rowvar=False)) - np.nan_to_num(np.corrcoef(real, rowvar=False))
    return ks + float(np.mean(np.abs(gap[~np.eye(d, dtype=bool)])))


@measure_performance
def gan_train(real, params: Optional[dict] = None, seed: int = 42) -> GanModel:
    """Alternate discriminator and generator Adam steps.

    After every epoch a fixed noise batch goes through the generator and is
    scored against the training rows with ``fit_score``. Training stops once
    the score has not improved for ``patience`` epochs, and the weights of the
    best-scoring epoch are restored.
    """
    X = _numeric_matrix(real)
    n, d = X.shape
    model = gan_init(d, params, seed)
    cfg = model.params
    batch_size = int(cfg['batch_size'])
    if n < batch_size:
        logger.warning(f"Only {n} rows for batch_size {batch_size}; using {n}")
        batch_size = n
    patience = int(cfg['patience'])
    root = seeded_rng(seed).split(2)
    monitor_z = seeded_rng(seed).split(3).normal(size=(min(n, MONITOR_ROWS), model.noise_dim))
    best_g, best_d = model.theta_g.copy(), model.theta_d.copy()

    for epoch in range(int(cfg['epochs'])):
        stream = root.split(epoch)
        order = stream.permutation(n)
        d_losses, g_losses = [], []
        for start in range(0, n - batch_size + 1, batch_size):
            real_batch = X[order[start:start + batch_size]]
            z = stream.normal(size=(batch_size, model.noise_dim))
            fake, _ = mlp_forward(model.theta_g, model.gen_widths, z)
            d_loss, d_grad = discriminator_loss_and_grad(model.theta_d, model.disc_widths, real_batch, fake)
            model.theta_d, _ = optimizer_step(model.opt_d, model.theta_d, d_grad)

            z = stream.normal(size=(batch_size, model.noise_dim))
            g_loss, g_grad = generator_loss_and_grad(model.theta_g, model.gen_widths,
                                                     model.theta_d, model.disc_widths, z)
            model.theta_g, _ = optimizer_step(model.opt_g, model.theta_g, g_grad)
            d_losses.append(d_loss)
            g_losses.append(g_loss)

        model.epoch = epoch + 1
        if not (np.isfinite(model.theta_g).all() and np.isfinite(model.theta_d).all()):
            raise ModelError(f"GAN weights diverged at epoch {epoch}")
        fake, _ = mlp_forward(model.theta_g, model.gen_widths, monitor_z)
        score = fit_score(fake, X)
        model.history.append({'epoch': epoch, 'd_loss': float(np.mean(d_losses)),
                              'g_loss': float(np.mean(g_losses)), 'fit': score})
        if score < model.best_loss:
            model.best_loss = score
            model.best_epoch = epoch
            model.patience_counter = 0
            best_g, best_d = model.theta_g.copy(), model.theta_d.copy()
        else:
            model.patience_counter += 1
            if model.patience_counter >= patience:
                logger.info(f"Early stop at epoch {epoch + 1}: fit score flat for {patience} epochs")
                break

    if model.best_epoch is not None:
        model.theta_g, model.theta_d = best_g, best_d
        logger.info(f"Restored weights from epoch {model.best_epoch + 1} (fit score {model.best_loss:.4f})")
    logger.info(f"GAN trained for {model.epoch} epochs on {n} rows x {d} columns")
    return model


def gan_generate(model: GanModel, n: int, seed: int = 42) -> np.ndarray:
    """n rows from standard-normal noise through the generator"""
    if n < 0:
        raise ShapeMismatchError(f"n must be >= 0, got {n}")
    if n == 0:
        return np.zeros((0, model.n_features))
    z = seeded_rng(seed).normal(size=(n, model.noise_dim))
    out, _ = mlp_forward(model.theta_g, model.gen_widths, z)
    return out

# ─── FILTERS ───────────────────────────────────────────────────────
def _matrix(data) -> np.ndarray:
    return data.X if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)


def quantile_filter(data, bot_q: float, top_q: float, reference):
    """Keep rows whose every value lies inside the reference quantile band.

    Returns ``(kept_rows, keep_mask)``; a band edge at 0 or 1 is open.
    """
    if not 0 <= bot_q < top_q <= 1:
        raise DataError(f"Quantiles must satisfy 0 <= bot < top <= 1 (got {bot_q}, {top_q})")
    X = _matrix(data)
    ref = _matrix(reference)
    if X.shape[1] != ref.shape[1]:
        raise ShapeMismatchError(f"Data has {X.shape[1]} columns, reference {ref.shape[1]}")
    low = np.quantile(ref, bot_q, axis=0) if bot_q > 0 else np.full(ref.shape[1], -np.inf)
    high = np.quantile(ref, top_q, axis=0) if top_q < 1 else np.full(ref.shape[1], np.inf)
    keep = np.all((X >= low) & (X <= high), axis=1)
    dropped = int((~keep).sum())
    if len(X) and not keep.any():
        logger.warning(f"Quantile filter dropped all {len(X)} rows")
    elif dropped:
        logger.info(f"Quantile filter dropped {dropped} of {len(X)} rows")
    return X[keep], keep


@dataclass
class AdversarialResult:
    kept: np.ndarray
    order: np.ndarray  # synthetic row indices, most real-like first
    synthetic_scores: np.ndarray
    auc: float


def _group_folds(X, seed) -> np.ndarray:
    """Two folds with identical rows always in the same fold"""
    _, groups = np.unique(X, axis=0, return_inverse=True)
    groups = groups.reshape(-1)
    n_groups = int(groups.max()) + 1
    fold_of_group = np.empty(n_groups, dtype=np.int64)
    fold_of_group[seeded_rng(seed).permutation(n_groups)] = np.arange(n_groups) % 2
    return fold_of_group[groups]


def adversarial_filter(real, synthetic, adv_config: Optional[dict] = None, keep_frac: float = 1.0,
                       seed: int = 42) -> AdversarialResult:
    """Rank synthetic rows by out-of-fold P(synthetic) from a real-vs-synthetic forest"""
    R, S = _matrix(real), _matrix(synthetic)
    if len(R) == 0 or len(S) == 0:
        raise DataError("Adversarial filter needs nonempty real and synthetic sets")
    if not 0 < keep_frac <= 1:
        raise DataError(f"keep_frac must be in (0, 1], got {keep_frac}")
    cfg = merged(ADVERSARIAL_DEFAULTS, adv_config)
    X = np.vstack([R, S])
    labels = np.r_[np.zeros(len(R), dtype=np.int64), np.ones(len(S), dtype=np.int64)]
    folds = _group_folds(X, derive_seed(seed, 0))

    scores = np.full(len(X), 0.5)
    for f in (0, 1):
        fit_rows, score_rows = folds != f, folds == f
        if not score_rows.any() or len(np.unique(labels[fit_rows])) < 2:
            continue
        forest = fit_classifier('rforest', X[fit_rows], labels[fit_rows], cfg, derive_seed(seed, 1 + f), 2)
        scores[score_rows] = forest.predict_proba(X[score_rows])[:, 1]

    auc = roc_curve(labels, scores).auc
    synthetic_scores = scores[len(R):]
    order = np.argsort(synthetic_scores, kind='stable')
    n_keep = len(S) if keep_frac >= 1 else max(0, int(round(keep_frac * len(S))))
    logger.info(f"Adversarial AUC {auc:.4f}; keeping {n_keep} of {len(S)} synthetic rows")
    return AdversarialResult(S[order[:n_keep]], order, synthetic_scores, float(auc))

# ─── GENERATION PIPELINE ───────────────────────────────────────────
@dataclass
class GenerationResult:
    gen_x: Dataset
    gen_y: Optional[np.ndarray]
    provenance: dict

    @property
    def use_with_real(self) -> bool:
        return bool(self.provenance.get('use_with_real', True))


def validate_pipe_config(cfg: dict) -> dict:
    if not 0 <= cfg['bot_filter_quantile'] < cfg['top_filter_quantile'] <= 1:
        raise DataError("Filter quantiles must satisfy 0 <= bot < top <= 1")
    if int(cfg['gen_x_times']) < 1:
        raise DataError(f"gen_x_times must be >= 1, got {cfg['gen_x_times']}")
    if not cfg['pregeneration_frac'] > 0:
        raise DataError("pregeneration_frac must be > 0")
    return cfg


def _decode_codes(values, codes):
    codes = np.asarray(codes)
    return codes[np.abs(values[:, None] - codes[None, :]).argmin(axis=1)]


@measure_performance
def generate_data_pipe(train_x: Dataset, train_y=None, test_x: Optional[Dataset] = None,
                       cfg: Optional[dict] = None, seed: int = 42) -> GenerationResult:
    """Train a GAN on [X | y], oversample, filter and post-process synthetic rows"""
    cfg = validate_pipe_config(merged(GAN_PIPE_DEFAULTS, cfg))
    if cfg.get('cat_cols'):
        raise CategoricalColumnsError(
            f"GAN augmentation cannot model categorical columns {cfg['cat_cols']}; "
            f"encode them as continuous features or drop them", columns=cfg['cat_cols'])
    X = _numeric_matrix(train_x)
    if len(X) == 0:
        raise DataError("Training data is empty")
    n, d = X.shape
    y = None if train_y is None else np.asarray(train_y, dtype=np.float64).reshape(-1)
    if y is not None and len(y) != n:
        raise ShapeMismatchError(f"train_x has {n} rows but train_y has {len(y)}")

    data = X if y is None else np.column_stack([X, y])
    mean = data.mean(axis=0)
    std = data.std(axis=0)
    std[std == 0] = 1.0

    gan = gan_train((data - mean) / std, cfg.get('gan_params'), derive_seed(seed, 0))
    target = int(cfg['gen_x_times']) * n
    pregenerated = int(math.ceil(float(cfg['pregeneration_frac']) * target))
    raw = gan_generate(gan, pregenerated, derive_seed(seed, 1)) * std + mean

    _, keep = quantile_filter(raw[:, :d], cfg['bot_filter_quantile'], cfg['top_filter_quantile'], X)
    survivors = raw[keep]
    after_quantile = len(survivors)

    auc = None
    if after_quantile:
        reference = _numeric_matrix(test_x) if test_x is not None else X
        keep_frac = min(1.0, target / after_quantile)
        adv = adversarial_filter(reference, survivors[:, :d], cfg.get('adversarial_config'),
                                 keep_frac, derive_seed(seed, 2))
        survivors = survivors[adv.order[:len(adv.kept)]]
        auc = adv.auc

    if cfg['is_post_process'] and len(survivors):
        survivors[:, :d] = np.clip(survivors[:, :d], X.min(axis=0), X.max(axis=0))
        for j in range(d):
            if np.all(X[:, j] == np.round(X[:, j])):
                survivors[:, j] = np.round(survivors[:, j])
        if y is not None:
            survivors[:, d] = _decode_codes(survivors[:, d], np.unique(y))

    survivors = survivors[:target]
    if len(survivors) < target:
        logger.warning(f"Only {len(survivors)} synthetic rows survived filtering; {target} requested")

    gen_x = Dataset([ColumnMeta(c.name) for c in train_x.columns] if isinstance(train_x, Dataset)
                    else [ColumnMeta(f"x{j}") for j in range(d)], survivors[:, :d])
    gen_y = None
    if y is not None:
        gen_y = survivors[:, d]
        if cfg['is_post_process']:
            gen_y = gen_y.astype(np.int64)

    provenance = {
        'config': {k: v for k, v in cfg.items()},
        'seed': seed,
        'epochs_run': gan.epoch,
        'best_epoch': gan.best_epoch,
        'best_fit_score': gan.best_loss if gan.best_epoch is not None else None,
        'final_g_loss': gan.history[-1]['g_loss'] if gan.history else None,
        'rows_requested': target,
        'rows_pregenerated': pregenerated,
        'rows_after_quantile_filter': after_quantile,
        'rows_kept': len(survivors),
        'adversarial_auc': auc,
        'adversarial_model': 'random forest (stands in for a gradient-boosted adversary)',
        'use_with_real': not cfg['only_generated_data'],
    }
    return GenerationResult(gen_x, gen_y, provenance)


def augmented_training_set(result: GenerationResult, train_x: Dataset, train_y) -> Dataset:
    """Generated rows, preceded by the real rows when tagged for use alongside them"""
    if result.gen_y is None:
        raise DataError("Generation result carries no target column")
    gen_y = np.asarray(result.gen_y, dtype=np.int64)
    if result.use_with_real:
        X = np.vstack([train_x.X, result.gen_x.X])
        y = np.r_[np.asarray(train_y, dtype=np.int64), gen_y]
    else:
        X, y = result.gen_x.X, gen_y
    return train_x.replace(X=X, y=y)

# ─── SYNTHETIC REGRESSION DATA ─────────────────────────────────────
@dataclass
class RegressionData:
    dataset: Dataset
    coefficients: np.ndarray
    informative: Tuple[int, ...]
    noise_sd: float


def make_regression(n: int = 100, d: int = 1, n_informative: int = 1, noise_sd: float = 0.0,
                    seed: int = 42) -> RegressionData:
    """X ~ N(0, 1); y = X w + N(0, noise_sd^2) with n_informative nonzero weights"""
    if n_informative > d or n_informative < 0:
        raise DataError(f"n_informative must satisfy 0 <= n_informative <= d (got {n_informative}, d={d})")
    if noise_sd < 0:
        raise DataError(f"noise_sd must be >= 0, got {noise_sd}")
    root = seeded_rng(seed)
    X = root.split(0).normal(size=(n, d))
    informative = tuple(sorted(int(j) for j in root.split(1).choice(d, n_informative, replace=False)))
    w = np.zeros(d)
    w[list(informative)] = 100.0 * root.split(2).uniform(size=n_informative)
    y = X @ w
    if noise_sd > 0:
        y = y + root.split(3).normal(size=n, scale=noise_sd)
    columns = [ColumnMeta(f"x{j}") for j in range(d)]
    ds = Dataset(columns, X, y, None, 'target', task='regression')
    return RegressionData(ds, w, informative, float(noise_sd))


def feature_fit_lines(ds: Dataset) -> pd.DataFrame:
    """Per-feature least-squares line of the target on that feature alone"""
    if ds.y is None:
        raise DataError("feature_fit_lines needs a target column")
    y = np.asarray(ds.y, dtype=np.float64)
    rows = []
    for j, name in enumerate(ds.feature_names):
        x = ds.X[:, j]
        A = np.column_stack([x, np.ones_like(x)])
        (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
        resid = y - A @ np.array([slope, intercept])
        total = np.sum((y - y.mean()) ** 2)
        r2 = 1.0 - np.sum(resid ** 2) / total if total > 0 else 0.0
        rows.append({'feature': name, 'slope': float(slope), 'intercept': float(intercept), 'r2': float(r2)})
    return pd.DataFrame(rows, columns=['feature', 'slope', 'intercept', 'r2'])


def residual_variance(data: RegressionData) -> float:
    ds = data.dataset
    A = np.column_stack([ds.X, np.ones(ds.n_rows)])
    coef, *_ = np.linalg.lstsq(A, ds.y, rcond=None)
    return float(np.var(ds.y - A @ coef))


def noise_sweep(levels=(0, 10, 20), n: int = 100, d: int = 1, n_informative: int = 1,
                seed: int = 42) -> pd.DataFrame:
    """Residual variance of the least-squares fit at each noise level"""
    rows = []
    for level in levels:
        data = make_regression(n, d, n_informative, float(level), seed)
        rows.append({'noise_sd': float(level), 'residual_variance': residual_variance(data)})
    return pd.DataFrame(rows, columns=['noise_sd', 'residual_variance'])
