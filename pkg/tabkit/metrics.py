# tabkit/metrics.py - Classification reports, ROC/PR curves and learning curves

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from config import CONFIG
from utils import DataError, ModelError
from tabkit.numkit import ShapeMismatchError, seeded_rng

logger = logging.getLogger(__name__)


def _as_codes(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=np.int64).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=np.int64).reshape(-1)
    if len(y_true) != len(y_pred):
        raise ShapeMismatchError(f"y_true has {len(y_true)} entries but y_pred has {len(y_pred)}")
    return y_true, y_pred

# ─── CONFUSION MATRIX & REPORT ─────────────────────────────────────
def confusion_matrix(y_true, y_pred, n_classes: Optional[int] = None) -> np.ndarray:
    """Entry (i, j) counts rows of true class i predicted as j"""
    y_true, y_pred = _as_codes(y_true, y_pred)
    if n_classes is None:
        n_classes = int(max(y_true.max(initial=-1), y_pred.max(initial=-1))) + 1
    if len(y_true) and (min(y_true.min(), y_pred.min()) < 0 or max(y_true.max(), y_pred.max()) >= n_classes):
        raise ShapeMismatchError(f"Class codes must lie in 0..{n_classes - 1}")
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(matrix, (y_true, y_pred), 1)
    return matrix


def _ratio(num, den):
    return (float(num) / float(den), False) if den > 0 else (0.0, True)


@dataclass
class ClassificationReport:
    per_class: List[dict]
    accuracy: float
    macro_avg: dict
    weighted_avg: dict
    total_support: int
    zero_division: List[str] = field(default_factory=list)

    def to_dict(self):
        return {
            'per_class': self.per_class,
            'accuracy': self.accuracy,
            'macro_avg': self.macro_avg,
            'weighted_avg': self.weighted_avg,
            'total_support': self.total_support,
            'zero_division': self.zero_division,
        }

    def to_frame(self) -> pd.DataFrame:
        rows = [{'': r['class_name'], 'Precision': r['precision'], 'Recall': r['recall'],
                 'F1-score': r['f1'], 'Support': r['support']} for r in self.per_class]
        rows.append({'': 'Accuracy', 'Precision': None, 'Recall': None,
                     'F1-score': self.accuracy, 'Support': self.total_support})
        for label, avg in (('macro avg', self.macro_avg), ('weighted avg', self.weighted_avg)):
            rows.append({'': label, 'Precision': avg['precision'], 'Recall': avg['recall'],
                         'F1-score': avg['f1'], 'Support': self.total_support})
        return pd.DataFrame(rows, columns=['', 'Precision', 'Recall', 'F1-score', 'Support'])

    def render_text(self, digits: int = 2) -> str:
        """Fixed-width table in the usual precision/recall/F1/support layout"""
        names = [r['class_name'] for r in self.per_class] + ['Accuracy', 'macro avg', 'weighted avg']
        width = max(len(n) for n in names + ['weighted avg'])
        fmt = f"{{:.{digits}f}}"
        header = f"{'':>{width}} {'Precision':>10} {'Recall':>10} {'F1-score':>10} {'Support':>10}"
        lines = [header, ""]
        for r in self.per_class:
            lines.append(f"{r['class_name']:>{width}} {fmt.format(r['precision']):>10} "
                         f"{fmt.format(r['recall']):>10} {fmt.format(r['f1']):>10} {r['support']:>10}")
        lines.append("")
        lines.append(f"{'Accuracy':>{width}} {'':>10} {'':>10} {fmt.format(self.accuracy):>10} "
                     f"{self.total_support:>10}")
        for label, avg in (('macro avg', self.macro_avg), ('weighted avg', self.weighted_avg)):
            lines.append(f"{label:>{width}} {fmt.format(avg['precision']):>10} "
                         f"{fmt.format(avg['recall']):>10} {fmt.format(avg['f1']):>10} "
                         f"{self.total_support:>10}")
        return "\n".join(lines) + "\n"


def classification_report(y_true, y_pred, class_names: Sequence[str]) -> ClassificationReport:
    """Per-class precision/recall/F1 plus accuracy, macro and weighted averages.

    Zero denominators produce 0 and are listed in ``zero_division`` as
    ``"<class>:<metric>"``.
    """
    class_names = [str(c) for c in class_names]
    matrix = confusion_matrix(y_true, y_pred, len(class_names))
    total = int(matrix.sum())
    tp = np.diag(matrix)
    predicted = matrix.sum(axis=0)
    support = matrix.sum(axis=1)

    per_class, flags = [], []
    for k, name in enumerate(class_names):
        precision, p_flag = _ratio(tp[k], predicted[k])
        recall, r_flag = _ratio(tp[k], support[k])
        f1, f_flag = _ratio(2 * precision * recall, precision + recall)
        for metric, flagged in (('precision', p_flag), ('recall', r_flag), ('f1', f_flag)):
            if flagged:
                flags.append(f"{name}:{metric}")
        per_class.append({'class_name': name, 'precision': precision, 'recall': recall,
                          'f1': f1, 'support': int(support[k])})
    if flags:
        logger.warning(f"Zero-division metric cells reported as 0: {flags}")

    def _avg(weights):
        out = {}
        for metric in ('precision', 'recall', 'f1'):
            values = np.array([r[metric] for r in per_class])
            out[metric] = float(np.dot(values, weights) / weights.sum()) if weights.sum() > 0 else 0.0
        return out

    accuracy = float(tp.sum() / total) if total else 0.0
    return ClassificationReport(
        per_class=per_class,
        accuracy=accuracy,
        macro_avg=_avg(np.ones(len(class_names))),
        weighted_avg=_avg(support.astype(np.float64)),
        total_support=total,
        zero_division=flags,
    )


def accuracy_score(y_true, y_pred) -> float:
    y_true, y_pred = _as_codes(y_true, y_pred)
    if len(y_true) == 0:
        return 0.0
    return float(np.mean(y_true == y_pred))


def f1_macro(y_true, y_pred, n_classes: Optional[int] = None) -> float:
    y_true, y_pred = _as_codes(y_true, y_pred)
    if n_classes is None:
        n_classes = int(max(y_true.max(initial=-1), y_pred.max(initial=-1))) + 1
    matrix = confusion_matrix(y_true, y_pred, n_classes)
    tp = np.diag(matrix).astype(np.float64)
    den = matrix.sum(axis=0) + matrix.sum(axis=1)
    f1 = np.divide(2 * tp, den, out=np.zeros(n_classes), where=den > 0)
    return float(f1.mean())


METRICS = {
    'accuracy': lambda y, p, k: accuracy_score(y, p),
    'f1_macro': lambda y, p, k: f1_macro(y, p, k),
}


def score(metric: str, y_true, y_pred, n_classes=None) -> float:
    if metric not in METRICS:
        raise ModelError(f"Unknown metric: {metric}")
    return METRICS[metric](y_true, y_pred, n_classes)

# ─── CURVES ────────────────────────────────────────────────────────
@dataclass
class CurveData:
    kind: str  # roc | pr | learning
    points: List[tuple]  # (x, y, annotation)
    auc: Optional[float] = None
    label: str = ""

    def to_frame(self) -> pd.DataFrame:
        columns = {
            'roc': ['fpr', 'tpr', 'threshold'],
            'pr': ['recall', 'precision', 'threshold'],
            'learning': ['train_size', 'score', 'series'],
        }[self.kind]
        return pd.DataFrame(self.points, columns=columns)

    def to_dict(self):
        return {'kind': self.kind, 'label': self.label, 'auc': self.auc,
                'points': [list(p) for p in self.points]}


def _binary_sweep(y_true, scores):
    y = np.asarray(y_true).reshape(-1)
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if len(y) != len(s):
        raise ShapeMismatchError(f"{len(y)} labels but {len(s)} scores")
    labels = set(np.unique(y).tolist())
    if not labels <= {0, 1}:
        raise DataError(f"Binary curves need 0/1 labels, got {sorted(labels)}")
    if len(labels) < 2:
        raise DataError("Curve needs both classes present in y_true")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # last index of each group of tied scores
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tps = np.cumsum(y == 1)[ends]
    fps = np.cumsum(y == 0)[ends]
    return s[ends], tps, fps


def roc_curve(y_true, scores) -> CurveData:
    """Threshold sweep over unique scores descending, trapezoidal AUC"""
    thresholds, tps, fps = _binary_sweep(y_true, scores)
    P, N = int(tps[-1]), int(fps[-1])
    tps = np.r_[0, tps]
    fps = np.r_[0, fps]
    # integer trapezoid: sum (fps_i - fps_{i-1}) * (tps_i + tps_{i-1}) equals 2 * concordance
    area2 = int(np.sum(np.diff(fps) * (tps[1:] + tps[:-1])))
    auc = area2 / (2 * P * N)
    points = [(0.0, 0.0, float('inf'))] + [
        (f / N, t / P, float(th)) for f, t, th in zip(fps[1:], tps[1:], thresholds)
    ]
    return CurveData('roc', points, auc)


def pr_curve(y_true, scores) -> CurveData:
    """Precision/recall per distinct threshold, ordered by increasing threshold.

    The lowest threshold point is (recall 1, precision = prevalence); recall is
    nonincreasing along the stored order. ``auc`` holds average precision.
    """
    thresholds, tps, fps = _binary_sweep(y_true, scores)
    P = int(tps[-1])
    precision = tps / (tps + fps)
    recall = tps / P
    points = [(float(r), float(p), float(th)) for r, p, th in
              zip(recall[::-1], precision[::-1], thresholds[::-1])]
    prev_recall = np.r_[0.0, recall[:-1]]
    ap = float(np.sum((recall - prev_recall) * precision))
    return CurveData('pr', points, ap)


def average_precision(y_true, scores) -> float:
    return pr_curve(y_true, scores).auc


def roc_curves_ovr(y_true, proba, class_names=None) -> List[CurveData]:
    """One-vs-rest ROC per class present in y_true (absent classes are skipped)"""
    y_true = np.asarray(y_true, dtype=np.int64)
    proba = np.asarray(proba, dtype=np.float64)
    curves = []
    for k in range(proba.shape[1]):
        target = (y_true == k).astype(np.int64)
        if target.min() == target.max():
            logger.warning(f"Class {k} absent or universal in y_true; ROC skipped")
            continue
        curve = roc_curve(target, proba[:, k])
        curve.label = class_names[k] if class_names else str(k)
        curves.append(curve)
    return curves


def pr_curves_ovr(y_true, proba, class_names=None) -> List[CurveData]:
    y_true = np.asarray(y_true, dtype=np.int64)
    proba = np.asarray(proba, dtype=np.float64)
    curves = []
    for k in range(proba.shape[1]):
        target = (y_true == k).astype(np.int64)
        if target.min() == target.max():
            continue
        curve = pr_curve(target, proba[:, k])
        curve.label = class_names[k] if class_names else str(k)
        curves.append(curve)
    return curves

# ─── LEARNING CURVES ───────────────────────────────────────────────
def learning_curve(model_kind, config, ds, train_sizes, cv_k: int = 5, seed: int = 42):
    """Train and validation accuracy per training-subset size, averaged over folds.

    Returns ``(train_curve, validation_curve)``.
    """
    from tabkit.data import kfold_splits
    from tabkit.models import fit_classifier

    folds = kfold_splits(ds, cv_k, seed)
    capacity = min(len(train_idx) for train_idx, _ in folds)
    sizes = [int(s) for s in train_sizes]
    for size in sizes:
        if size < 1 or size > capacity:
            raise DataError(f"Train size {size} exceeds the fold capacity {capacity}", size=size)

    root = seeded_rng(seed)

    def run(job):
        i, f = job
        size = sizes[i]
        train_idx, valid_idx = folds[f]
        if size < len(train_idx):
            picked = root.split(i).split(f).choice(len(train_idx), size, replace=False)
            train_idx = np.sort(train_idx[picked])
        model = fit_classifier(model_kind, ds.X[train_idx], ds.y[train_idx], config, seed,
                               n_classes=ds.n_classes)
        train_acc = accuracy_score(ds.y[train_idx], model.predict(ds.X[train_idx]))
        valid_acc = accuracy_score(ds.y[valid_idx], model.predict(ds.X[valid_idx]))
        return train_acc, valid_acc

    jobs = [(i, f) for i in range(len(sizes)) for f in range(len(folds))]
    with ThreadPoolExecutor(max_workers=CONFIG['max_workers']) as pool:
        results = list(pool.map(run, jobs))
    scores = np.array(results).reshape(len(sizes), len(folds), 2).mean(axis=1)

    train_curve = CurveData('learning', [(s, float(a), 'train') for s, a in zip(sizes, scores[:, 0])],
                            label='train')
    valid_curve = CurveData('learning', [(s, float(a), 'validation') for s, a in zip(sizes, scores[:, 1])],
                            label='validation')
    logger.info(f"Learning curve over {len(sizes)} sizes x {len(folds)} folds done")
    return train_curve, valid_curve
