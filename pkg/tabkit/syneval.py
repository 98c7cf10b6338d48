# tabkit/syneval.py - Fidelity checks of synthetic against real tables

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from config import FIDELITY_DEFAULTS, FORMAT_VERSION, merged
from utils import DataError, measure_performance
from tabkit.data import Dataset, UnknownColumnError
from tabkit.models import feature_importances, fit_classifier
from tabkit.numkit import cosine_similarity, spearman_correlation

logger = logging.getLogger(__name__)

KS_MAX_TERMS = 100
KS_TERM_TOL = 1e-12

# ─── KOLMOGOROV-SMIRNOV ────────────────────────────────────────────
def ks_statistic(a, b) -> float:
    """Largest gap between the two empirical CDFs over the merged sample"""
    a = np.sort(np.asarray(a, dtype=np.float64).reshape(-1))
    b = np.sort(np.asarray(b, dtype=np.float64).reshape(-1))
    if len(a) == 0 or len(b) == 0:
        raise DataError("KS test needs two nonempty samples")
    points = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, points, side='right') / len(a)
    cdf_b = np.searchsorted(b, points, side='right') / len(b)
    return float(np.max(np.abs(cdf_a - cdf_b)))


def kolmogorov_pvalue(D: float, n: int, m: int) -> float:
    """Asymptotic p-value with the usual small-sample correction of lambda.

    Returns 1 when D is 0 or the alternating series has not converged
    within KS_MAX_TERMS terms (tiny lambda).
    """
    if D <= 0:
        return 1.0
    ne = n * m / (n + m)
    root = math.sqrt(ne)
    lam = (root + 0.12 + 0.11 / root) * D
    total = 0.0
    for k in range(1, KS_MAX_TERMS + 1):
        term = 2.0 * (-1) ** (k - 1) * math.exp(-2.0 * k * k * lam * lam)
        total += term
        if abs(term) < KS_TERM_TOL:
            return min(1.0, max(0.0, total))
    return 1.0


def ks_two_sample(a, b) -> Tuple[float, float]:
    D = ks_statistic(a, b)
    return D, kolmogorov_pvalue(D, len(np.ravel(a)), len(np.ravel(b)))

# ─── STD & IMPORTANCE COMPARISONS ──────────────────────────────────
def _check_columns(real: Dataset, synth: Dataset):
    if real.feature_names != synth.feature_names:
        missing = sorted(set(real.feature_names) ^ set(synth.feature_names))
        raise UnknownColumnError(f"Real and synthetic column sets differ: {missing or 'order'}",
                                 columns=missing)


def std_compare(real: Dataset, synth: Dataset) -> pd.DataFrame:
    """Population std per column on both sides and their absolute difference"""
    _check_columns(real, synth)
    real_std = real.X.std(axis=0)
    synth_std = synth.X.std(axis=0)
    return pd.DataFrame({
        'feature': real.feature_names,
        'real_std': real_std,
        'synth_std': synth_std,
        'std_abs_diff': np.abs(real_std - synth_std),
    })


@dataclass
class ImportanceSimilarity:
    cosine: float
    spearman: float
    importance_real: np.ndarray
    importance_synth: np.ndarray


def importance_similarity(real: Dataset, synth: Dataset, rf_config: Optional[dict] = None,
                          seed: int = 42) -> ImportanceSimilarity:
    """Forest impurity importances fitted on each side, compared by cosine and rank"""
    _check_columns(real, synth)
    if real.y is None or synth.y is None:
        raise DataError("importance_similarity needs a target on both datasets")
    cfg = merged(FIDELITY_DEFAULTS['rf_config'], rf_config)
    n_classes = max(real.n_classes, synth.n_classes)
    imp_real = feature_importances(fit_classifier('rforest', real.X, real.y, cfg, seed, n_classes))
    imp_synth = feature_importances(fit_classifier('rforest', synth.X, synth.y, cfg, seed, n_classes))
    return ImportanceSimilarity(
        cosine=cosine_similarity(imp_real, imp_synth),
        spearman=spearman_correlation(imp_real, imp_synth),
        importance_real=imp_real,
        importance_synth=imp_synth,
    )

# ─── REPORT ────────────────────────────────────────────────────────
@dataclass
class FidelityReport:
    per_feature: List[dict]
    alpha: float
    spearman_threshold: float
    overall_verdict: str
    importance_real: Optional[np.ndarray] = None
    importance_synth: Optional[np.ndarray] = None
    importance_cosine: Optional[float] = None
    importance_spearman: Optional[float] = None
    provenance: dict = field(default_factory=dict)

    @property
    def rejected_features(self) -> List[str]:
        return [f['name'] for f in self.per_feature if f['verdict'] == 'rejected']

    def to_dict(self) -> dict:
        return {
            'schema_version': FORMAT_VERSION,
            'alpha': self.alpha,
            'spearman_threshold': self.spearman_threshold,
            'overall_verdict': self.overall_verdict,
            'per_feature': self.per_feature,
            'importance': None if self.importance_real is None else {
                'real': self.importance_real.tolist(),
                'synth': self.importance_synth.tolist(),
                'cosine': self.importance_cosine,
                'spearman': self.importance_spearman,
            },
            'provenance': self.provenance,
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.per_feature)

    def importance_frame(self, feature_names) -> Optional[pd.DataFrame]:
        if self.importance_real is None:
            return None
        return pd.DataFrame({'feature': list(feature_names), 'real': self.importance_real,
                             'synth': self.importance_synth})


@measure_performance
def fidelity_report(real: Dataset, synth: Dataset, alpha: Optional[float] = None,
                    rf_config: Optional[dict] = None, seed: int = 42,
                    spearman_threshold: Optional[float] = None) -> FidelityReport:
    """Per-feature KS and std comparison plus forest-importance similarity.

    The overall verdict is consistent when no feature is rejected at ``alpha``
    and the importance rank correlation reaches ``spearman_threshold``.
    """
    alpha = FIDELITY_DEFAULTS['alpha'] if alpha is None else float(alpha)
    threshold = FIDELITY_DEFAULTS['spearman_threshold'] if spearman_threshold is None else float(spearman_threshold)
    if not 0 < alpha < 1:
        raise DataError(f"alpha must lie in (0, 1), got {alpha}")
    stds = std_compare(real, synth)

    per_feature = []
    for j, name in enumerate(real.feature_names):
        D, p = ks_two_sample(real.X[:, j], synth.X[:, j])
        per_feature.append({
            'name': name,
            'ks_D': D,
            'ks_p': p,
            'real_std': float(stds['real_std'].iloc[j]),
            'synth_std': float(stds['synth_std'].iloc[j]),
            'std_abs_diff': float(stds['std_abs_diff'].iloc[j]),
            'verdict': 'rejected' if p < alpha else 'consistent',
        })

    provenance = {'seed': seed, 'rf_config': merged(FIDELITY_DEFAULTS['rf_config'], rf_config),
                  'real_rows': real.n_rows, 'synth_rows': synth.n_rows,
                  'p_value': 'asymptotic Kolmogorov series, accurate for n >= 8 per side'}
    report = FidelityReport(per_feature, alpha, threshold, 'consistent', provenance=provenance)

    if real.y is not None and synth.y is not None:
        sim = importance_similarity(real, synth, rf_config, seed)
        report.importance_real = sim.importance_real
        report.importance_synth = sim.importance_synth
        report.importance_cosine = sim.cosine
        report.importance_spearman = sim.spearman
    else:
        provenance['importance'] = 'skipped: target column missing on at least one side'
        logger.warning("Importance similarity skipped; verdict uses KS only")

    importance_ok = report.importance_spearman is None or report.importance_spearman >= threshold
    if report.rejected_features or not importance_ok:
        report.overall_verdict = 'inconsistent'
    logger.info(f"Fidelity verdict: {report.overall_verdict} "
                f"({len(report.rejected_features)} of {len(per_feature)} features rejected)")
    return report

# ─── SCHEMA ────────────────────────────────────────────────────────
_NUMBER = {'type': 'number'}
_UNIT = {'type': 'number', 'minimum': 0, 'maximum': 1}

FIDELITY_SCHEMA = {
    'type': 'object',
    'required': ['schema_version', 'alpha', 'spearman_threshold', 'overall_verdict',
                 'per_feature', 'importance', 'provenance'],
    'properties': {
        'schema_version': {'type': 'integer', 'enum': [FORMAT_VERSION]},
        'alpha': _UNIT,
        'spearman_threshold': {'type': 'number', 'minimum': -1, 'maximum': 1},
        'overall_verdict': {'type': 'string', 'enum': ['consistent', 'inconsistent']},
        'per_feature': {
            'type': 'array',
            'items': {
                'type': 'object',
                'required': ['name', 'ks_D', 'ks_p', 'real_std', 'synth_std', 'std_abs_diff', 'verdict'],
                'properties': {
                    'name': {'type': 'string'},
                    'ks_D': _UNIT,
                    'ks_p': _UNIT,
                    'real_std': {'type': 'number', 'minimum': 0},
                    'synth_std': {'type': 'number', 'minimum': 0},
                    'std_abs_diff': {'type': 'number', 'minimum': 0},
                    'verdict': {'type': 'string', 'enum': ['consistent', 'rejected']},
                },
            },
        },
        'importance': {
            'type': ['object', 'null'],
            'required': ['real', 'synth', 'cosine', 'spearman'],
            'properties': {
                'real': {'type': 'array', 'items': _NUMBER},
                'synth': {'type': 'array', 'items': _NUMBER},
                'cosine': {'type': 'number', 'minimum': -1, 'maximum': 1},
                'spearman': {'type': 'number', 'minimum': -1, 'maximum': 1},
            },
        },
        'provenance': {'type': 'object'},
    },
}

_TYPES = {
    'object': lambda v: isinstance(v, dict),
    'array': lambda v: isinstance(v, list),
    'string': lambda v: isinstance(v, str),
    'integer': lambda v: isinstance(v, int) and not isinstance(v, bool),
    'number': lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    'boolean': lambda v: isinstance(v, bool),
    'null': lambda v: v is None,
}


def _schema_errors(doc, schema, path="$") -> List[str]:
    types = schema.get('type')
    if types is not None:
        allowed = types if isinstance(types, list) else [types]
        if not any(_TYPES[t](doc) for t in allowed):
            return [f"{path}: expected {'/'.join(allowed)}"]
    if doc is None:
        return []
    errors = []
    if 'enum' in schema and doc not in schema['enum']:
        errors.append(f"{path}: {doc!r} not in {schema['enum']}")
    if isinstance(doc, (int, float)) and not isinstance(doc, bool):
        if 'minimum' in schema and doc < schema['minimum']:
            errors.append(f"{path}: {doc} < {schema['minimum']}")
        if 'maximum' in schema and doc > schema['maximum']:
            errors.append(f"{path}: {doc} > {schema['maximum']}")
    if isinstance(doc, dict):
        for key in schema.get('required', []):
            if key not in doc:
                errors.append(f"{path}: missing '{key}'")
        for key, sub in schema.get('properties', {}).items():
            if key in doc:
                errors.extend(_schema_errors(doc[key], sub, f"{path}.{key}"))
    if isinstance(doc, list) and 'items' in schema:
        for i, item in enumerate(doc):
            errors.extend(_schema_errors(item, schema['items'], f"{path}[{i}]"))
    return errors


def validate_report(doc: dict) -> bool:
    """Raise DataError listing every schema violation of a fidelity report document"""
    errors = _schema_errors(doc, FIDELITY_SCHEMA)
    if errors:
        raise DataError("Fidelity report does not match the schema:\n" + "\n".join(errors),
                        violations=errors)
    return True
