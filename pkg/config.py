# config.py - Configuration and Constants

import copy
import json
import logging
import os
from pathlib import Path

logger = logging.getLogger(__name__)

TOOL_VERSION = "1.0.0"
FORMAT_VERSION = 1

# ─── GENERAL CONFIGURATION ─────────────────────────────────────────
CONFIG = {
    'seed': 42,
    'max_workers': 4,  # thread pools for trees / search configs
    'missing_markers': ['', 'NA', 'NaN'],  # compared case-insensitively
    'csv_delimiter': ',',
    'csv_encoding': 'utf-8',
    'test_fraction': 0.3,
    'cv_folds': 5,
    'log_level': 'INFO',
}

# ─── MODEL DEFAULTS ────────────────────────────────────────────────
MODEL_DEFAULTS = {
    'logreg': {
        'lr': 0.1,
        'epochs': 200,
        'l2': 1e-4,
        'batch_strategy': 'batch',
        'optimizer': 'sgd',
    },
    'dtree': {
        'max_depth': None,
        'min_samples_leaf': 1,
        'max_features': None,
    },
    'rforest': {
        'n_trees': 100,
        'max_depth': None,
        'min_samples_leaf': 1,
        'max_features': 'sqrt',
        'bootstrap': True,
    },
    'linsvm': {
        'C': 1.0,
        'lr': 0.01,
        'epochs': 500,
        'batch_strategy': 'batch',
    },
    'knn': {'k': 5},
    'gnb': {'var_floor': 1e-9},
    'zeror': {},
    'lrforest': {
        'forest': {},
        'meta': {},
    },
    'svtree': {
        'svm': {},
        'tree': {'max_depth': 7, 'min_samples_leaf': 5},
    },
}

COMPARE_KINDS = ['logreg', 'knn', 'rforest', 'dtree', 'linsvm', 'gnb', 'zeror', 'lrforest', 'svtree']

# ─── SEARCH DEFAULTS ───────────────────────────────────────────────
SEARCH_DEFAULTS = {
    'strategy': 'grid',
    'n_draws': 10,
    'cv_folds': 5,
    'metric': 'accuracy',
}

# ─── EXPLAINER DEFAULTS ────────────────────────────────────────────
MEDLEY_DEFAULTS = {
    'n_repeats': 5,
    'lime_samples': 1000,
    'lime_kernel_width': None,  # None -> 0.75 * sqrt(d)
    'lime_ridge': 1.0,
    'parzen_bandwidth': 1.0,
    'greedy_k': None,  # None -> all features
    'gold_datasets': 10,
    'gold_d': 10,
    'gold_k': 3,
    'gold_n': 500,
    'gold_instances': 20,
    'gold_model': 'logreg',
}

# ─── GAN DEFAULTS ──────────────────────────────────────────────────
GAN_DEFAULTS = {
    'batch_size': 64,
    'patience': 50,
    'epochs': 500,
    'lr': 1e-3,
    'noise_dim': 100,
    'hidden': [50, 25, 12],
}

ADVERSARIAL_DEFAULTS = {
    'n_trees': 50,
    'max_depth': 4,
    'min_samples_leaf': 5,
    'max_features': 'sqrt',
    'bootstrap': True,
}

GAN_PIPE_DEFAULTS = {
    'gen_x_times': 100,
    'bot_filter_quantile': 0.001,
    'top_filter_quantile': 0.999,
    'is_post_process': True,
    'pregeneration_frac': 2,
    'only_generated_data': False,
    'cat_cols': None,
}

# ─── FIDELITY DEFAULTS ─────────────────────────────────────────────
FIDELITY_DEFAULTS = {
    'alpha': 0.05,
    'spearman_threshold': 0.5,
    'rf_config': {'n_trees': 100, 'max_features': 'sqrt'},
}

# ─── LLM CONFIGURATION ─────────────────────────────────────────────
LLM_CONFIG = {
    'endpoint': 'https://api.openai.com/v1/chat/completions',
    'endpoint_env': 'TABKIT_LLM_ENDPOINT',
    'api_key_env': 'OPENAI_API_KEY',
    'model_id': 'gpt-3.5-turbo',
    'temperature': 0,
    'timeout': 60,
    'max_attempts': 3,
    'backoff_base': 1.0,
}

# ─── EXIT CODES ────────────────────────────────────────────────────
EXIT_CODES = {
    'ok': 0,
    'unexpected': 1,
    'usage': 2,
    'data': 3,
    'model': 4,
    'transport': 5,
}

# ─── CONFIGURATION HELPERS ────────────────────────────────────────
def merged(defaults, overrides=None):
    """Deep-merge user overrides on top of a defaults dictionary"""
    result = copy.deepcopy(defaults)
    for key, value in (overrides or {}).items():
        if isinstance(value, dict) and isinstance(result.get(key), dict):
            result[key] = merged(result[key], value)
        else:
            result[key] = copy.deepcopy(value)
    return result


def get_llm_endpoint():
    """LLM endpoint, overridable from the environment"""
    return os.environ.get(LLM_CONFIG['endpoint_env']) or LLM_CONFIG['endpoint']


def load_run_config(path):
    """Load a --config JSON file; keys may be kebab-case or snake_case"""
    path = Path(path)
    with open(path, 'r', encoding='utf-8') as f:
        raw = json.load(f)
    if not isinstance(raw, dict):
        raise ValueError(f"Config file {path} must contain a JSON object")
    return {str(k).replace('-', '_'): v for k, v in raw.items()}

# ─── VALIDATION FUNCTIONS ───────────────────────────────────────────
def validate_config():
    """Validate configuration settings"""
    errors = []

    for key in ('max_workers', 'cv_folds'):
        if not isinstance(CONFIG.get(key), int) or CONFIG[key] <= 0:
            errors.append(f"Config {key} must be a positive integer")
    if not 0 < CONFIG.get('test_fraction', 0) < 1:
        errors.append("Config test_fraction must be in (0, 1)")

    for kind, params in MODEL_DEFAULTS.items():
        for key in ('lr', 'epochs', 'n_trees', 'C', 'k'):
            if key in params and params[key] <= 0:
                errors.append(f"Model {kind} '{key}' must be positive")

    pipe = GAN_PIPE_DEFAULTS
    if not 0 <= pipe['bot_filter_quantile'] < pipe['top_filter_quantile'] <= 1:
        errors.append("GAN filter quantiles must satisfy 0 <= bot < top <= 1")
    if pipe['gen_x_times'] < 1:
        errors.append("gen_x_times must be >= 1")
    if len(GAN_DEFAULTS['hidden']) != 3:
        errors.append("GAN hidden layers are fixed at three widths")

    if LLM_CONFIG['max_attempts'] < 1 or LLM_CONFIG['temperature'] < 0:
        errors.append("LLM max_attempts must be >= 1 and temperature >= 0")

    if errors:
        raise ValueError("Configuration validation failed:\n" + "\n".join(errors))
    return True

# ─── INITIALIZATION ─────────────────────────────────────────────────
try:
    validate_config()
except ValueError as e:
    logger.error(f"✗ {e}")
