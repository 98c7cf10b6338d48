import os
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from tabkit.data import make_dataset
from tabkit.llmgen import MockTransport


@pytest.fixture
def linear_ds():
    """Two classes split by a noisy linear boundary on x0 and x1"""
    rng = np.random.default_rng(0)
    X = rng.normal(size=(120, 4))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(np.int64)
    return make_dataset(X, y)


@pytest.fixture
def three_class_ds():
    rng = np.random.default_rng(1)
    centers = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]])
    y = np.repeat(np.arange(3), 30)
    X = centers[y] + rng.normal(scale=0.5, size=(90, 2))
    return make_dataset(X, y, class_names=['a', 'b', 'c'])


@pytest.fixture
def xor_ds():
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]] * 10, dtype=float)
    y = (X[:, 0] != X[:, 1]).astype(np.int64)
    return make_dataset(X, y)


@pytest.fixture
def toy_csv(tmp_path):
    """Mixed numeric / categorical CSV with one missing cell and a text target"""
    rng = np.random.default_rng(7)
    n = 60
    x1 = rng.normal(size=n)
    x2 = rng.normal(size=n)
    color = np.where(x1 > 0, 'red', 'blue')
    label = np.where(x1 + 0.3 * x2 > 0, 'yes', 'no')
    frame = pd.DataFrame({'x1': np.round(x1, 4), 'x2': np.round(x2, 4), 'color': color, 'label': label})
    frame = frame.astype(str)
    frame.loc[3, 'x2'] = 'NA'
    path = tmp_path / "toy.csv"
    frame.to_csv(path, index=False)
    return path


@pytest.fixture
def mock_transport():
    return MockTransport.with_samples()


@pytest.fixture
def no_sleep():
    calls = []
    return calls.append


@pytest.fixture
def diabetes_csv():
    """Pima-style diabetes table (768 rows, 8 features, Outcome); set TABKIT_DIABETES_CSV to run"""
    path = os.environ.get('TABKIT_DIABETES_CSV', '')
    if not path or not Path(path).is_file():
        pytest.skip("TABKIT_DIABETES_CSV does not point at a diabetes CSV")
    return Path(path)
