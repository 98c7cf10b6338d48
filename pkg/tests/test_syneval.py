import json
import math

import numpy as np
import pytest

from tabkit.data import SplitSpec, UnknownColumnError, make_dataset, train_test_split
from tabkit.syneval import (
    fidelity_report,
    importance_similarity,
    kolmogorov_pvalue,
    ks_statistic,
    ks_two_sample,
    std_compare,
    validate_report,
)
from tabkit.tabgan import generate_data_pipe
from utils import DataError


def _brute_ks(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return max(abs(np.sum(a <= t) / len(a) - np.sum(b <= t) / len(b)) for t in np.concatenate([a, b]))


def _series_p(D, n, m):
    ne = n * m / (n + m)
    lam = (math.sqrt(ne) + 0.12 + 0.11 / math.sqrt(ne)) * D
    return 2 * sum((-1) ** (k - 1) * math.exp(-2 * k * k * lam * lam) for k in range(1, 101))


@pytest.fixture
def labelled_pair():
    rng = np.random.default_rng(40)
    X = rng.normal(size=(200, 3))
    y = (X[:, 0] + 0.2 * X[:, 1] > 0).astype(np.int64)
    return make_dataset(X, y)


# ─── KOLMOGOROV-SMIRNOV ────────────────────────────────────────────
def test_identical_samples():
    assert ks_two_sample([1, 2, 3], [1, 2, 3]) == (0.0, 1.0)


def test_hand_example():
    assert ks_statistic([0.1, 0.2, 0.3, 0.4], [0.15, 0.25, 0.35, 0.45]) == 0.25


def test_statistic_matches_brute_force_oracle():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        a = rng.integers(0, 10, int(rng.integers(1, 51)))
        b = rng.integers(0, 10, int(rng.integers(1, 51)))
        assert ks_statistic(a, b) == _brute_ks(a, b)


def test_symmetry_and_monotone_invariance():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=30), rng.normal(loc=0.4, size=25)
    assert ks_two_sample(a, b) == ks_two_sample(b, a)
    assert ks_statistic(a, b) == ks_statistic(a ** 3, b ** 3)


def test_pvalue_reference_point():
    p = kolmogorov_pvalue(0.1, 100, 100)
    assert p == pytest.approx(_series_p(0.1, 100, 100), abs=1e-12)
    assert p == pytest.approx(0.68, abs=0.005)


def test_pvalue_is_monotone_in_d():
    values = [kolmogorov_pvalue(D, 50, 50) for D in np.linspace(0.0, 1.0, 101)]
    assert values[0] == 1.0
    assert all(later <= earlier + 1e-9 for earlier, later in zip(values, values[1:]))
    assert all(0.0 <= p <= 1.0 for p in values)


def test_empty_sample():
    with pytest.raises(DataError):
        ks_two_sample([], [1.0])


# ─── STD & IMPORTANCES ─────────────────────────────────────────────
def test_std_identity_and_scaling(labelled_pair):
    same = std_compare(labelled_pair, labelled_pair)
    assert np.all(same['std_abs_diff'] == 0.0)
    X = labelled_pair.X.copy()
    X[:, 1] *= 2
    scaled = std_compare(labelled_pair, make_dataset(X, labelled_pair.y))
    assert scaled['synth_std'].iloc[1] == pytest.approx(2 * scaled['real_std'].iloc[1], rel=1e-12)


def test_std_five_row_oracle():
    real = make_dataset(np.array([[1.0], [2.0], [4.0], [7.0], [11.0]]))
    synth = make_dataset(np.array([[0.0], [0.0], [3.0], [3.0], [9.0]]))
    row = std_compare(real, synth).iloc[0]
    mean_r, mean_s = 5.0, 3.0
    std_r = math.sqrt(sum((v - mean_r) ** 2 for v in [1, 2, 4, 7, 11]) / 5)
    std_s = math.sqrt(sum((v - mean_s) ** 2 for v in [0, 0, 3, 3, 9]) / 5)
    assert row['real_std'] == pytest.approx(std_r, abs=1e-12)
    assert row['synth_std'] == pytest.approx(std_s, abs=1e-12)
    assert row['std_abs_diff'] == pytest.approx(abs(std_r - std_s), abs=1e-12)


def test_column_mismatch(labelled_pair):
    other = make_dataset(labelled_pair.X, labelled_pair.y, feature_names=['a', 'b', 'c'])
    with pytest.raises(UnknownColumnError):
        std_compare(labelled_pair, other)


def test_importance_similarity_identity_and_permuted_target(labelled_pair):
    config = {'n_trees': 20}
    same = importance_similarity(labelled_pair, labelled_pair, config, seed=1)
    assert same.cosine == pytest.approx(1.0)
    assert same.spearman == pytest.approx(1.0)
    assert same.importance_real.sum() == pytest.approx(1.0, abs=1e-9)
    y = np.random.default_rng(3).permutation(labelled_pair.y)
    shuffled = importance_similarity(labelled_pair, make_dataset(labelled_pair.X, y), config, seed=1)
    assert shuffled.cosine < same.cosine - 0.05
    assert shuffled.importance_synth.sum() == pytest.approx(1.0, abs=1e-9)


def test_importance_needs_targets(labelled_pair):
    with pytest.raises(DataError):
        importance_similarity(labelled_pair, make_dataset(labelled_pair.X))

# ─── REPORT ────────────────────────────────────────────────────────
def test_identical_data_is_consistent(labelled_pair):
    report = fidelity_report(labelled_pair, labelled_pair, rf_config={'n_trees': 10})
    assert report.overall_verdict == 'consistent'
    assert all(f['ks_D'] == 0.0 for f in report.per_feature)
    assert report.rejected_features == []


def test_shifted_feature_is_rejected(labelled_pair):
    X = labelled_pair.X.copy()
    X[:, 2] += 5 * X[:, 2].std()
    report = fidelity_report(labelled_pair, make_dataset(X, labelled_pair.y), rf_config={'n_trees': 10})
    assert report.rejected_features == ['x2']
    assert report.overall_verdict == 'inconsistent'
    for feature in report.per_feature:
        assert (feature['verdict'] == 'rejected') == (feature['ks_p'] < report.alpha)


def test_report_document_validates(labelled_pair):
    report = fidelity_report(labelled_pair, labelled_pair, rf_config={'n_trees': 10})
    doc = json.loads(json.dumps(report.to_dict()))
    assert validate_report(doc)
    assert list(report.to_frame().columns)[:3] == ['name', 'ks_D', 'ks_p']
    assert list(report.importance_frame(labelled_pair.feature_names).columns) == ['feature', 'real', 'synth']


def test_schema_violations_are_listed(labelled_pair):
    doc = fidelity_report(labelled_pair, labelled_pair, rf_config={'n_trees': 10}).to_dict()
    doc['overall_verdict'] = 'maybe'
    doc['per_feature'][0]['ks_p'] = 1.5
    del doc['alpha']
    with pytest.raises(DataError) as excinfo:
        validate_report(doc)
    assert len(excinfo.value.details['violations']) == 3


def test_report_without_targets_uses_ks_only(labelled_pair):
    bare = make_dataset(labelled_pair.X)
    report = fidelity_report(bare, bare)
    assert report.importance_cosine is None
    assert 'importance' in report.provenance
    assert report.to_dict()['importance'] is None


def test_bad_alpha(labelled_pair):
    with pytest.raises(DataError):
        fidelity_report(labelled_pair, labelled_pair, alpha=1.5)


def test_mismatched_categorical_codes_are_rejected():
    rng = np.random.default_rng(6)
    real = make_dataset(rng.choice([0, 1, 2, 3], size=(200, 1), p=[0.7, 0.1, 0.1, 0.1]).astype(float))
    synth = make_dataset(rng.integers(0, 4, size=(200, 1)).astype(float))
    report = fidelity_report(real, synth, alpha=0.05)
    assert report.rejected_features == ['x0']


@pytest.mark.slow
def test_gan_output_on_gaussian_mixture_is_faithful():
    rng = np.random.default_rng(50)
    y = rng.integers(0, 2, 500)
    centers = np.array([[-1.5, 0.0], [1.5, 1.0]])
    X = centers[y] + rng.normal(scale=0.7, size=(500, 2))
    train, held_out = train_test_split(make_dataset(X, y), SplitSpec(0.3, True, 0))
    result = generate_data_pipe(train, train.y, cfg={'gen_x_times': 2}, seed=0)
    synth = make_dataset(result.gen_x.X, result.gen_y, class_names=['0', '1'])
    report = fidelity_report(held_out, synth, rf_config={'n_trees': 30})
    for feature in report.per_feature:
        assert feature['ks_D'] < 0.25
        assert feature['std_abs_diff'] < 0.3 * feature['real_std']
    assert report.importance_cosine >= 0.8
