import numpy as np
import pandas as pd
import pytest

from tabkit.data import (
    CATEGORICAL,
    NUMERIC,
    DuplicateColumnError,
    EmptyDatasetError,
    ImputationError,
    RaggedRowsError,
    RowCountMismatchError,
    SplitError,
    SplitSpec,
    UnknownColumnError,
    add_column,
    apply_metadata,
    column_ops,
    constant_columns,
    correlation_matrix,
    drop_columns,
    impute_missing,
    kfold_splits,
    load_csv,
    make_dataset,
    merge_datasets,
    profile,
    save_csv,
    select_columns,
    select_features_by_importance,
    split_indices,
    standardize,
    to_frame,
    to_metadata,
    train_test_split,
)
from utils import DataError


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_load_csv_infers_kinds_and_missing(toy_csv):
    ds = load_csv(toy_csv, "label")
    assert ds.n_rows == 60
    assert ds.feature_names == ["x1", "x2", "color"]
    assert [c.kind for c in ds.columns] == [NUMERIC, NUMERIC, CATEGORICAL]
    assert ds.has_missing
    assert np.isnan(ds.X[3, 1])
    assert sorted(ds.class_names) == ["no", "yes"]
    assert ds.target_name == "label"


def test_missing_markers_are_case_insensitive(tmp_path):
    ds = load_csv(_write(tmp_path, "a,b\n1,na\n2,NaN\n3,4\n"))
    assert np.isnan(ds.X[0, 1]) and np.isnan(ds.X[1, 1])
    assert ds.columns[1].kind == NUMERIC


def test_numeric_target_codes_follow_sorted_values(tmp_path):
    ds = load_csv(_write(tmp_path, "x,y\n1,2\n2,1\n3,2\n"), "y")
    assert ds.class_names == ["1", "2"]
    assert ds.y.tolist() == [1, 0, 1]


def test_text_target_codes_follow_first_appearance(tmp_path):
    ds = load_csv(_write(tmp_path, "x,y\n1,cat\n2,dog\n3,cat\n"), "y")
    assert ds.class_names == ["cat", "dog"]
    assert ds.y.tolist() == [0, 1, 0]


def test_empty_file(tmp_path):
    with pytest.raises(EmptyDatasetError, match="empty dataset"):
        load_csv(_write(tmp_path, ""))


def test_header_only_file(tmp_path):
    with pytest.raises(EmptyDatasetError):
        load_csv(_write(tmp_path, "a,b\n"))


def test_ragged_rows(tmp_path):
    with pytest.raises(RaggedRowsError):
        load_csv(_write(tmp_path, "a,b\n1,2\n3,4,5\n"))


def test_unknown_target(toy_csv):
    with pytest.raises(UnknownColumnError):
        load_csv(toy_csv, "nope")


def test_duplicate_columns_rejected():
    with pytest.raises(DuplicateColumnError):
        make_dataset(np.zeros((2, 2)), feature_names=["a", "a"])


def test_dataset_matrix_is_read_only(linear_ds):
    with pytest.raises(ValueError):
        linear_ds.X[0, 0] = 1.0


def test_impute_median_and_mode(toy_csv):
    ds = load_csv(toy_csv, "label")
    filled = impute_missing(ds, "median")
    assert not filled.has_missing
    present = ds.X[~np.isnan(ds.X[:, 1]), 1]
    assert filled.X[3, 1] == pytest.approx(np.median(present))
    assert filled.columns[1].impute_value == pytest.approx(np.median(present))
    assert ds.has_missing  # input untouched


def test_impute_constant_adds_category(tmp_path):
    ds = load_csv(_write(tmp_path, "c\nred\nNA\nblue\n"))
    filled = impute_missing(ds, "constant:unknown")
    assert filled.columns[0].categories == ["red", "blue", "unknown"]
    assert filled.X[1, 0] == 2.0


def test_impute_all_missing_column(tmp_path):
    ds = load_csv(_write(tmp_path, "a,b\n1,NA\n2,NA\n"))
    with pytest.raises(ImputationError):
        impute_missing(ds, "median")


def test_impute_unknown_policy(toy_csv):
    with pytest.raises(ImputationError):
        impute_missing(load_csv(toy_csv, "label"), "mean")


def test_standardize_uses_train_statistics():
    train = make_dataset(np.array([[1.0, 5.0], [3.0, 5.0]]))
    test = make_dataset(np.array([[5.0, 5.0]]))
    scaled, (scaled_test,) = standardize(train, [test])
    assert scaled.X[:, 0].tolist() == [-1.0, 1.0]
    assert scaled_test.X[0, 0] == pytest.approx(3.0)
    # constant column flagged and left as is
    assert scaled.columns[1].constant
    assert scaled.X[:, 1].tolist() == [5.0, 5.0]
    assert constant_columns(train) == ["x1"]


def test_split_sizes_and_disjointness(linear_ds):
    train_idx, test_idx = split_indices(linear_ds, SplitSpec(0.25, False, 3))
    assert len(test_idx) == 30 and len(train_idx) == 90
    assert not set(train_idx) & set(test_idx)
    again = split_indices(linear_ds, SplitSpec(0.25, False, 3))
    assert np.array_equal(test_idx, again[1])


def test_stratified_split_keeps_every_class(three_class_ds):
    train, test = train_test_split(three_class_ds, SplitSpec(0.2, True, 0))
    assert test.n_rows == 18
    assert set(test.y.tolist()) == {0, 1, 2}
    assert np.bincount(test.y).tolist() == [6, 6, 6]


def test_stratified_split_single_member_class():
    ds = make_dataset(np.arange(6, dtype=float).reshape(-1, 1), [0, 0, 0, 0, 0, 1])
    with pytest.raises(SplitError):
        split_indices(ds, SplitSpec(0.5, True, 0))


def test_split_bad_fraction(linear_ds):
    with pytest.raises(SplitError):
        split_indices(linear_ds, SplitSpec(1.0))


def test_kfold_partitions_rows():
    folds = kfold_splits(10, 3, seed=1)
    sizes = [len(valid) for _, valid in folds]
    assert sizes == [4, 3, 3]
    assert sorted(np.concatenate([v for _, v in folds]).tolist()) == list(range(10))
    for train, valid in folds:
        assert len(train) + len(valid) == 10


def test_kfold_bad_k():
    with pytest.raises(SplitError):
        kfold_splits(3, 4)


def test_column_helpers(linear_ds):
    picked = select_columns(linear_ds, ["x2", "x0"])
    assert picked.feature_names == ["x2", "x0"]
    assert np.array_equal(picked.X[:, 1], linear_ds.X[:, 0])
    dropped = drop_columns(linear_ds, ["x1"])
    assert dropped.feature_names == ["x0", "x2", "x3"]
    added = add_column(linear_ds, "group", ["a", "b"] * 60, CATEGORICAL)
    assert added.columns[-1].categories == ["a", "b"]
    with pytest.raises(DuplicateColumnError):
        add_column(linear_ds, "x0", np.zeros(120))
    with pytest.raises(RowCountMismatchError):
        add_column(linear_ds, "z", [1, 2])
    with pytest.raises(UnknownColumnError):
        column_ops(linear_ds, "drop", ["missing"])


def test_merge_keyed_inner_join():
    left = make_dataset(np.array([[1.0, 10.0], [2.0, 20.0], [3.0, 30.0]]), feature_names=["id", "a"])
    right = make_dataset(np.array([[3.0, 0.3], [1.0, 0.1]]), feature_names=["id", "b"])
    merged = merge_datasets(left, right, on="id")
    assert merged.feature_names == ["id", "a", "b"]
    assert merged.X.tolist() == [[1.0, 10.0, 0.1], [3.0, 30.0, 0.3]]


def test_merge_keyless_needs_equal_rows():
    left = make_dataset(np.zeros((3, 1)), feature_names=["a"])
    right = make_dataset(np.zeros((2, 1)), feature_names=["b"])
    with pytest.raises(RowCountMismatchError):
        merge_datasets(left, right)


def test_select_features_by_importance(linear_ds):
    kept = select_features_by_importance(linear_ds, [0.6, 0.4, 0.0, 0.0])
    assert kept.feature_names == ["x0", "x1"]
    with pytest.raises(DataError):
        select_features_by_importance(linear_ds, [0, 0, 0, 0])


def test_correlation_matrix():
    X = np.array([[1.0, 2.0, 7.0], [2.0, 4.0, 7.0], [3.0, 6.5, 7.0]])
    corr = correlation_matrix(make_dataset(X))
    assert np.allclose(np.diag(corr), 1.0)
    assert corr[0, 1] > 0.99
    assert corr[0, 2] == 0.0
    assert np.allclose(corr, corr.T)


def test_correlation_rejects_missing(toy_csv):
    with pytest.raises(DataError):
        correlation_matrix(load_csv(toy_csv, "label"))


def test_profile_reports_missing_and_balance(toy_csv):
    summary = profile(load_csv(toy_csv, "label"))
    assert summary["missing_cells"] == 1
    by_name = {c["name"]: c for c in summary["columns"]}
    assert by_name["x2"]["missing"] == 1
    assert set(by_name["color"]["categories"]) == {"red", "blue"}
    assert sum(summary["class_balance"].values()) == 60


def test_save_csv_round_trip(tmp_path, three_class_ds):
    path = save_csv(three_class_ds, tmp_path / "out.csv")
    back = load_csv(path, "target")
    assert back.feature_names == three_class_ds.feature_names
    assert np.array_equal(back.X, three_class_ds.X)
    assert [back.class_names[c] for c in back.y] == [three_class_ds.class_names[c] for c in three_class_ds.y]


def test_apply_metadata_reuses_training_encoders(tmp_path):
    train = load_csv(_write(tmp_path, "c,v\nred,1\nblue,NA\nred,3\n", "train.csv"))
    train = impute_missing(train, "median")
    fresh = load_csv(_write(tmp_path, "c,v\nblue,5\nred,NA\n", "new.csv"))
    aligned = apply_metadata(fresh, to_metadata(train))
    assert aligned.X[:, 0].tolist() == [1.0, 0.0]
    assert aligned.X[1, 1] == 2.0


def test_to_frame_decodes_categories(toy_csv):
    frame = to_frame(load_csv(toy_csv, "label"))
    assert list(frame.columns) == ["x1", "x2", "color", "label"]
    assert set(frame["color"]) == {"red", "blue"}
    assert isinstance(frame, pd.DataFrame)
