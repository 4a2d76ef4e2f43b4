"""
Tests for data loading, normalization, splitting and synthetic data.
"""

import json
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from hqrn.data import (
    DataManifest,
    DataValidationError,
    Dataset,
    NormStats,
    load_column,
    load_table,
    read_split,
    split_dataset,
    split_sizes,
    synth_lognormal_regression,
    true_conditional_functional,
    true_conditional_quantile,
    write_manifest,
    write_splits,
    zscore_apply,
    zscore_fit,
    zscore_invert,
)
from hqrn.functionals import FunctionalRequest
from hqrn.scoring import ScoreParams

SYNTH_COEFFICIENTS = [-0.1, 0.3, -0.2, 0.25]


def _write_table(path):
    frame = pd.DataFrame({
        "id": [f"r{i}" for i in range(10)],
        "area": [50.0, 60.0, None, 80.0, 90.0, 100.0, 110.0, 120.0, 130.0, 140.0],
        "rooms": [1, 2, 3, 3, "n/a", 4, 4, 5, 5, 6],
        "price": [1.1e6, 1.3e6, 1.6e6, 1.8e6, 2.0e6, 2.2e6, 2.5e6, 2.7e6, 3.0e6, 3.2e6],
    })
    frame.to_csv(path, index=False)
    return path


def test_load_table_drops_incomplete_rows():
    """Ten rows with two incomplete give eight rows and a drop count of two."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = _write_table(Path(tmpdir) / "prices.csv")
        d = load_table(path, ["area", "rooms"], "price", target_scale=1e6, id_column="id")
    assert len(d) == 8
    assert d.dropped_rows == 2
    assert d.feature_names == ("area", "rooms")
    assert d.target[0] == pytest.approx(1.1)
    assert "r2" not in d.row_ids.tolist()
    assert "r4" not in d.row_ids.tolist()


def test_load_table_default_row_ids():
    """Without an id column the file row index is used."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = _write_table(Path(tmpdir) / "prices.csv")
        d = load_table(path, ["area"], "price")
    assert d.row_ids.tolist() == [0, 1, 3, 4, 5, 6, 7, 8, 9]
    assert d.target[0] == 1.1e6


def test_load_table_errors():
    """Missing file, missing columns and header-only files are reported."""
    with tempfile.TemporaryDirectory() as tmpdir:
        tmp = Path(tmpdir)
        with pytest.raises(FileNotFoundError):
            load_table(tmp / "absent.csv", ["area"], "price")

        path = _write_table(tmp / "prices.csv")
        with pytest.raises(DataValidationError):
            load_table(path, ["floor"], "price")
        with pytest.raises(DataValidationError):
            load_table(path, [], "price")

        header_only = tmp / "header.csv"
        header_only.write_text("area,price\n", encoding="utf-8")
        with pytest.raises(DataValidationError):
            load_table(header_only, ["area"], "price")


def test_load_column():
    """Numeric values of one column, non-numeric entries skipped."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = _write_table(Path(tmpdir) / "prices.csv")
        rooms = load_column(path, "rooms")
        assert rooms.size == 9
        with pytest.raises(DataValidationError):
            load_column(path, "floor")
        with pytest.raises(DataValidationError):
            load_column(path, "id")
        with pytest.raises(FileNotFoundError):
            load_column(Path(tmpdir) / "absent.csv", "rooms")


def test_dataset_validation():
    """Misaligned columns and rows are rejected."""
    with pytest.raises(DataValidationError):
        Dataset(np.ones((3, 2)), np.ones(2), ("a", "b"), np.arange(3))
    with pytest.raises(DataValidationError):
        Dataset(np.ones((3, 2)), np.ones(3), ("a",), np.arange(3))


def test_dataset_concat_and_frame(small_dataset):
    """Concatenation stacks rows; the frame has ids, features and target."""
    merged = Dataset.concat([small_dataset.subset(np.arange(10)), small_dataset.subset(np.arange(10, 20))])
    assert len(merged) == 20
    np.testing.assert_array_equal(merged.row_ids, np.arange(20))
    frame = merged.to_frame()
    assert list(frame.columns) == ["row_id", "x1", "x2", "x3", "price"]


def test_zscore_fit_and_apply(small_dataset):
    """Normalized training features have zero mean and unit variance; inversion restores them."""
    stats = zscore_fit(small_dataset)
    normalized = zscore_apply(small_dataset, stats)
    np.testing.assert_allclose(normalized.features.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(normalized.features.std(axis=0), 1.0, atol=1e-12)
    np.testing.assert_array_equal(normalized.target, small_dataset.target)
    np.testing.assert_allclose(zscore_invert(normalized, stats).features, small_dataset.features, atol=1e-12)
    assert stats.feature_names == ("x1", "x2", "x3")


def test_zscore_rejects_constant_feature():
    """Zero-variance features cannot be normalized."""
    d = Dataset(np.column_stack([np.arange(5.0), np.ones(5)]), np.arange(5.0), ("a", "b"), np.arange(5))
    with pytest.raises(DataValidationError, match="b"):
        zscore_fit(d)


def test_zscore_apply_width_mismatch(small_dataset):
    """Statistics fitted on another width are refused."""
    with pytest.raises(DataValidationError):
        zscore_apply(small_dataset, NormStats.identity(2))


def test_norm_stats_dict_round_trip(small_dataset):
    """Statistics survive to_dict/from_dict."""
    stats = zscore_fit(small_dataset)
    restored = NormStats.from_dict(json.loads(json.dumps(stats.to_dict())))
    np.testing.assert_array_equal(restored.mean, stats.mean)
    np.testing.assert_array_equal(restored.std, stats.std)
    with pytest.raises(ValueError):
        NormStats([0.0], [0.0])


def test_split_sizes():
    """Validation and test sizes round half up; training takes the rest."""
    assert split_sizes(8843, (0.4, 0.3, 0.3)) == (3537, 2653, 2653)
    assert split_sizes(10, (0.4, 0.3, 0.3)) == (4, 3, 3)
    assert split_sizes(3, (0.4, 0.3, 0.3)) == (1, 1, 1)
    with pytest.raises(DataValidationError):
        split_sizes(2)
    with pytest.raises(ValueError):
        split_sizes(10, (0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        split_sizes(10, (0.5, 0.5))


def test_split_is_a_partition(small_dataset):
    """For every seed the three sets are disjoint and cover all rows."""
    for seed in range(100):
        train, val, test = split_dataset(small_dataset, (0.4, 0.3, 0.3), seed)
        ids = np.concatenate([train.row_ids, val.row_ids, test.row_ids])
        assert sorted(ids.tolist()) == list(range(len(small_dataset)))
        assert (len(train), len(val), len(test)) == (24, 18, 18)


def test_split_is_seeded(small_dataset):
    """Same seed, same split; another seed, another split."""
    a = split_dataset(small_dataset, seed=4)[0]
    b = split_dataset(small_dataset, seed=4)[0]
    c = split_dataset(small_dataset, seed=5)[0]
    np.testing.assert_array_equal(a.row_ids, b.row_ids)
    assert not np.array_equal(a.row_ids, c.row_ids)


def test_normalization_uses_training_rows_only(small_dataset):
    """Statistics fitted on the training set ignore validation and test rows."""
    train, val, test = split_dataset(small_dataset, seed=0)
    stats = zscore_fit(train)
    np.testing.assert_allclose(stats.mean, train.features.mean(axis=0))
    shifted = Dataset.concat([train, val.with_features(val.features + 100.0), test])
    assert np.allclose(zscore_fit(train).mean, stats.mean)
    assert not np.allclose(zscore_fit(shifted).mean, stats.mean)


def test_synth_lognormal_regression():
    """Shapes, names, positivity and determinism of the generator."""
    d = synth_lognormal_regression(500, 3, SYNTH_COEFFICIENTS, 0.5, seed=1)
    assert d.features.shape == (500, 3)
    assert d.feature_names == ("x1", "x2", "x3")
    assert d.target_name == "price"
    assert np.all(d.target > 0.0)
    assert np.all((d.features >= 0.0) & (d.features <= 1.0))
    again = synth_lognormal_regression(500, 3, SYNTH_COEFFICIENTS, 0.5, seed=1)
    np.testing.assert_array_equal(d.target, again.target)
    with pytest.raises(ValueError):
        synth_lognormal_regression(10, 2, SYNTH_COEFFICIENTS, 0.5, seed=1)
    with pytest.raises(ValueError):
        synth_lognormal_regression(10, 3, SYNTH_COEFFICIENTS, 0.0, seed=1)


def test_synth_log_residuals_are_normal():
    """Log-residuals around the linear predictor have spread sigma."""
    d = synth_lognormal_regression(20_000, 3, SYNTH_COEFFICIENTS, 0.5, seed=2)
    mu = SYNTH_COEFFICIENTS[0] + d.features @ np.asarray(SYNTH_COEFFICIENTS[1:])
    residuals = np.log(d.target) - mu
    assert np.mean(residuals) == pytest.approx(0.0, abs=0.02)
    assert np.std(residuals) == pytest.approx(0.5, abs=0.02)


def test_true_conditional_quantile_coverage():
    """About tau of the synthetic targets fall below their true conditional quantile."""
    d = synth_lognormal_regression(20_000, 3, SYNTH_COEFFICIENTS, 0.5, seed=6)
    q = true_conditional_quantile(d.features, SYNTH_COEFFICIENTS, 0.5, 0.3)
    assert np.mean(d.target <= q) == pytest.approx(0.3, abs=0.015)


def test_true_conditional_functional_quantile_matches_closed_form(small_dataset):
    """The generic path agrees with the closed form for quantiles."""
    rows = small_dataset.features[:5]
    req = FunctionalRequest("quantile", ScoreParams(0.7))
    np.testing.assert_allclose(
        true_conditional_functional(rows, SYNTH_COEFFICIENTS, 0.5, req),
        true_conditional_quantile(rows, SYNTH_COEFFICIENTS, 0.5, 0.7),
        rtol=1e-12,
    )


def test_write_and_read_splits(small_dataset):
    """Each labelled partition reads back with its rows."""
    train, val, test = split_dataset(small_dataset, seed=0)
    with tempfile.TemporaryDirectory() as tmpdir:
        path = write_splits(train, val, test, Path(tmpdir) / "splits.csv")
        frame = pd.read_csv(path)
        assert frame["split"].value_counts().to_dict() == {"train": 24, "val": 18, "test": 18}
        back = read_split(path, "val", ["x1", "x2", "x3"], "price")
        np.testing.assert_array_equal(back.row_ids, val.row_ids)
        np.testing.assert_array_equal(back.target, val.target)
        with pytest.raises(DataValidationError):
            read_split(path, "holdout", ["x1", "x2", "x3"], "price")


def test_write_manifest():
    """The manifest records counts, seed and normalization method."""
    manifest = DataManifest("synthetic", 60, 0, 3, (0.4, 0.3, 0.3), {"train": 24, "val": 18, "test": 18},
                            ["x1"], "price")
    with tempfile.TemporaryDirectory() as tmpdir:
        path = write_manifest(manifest, Path(tmpdir) / "manifest.json")
        with open(path) as f:
            data = json.load(f)
    assert data["split_rows"]["val"] == 18
    assert data["normalization"] == "zscore"
    assert data["fractions"] == [0.4, 0.3, 0.3]
