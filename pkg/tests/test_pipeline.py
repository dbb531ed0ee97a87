"""Tests for waveform conditioning, masking and feature assembly."""

import numpy as np
import pytest

from lrc.errors import ConfigError
from lrc.pipeline import (
    FeatureMatrix,
    MaskConfig,
    apply_mask,
    apply_normalizer,
    assemble_features,
    fit_normalizer,
    make_mask,
    oversample,
    sample_nodes,
    speed_penalty,
)


def test_normalizer_maps_train_min_max_to_unit():
    x = np.array([3.0, 7.0, 5.0, 4.0])
    rec = fit_normalizer(x)
    y = apply_normalizer(x, rec)
    assert y.min() == 0.0
    assert y.max() == 1.0
    assert np.all((y >= 0) & (y <= 1))


def test_normalizer_rejects_degenerate():
    with pytest.raises(ValueError, match="degenerate"):
        fit_normalizer(np.full(10, 2.5))
    with pytest.raises(ValueError, match="empty"):
        fit_normalizer(np.array([]))
    with pytest.raises(ValueError, match="non-finite"):
        fit_normalizer(np.array([0.0, np.nan]))


def test_normalizer_clamps_test_overshoot():
    rec = fit_normalizer(np.array([0.0, 1.0]))
    y = apply_normalizer(np.array([-5.0, 0.5, 5.0]), rec)
    assert y[0] == -0.1
    assert y[1] == 0.5
    assert y[2] == 1.1


def test_normalizer_matched_distribution_rarely_clamps():
    rng = np.random.default_rng(0)
    train = rng.normal(0, 1, 100_000)
    test = rng.normal(0, 1, 100_000)
    rec = fit_normalizer(train)
    y = apply_normalizer(test, rec)
    clamped = np.mean((y <= 0) | (y >= 1))
    assert clamped <= 1e-3


def test_oversample_zero_order_hold():
    x = np.array([1.0, 2.0])
    np.testing.assert_array_equal(oversample(x, 2), [1.0, 1.0, 2.0, 2.0])
    np.testing.assert_array_equal(oversample(x, 1), x)
    assert oversample(np.zeros(8), 4).size == 32
    with pytest.raises(ValueError):
        oversample(x, 0)


def test_mask_construction():
    m = make_mask(32, "uniform", rng_seed=1)
    assert m.n_nodes == 32
    assert m.values.min() >= 0 and m.values.max() <= 1
    b = make_mask(32, "binary", rng_seed=1)
    assert set(np.unique(b.values)) <= {0.0, 1.0}
    # reproducible and seed-sensitive
    np.testing.assert_array_equal(m.values, make_mask(32, "uniform", rng_seed=1).values)
    assert not np.array_equal(m.values, make_mask(32, "uniform", rng_seed=2).values)
    with pytest.raises(ConfigError, match="kind"):
        make_mask(32, "gaussian")
    with pytest.raises(ConfigError, match="\\[0, 1\\]"):
        MaskConfig(values=np.array([0.5, 1.5]), rng_seed=0)


def test_apply_mask_per_baud():
    mask = MaskConfig(values=np.array([1.0, 0.0, 0.5, 1.0]), rng_seed=0)
    s = np.arange(8, dtype=float)  # two bauds of four slots
    out = apply_mask(s, mask)
    np.testing.assert_allclose(out, [[0, 0, 1.0, 3], [4, 0, 3.0, 7]])
    with pytest.raises(ValueError, match="multiple"):
        apply_mask(np.zeros(7), mask)


def test_apply_mask_identity_and_zero():
    ones = MaskConfig(values=np.ones(4), rng_seed=0)
    zeros = MaskConfig(values=np.zeros(4), rng_seed=0)
    s = np.arange(12, dtype=float)
    np.testing.assert_array_equal(apply_mask(s, ones).ravel(), s)
    assert np.all(apply_mask(s, zeros) == 0)


def test_sample_nodes_slot_end_index():
    # theta = 50 ps at dt = 0.5 ps: node value is the sample at offset 99
    sps, n = 100, 4
    trace = np.arange(2 * n * sps, dtype=float)
    out = sample_nodes(trace, sps, n)
    assert out.shape == (2, 4)
    assert out[0, 0] == 99.0
    assert out[1, 3] == 2 * n * sps - 1
    np.testing.assert_array_equal(out.ravel(), trace[sps - 1 :: sps])


def test_sample_nodes_rejects_misaligned():
    with pytest.raises(ValueError, match="whole number"):
        sample_nodes(np.zeros(150), 100, 4)
    const = sample_nodes(np.ones(800), 100, 4)
    assert np.all(const == 1.0)


def test_assemble_features_shapes_and_padding():
    nodes = np.arange(12, dtype=float).reshape(4, 3)
    fm = assemble_features(nodes, k=1)
    assert fm.data.shape == (4, 3 * 3 + 1)
    # first row: previous block zero-padded, bias 1
    np.testing.assert_array_equal(fm.data[0, :3], 0.0)
    np.testing.assert_array_equal(fm.data[0, 3:6], nodes[0])
    np.testing.assert_array_equal(fm.data[0, 6:9], nodes[1])
    assert fm.data[0, -1] == 1.0
    # last row: next block zero-padded
    np.testing.assert_array_equal(fm.data[-1, 6:9], 0.0)
    # k=0 keeps just the nodes and bias
    fm0 = assemble_features(nodes, k=0)
    assert fm0.data.shape == (4, 4)
    np.testing.assert_array_equal(fm0.data[:, :3], nodes)


def test_assemble_features_default_geometry():
    nodes = np.random.default_rng(0).uniform(size=(64, 32))
    fm = assemble_features(nodes, k=10)
    assert fm.data.shape == (64, 673)
    assert len(fm.column_names) == 673
    assert fm.column_names[0] == "node0_tap-10"
    assert fm.column_names[-2] == "node31_tap10"
    assert fm.column_names[-1] == "bias"


def test_tap_window_shift_property():
    # shifting the input one symbol shifts feature rows by one, edges aside
    rng = np.random.default_rng(1)
    nodes = rng.uniform(size=(30, 8))
    shifted = np.roll(nodes, 1, axis=0)
    a = assemble_features(nodes, k=3).data
    b = assemble_features(shifted, k=3).data
    np.testing.assert_array_equal(b[5:25], a[4:24])


def test_feature_csv_round_trip(tmp_path):
    nodes = np.random.default_rng(2).uniform(size=(6, 4))
    fm = assemble_features(nodes, k=2)
    path = tmp_path / "features.csv"
    fm.to_csv(path)
    header = path.read_text().splitlines()[0].split(",")
    assert header == fm.column_names
    back = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_array_equal(back, fm.data)


def test_speed_penalty_values():
    assert speed_penalty(56.0, 0.8) == pytest.approx(22.4)
    assert speed_penalty(56.0, 1.6) == pytest.approx(44.8)
    assert speed_penalty(10.0, 1.0) == pytest.approx(5.0)
