import numpy as np
import pytest
from scipy import stats

from nrgnn.graph import generate_csbm, sample_split
from nrgnn.noise import NoiseSpec, apply_noise, corrupt


def test_rate_zero_is_identity():
    y = np.arange(20) % 4
    out = corrupt(y, np.ones(20, bool), NoiseSpec("uniform", 0.0, 1), 4)
    assert np.array_equal(out, y)


def test_pair_rate_one_maps_every_label():
    y = np.arange(12) % 4
    mask = np.ones(12, bool)
    mask[:2] = False
    out = corrupt(y, mask, NoiseSpec("pair", 1.0, 0), 4)
    assert np.array_equal(out[mask], (y[mask] + 1) % 4)
    assert np.array_equal(out[~mask], y[~mask])


def test_custom_pair_map_and_fixed_point():
    y = np.array([0, 1, 2, 0])
    out = corrupt(y, np.ones(4, bool), NoiseSpec("pair", 1.0, 0, pair_map=(2, 0, 1)), 3)
    np.testing.assert_array_equal(out, [2, 0, 1, 2])
    with pytest.raises(ValueError):
        corrupt(y, np.ones(4, bool), NoiseSpec("pair", 0.5, 0, pair_map=(0, 2, 1)), 3)


def test_uniform_flip_rate_and_target_distribution():
    n, c, p = 10_000, 5, 0.2
    y = np.random.default_rng(0).integers(0, c, size=n)
    out = corrupt(y, np.ones(n, bool), NoiseSpec("uniform", p, seed=7), c)
    flipped = out != y
    assert abs(flipped.mean() - p) <= 3 * np.sqrt(p * (1 - p) / n)
    # offset (target - source) mod C must be uniform over 1..C-1
    offsets = (out[flipped] - y[flipped]) % c
    counts = np.bincount(offsets, minlength=c)[1:]
    _, pval = stats.chisquare(counts)
    assert pval > 0.01
    assert np.all(offsets != 0)


def test_same_spec_same_output():
    y = np.arange(100) % 3
    a = corrupt(y, np.ones(100, bool), NoiseSpec("uniform", 0.3, 5), 3)
    b = corrupt(y, np.ones(100, bool), NoiseSpec("uniform", 0.3, 5), 3)
    assert np.array_equal(a, b)


def test_pair_and_uniform_share_flip_pattern():
    y = np.arange(200) % 4
    m = np.ones(200, bool)
    u = corrupt(y, m, NoiseSpec("uniform", 0.3, 9), 4)
    p = corrupt(y, m, NoiseSpec("pair", 0.3, 9), 4)
    assert np.array_equal(u != y, p != y)


def test_apply_noise_corrupts_train_and_val_only():
    g, y = generate_csbm(400, 4, 0.05, 0.005, 4, 1.0, seed=0)
    s = sample_split(g, y, 0.1, 0)
    n = apply_noise(s, NoiseSpec("uniform", 0.5, 3))
    lab = s.train_mask | s.val_mask
    assert np.any(n.noisy_labels[s.val_mask] != y[s.val_mask])
    assert np.any(n.noisy_labels[s.train_mask] != y[s.train_mask])
    assert np.all(n.noisy_labels[~lab] == -1)
    assert np.array_equal(n.true_labels, s.true_labels)


def test_parse_and_validation():
    spec = NoiseSpec.parse("pair:0.25", seed=4)
    assert (spec.kind, spec.rate, spec.seed) == ("pair", 0.25, 4)
    with pytest.raises(ValueError):
        NoiseSpec("gaussian", 0.1)
    with pytest.raises(ValueError):
        NoiseSpec("uniform", 1.5)
