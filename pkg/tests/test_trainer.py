from dataclasses import replace

import numpy as np
import pytest

from nrgnn.densify import Thresholds
from nrgnn.graph import LabelSplit, generate_csbm, sample_split
from nrgnn.noise import NoiseSpec, apply_noise
from nrgnn.trainer import (
    NRGNN,
    TrainConfig,
    TrainingDivergence,
    evaluate,
    run_ablation,
    train_cosine_link,
    train_nrgnn,
    train_plain,
    variant_config,
)


def problem(seed=0, noise=0.2, n=300, label_rate=0.1):
    g, y = generate_csbm(n, 3, 0.05, 0.005, 20, 1.0, seed=seed)
    split = sample_split(g, y, label_rate, seed)
    if noise:
        split = apply_noise(split, NoiseSpec("uniform", noise, seed))
    return g, split


FAST = TrainConfig(pretrain_epochs=10, epochs=40, K=5)
OFF = Thresholds(edge=float("inf"), confidence=0.8)


class Oracle:
    def __init__(self, logits):
        self.logits = logits

    def predict(self, g_eval=None):
        return self.logits


def test_evaluate_oracle_and_chance():
    y = np.tile(np.arange(4), 25)
    test = np.ones(100, bool)
    split = LabelSplit(y, np.full(100, -1), np.zeros(100, bool), np.zeros(100, bool), test, 4)
    assert evaluate(Oracle(np.eye(4)[y]), None, split) == 1.0
    const = np.zeros((100, 4))
    const[:, 2] = 1.0
    assert evaluate(Oracle(const), None, split) == 0.25


def test_evaluate_permutation_invariant():
    g, split = problem()
    res, _ = train_nrgnn(g, split, FAST)
    acc = evaluate(res, res.graph, split)
    perm = np.random.default_rng(0).permutation(g.num_nodes)
    gp = res.graph.permuted(perm)
    assert evaluate(res, gp, split.permuted(perm)) == pytest.approx(acc)


def test_evaluate_empty_test_mask():
    y = np.zeros(3, int)
    split = LabelSplit(y, y, np.ones(3, bool), np.zeros(3, bool), np.zeros(3, bool), 2)
    with pytest.raises(ValueError, match="empty test mask"):
        evaluate(Oracle(np.zeros((3, 2))), None, split)


def test_degenerate_config_is_plain_gcn():
    g, split = problem()
    cfg = replace(FAST, alpha=0.0, beta=0.0, pseudo_mode="none", thresholds=OFF)
    _, m = train_nrgnn(g, split, cfg)
    p = train_plain(g, split, cfg)
    assert m.added_edges == 0 and m.pseudo_count == 0
    assert m.test_acc == p.test_acc
    assert m.history["L_G"] == p.history["L_G"]


def test_bit_identical_reruns():
    g, split = problem(seed=1)
    _, a = train_nrgnn(g, split, FAST)
    _, b = train_nrgnn(g, split, FAST)
    assert a.to_dict() == b.to_dict()


def test_true_labels_never_read():
    g, split = problem(seed=2)
    # scramble every true label outside train/val; training must not notice
    y = split.true_labels.copy()
    hidden = ~(split.train_mask | split.val_mask)
    y[hidden] = np.random.default_rng(0).integers(0, 3, hidden.sum())
    other = LabelSplit(y, split.noisy_labels, split.train_mask, split.val_mask, split.test_mask, 3)
    ra, _ = train_nrgnn(g, split, FAST)
    rb, _ = train_nrgnn(g, other, FAST)
    assert ra.history == rb.history
    assert np.array_equal(ra.logits, rb.logits)
    assert "true_labels" not in NRGNN.__init__.__code__.co_varnames


def test_divergence_names_epoch_and_component():
    g, split = problem()
    with pytest.raises(TrainingDivergence) as err:
        train_plain(g, split, replace(FAST, lr=1e300))
    assert err.value.component == "L_G" and err.value.epoch >= 0


def test_joint_loss_decreases_early():
    g, split = problem(seed=3)
    res, _ = train_nrgnn(g, split, replace(TrainConfig(), epochs=10))
    tot = res.history["total"]
    assert tot[-1] < tot[0]


def test_zero_noise_no_edges_matches_plain():
    gaps = []
    for s in range(5):
        g, split = problem(seed=s, noise=0.0)
        cfg = replace(TrainConfig(), thresholds=OFF, seed=s)
        _, m = train_nrgnn(g, split, cfg)
        assert m.added_edges == 0
        gaps.append(m.test_acc - train_plain(g, split, cfg).test_acc)
    assert abs(np.mean(gaps)) * 100 <= 1.0


def test_pseudo_labels_beat_training_noise():
    g, split = problem(seed=0, noise=0.3)
    _, m = train_nrgnn(g, split, TrainConfig())
    assert m.pseudo_count > 0
    assert m.pseudo_acc > 1 - 0.3


def test_history_components_nonnegative():
    g, split = problem()
    res, m = train_nrgnn(g, split, FAST)
    for k in ("L_G", "L_E", "L_P"):
        assert min(res.history[k]) >= 0
    assert 0 <= m.test_acc <= 1 and 0 <= m.val_acc <= 1


@pytest.mark.parametrize("mode", ["link_VL", "link_VU", "link_VA"])
def test_cosine_link_modes_run(mode):
    g, split = problem()
    m = train_cosine_link(g, split, mode, cfg=FAST)
    assert 0 <= m.test_acc <= 1 and "initial" in m.variants
    if mode == "link_VL":
        assert "retrain" in m.variants
    with pytest.raises(ValueError):
        train_cosine_link(g, split, mode, sim_threshold=(), cfg=FAST)


def test_unknown_link_mode():
    g, split = problem()
    with pytest.raises(ValueError):
        train_cosine_link(g, split, "link_XX", cfg=FAST)


@pytest.mark.parametrize("variant", ["NRGNN_GIN", "no_edge_predictor", "no_pseudo", "plain_miner"])
def test_ablation_variants_run(variant):
    g, split = problem()
    m = run_ablation(variant, g, split, FAST)
    assert 0 <= m.test_acc <= 1
    if variant == "no_pseudo":
        assert m.pseudo_count == 0


def test_variant_switches():
    assert variant_config("NRGNN_GIN", FAST).classifier_kind == "GIN"
    assert variant_config("no_edge_predictor", FAST).edge_source == "cosine"
    with pytest.raises(ValueError):
        run_ablation("NRGNN_GAT", *problem(), FAST)


def test_config_round_trip_and_validation():
    cfg = TrainConfig(alpha=0.1, thresholds=Thresholds(0.2, 0.9))
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        TrainConfig(alpha=-1)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
