import copy
import math

import numpy as np
import pytest

from rlbl.data import Event, build_corpus
from rlbl.model import init_rlbl_params
from rlbl.time_aware import init_ta_rlbl_params
from rlbl.training import (
    GradientBundle,
    NumericError,
    SamplingError,
    TrainConfig,
    TrainingInstance,
    _apply_update,
    _train_instance,
    _undo_update,
    bpr_pair_loss,
    gradient_check,
    instance_gradients,
    instance_loss,
    sample_negative,
    sgd_epoch,
    train,
    training_positions,
)


def tiny_corpus(n_users=4, n_items=12, n_behaviors=3, length=14, seed=0):
    rng = np.random.default_rng(seed)
    events = []
    for u in range(n_users):
        ts = 0
        for _ in range(length):
            ts += int(rng.integers(300, 9000))
            events.append(Event(user=f"u{u}", item=f"i{rng.integers(n_items)}",
                                behavior=int(rng.integers(n_behaviors)), timestamp=ts))
    return build_corpus(events)


def tiny_params(corpus, d=4, n=2, seed=0, ta=False):
    if ta:
        return init_ta_rlbl_params(corpus.n_users, corpus.n_items, corpus.n_behaviors,
                                   d=d, n=n, seed=seed, bin_width=3600.0, n_bins=4)
    return init_rlbl_params(corpus.n_users, corpus.n_items, corpus.n_behaviors,
                            d=d, n=n, seed=seed)


def an_instance(corpus, user=0, k=4):
    seq = corpus.sequences[user]
    return TrainingInstance(user, k, int(seq.behaviors[k]), int(seq.items[k]),
                            (int(seq.items[k]) + 1) % corpus.n_items)


# --- loss ------------------------------------------------------------------

def test_loss_at_zero_margin_is_ln2():
    assert bpr_pair_loss(0.0, 0.0) == pytest.approx(math.log(2.0), rel=1e-15)
    assert bpr_pair_loss(3.7, 3.7) == pytest.approx(math.log(2.0), rel=1e-15)


def test_loss_tails():
    assert bpr_pair_loss(50.0, 0.0) == pytest.approx(math.exp(-50.0), rel=1e-10)
    assert bpr_pair_loss(0.0, 50.0) == pytest.approx(50.0 + math.exp(-50.0), rel=1e-12)
    # no overflow at extreme margins
    assert bpr_pair_loss(0.0, 1000.0) == pytest.approx(1000.0)
    assert bpr_pair_loss(1000.0, 0.0) == 0.0


def test_loss_depends_only_on_margin():
    for c in (-100.0, -1.0, 0.5, 42.0):
        assert bpr_pair_loss(1.2 + c, 0.3 + c) == pytest.approx(
            bpr_pair_loss(1.2, 0.3), rel=1e-12)


def test_loss_monotone_decreasing_in_margin():
    vals = [bpr_pair_loss(m, 0.0) for m in (-2.0, -1.0, 0.0, 1.0, 2.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_instance_loss_zero_params_is_ln2():
    c = tiny_corpus()
    p = tiny_params(c)
    for arr in (p.user_vecs, p.item_vecs, p.W, p.C, p.M, p.u0):
        arr[...] = 0.0
    cfg = TrainConfig(lam=0.0, learning_rate=0.1)
    inst = an_instance(c)
    assert instance_loss(p, c.sequences[0], inst, cfg) == pytest.approx(math.log(2.0))


def test_regularization_added_to_loss():
    c = tiny_corpus()
    p = tiny_params(c)
    inst = an_instance(c)
    seq = c.sequences[0]
    base = instance_loss(p, seq, inst, TrainConfig(lam=0.0, learning_rate=0.1))
    reg = instance_loss(p, seq, inst, TrainConfig(lam=0.5, learning_rate=0.1))
    assert reg > base


# --- negative sampling -----------------------------------------------------

def test_sample_negative_never_returns_positive():
    c = tiny_corpus()
    rng = np.random.default_rng(1)
    pos = int(c.sequences[0].items[3])
    for _ in range(500):
        assert sample_negative(c, 0, 3, 0, rng) != pos


def test_sample_negative_uniform_over_remaining():
    c = tiny_corpus(n_items=6, length=30)
    rng = np.random.default_rng(2)
    pos = int(c.sequences[0].items[3])
    n = 30000
    counts = np.zeros(c.n_items)
    for _ in range(n):
        counts[sample_negative(c, 0, 3, 0, rng)] += 1
    assert counts[pos] == 0
    m = c.n_items - 1
    expect = n / m
    sigma = math.sqrt(n * (1 / m) * (1 - 1 / m))
    others = np.delete(counts, pos)
    assert np.all(np.abs(others - expect) <= 3.0 * sigma)


def test_sample_negative_needs_two_items():
    events = [Event("u", "only", 0, t) for t in range(5)]
    c = build_corpus(events)
    with pytest.raises(SamplingError):
        sample_negative(c, 0, 1, 0, np.random.default_rng(0))


# --- gradients vs finite differences ---------------------------------------

@pytest.mark.parametrize("ta", [False, True])
@pytest.mark.parametrize("lam", [0.0, 0.01])
def test_gradient_check_passes(ta, lam):
    c = tiny_corpus(seed=3)
    p = tiny_params(c, ta=ta, seed=3)
    cfg = TrainConfig(lam=lam, learning_rate=0.1)
    inst = an_instance(c, user=1, k=6)
    rep = gradient_check(p, c.sequences[1], 6, inst, cfg=cfg)
    assert rep.passed, rep.max_rel_error


def test_gradient_check_short_position():
    # k < n exercises the truncated-window grounding branch
    c = tiny_corpus(seed=4)
    p = tiny_params(c, n=3, seed=4)
    inst = an_instance(c, user=2, k=2)
    rep = gradient_check(p, c.sequences[2], 2, inst, cfg=TrainConfig(lam=0.01, learning_rate=0.1))
    assert rep.passed, rep.max_rel_error


def test_gradient_check_negative_control():
    # a corrupted bundle must fail the finite-difference comparison
    c = tiny_corpus(seed=5)
    p = tiny_params(c, seed=5)
    cfg = TrainConfig(lam=0.01, learning_rate=0.1)
    inst = an_instance(c, user=0, k=5)
    bad = instance_gradients(p, c.sequences[0], inst, cfg).scale(-1.0)
    rep = gradient_check(p, c.sequences[0], 5, inst, cfg=cfg, analytic_bundle=bad)
    assert not rep.passed


def test_truncation_full_depth_matches_untruncated():
    c = tiny_corpus(seed=6)
    p = tiny_params(c, seed=6)
    cfg_full = TrainConfig(lam=0.01, learning_rate=0.1, bptt_truncation=None)
    cfg_deep = TrainConfig(lam=0.01, learning_rate=0.1, bptt_truncation=100)
    inst = an_instance(c, user=0, k=8)
    a = instance_gradients(p, c.sequences[0], inst, cfg_full)
    b = instance_gradients(p, c.sequences[0], inst, cfg_deep)
    assert np.array_equal(a.W, b.W)
    assert np.array_equal(a.trans, b.trans)
    assert np.array_equal(a.u0, b.u0)


def test_truncation_zero_keeps_only_output_layer():
    c = tiny_corpus(seed=7)
    p = tiny_params(c, seed=7)
    cfg = TrainConfig(lam=0.0, learning_rate=0.1, bptt_truncation=0)
    inst = an_instance(c, user=0, k=8)
    b = instance_gradients(p, c.sequences[0], inst, cfg)
    assert np.array_equal(b.W, np.zeros_like(b.W))
    assert np.array_equal(b.trans, np.zeros_like(b.trans))
    assert np.array_equal(b.u0, np.zeros_like(b.u0))
    # output-layer pieces are still present
    assert inst.user_id in b.user_rows
    assert not np.array_equal(b.M, np.zeros_like(b.M))


# --- updates ---------------------------------------------------------------

def test_apply_undo_roundtrip():
    c = tiny_corpus(seed=8)
    p = tiny_params(c, seed=8)
    cfg = TrainConfig(lam=0.01, learning_rate=0.2)
    inst = an_instance(c, user=0, k=5)
    snap = copy.deepcopy(p)
    bundle = instance_gradients(p, c.sequences[0], inst, cfg)
    undo = _apply_update(p, bundle, 0.2, cfg)
    assert not np.array_equal(p.W, snap.W)
    _undo_update(p, undo)
    for name in ("user_vecs", "item_vecs", "W", "C", "M", "u0"):
        assert np.array_equal(getattr(p, name), getattr(snap, name)), name


def test_pure_regularization_step_is_shrinkage():
    # with identical item vectors the pairwise signal vanishes and one fixed
    # step multiplies W, the transition stack, u0 and u_u by (1 - eta*lam)
    c = tiny_corpus(seed=9)
    p = tiny_params(c, seed=9)
    p.item_vecs[:] = p.item_vecs[0]
    lam, eta = 0.1, 0.5
    cfg = TrainConfig(lam=lam, learning_rate=eta, lr_policy="fixed",
                      shared_reg="per-instance")
    inst = an_instance(c, user=0, k=4)
    W0, C0, u00 = p.W.copy(), p.C.copy(), p.u0.copy()
    uu0 = p.user_vecs[inst.user_id].copy()
    _train_instance(p, c.sequences[0], inst, cfg)
    f = 1.0 - eta * lam
    assert np.allclose(p.W, f * W0, atol=1e-12)
    assert np.allclose(p.C, f * C0, atol=1e-12)
    assert np.allclose(p.u0, f * u00, atol=1e-12)
    assert np.allclose(p.user_vecs[inst.user_id], f * uu0, atol=1e-12)


def test_per_epoch_reg_amortizes_shared_decay():
    # with all vectors zeroed the data gradients vanish at every step, so
    # only the lambda terms act: over one epoch of N instances
    # "per-instance" decays W by (1-eta*lam)^N while "per-epoch" applies
    # (1-eta*lam/N)^N ~ one full unit of decay in total
    c = tiny_corpus(seed=19)
    lam, eta = 0.1, 0.1
    n_inst = sum(len(training_positions(c, u)) for u in range(c.n_users))
    results = {}
    for mode in ("per-instance", "per-epoch"):
        p = tiny_params(c, seed=19)
        p.user_vecs[...] = 0.0
        p.item_vecs[...] = 0.0
        p.u0[...] = 0.0
        W0 = p.W.copy()
        cfg = TrainConfig(lam=lam, learning_rate=eta, shared_reg=mode)
        sgd_epoch(p, c, cfg, np.random.default_rng(0))
        results[mode] = np.linalg.norm(p.W) / np.linalg.norm(W0)
    assert results["per-instance"] == pytest.approx((1 - eta * lam) ** n_inst, rel=1e-9)
    assert results["per-epoch"] == pytest.approx((1 - eta * lam / n_inst) ** n_inst, rel=1e-9)


def test_frozen_behavior_mats():
    c = tiny_corpus(seed=10)
    p = tiny_params(c, seed=10)
    cfg = TrainConfig(lam=0.01, learning_rate=0.1, train_behavior_mats=False)
    M0 = p.M.copy()
    train(p, c, cfg)
    assert np.array_equal(p.M, M0)


def test_backtracking_never_increases_instance_loss():
    c = tiny_corpus(seed=11)
    p = tiny_params(c, seed=11)
    cfg = TrainConfig(lam=0.01, learning_rate=50.0, lr_policy="backtracking")
    inst = an_instance(c, user=0, k=5)
    seq = c.sequences[0]
    loss0, step = _train_instance(p, seq, inst, cfg)
    if step is not None:
        assert instance_loss(p, seq, inst, cfg) <= loss0 + 1e-12
        assert step <= 50.0


def test_numeric_error_on_nonfinite_params():
    c = tiny_corpus(seed=12)
    p = tiny_params(c, seed=12)
    p.W[0, 0] = np.nan
    with np.errstate(invalid="ignore"), pytest.raises(NumericError):
        sgd_epoch(p, c, TrainConfig(learning_rate=0.1), np.random.default_rng(0))


# --- epoch-level behavior ---------------------------------------------------

def test_training_positions_cover_training_segment():
    c = tiny_corpus(seed=13)
    pos = list(training_positions(c, 0))
    assert pos[0] == 1
    assert pos[-1] == int(c.train_end[0]) - 1


def test_train_is_deterministic_given_seed():
    c = tiny_corpus(seed=14)
    cfg = TrainConfig(lam=0.01, learning_rate=0.05, epochs=2, rng_seed=3)
    p1 = tiny_params(c, seed=14)
    p2 = tiny_params(c, seed=14)
    train(p1, c, cfg)
    train(p2, c, cfg)
    for name in ("user_vecs", "item_vecs", "W", "C", "M", "u0"):
        assert np.array_equal(getattr(p1, name), getattr(p2, name)), name


def test_train_reduces_mean_loss():
    c = tiny_corpus(n_users=6, length=20, seed=15)
    p = tiny_params(c, seed=15)
    cfg = TrainConfig(lam=0.001, learning_rate=0.05, epochs=8, rng_seed=0)
    reports = train(p, c, cfg)
    assert reports[-1].mean_loss < reports[0].mean_loss


def test_epoch_report_counts():
    c = tiny_corpus(n_users=3, length=10, seed=16)
    p = tiny_params(c, seed=16)
    cfg = TrainConfig(learning_rate=0.01)
    rep = sgd_epoch(p, c, cfg, np.random.default_rng(0))
    expected = sum(len(training_positions(c, u)) for u in range(c.n_users))
    assert rep.n_instances == expected
    assert rep.n_skipped == 0
    assert rep.mean_step_size == pytest.approx(0.01)


def test_ta_training_runs_and_learns_nothing_breaks():
    c = tiny_corpus(seed=17)
    p = tiny_params(c, ta=True, seed=17)
    cfg = TrainConfig(lam=0.01, learning_rate=0.05, epochs=2)
    reports = train(p, c, cfg)
    assert all(math.isfinite(r.mean_loss) for r in reports)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lam=-1.0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(negatives_per_positive=0)
    with pytest.raises(ValueError):
        TrainConfig(lr_policy="adagrad")


def test_bundle_scale():
    c = tiny_corpus(seed=18)
    p = tiny_params(c, seed=18)
    inst = an_instance(c)
    cfg = TrainConfig(lam=0.01, learning_rate=0.1)
    a = instance_gradients(p, c.sequences[0], inst, cfg)
    b = instance_gradients(p, c.sequences[0], inst, cfg).scale(2.0)
    assert np.allclose(2.0 * a.W, b.W)
    for i in a.user_rows:
        assert np.allclose(2.0 * a.user_rows[i], b.user_rows[i])
