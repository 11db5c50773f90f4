import numpy as np
import pytest

from conftest import random_instance
from hiact.core import JointAssignment, LabelSpace, SegmentSequence, WeightPack
from hiact.inference import (
    InstanceTooLarge,
    brute_force_decode,
    complete_latent,
    decode,
    decode_loss_augmented,
    dp_table,
)
from hiact.learning import loss_delta
from hiact.potentials import joint_score


def same_labels(a, b):
    return (a.activity == b.activity and np.array_equal(a.actions, b.actions)
            and np.array_equal(a.latents, b.latents))


def test_zero_weights_picks_smallest_labels(rng):
    space, _, seq = random_instance(rng)
    res = decode(WeightPack.zeros(space), seq)
    assert res.activity == 0 and not res.actions.any() and not res.latents.any()
    assert res.score == 0.0


def test_hand_enumerated_two_segments():
    space = LabelSpace(2, 1, 1, 1, 1)
    w = WeightPack.zeros(space)
    w.w1[0, 0] = [1.0]
    w.w1[1, 0] = [-1.0]
    seq = SegmentSequence([[5.0], [-5.0]], [0.0])
    res = decode(w, seq)
    assert list(res.actions) == [0, 1]
    assert res.score == 10.0


@pytest.mark.parametrize("integer", [False, True])
def test_decode_matches_brute_force(integer):
    rng = np.random.default_rng(7 + integer)
    for _ in range(150):
        space, w, seq = random_instance(rng, integer=integer)
        got, want = decode(w, seq), brute_force_decode(w, seq)
        assert same_labels(got, want)
        assert got.score == pytest.approx(want.score, abs=1e-9)


@pytest.mark.parametrize("integer", [False, True])
def test_loss_augmented_matches_brute_force(integer):
    rng = np.random.default_rng(11 + integer)
    for _ in range(150):
        # loss steps of 1/K are exact in binary only for K in {1, 2, 4}
        space, w, seq = random_instance(rng, integer=integer,
                                        k_choices=[1, 2, 4] if integer else None)
        lam = float(rng.choice([0.0, 0.5, 1.0]))
        got = decode_loss_augmented(w, seq, seq.actions, seq.activity, lam)
        want = brute_force_decode(w, seq, loss=(seq.actions, seq.activity, lam))
        assert same_labels(got, want)
        assert got.score == pytest.approx(want.score, abs=1e-9)


@pytest.mark.parametrize("integer", [False, True])
def test_complete_latent_matches_brute_force(integer):
    rng = np.random.default_rng(13 + integer)
    for _ in range(150):
        space, w, seq = random_instance(rng, integer=integer)
        z, score = complete_latent(w, seq, seq.actions, seq.activity)
        want = brute_force_decode(w, seq, clamp=(seq.actions, seq.activity))
        assert np.array_equal(z, want.latents)
        assert score == pytest.approx(want.score, abs=1e-9)


def test_scores_recheck_against_joint_score(rng):
    for _ in range(50):
        space, w, seq = random_instance(rng)
        res = decode(w, seq)
        assert res.score == pytest.approx(joint_score(w, seq, res), abs=1e-9)
        aug = decode_loss_augmented(w, seq, seq.actions, seq.activity, 0.5)
        loss = loss_delta(seq.actions, aug.actions, seq.activity, aug.activity, 0.5)
        assert aug.score == pytest.approx(joint_score(w, seq, aug) + loss, abs=1e-9)
        z, score = complete_latent(w, seq, seq.actions, seq.activity)
        asg = JointAssignment(seq.activity, seq.actions, z)
        assert score == pytest.approx(joint_score(w, seq, asg), abs=1e-9)


def test_loss_augmented_prefers_gold_when_weights_dominate():
    space = LabelSpace(3, 1, 2, 3, 1)
    w = WeightPack.zeros(space)
    w.w1[:, 0] = 10.0 * np.eye(3)
    seq = SegmentSequence(np.tile([0.0, 1.0, 0.0], (4, 1)), [1.0], [1, 1, 1, 1], 1)
    res = decode_loss_augmented(w, seq, seq.actions, seq.activity, 0.0)
    assert list(res.actions) == [1, 1, 1, 1] and res.activity == 1
    gold = JointAssignment(1, seq.actions, np.zeros(4, int))
    assert res.score == joint_score(w, seq, gold)


def test_loss_augmented_zero_weights_single_segment():
    space = LabelSpace(2, 1, 1, 1, 1)
    seq = SegmentSequence([[0.3]], [0.0], [0], 0)
    res = decode_loss_augmented(WeightPack.zeros(space), seq, [0], 0, 0.0)
    # loss 1/K = 1 for the wrong action beats 0 for the gold one
    assert list(res.actions) == [1] and res.score == 1.0


def test_loss_augmented_activity_tie_goes_to_gold():
    space = LabelSpace(2, 1, 3, 1, 1)
    seq = SegmentSequence([[0.0], [0.0]], [0.0], [0, 1], 2)
    res = decode_loss_augmented(WeightPack.zeros(space), seq, seq.actions, 2, 0.0)
    assert res.activity == 2


def test_complete_latent_single_state(rng):
    space, w, seq = random_instance(rng, max_nz=1)
    z, score = complete_latent(w, seq, seq.actions, seq.activity)
    assert not z.any()
    assert score == pytest.approx(
        joint_score(w, seq, JointAssignment(seq.activity, seq.actions, z)), abs=1e-12)


def test_complete_latent_zero_weights(rng):
    space, _, seq = random_instance(rng)
    z, score = complete_latent(WeightPack.zeros(space), seq, seq.actions, seq.activity)
    assert not z.any() and score == 0.0


def test_brute_force_guard():
    space = LabelSpace(10, 2, 10, 1, 1)
    seq = SegmentSequence(np.zeros((6, 1)), [0.0])
    with pytest.raises(InstanceTooLarge):
        brute_force_decode(WeightPack.zeros(space), seq)


def test_brute_force_single_segment_agrees(rng):
    for _ in range(20):
        space, w, seq = random_instance(rng, max_k=1)
        assert same_labels(decode(w, seq), brute_force_decode(w, seq))


def test_decode_is_deterministic(rng):
    space, w, seq = random_instance(rng, integer=True)
    assert same_labels(decode(w, seq), decode(w, seq))


def test_bias_shift_keeps_argmax(rng):
    for _ in range(20):
        space, w, seq = random_instance(rng)
        shifted = WeightPack(w.w1, w.w2 + 3.0, w.w3, w.w4, w.w5)
        a, b = decode(w, seq), decode(shifted, seq)
        assert same_labels(a, b)
        assert b.score == pytest.approx(a.score + 3.0 * len(seq), abs=1e-9)


def test_dp_table_layout(rng):
    space, w, seq = random_instance(rng, max_k=4)
    table = dp_table(w, seq)
    k = len(seq)
    assert table.values.shape == (space.n_activities, k, space.n_actions, space.n_latent)
    assert (table.backptr[:, 0] == -1).all()
    if k > 1:
        assert table.backptr[:, 1:].min() >= 0
        assert table.backptr[:, 1:].max() < space.n_states
    best = (table.values[:, -1].reshape(space.n_activities, -1)
            + (w.w5 @ seq.global_features)[:, None]).max()
    assert best == pytest.approx(decode(w, seq).score, abs=1e-12)
