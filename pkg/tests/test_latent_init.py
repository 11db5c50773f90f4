import numpy as np
import pytest

from hiact.core import SegmentSequence
from hiact.latent_init import (
    DegenerateInput,
    init_kmeans_categorical,
    init_kmeans_features,
    init_random,
    initialize,
    kmeans,
)


def _seqs(lengths, dim=2, seed=0):
    rng = np.random.default_rng(seed)
    return [SegmentSequence(rng.normal(size=(k, dim)), [0.0]) for k in lengths]


@pytest.mark.parametrize("strategy", ["random", "kmeans_features"])
def test_single_latent_state_is_all_zeros(strategy):
    data = _seqs([3, 5, 1])
    z = initialize(strategy, data, 1, seed=3)
    assert [len(a) for a in z] == [3, 5, 1]
    assert all(not a.any() for a in z)


@pytest.mark.parametrize("strategy", ["random", "kmeans_features"])
def test_seeded_determinism(strategy):
    data = _seqs([4, 6, 7, 3])
    a = initialize(strategy, data, 3, seed=9)
    b = initialize(strategy, data, 3, seed=9)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_random_init_is_uniform():
    z = np.concatenate(init_random(_seqs([10] * 1000, dim=1), 4, seed=0))
    counts = np.bincount(z, minlength=4)
    # binomial sd is sqrt(1e4 * 0.25 * 0.75) ~ 43; allow 3 sd
    assert counts.sum() == 10_000
    assert (np.abs(counts - 2500) <= 130).all()


def test_kmeans_single_cluster_is_the_mean():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(50, 3))
    res = kmeans(pts, 1, seed=0)
    assert res.centers[0] == pytest.approx(pts.mean(0), abs=1e-12)
    assert res.sse == pytest.approx(len(pts) * pts.var(0).sum(), rel=1e-12)
    assert not res.assignments.any()


def test_kmeans_recovers_separated_blobs():
    rng = np.random.default_rng(2)
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    truth = np.repeat(np.arange(3), 40)
    pts = centers[truth] + rng.normal(size=(120, 2))
    res = kmeans(pts, 3, seed=0)
    # clusters agree with the truth up to a relabeling
    table = np.zeros((3, 3), int)
    np.add.at(table, (truth, res.assignments), 1)
    assert (table.max(1) == 40).all() and len(set(table.argmax(1))) == 3


def test_kmeans_best_restart_and_monotone_history():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(80, 2))
    res = kmeans(pts, 4, restarts=10, seed=0)
    assert len(res.restart_sse) == 10
    assert res.sse == pytest.approx(min(res.restart_sse), abs=0)
    hist = np.array(res.sse_history)
    assert (np.diff(hist) <= 1e-9 * hist[0]).all()


def test_kmeans_degenerate():
    with pytest.raises(DegenerateInput):
        kmeans(np.ones((5, 2)), 2)
    with pytest.raises(DegenerateInput):
        kmeans(np.zeros((0, 2)), 1)


def test_kmeans_features_is_global_not_per_sequence():
    # two far apart groups, each sequence drawn from one group
    a = SegmentSequence(np.zeros((3, 1)), [0.0])
    b = SegmentSequence(np.full((4, 1), 50.0), [0.0])
    z = init_kmeans_features([a, b], 2, seed=0)
    assert len(set(z[0])) == 1 and len(set(z[1])) == 1 and z[0][0] != z[1][0]


def test_categorical_recovers_categories():
    labels = [np.array([0, 1, 2, 2]), np.array([1, 1, 0]), np.array([2])]
    z = init_kmeans_categorical(labels, 3, 3, seed=0)
    flat_l, flat_z = np.concatenate(labels), np.concatenate(z)
    # a bijection between categories and clusters
    pairs = set(zip(flat_l.tolist(), flat_z.tolist()))
    assert len(pairs) == 3 and len({p[1] for p in pairs}) == 3


def test_categorical_single_category_needs_single_cluster():
    labels = [np.zeros(3, int), np.zeros(2, int)]
    z = init_kmeans_categorical(labels, 1, 1)
    assert all(not a.any() for a in z)
    with pytest.raises(DegenerateInput):
        init_kmeans_categorical(labels, 1, 2)


def test_initialize_dispatch_errors():
    with pytest.raises(ValueError):
        initialize("kmeans_categorical", _seqs([2]), 2)
    with pytest.raises(ValueError):
        initialize("nope", _seqs([2]), 2)
