import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import ortho_group
from sklearn.base import clone
from sklearn.metrics import adjusted_rand_score

from aplsm.clustering import (HartiganWongKMeans, cluster_fit,
                              cluster_link_summaries, hartigan_wong,
                              joint_points, kmeans, variance_explained,
                              within_cluster_ss)
from aplsm.model import LatentConfig
from aplsm.vbem import FitOptions, fit_aplsm


def _blobs(seed, k=3, per=10, spread=0.3, sep=6.0, dim=2):
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=sep, size=(k, dim))
    x = np.vstack([c + spread * rng.normal(size=(per, dim)) for c in centers])
    return x, np.repeat(np.arange(k), per)


def _lloyd_oracle(x, centers, iters=300):
    """Plain Lloyd iterations written out independently."""
    c = centers.copy()
    for _ in range(iters):
        lab = np.array([np.argmin([np.sum((p - q) ** 2) for q in c]) for p in x])
        new = np.array([x[lab == j].mean(axis=0) if np.any(lab == j) else c[j]
                        for j in range(len(c))])
        if np.allclose(new, c):
            break
        c = new
    return within_cluster_ss(x, lab)


def test_planted_blobs_recovered():
    for seed in range(5):
        x, truth = _blobs(seed)
        res = kmeans(x, 3, n_starts=20, seed=seed)
        assert adjusted_rand_score(truth, res.labels) == 1.0


def test_k_equals_n_gives_zero_objective():
    x = np.random.default_rng(0).normal(size=(6, 2))
    res = kmeans(x, 6, n_starts=5)
    assert res.objective == 0.0 and res.variance_explained == 1.0
    assert kmeans(x, 1, n_starts=3).variance_explained == pytest.approx(0.0, abs=1e-15)


def test_hartigan_no_worse_than_lloyd_from_same_start():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(25, 2))
        init = x[rng.choice(25, 4, replace=False)]
        hw = hartigan_wong(x, init)
        assert hw.objective <= _lloyd_oracle(x, init) + 1e-9


def test_hartigan_trace_monotone():
    x, _ = _blobs(3, spread=2.0)
    run = hartigan_wong(x, x[:3])
    assert np.all(np.diff(run.trace) <= 1e-12)
    assert run.objective == pytest.approx(within_cluster_ss(x, run.labels))


def test_variance_explained_direct_sum():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(12, 3))
    labels = rng.integers(0, 3, 12)
    wss = 0.0
    for c in range(3):
        pts = x[labels == c]
        for p in pts:
            wss += np.sum((p - pts.mean(axis=0)) ** 2)
    tss = sum(np.sum((p - x.mean(axis=0)) ** 2) for p in x)
    assert variance_explained(labels, x) == pytest.approx(1 - wss / tss, abs=1e-13)
    with pytest.raises(ValueError):
        variance_explained(np.zeros(4, int), np.ones((4, 2)))


def test_splitting_a_cluster_increases_variance_explained():
    x, _ = _blobs(4)
    labels = np.zeros(len(x), int)
    split = labels.copy()
    split[x[:, 0] > np.median(x[:, 0])] = 1
    assert variance_explained(split, x) > variance_explained(labels, x)


@given(st.integers(0, 1000))
def test_rotation_and_translation_invariance(seed):
    x, _ = _blobs(seed, spread=1.0)
    q = ortho_group.rvs(2, random_state=seed)
    a = kmeans(x, 3, n_starts=10, seed=seed)
    b = kmeans(x @ q + 4.0, 3, n_starts=10, seed=seed)
    assert adjusted_rand_score(a.labels, b.labels) == 1.0
    assert a.objective == pytest.approx(b.objective, rel=1e-9)


def test_permutation_equivariance():
    x, _ = _blobs(6)
    perm = np.random.default_rng(0).permutation(len(x))
    a = kmeans(x, 3, n_starts=10)
    b = kmeans(x[perm], 3, n_starts=10)
    assert adjusted_rand_score(a.labels[perm], b.labels) == 1.0


def test_determinism_and_canonical_labels():
    x, _ = _blobs(7, spread=1.5)
    a = kmeans(x, 3, n_starts=15, seed=2)
    b = kmeans(x, 3, n_starts=15, seed=2, n_jobs=2)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert a.start_index == b.start_index
    first = [int(np.flatnonzero(a.labels == c)[0]) for c in range(3)]
    assert first == sorted(first)


def test_argument_errors():
    x = np.zeros((3, 2))
    with pytest.raises(ValueError):
        kmeans(x, 4)
    with pytest.raises(ValueError):
        kmeans(x, 0)
    with pytest.raises(ValueError):
        kmeans(x, 2, n_starts=0)


def test_estimator_wrapper():
    x, truth = _blobs(8)
    est = HartiganWongKMeans(n_clusters=3, n_starts=10)
    assert clone(est).get_params() == est.get_params()
    labels = est.fit_predict(x)
    assert adjusted_rand_score(truth, labels) == 1.0
    np.testing.assert_array_equal(est.predict(x), est.labels_)


@pytest.fixture(scope="module")
def small_fit():
    rng = np.random.default_rng(0)
    n = 10
    g = np.repeat([0, 1], n // 2)
    p = np.where(g[:, None] == g[None, :], 0.8, 0.1)
    y = np.triu((rng.random((n, n)) < p).astype(float), 1)
    y = y + y.T
    x = (rng.random((n, 4)) < np.where(g[:, None] == np.array([0, 0, 1, 1]), 0.8, 0.1)).astype(float)
    return fit_aplsm(y, x, LatentConfig(2), FitOptions(seed=0)), g


def test_joint_points_and_kinds(small_fit):
    res, _ = small_fit
    pts, kinds = joint_points(res)
    assert pts.shape == (14, 2) and kinds.count("attribute") == 4
    a = cluster_fit(res, 2, n_starts=10)
    assert len(a.person_labels()) == 10 and len(a.attribute_labels()) == 4


def test_link_summaries(small_fit):
    res, groups = small_fit
    a = cluster_fit(res, 2, n_starts=20)
    assert adjusted_rand_score(groups, a.person_labels()) == 1.0
    s = cluster_link_summaries(a, res, ["a", "b", "c", "d"])
    assert sum(v.size for v in s.social.values()) == 10 * 9 // 2
    assert s.empty_pairs == ()
    within = min(s.social_medians[(0, 0)], s.social_medians[(1, 1)])
    assert within > s.social_medians[(0, 1)]
    assert set(s.attributes) == {(n, c) for n in "abcd" for c in (0, 1)}
    one = kmeans(joint_points(res)[0], 1, n_starts=1, kinds=joint_points(res)[1])
    from dataclasses import replace
    widened = replace(one, k=2)
    s1 = cluster_link_summaries(widened, res)
    assert set(s1.empty_pairs) == {(0, 1), (1, 1)}
