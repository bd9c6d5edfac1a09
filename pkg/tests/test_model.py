import itertools
import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import special_ortho_group

from aplsm.model import (AttributeMatrix, Intercepts, LatentConfig,
                         LatentPositions, LinkFamily, SocialNetwork,
                         joint_log_likelihood, link_probability,
                         squared_distance)


def test_squared_distance_identity_and_unit_case():
    x = np.array([0.3, -1.2, 4.0])
    assert squared_distance(x, x) == 0.0
    assert squared_distance([1, 0], [0, 1]) == 2.0


def test_squared_distance_matches_loop():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=5), rng.normal(size=5)
    expected = 0.0
    for a, b in zip(x, y):
        expected += (a - b) * (a - b)
    assert abs(squared_distance(x, y) - expected) < 1e-12
    assert squared_distance(x, y) == squared_distance(y, x)


def test_squared_distance_dimension_mismatch():
    with pytest.raises(ValueError):
        squared_distance([1.0, 2.0], [1.0, 2.0, 3.0])


def test_logistic_link_values():
    assert link_probability(0.0) == 0.5
    mpmath.mp.dps = 50
    e2 = mpmath.e ** 2
    assert abs(link_probability(2.0 - 0.0) - float(e2 / (1 + e2))) < 1e-15


def test_logistic_link_saturates_without_overflow():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        low = link_probability(-1e6)
        high = link_probability(1e6)
    assert 0.0 <= low < 1e-300
    assert high == 1.0


@given(st.floats(-50, 50))
def test_logistic_link_complement(theta):
    assert abs(link_probability(theta) + link_probability(-theta) - 1.0) < 1e-12


def test_count_families():
    assert link_probability(0.5, LinkFamily.POISSON_LOG) == pytest.approx(math.exp(0.5))
    kappa, gamma = link_probability(0.5, "zero_inflated_poisson")
    assert kappa == pytest.approx(1 / (1 + math.exp(-0.5)))
    assert gamma == pytest.approx(math.exp(0.5))


def test_social_network_validation():
    with pytest.raises(ValueError, match="symmetric"):
        SocialNetwork([[0, 1], [0, 0]])
    with pytest.raises(ValueError, match="non-binary"):
        SocialNetwork([[0, 2], [2, 0]])
    with pytest.raises(ValueError, match="square"):
        SocialNetwork(np.zeros((2, 3)))
    net = SocialNetwork([[1, 1], [1, 5]])  # diagonal ignored
    assert np.isnan(net.entries[0, 0]) and net.mask[0, 0] == 0
    assert SocialNetwork([[0, 1], [0, 0]], directed=True).density() == 0.5


def test_attribute_matrix_validation():
    with pytest.raises(ValueError):
        AttributeMatrix([[0, 0.5]])
    with pytest.raises(ValueError):
        AttributeMatrix([[0, 1]], names=["a"])
    counts = AttributeMatrix([[0, 3]], binary=False)
    assert counts.entries[0, 1] == 3


def test_latent_config_validation():
    with pytest.raises(ValueError):
        LatentConfig(dim=0)
    with pytest.raises(ValueError):
        LatentConfig(prior_var_person=0.0)


def test_loglik_symmetric_zero_logit_case():
    yi = SocialNetwork([[0, 1], [1, 0]])
    yia = AttributeMatrix([[1], [np.nan]])
    pos = LatentPositions(np.zeros((2, 1)), np.zeros((1, 1)))
    val = joint_log_likelihood(yi, yia, pos, Intercepts(0.0, 0.0))
    assert val == pytest.approx(3 * math.log(0.5), abs=1e-14)


def _brute_loglik(y, x, u, v, a0, a1):
    total = 0.0
    n, m = x.shape
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            theta = a0 - sum((u[i, d] - u[j, d]) ** 2 for d in range(u.shape[1]))
            p = 1 / (1 + math.exp(-theta))
            total += math.log(p) if y[i, j] == 1 else math.log(1 - p)
        for a in range(m):
            theta = a1 - sum((u[i, d] - v[a, d]) ** 2 for d in range(u.shape[1]))
            p = 1 / (1 + math.exp(-theta))
            total += math.log(p) if x[i, a] == 1 else math.log(1 - p)
    return total


def test_loglik_matches_brute_force():
    rng = np.random.default_rng(1)
    y = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], float)
    x = (rng.random((3, 2)) < 0.5).astype(float)
    u, v = rng.normal(size=(3, 1)), rng.normal(size=(2, 1))
    val = joint_log_likelihood(SocialNetwork(y), AttributeMatrix(x),
                               LatentPositions(u, v), Intercepts(0.7, -0.3))
    assert abs(val - _brute_loglik(y, x, u, v, 0.7, -0.3)) < 1e-10


def _random_case(seed, n=5, m=3, dim=2):
    rng = np.random.default_rng(seed)
    y = np.triu((rng.random((n, n)) < 0.5).astype(float), 1)
    y = y + y.T
    x = (rng.random((n, m)) < 0.5).astype(float)
    return (SocialNetwork(y), AttributeMatrix(x), rng.normal(size=(n, dim)),
            rng.normal(size=(m, dim)), Intercepts(rng.normal(), rng.normal()))


@given(st.integers(0, 10_000))
def test_loglik_rigid_motion_invariance(seed):
    yi, yia, u, v, icpt = _random_case(seed)
    rng = np.random.default_rng(seed + 1)
    q = special_ortho_group.rvs(2, random_state=seed)
    if rng.random() < 0.5:
        q = q @ np.diag([1.0, -1.0])
    c = rng.normal(size=2)
    base = joint_log_likelihood(yi, yia, LatentPositions(u, v), icpt)
    moved = joint_log_likelihood(yi, yia, LatentPositions(u @ q.T + c, v @ q.T + c), icpt)
    assert abs(base - moved) < 1e-10 * max(1.0, abs(base))


def test_loglik_translation_invariance():
    yi, yia, u, v, icpt = _random_case(3)
    c = np.array([5.0, -2.0])
    a = joint_log_likelihood(yi, yia, LatentPositions(u, v), icpt)
    b = joint_log_likelihood(yi, yia, LatentPositions(u + c, v + c), icpt)
    assert abs(a - b) < 1e-10


@given(st.integers(0, 10_000))
def test_loglik_node_permutation(seed):
    yi, yia, u, v, icpt = _random_case(seed)
    perm = np.random.default_rng(seed).permutation(u.shape[0])
    yp = SocialNetwork(np.nan_to_num(yi.entries)[np.ix_(perm, perm)])
    xp = AttributeMatrix(yia.entries[perm])
    a = joint_log_likelihood(yi, yia, LatentPositions(u, v), icpt)
    b = joint_log_likelihood(yp, xp, LatentPositions(u[perm], v), icpt)
    assert abs(a - b) < 1e-10 * max(1.0, abs(a))


@given(st.floats(-20, 20), st.floats(0.01, 3))
def test_loglik_monotone_in_logit(alpha, step):
    # a single dyad: increasing theta helps y=1 and hurts y=0
    pos = LatentPositions(np.array([[0.0], [1.0]]))
    vals = {}
    for y in (0, 1):
        net = SocialNetwork([[0, y], [y, 0]])
        lo = joint_log_likelihood(net, None, pos, Intercepts(alpha, 0))
        hi = joint_log_likelihood(net, None, pos, Intercepts(alpha + step, 0))
        vals[y] = hi - lo
    assert vals[1] > 0 and vals[0] < 0


def test_moving_closer_increases_edge_term():
    net = SocialNetwork([[0, 1], [1, 0]])
    far = joint_log_likelihood(net, None, LatentPositions([[0.0], [2.0]]), Intercepts())
    near = joint_log_likelihood(net, None, LatentPositions([[0.0], [1.0]]), Intercepts())
    assert near > far


def test_loglik_errors():
    yi, yia, u, v, icpt = _random_case(0)
    with pytest.raises(ValueError):
        joint_log_likelihood(yi, yia, LatentPositions(u[:-1], v), icpt)
    with pytest.raises(ValueError):
        joint_log_likelihood(yi, AttributeMatrix(yia.entries * 2, binary=False),
                             LatentPositions(u, v), icpt)
    with pytest.raises(ValueError):
        joint_log_likelihood(None, None, LatentPositions(u, v), icpt)


def test_loglik_skips_missing_entries():
    yi, yia, u, v, icpt = _random_case(5)
    entries = np.nan_to_num(yi.entries)
    full = joint_log_likelihood(yi, None, LatentPositions(u), icpt)
    masked = entries.copy()
    masked[0, 1] = masked[1, 0] = np.nan
    part = joint_log_likelihood(SocialNetwork(masked), None, LatentPositions(u), icpt)
    theta = icpt.alpha0 - squared_distance(u[0], u[1])
    p = 1 / (1 + math.exp(-theta))
    term = math.log(p) if entries[0, 1] else math.log(1 - p)
    assert full - part == pytest.approx(2 * term, abs=1e-10)


def test_directed_sums_over_ordered_pairs():
    y = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], float)
    u = np.random.default_rng(2).normal(size=(3, 2))
    val = joint_log_likelihood(SocialNetwork(y, directed=True), None,
                               LatentPositions(u), Intercepts(0.3, 0))
    brute = 0.0
    for i, j in itertools.permutations(range(3), 2):
        theta = 0.3 - squared_distance(u[i], u[j])
        brute += -math.log1p(math.exp(-theta)) if y[i, j] else -math.log1p(math.exp(theta))
    assert abs(val - brute) < 1e-12
