"""Multi-start k-means with Hartigan single-point transfers.

Each start draws ``k`` distinct points as centres (Forgy), runs Lloyd
iterations to a fixed point and then applies Hartigan transfer passes: a point in
cluster ``l`` moves to cluster ``j`` when

    n_j / (n_j + 1) * |x - c_j|^2  <  n_l / (n_l - 1) * |x - c_l|^2,

which is exactly the condition for the move to lower the within-cluster sum
of squares.  Passes repeat until no point moves.  A partition stable under
transfers is also a Lloyd fixed point, and the result is never worse than
the Lloyd fixed point reached from the same start.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils import check_array, check_random_state
from sklearn.utils.validation import check_is_fitted

from ._parallel import resolve_n_jobs
from .vbem import FitResult, posterior_link_probabilities

__all__ = [
    "ClusterAssignment",
    "ClusterLinkSummary",
    "HartiganWongKMeans",
    "hartigan_wong",
    "kmeans",
    "within_cluster_ss",
    "variance_explained",
    "joint_points",
    "cluster_fit",
    "cluster_link_summaries",
]


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    """Partition of a point set.

    ``labels`` are renumbered in order of first appearance. For joint
    clustering of a fit, ``kinds`` tags each point as ``"person"`` or
    ``"attribute"`` (persons first).
    """

    labels: np.ndarray
    k: int
    objective: float
    variance_explained: float
    centers: np.ndarray
    kinds: Optional[tuple] = None
    start_index: int = 0
    n_starts: int = 1

    def person_labels(self) -> np.ndarray:
        return self._labels_of("person")

    def attribute_labels(self) -> np.ndarray:
        return self._labels_of("attribute")

    def _labels_of(self, kind):
        if self.kinds is None:
            raise ValueError("assignment has no person/attribute tags")
        mask = np.array([t == kind for t in self.kinds])
        return self.labels[mask]


@dataclass(frozen=True, eq=False)
class _StartResult:
    labels: np.ndarray
    centers: np.ndarray
    objective: float
    trace: tuple = field(default_factory=tuple)


def within_cluster_ss(points, labels) -> float:
    x = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    total = 0.0
    for lab in np.unique(labels):
        members = x[labels == lab]
        total += float(np.sum((members - members.mean(axis=0)) ** 2))
    return total


def _centers(x, labels, k):
    counts = np.bincount(labels, minlength=k)
    sums = np.zeros((k, x.shape[1]))
    np.add.at(sums, labels, x)
    return sums / np.maximum(counts, 1)[:, None], counts


def _sqdist(x, centers):
    return np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)


def _repair_empty(x, labels, k):
    # an empty cluster takes the point farthest from the largest cluster's mean
    counts = np.bincount(labels, minlength=k)
    while np.any(counts == 0):
        empty = int(np.flatnonzero(counts == 0)[0])
        largest = int(np.argmax(counts))
        members = np.flatnonzero(labels == largest)
        center = x[members].mean(axis=0)
        far = members[np.argmax(np.sum((x[members] - center) ** 2, axis=1))]
        labels[far] = empty
        counts = np.bincount(labels, minlength=k)
    return labels


def _lloyd(x, centers, k, max_iter):
    labels = np.argmin(_sqdist(x, centers), axis=1)
    for _ in range(max_iter):
        labels = _repair_empty(x, labels, k)
        centers, _ = _centers(x, labels, k)
        new = np.argmin(_sqdist(x, centers), axis=1)
        if np.array_equal(new, labels):
            break
        labels = new
    return _repair_empty(x, labels, k)


def _transfer_pass(x, labels, k):
    centers, counts = _centers(x, labels, k)
    moved = 0
    for i in range(x.shape[0]):
        src = labels[i]
        if counts[src] <= 1:
            continue
        d2 = np.sum((centers - x[i]) ** 2, axis=1)
        remove = counts[src] / (counts[src] - 1.0) * d2[src]
        add = counts / (counts + 1.0) * d2
        add[src] = np.inf
        dst = int(np.argmin(add))
        # relative margin keeps rounding noise from cycling a point
        if add[dst] < remove * (1.0 - 1e-12):
            centers[src] = (counts[src] * centers[src] - x[i]) / (counts[src] - 1)
            centers[dst] = (counts[dst] * centers[dst] + x[i]) / (counts[dst] + 1)
            counts[src] -= 1
            counts[dst] += 1
            labels[i] = dst
            moved += 1
    return moved


def hartigan_wong(points, initial_centers, max_iter=300) -> _StartResult:
    """Single start from the given centres.

    Returns labels, centres, objective and the objective after every phase
    (non-increasing).
    """
    x = check_array(points)
    c0 = check_array(initial_centers)
    k = c0.shape[0]
    if c0.shape[1] != x.shape[1]:
        raise ValueError("centres and points differ in dimension")
    labels = _lloyd(x, c0, k, max_iter)
    trace = [within_cluster_ss(x, labels)]
    for _ in range(max_iter):
        if not _transfer_pass(x, labels, k):
            break
        trace.append(within_cluster_ss(x, labels))
    centers, _ = _centers(x, labels, k)
    return _StartResult(labels, centers, trace[-1], tuple(trace))


def _canonical(labels, centers):
    order = list(dict.fromkeys(labels.tolist()))
    remap = np.empty(len(order), dtype=int)
    remap[order] = np.arange(len(order))
    return remap[labels], centers[order]


def _total_ss(x):
    return float(np.sum((x - x.mean(axis=0)) ** 2))


def kmeans(points, k, n_starts=100, seed=0, n_jobs=1, kinds=None) -> ClusterAssignment:
    """Best of ``n_starts`` Forgy-initialised Hartigan runs.

    Ties in the objective go to the lowest start index, so the result is
    deterministic given ``seed`` whatever the number of workers.
    """
    x = check_array(points)
    k = int(k)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > x.shape[0]:
        raise ValueError(f"k={k} exceeds the number of points ({x.shape[0]})")
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    streams = np.random.SeedSequence(seed).spawn(n_starts)
    inits = [x[np.random.default_rng(s).choice(x.shape[0], k, replace=False)]
             for s in streams]
    n_workers = resolve_n_jobs(n_jobs)
    if n_workers > 1:
        runs = Parallel(n_jobs=n_workers, prefer="threads")(
            delayed(hartigan_wong)(x, c) for c in inits)
    else:
        runs = [hartigan_wong(x, c) for c in inits]
    best = min(range(n_starts), key=lambda s: (runs[s].objective, s))
    labels, centers = _canonical(runs[best].labels, runs[best].centers)
    objective = within_cluster_ss(x, labels)
    tss = _total_ss(x)
    ve = 1.0 - objective / tss if tss > 0 else float("nan")
    return ClusterAssignment(labels=labels, k=k, objective=objective,
                             variance_explained=ve, centers=centers,
                             kinds=None if kinds is None else tuple(kinds),
                             start_index=best, n_starts=n_starts)


def variance_explained(assignment, points) -> float:
    """``1 - WSS / TSS`` of a partition."""
    x = check_array(points)
    labels = getattr(assignment, "labels", assignment)
    labels = np.asarray(labels)
    if labels.shape[0] != x.shape[0]:
        raise ValueError("labels and points differ in length")
    tss = _total_ss(x)
    if tss == 0:
        raise ValueError("points have zero total variance")
    return 1.0 - within_cluster_ss(x, labels) / tss


def joint_points(result):
    """Stacked person and attribute means with their kind tags."""
    state = getattr(result, "state", result)
    pts = [state.mean_persons]
    kinds = ["person"] * state.n_persons
    if state.mean_attributes is not None:
        pts.append(state.mean_attributes)
        kinds += ["attribute"] * state.n_attributes
    return np.vstack(pts), tuple(kinds)


def cluster_fit(result, k, n_starts=100, seed=0, n_jobs=1) -> ClusterAssignment:
    """Joint k-means over the fitted person and attribute means."""
    x, kinds = joint_points(result)
    return kmeans(x, k, n_starts=n_starts, seed=seed, n_jobs=n_jobs, kinds=kinds)


class HartiganWongKMeans(ClusterMixin, BaseEstimator):
    """Estimator wrapper around :func:`kmeans`.

    Parameters
    ----------
    n_clusters : int, default=2
    n_starts : int, default=100
    random_state : int, default=0
    n_jobs : int, default=1
    """

    def __init__(self, n_clusters=2, n_starts=100, random_state=0, n_jobs=1):
        self.n_clusters = n_clusters
        self.n_starts = n_starts
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        X = check_array(X)
        seed = self.random_state
        if not isinstance(seed, (int, np.integer)):
            seed = int(check_random_state(seed).randint(2 ** 31 - 1))
        res = kmeans(X, self.n_clusters, n_starts=self.n_starts, seed=int(seed),
                     n_jobs=self.n_jobs)
        self.labels_ = res.labels
        self.cluster_centers_ = res.centers
        self.inertia_ = res.objective
        self.variance_explained_ = res.variance_explained
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = check_array(X)
        return np.argmin(_sqdist(X, self.cluster_centers_), axis=1)


@dataclass(frozen=True, eq=False)
class ClusterLinkSummary:
    """Fitted link probabilities grouped by cluster.

    ``social[(a, b)]`` (``a <= b``) holds the probabilities of all unordered
    person dyads with one end in each cluster; ``attributes[(name, c)]`` the
    attribute probabilities of the persons in cluster ``c``.
    """

    social: dict
    social_medians: dict
    empty_pairs: tuple
    attributes: dict
    attribute_medians: dict


def cluster_link_summaries(assignment: ClusterAssignment, result: FitResult,
                           attribute_names=None) -> ClusterLinkSummary:
    state = result.state
    n = state.n_persons
    if assignment.kinds is not None:
        person_lab = assignment.person_labels()
    else:
        person_lab = np.asarray(assignment.labels)[:n]
    if person_lab.shape[0] != n:
        raise ValueError("assignment does not cover the fitted persons")
    clusters = range(assignment.k)
    social_p, attr_p = posterior_link_probabilities(result)
    social, medians, empty = {}, {}, []
    if social_p is not None:
        iu, ju = np.triu_indices(n, 1)
        li, lj = person_lab[iu], person_lab[ju]
        lo, hi = np.minimum(li, lj), np.maximum(li, lj)
        probs = social_p[iu, ju]
        for a, b in itertools.combinations_with_replacement(clusters, 2):
            sel = probs[(lo == a) & (hi == b)]
            social[(a, b)] = sel
            if sel.size:
                medians[(a, b)] = float(np.median(sel))
            else:
                medians[(a, b)] = float("nan")
                empty.append((a, b))
    attrs, attr_med = {}, {}
    if attr_p is not None:
        m = attr_p.shape[1]
        names = list(attribute_names) if attribute_names is not None else [
            str(a) for a in range(m)]
        if len(names) != m:
            raise ValueError("attribute_names length does not match the fit")
        for a, name in enumerate(names):
            for c in clusters:
                sel = attr_p[person_lab == c, a]
                attrs[(name, c)] = sel
                attr_med[(name, c)] = float(np.median(sel)) if sel.size else float("nan")
    return ClusterLinkSummary(social, medians, tuple(empty), attrs, attr_med)
