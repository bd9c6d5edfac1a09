"""Evaluation metrics and alignment tools.

AAE, ROC/AUC, Spearman correlation, pairwise distance ratios, rank
diagnostics, orthogonal alignment and the congruence coefficient.
All functions are pure.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import orthogonal_procrustes
from scipy.spatial.distance import pdist
from scipy.stats import rankdata, spearmanr
from sklearn.metrics import auc as _trapezoid_auc
from sklearn.metrics import roc_curve
from sklearn.utils import check_array, check_consistent_length

from .model import AttributeMatrix, SocialNetwork

__all__ = [
    "RocCurve",
    "RankPairs",
    "RankDiagnostics",
    "Alignment",
    "average_absolute_error",
    "roc_auc",
    "pairwise_distance_ratios",
    "spearman_rank_correlation",
    "rank_diagnostics",
    "orthogonal_align",
    "congruence_coefficient",
    "ratio_quantiles",
]

RATIO_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


def average_absolute_error(est_probs, true_probs, exclude_diagonal=False) -> float:
    """Mean absolute difference between two probability matrices.

    Parameters
    ----------
    est_probs, true_probs : array-like of the same shape
    exclude_diagonal : bool, default=False
        Drop the diagonal (social matrices). Entries that are ``nan`` in
        either matrix are always dropped.
    """
    est = np.asarray(est_probs, dtype=np.float64)
    true = np.asarray(true_probs, dtype=np.float64)
    if est.shape != true.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {true.shape}")
    keep = ~(np.isnan(est) | np.isnan(true))
    if exclude_diagonal:
        if est.ndim != 2 or est.shape[0] != est.shape[1]:
            raise ValueError("exclude_diagonal needs square matrices")
        keep &= ~np.eye(est.shape[0], dtype=bool)
    if not keep.any():
        raise ValueError("no entries to compare")
    return float(np.mean(np.abs(est[keep] - true[keep])))


@dataclass(frozen=True, eq=False)
class RocCurve:
    """ROC curve over all distinct score thresholds (descending)."""

    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray
    auc: float


def roc_auc(scores, labels) -> RocCurve:
    """ROC curve and AUC for binary labels.

    Tied scores share one threshold, so the trapezoidal area equals the
    tie-corrected Mann-Whitney statistic. Missing scores or labels
    (``nan``) are dropped pairwise.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    check_consistent_length(s, y)
    keep = ~(np.isnan(s) | np.isnan(y))
    s, y = s[keep], y[keep]
    if np.any((y != 0) & (y != 1)):
        raise ValueError("labels must be 0 or 1")
    if y.size == 0 or y.min() == y.max():
        raise ValueError("roc_auc needs both classes present")
    fpr, tpr, thr = roc_curve(y, s, drop_intermediate=False)
    return RocCurve(thresholds=thr, tpr=tpr, fpr=fpr,
                    auc=float(_trapezoid_auc(fpr, tpr)))


def pairwise_distance_ratios(est, truth, return_skipped=False):
    """Ratio of estimated to true Euclidean distance for every unordered pair.

    Pairs whose true points coincide are skipped; ``return_skipped=True``
    also returns how many were skipped.
    """
    e = check_array(est, ensure_min_samples=2)
    t = check_array(truth, ensure_min_samples=2)
    if e.shape[0] != t.shape[0]:
        raise ValueError(f"node counts differ: {e.shape[0]} vs {t.shape[0]}")
    de, dt = pdist(e), pdist(t)
    ok = dt > 0
    ratios = de[ok] / dt[ok]
    if return_skipped:
        return ratios, int(np.sum(~ok))
    return ratios


def ratio_quantiles(ratios, qs=RATIO_QUANTILES) -> np.ndarray:
    return np.quantile(np.asarray(ratios, dtype=np.float64), qs)


def spearman_rank_correlation(x, y) -> float:
    """Pearson correlation of midranks; ``nan`` if either input is constant."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    check_consistent_length(x, y)
    if x.size < 3:
        raise ValueError("need at least three observations")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return float("nan")
    return float(spearmanr(x, y).statistic)


@dataclass(frozen=True, eq=False)
class RankPairs:
    """Paired midrank vectors with their Spearman correlation.

    ``reference_intercept`` and ``reference_slope`` describe the
    ``rank_y = intercept + slope * rank_x`` line drawn with the rank plot.
    """

    x_label: str
    y_label: str
    x_ranks: np.ndarray
    y_ranks: np.ndarray
    spearman: float
    reference_intercept: float
    reference_slope: float = -1.0


@dataclass(frozen=True, eq=False)
class RankDiagnostics:
    persons: Optional[RankPairs] = None
    attributes: Optional[RankPairs] = None
    attribute_pairs: Optional[RankPairs] = None


def _rank_pairs(x, y, x_label, y_label):
    xr, yr = rankdata(x), rankdata(y)
    rho = spearman_rank_correlation(x, y) if len(x) >= 3 else float("nan")
    return RankPairs(x_label, y_label, xr, yr, rho, float(len(x)))


def _distance_to(points, center):
    return np.sqrt(np.sum((points - center) ** 2, axis=1))


def rank_diagnostics(result, yi=None, yia=None) -> RankDiagnostics:
    """Rank comparisons between fitted geometry and observed data.

    Persons: distance to the centre of the person cloud vs total degree.
    Attributes: distance to the same centre vs column sum score.
    Attribute pairs: pairwise distance vs Pearson correlation of the two
    columns (pairs with an undefined correlation are dropped).
    """
    state = getattr(result, "state", result)
    u = state.mean_persons
    center = u.mean(axis=0)
    persons = attributes = pairs = None
    if yi is not None:
        net = yi if isinstance(yi, SocialNetwork) else SocialNetwork(yi)
        persons = _rank_pairs(_distance_to(u, center), net.degrees(),
                              "distance_to_center", "degree")
    if yia is not None and state.mean_attributes is not None:
        mat = yia if isinstance(yia, AttributeMatrix) else AttributeMatrix(yia)
        v = state.mean_attributes
        attributes = _rank_pairs(_distance_to(v, center), mat.filled.sum(axis=0),
                                 "distance_to_center", "sum_score")
        if v.shape[0] >= 3:
            with np.errstate(invalid="ignore", divide="ignore"):
                corr = _pairwise_column_correlation(mat.entries)
            dist = pdist(v)
            ok = ~np.isnan(corr)
            if ok.sum() >= 3:
                pairs = _rank_pairs(dist[ok], corr[ok], "pairwise_distance",
                                    "attribute_correlation")
    return RankDiagnostics(persons, attributes, pairs)


def _pairwise_column_correlation(entries):
    """Pearson correlation per column pair over rows observed in both."""
    m = entries.shape[1]
    out = []
    for a in range(m):
        for b in range(a + 1, m):
            x, y = entries[:, a], entries[:, b]
            ok = ~(np.isnan(x) | np.isnan(y))
            x, y = x[ok], y[ok]
            if x.size < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
                out.append(np.nan)
            else:
                out.append(np.corrcoef(x, y)[0, 1])
    return np.array(out)


@dataclass(frozen=True, eq=False)
class Alignment:
    """Orthogonal map ``Q`` and the aligned source (in the target's frame)."""

    rotation: np.ndarray
    aligned: np.ndarray
    residual: float


def orthogonal_align(source, target) -> Alignment:
    """Rotate/reflect ``source`` onto ``target`` after centring both.

    Points are rows, so the aligned set is ``(source - mean) @ Q + mean(target)``.
    No scaling is applied.
    """
    src = check_array(source, ensure_min_samples=1)
    tgt = check_array(target, ensure_min_samples=1)
    if src.shape != tgt.shape:
        raise ValueError(f"shape mismatch: {src.shape} vs {tgt.shape}")
    sc = src - src.mean(axis=0)
    tc = tgt - tgt.mean(axis=0)
    q, _ = orthogonal_procrustes(sc, tc)
    aligned_c = sc @ q
    resid = float(np.linalg.norm(aligned_c - tc))
    return Alignment(q, aligned_c + tgt.mean(axis=0), resid)


def congruence_coefficient(a, b) -> float:
    """Tucker congruence of two coordinate sets, computed on the vectorised
    coordinates: ``sum(a b) / sqrt(sum(a^2) sum(b^2))``."""
    x = np.asarray(a, dtype=np.float64).ravel()
    y = np.asarray(b, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError("point sets must have the same shape")
    denom = np.sqrt(np.dot(x, x) * np.dot(y, y))
    if denom == 0:
        raise ValueError("congruence undefined for an all-zero point set")
    return float(np.clip(np.dot(x, y) / denom, -1.0, 1.0))
