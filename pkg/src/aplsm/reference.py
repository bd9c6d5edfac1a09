"""Comparison of a full analysis against published French-elite values.

The comparison is informational only: the values depend on the external data
set and its preprocessing. Each observed value is compared with its
reference and flagged when the absolute deviation exceeds ``tolerance``.

Cluster labels are arbitrary, so cluster medians are compared as sorted
lists (within-cluster medians descending, between-cluster medians
descending) rather than matched by name.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import cluster_fit, cluster_link_summaries
from .metrics import congruence_coefficient, orthogonal_align, rank_diagnostics
from .model import LatentConfig
from .vbem import FitOptions, fit_aplsm, fit_blsm, fit_lsm

__all__ = ["FRENCH_ELITE_REFERENCE", "ReferenceRow", "analysis_values",
           "compare_to_reference", "reference_report"]

FRENCH_ELITE_REFERENCE = {
    "congruence_lsm_vs_aplsm": 0.96,
    "congruence_blsm_vs_aplsm": 0.91,
    "spearman_person_distance_vs_degree": -0.53,
    "spearman_attribute_distance_vs_sum_score": -0.92,
    "spearman_attribute_pair_distance_vs_correlation": -0.62,
    "k2_variance_explained": 0.504,
    "k3_variance_explained": 0.639,
    "k2_within_median_1": 0.29,
    "k2_within_median_2": 0.22,
    "k2_between_median_1": 0.05,
    "k3_within_median_1": 0.36,
    "k3_within_median_2": 0.36,
    "k3_within_median_3": 0.32,
    "k3_between_median_1": 0.11,
    "k3_between_median_2": 0.06,
    "k3_between_median_3": 0.02,
}


@dataclass(frozen=True)
class ReferenceRow:
    name: str
    reference: float
    observed: float
    deviation: float
    flagged: bool


def _congruence(source, target):
    aligned = orthogonal_align(source, target).aligned
    t = target - target.mean(axis=0)
    return congruence_coefficient(aligned - target.mean(axis=0), t)


def _cluster_medians(assignment, fit, prefix):
    summary = cluster_link_summaries(assignment, fit)
    within = sorted((v for (a, b), v in summary.social_medians.items() if a == b),
                    reverse=True)
    between = sorted((v for (a, b), v in summary.social_medians.items() if a != b),
                     reverse=True)
    out = {f"{prefix}_variance_explained": assignment.variance_explained}
    out.update({f"{prefix}_within_median_{i + 1}": v for i, v in enumerate(within)})
    out.update({f"{prefix}_between_median_{i + 1}": v for i, v in enumerate(between)})
    return out


def analysis_values(yi, yia, dim=2, options=FitOptions(), n_starts=100,
                    seed=0) -> dict:
    """Fit all three models and compute every quantity in the reference table."""
    cfg = LatentConfig(dim)
    joint = fit_aplsm(yi, yia, cfg, options)
    social = fit_lsm(yi, cfg, options)
    bipartite = fit_blsm(yia, cfg, options)
    u = joint.state.mean_persons
    values = {
        "congruence_lsm_vs_aplsm": _congruence(social.state.mean_persons, u),
        "congruence_blsm_vs_aplsm": _congruence(bipartite.state.mean_persons, u),
    }
    diag = rank_diagnostics(joint, yi, yia)
    values["spearman_person_distance_vs_degree"] = diag.persons.spearman
    values["spearman_attribute_distance_vs_sum_score"] = diag.attributes.spearman
    if diag.attribute_pairs is not None:
        values["spearman_attribute_pair_distance_vs_correlation"] = (
            diag.attribute_pairs.spearman)
    for k in (2, 3):
        assignment = cluster_fit(joint, k, n_starts=n_starts, seed=seed)
        values.update(_cluster_medians(assignment, joint, f"k{k}"))
    return values


def compare_to_reference(values: dict, reference=FRENCH_ELITE_REFERENCE,
                         tolerance=0.15):
    rows = []
    for name, ref in reference.items():
        obs = float(values.get(name, np.nan))
        dev = abs(obs - ref)
        rows.append(ReferenceRow(name, ref, obs, dev,
                                 bool(not np.isfinite(dev) or dev > tolerance)))
    return rows


def reference_report(yi, yia, dim=2, options=FitOptions(), n_starts=100,
                     seed=0, tolerance=0.15):
    return compare_to_reference(
        analysis_values(yi, yia, dim, options, n_starts, seed),
        tolerance=tolerance)
