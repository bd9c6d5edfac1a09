"""Acceptance criteria 1-10.

Each gated test records a one-line pass/fail summary (printed at the end of
the session) before asserting. ``APLSM_LONG=1`` runs the full 200-replicate
studies instead of the 30-replicate CI versions. Criterion 10 never fails:
it compares an analysis of ``APLSM_FRENCH_DIR`` (or of the bundled synthetic
fixture) with published reference values and reports deviations.
"""
import os
import time
from pathlib import Path

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from aplsm.clustering import hartigan_wong, kmeans
from aplsm.io import read_attribute_matrix, read_social_network
from aplsm.metrics import (average_absolute_error, congruence_coefficient,
                           orthogonal_align, roc_auc, spearman_rank_correlation)
from aplsm.model import LatentConfig
from aplsm.reference import FRENCH_ELITE_REFERENCE, reference_report
from aplsm.simulation import SimulationSpec, generate_replicate, run_replication_study
from aplsm.vbem import (FitOptions, fit_aplsm, gaussian_expectation_exp_negdist,
                        posterior_link_probabilities)

from conftest import random_instance, record_acceptance
from fd_oracle import all_component_errors
from quadrature import grid_posterior_link_means
from test_clustering import _blobs, _lloyd_oracle

N_REPLICATES = 200 if os.environ.get("APLSM_LONG") == "1" else 30
CI_FITS = []  # (label, FitResult-like summary) of every fit made here


def _note_fits(label, study):
    for row in study.rows:
        for kind in ("aplsm", "lsm", "blsm"):
            CI_FITS.append((f"{label}/rep{row['replicate']}/{kind}",
                            bool(row[f"monotone_{kind}"]),
                            bool(row[f"converged_{kind}"]), True))


def _study(alpha0, alpha1, seed):
    spec = SimulationSpec(n_persons=50, n_attributes=50, dim=2, alpha0=alpha0,
                          alpha1=alpha1, n_replications=N_REPLICATES, seed=seed)
    return run_replication_study(spec, FitOptions(), n_jobs=None)


@pytest.fixture(scope="module")
def study_fig1():
    s = _study(2.0, 1.5, seed=1)
    _note_fits("fig1", s)
    return s


@pytest.fixture(scope="module")
def study_fig2():
    s = _study(0.5, 0.0, seed=2)
    _note_fits("fig2", s)
    return s


@pytest.fixture(scope="module")
def study_fig3():
    s = _study(-1.0, 0.5, seed=3)
    _note_fits("fig3", s)
    return s


def _trace_monotone(res, slack=1e-3):
    trace = (res.initial_objective,) + tuple(res.objective_trace)
    return bool(np.all(np.diff(trace) >= -slack))


# --------------------------------------------------------------------------

def test_criterion_01_gradient_suite():
    start = time.perf_counter()
    worst = {}
    for seed in range(20):
        y, x, state = random_instance(seed, n=3, m=2, dim=2)
        for key, err in all_component_errors(state, y, x).items():
            worst[key] = max(worst.get(key, 0.0), err)
    elapsed = time.perf_counter() - start
    top = max(worst, key=worst.get)
    passed = len(worst) == 13 and worst[top] <= 1e-4 and elapsed < 10
    record_acceptance(1, "derivative components vs finite differences", passed,
                      f"13 components, max rel err {worst[top]:.2e} ({top}), {elapsed:.1f}s")
    assert passed, worst


def test_criterion_02_gaussian_identity():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    n_draws = 1_000_000
    z_scores = []
    for pair in range(10):
        d = 1 + pair % 3
        m = rng.normal(scale=0.8, size=d)
        a = rng.normal(size=(d, d))
        c = 0.5 * a @ a.T + 0.1 * np.eye(d)
        # exp(-|x|^2) with x ~ N(m, C/2)
        x = rng.multivariate_normal(m, c / 2, size=n_draws)
        f = np.exp(-np.sum(x * x, axis=1))
        se = f.std(ddof=1) / np.sqrt(n_draws)
        z_scores.append(abs(gaussian_expectation_exp_negdist(m, c) - f.mean()) / se)
    elapsed = time.perf_counter() - start
    passed = max(z_scores) <= 3 and elapsed < 30
    record_acceptance(2, "Gaussian expectation vs Monte Carlo", passed,
                      f"10 pairs, D in 1..3, max |z| {max(z_scores):.2f}, {elapsed:.1f}s")
    assert passed, z_scores


def test_criterion_03_tiny_instance_oracle():
    start = time.perf_counter()
    aaes = []
    for s in range(5):
        spec = SimulationSpec(n_persons=4, n_attributes=3, dim=1, alpha0=1.0,
                              alpha1=0.5, n_replications=1, seed=100 + s)
        rep = generate_replicate(spec)
        res = fit_aplsm(rep.sampled_yi, rep.sampled_yia, LatentConfig(1),
                        FitOptions(seed=s))
        CI_FITS.append((f"tiny{s}", _trace_monotone(res), res.converged, False))
        social, attrs = posterior_link_probabilities(res)
        y = np.nan_to_num(rep.sampled_yi.entries)
        ex_soc, ex_att = grid_posterior_link_means(
            y, rep.sampled_yia.entries, res.state.alpha0, res.state.alpha1)
        off = ~np.eye(4, dtype=bool)
        est = np.concatenate([social[off], attrs.ravel()])
        exact = np.concatenate([ex_soc[off], ex_att.ravel()])
        aaes.append(average_absolute_error(est, exact))
    elapsed = time.perf_counter() - start
    passed = max(aaes) <= 0.15 and elapsed < 300
    record_acceptance(3, "tiny-instance grid-quadrature oracle", passed,
                      "AAE per instance " + ", ".join(f"{a:.3f}" for a in aaes)
                      + f" (bound 0.15), {elapsed:.0f}s")
    assert passed, aaes


def test_criterion_04_joint_model_beats_single_matrix_models(study_fig1):
    s = study_fig1.summary()
    soc = (s["median_aae_social_aplsm"], s["median_aae_social_lsm"])
    att = (s["median_aae_attr_aplsm"], s["median_aae_attr_blsm"])
    passed = study_fig1.n_failed() == 0 and soc[0] < soc[1] and att[0] < att[1]
    record_acceptance(4, "AAE: joint vs single-matrix models", passed,
                      f"{N_REPLICATES} reps; social {soc[0]:.4f} < {soc[1]:.4f}, "
                      f"attributes {att[0]:.4f} < {att[1]:.4f}, failed {study_fig1.n_failed()}")
    assert passed, s


def test_criterion_05_intercepts_centred(study_fig2):
    s = study_fig2.summary()
    e0, e1 = s["mean_alpha0_error"], s["mean_alpha1_error"]
    passed = study_fig2.n_failed() == 0 and abs(e0) <= 0.25 and abs(e1) <= 0.25
    record_acceptance(5, "intercept errors centred (alpha0=0.5, alpha1=0)", passed,
                      f"{N_REPLICATES} reps; mean error alpha0 {e0:+.3f}, "
                      f"alpha1 {e1:+.3f} (band 0.25)")
    assert passed, s


def test_criterion_06_distance_ratios_centred(study_fig3):
    s = study_fig3.summary()
    rp, ra = s["median_ratio_person_q50"], s["median_ratio_attr_q50"]
    passed = study_fig3.n_failed() == 0 and 0.8 <= rp <= 1.2 and 0.8 <= ra <= 1.2
    record_acceptance(6, "distance ratios centred (alpha0=-1, alpha1=0.5)", passed,
                      f"{N_REPLICATES} reps; median ratio persons {rp:.3f}, "
                      f"attributes {ra:.3f} (band [0.8, 1.2])")
    assert passed, s


def test_criterion_07_objective_behaviour(study_fig1, study_fig2, study_fig3):
    n = len(CI_FITS)
    bad_monotone = [label for label, mono, _, _ in CI_FITS if not mono]
    bad_converged = [label for label, _, conv, large in CI_FITS if large and not conv]
    passed = n > 0 and not bad_monotone and not bad_converged
    record_acceptance(7, "objective non-decreasing and converged", passed,
                      f"{n} fits; non-monotone {len(bad_monotone)}, "
                      f"not converged by 500 iterations {len(bad_converged)}")
    assert passed, (bad_monotone[:5], bad_converged[:5])


def test_criterion_08_clustering():
    recovered = []
    for seed in range(5):
        x, truth = _blobs(seed, k=2, per=15)
        labels = kmeans(x, 2, n_starts=100, seed=seed).labels
        recovered.append(adjusted_rand_score(truth, labels))
    no_worse = 0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        x = rng.normal(size=(30, 2))
        init = x[rng.choice(30, 3, replace=False)]
        no_worse += hartigan_wong(x, init).objective <= _lloyd_oracle(x, init) + 1e-9
    x = np.random.default_rng(7).normal(size=(12, 2))
    ve1 = kmeans(x, 1, n_starts=5).variance_explained
    ven = kmeans(x, 12, n_starts=5).variance_explained
    passed = min(recovered) == 1.0 and no_worse == 20 and ve1 == 0.0 and ven == 1.0
    record_acceptance(8, "clustering", passed,
                      f"ARI min {min(recovered):.3f}; Hartigan <= Lloyd {no_worse}/20; "
                      f"variance explained k=1 {ve1}, k=n {ven}")
    assert passed


def test_criterion_09_metric_identities():
    rng = np.random.default_rng(9)
    p = rng.random((6, 6))
    t = rng.normal(size=(10, 2))
    theta = 0.7
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    checks = {
        "aae": average_absolute_error(p, p) == 0.0,
        "auc_separated": roc_auc([0.1, 0.2, 0.3, 0.7, 0.8], [0, 0, 0, 1, 1]).auc == 1.0,
        "auc_constant": roc_auc([0.4] * 5, [0, 1, 0, 1, 1]).auc == 0.5,
        "spearman": (abs(spearman_rank_correlation(np.arange(8), np.arange(8) ** 2) - 1) < 1e-15
                     and abs(spearman_rank_correlation(np.arange(8), -np.exp(np.arange(8))) + 1) < 1e-15),
        "congruence": abs(congruence_coefficient(t, t) - 1.0) < 1e-15,
        "align": np.max(np.abs(orthogonal_align(t @ rot, t).aligned - t)) < 1e-8,
    }
    passed = all(checks.values())
    record_acceptance(9, "metric identities", passed,
                      ", ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items()))
    assert passed, checks


def test_criterion_10_reference_report(fixture_dir):
    """Informational only; never fails on the comparison itself."""
    french = os.environ.get("APLSM_FRENCH_DIR")
    source = Path(french) if french else fixture_dir
    yi = read_social_network(source / "y_i.csv")
    yia = read_attribute_matrix(source / "y_ia.csv")
    rows = reference_report(yi, yia, dim=2, n_starts=100, seed=0)
    flagged = [r.name for r in rows if r.flagged]
    label = "supplied dataset" if french else "synthetic fixture (not the real data)"
    record_acceptance(10, "published values report (not gated)", True,
                      f"{label}: {len(flagged)}/{len(rows)} values deviate by > 0.15"
                      + (f" [{', '.join(flagged)}]" if flagged else ""), gated=False)
    assert len(rows) == len(FRENCH_ELITE_REFERENCE)
