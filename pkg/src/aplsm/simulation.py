"""Synthetic data from the joint latent space model and the replication study.

Every replicate draws from its own generator seeded by
``SeedSequence([seed, replicate_index])``, so replicates can run in any order
or in parallel and still reproduce exactly.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from ._parallel import resolve_n_jobs
from .metrics import (RATIO_QUANTILES, average_absolute_error,
                      pairwise_distance_ratios, ratio_quantiles)
from .model import (AttributeMatrix, LatentConfig, LatentPositions, LinkFamily,
                    SocialNetwork, attribute_logits, link_probability,
                    social_logits)
from .vbem import (FitOptions, NumericalError, fit_aplsm, fit_blsm, fit_lsm,
                   posterior_link_probabilities)

logger = logging.getLogger(__name__)

__all__ = [
    "SimulationSpec",
    "SimulationReplicate",
    "ReplicationResult",
    "REPLICATION_COLUMNS",
    "sample_latent_positions",
    "generate_replicate",
    "run_replicate",
    "run_replication_study",
]


@dataclass(frozen=True)
class SimulationSpec:
    """Generative settings of a simulation study.

    Parameters
    ----------
    n_persons, n_attributes : int
    dim : int
        Latent dimension.
    prior_var_person, prior_var_attribute : float
        Variances of the latent position distributions.
    alpha0, alpha1 : float
        Social and person-attribute intercepts.
    link_family : str
        Family of the attribute responses. The social network is always
        Bernoulli-logistic.
    n_replications : int
    seed : int
    directed : bool
        Sample both directions of every dyad independently.
    """

    n_persons: int = 50
    n_attributes: int = 50
    dim: int = 2
    prior_var_person: float = 1.0
    prior_var_attribute: float = 1.0
    alpha0: float = 2.0
    alpha1: float = 1.5
    link_family: str = LinkFamily.BERNOULLI_LOGISTIC.value
    n_replications: int = 200
    seed: int = 0
    directed: bool = False

    def __post_init__(self):
        for name in ("n_persons", "n_attributes", "dim", "n_replications"):
            val = getattr(self, name)
            if int(val) != val or val < 1:
                raise ValueError(f"{name} must be a positive integer, got {val!r}")
            object.__setattr__(self, name, int(val))
        if self.n_persons < 2:
            raise ValueError("n_persons must be >= 2")
        for name in ("prior_var_person", "prior_var_attribute"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be finite and > 0, got {val!r}")
        for name in ("alpha0", "alpha1"):
            if math.isnan(getattr(self, name)):
                raise ValueError(f"{name} must not be nan")
        object.__setattr__(self, "link_family", LinkFamily(self.link_family).value)
        object.__setattr__(self, "seed", int(self.seed))

    @classmethod
    def from_dict(cls, values: dict) -> "SimulationSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown simulation spec keys: {sorted(unknown)}")
        return cls(**values)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def config(self) -> LatentConfig:
        return LatentConfig(self.dim, self.prior_var_person, self.prior_var_attribute)


@dataclass(frozen=True, eq=False)
class SimulationReplicate:
    """One synthetic data set with its generating quantities.

    ``true_prob_attr`` is the mean response: a probability for the Bernoulli
    family, the rate ``gamma`` for Poisson and ``kappa * gamma`` for the
    zero-inflated Poisson. The diagonal of ``true_prob_social`` is ``nan``.
    """

    true_positions: LatentPositions
    true_prob_social: np.ndarray
    true_prob_attr: np.ndarray
    sampled_yi: SocialNetwork
    sampled_yia: AttributeMatrix
    replicate_seed: tuple
    replicate_index: int = 0


def sample_latent_positions(spec: SimulationSpec, rng) -> LatentPositions:
    """Rows i.i.d. ``N(0, lambda^2 I)`` for persons and for attributes."""
    rng = np.random.default_rng(rng)
    u = math.sqrt(spec.prior_var_person) * rng.standard_normal(
        (spec.n_persons, spec.dim))
    v = math.sqrt(spec.prior_var_attribute) * rng.standard_normal(
        (spec.n_attributes, spec.dim))
    return LatentPositions(u, v)


def _replicate_rng(spec, replicate_index):
    entropy = (spec.seed, int(replicate_index))
    return np.random.default_rng(np.random.SeedSequence(entropy)), entropy


def generate_replicate(spec: SimulationSpec, replicate_index: int = 0,
                       positions: Optional[LatentPositions] = None
                       ) -> SimulationReplicate:
    """Draw positions (unless given) and both data matrices.

    Undirected networks sample each dyad ``i < j`` once and mirror it.
    """
    if replicate_index < 0:
        raise ValueError("replicate_index must be >= 0")
    rng, entropy = _replicate_rng(spec, replicate_index)
    if positions is None:
        positions = sample_latent_positions(spec, rng)
    u, v = positions.persons, positions.attributes
    if u.shape != (spec.n_persons, spec.dim) or v is None or v.shape != (
            spec.n_attributes, spec.dim):
        raise ValueError("positions do not match the simulation dimensions")

    n = spec.n_persons
    p_soc = link_probability(social_logits(u, spec.alpha0))
    draws = (rng.random((n, n)) < p_soc).astype(np.float64)
    if not spec.directed:
        draws = np.triu(draws, 1)
        draws = draws + draws.T
    np.fill_diagonal(draws, 0.0)
    p_soc = p_soc.copy()
    np.fill_diagonal(p_soc, np.nan)

    theta = attribute_logits(u, v, spec.alpha1)
    family = LinkFamily(spec.link_family)
    if family is LinkFamily.BERNOULLI_LOGISTIC:
        mean = link_probability(theta, family)
        y_attr = (rng.random(theta.shape) < mean).astype(np.float64)
    elif family is LinkFamily.POISSON_LOG:
        mean = link_probability(theta, family)
        y_attr = rng.poisson(mean).astype(np.float64)
    else:
        kappa, gamma = link_probability(theta, family)
        # structural zero with probability 1 - kappa, Poisson(gamma) otherwise
        present = rng.random(theta.shape) < kappa
        y_attr = np.where(present, rng.poisson(gamma), 0).astype(np.float64)
        mean = kappa * gamma
    binary = family is LinkFamily.BERNOULLI_LOGISTIC
    return SimulationReplicate(
        true_positions=positions,
        true_prob_social=p_soc,
        true_prob_attr=np.asarray(mean, dtype=np.float64),
        sampled_yi=SocialNetwork(draws, directed=spec.directed),
        sampled_yia=AttributeMatrix(y_attr, binary=binary),
        replicate_seed=entropy,
        replicate_index=int(replicate_index),
    )


_QUANTILE_TAGS = tuple(f"q{int(round(100 * q)):02d}" for q in RATIO_QUANTILES)

REPLICATION_COLUMNS = (
    ("replicate", "aae_social_aplsm", "aae_social_lsm", "aae_attr_aplsm",
     "aae_attr_blsm", "alpha0_error", "alpha1_error")
    + tuple(f"ratio_person_{t}" for t in _QUANTILE_TAGS)
    + tuple(f"ratio_attr_{t}" for t in _QUANTILE_TAGS)
    + ("converged_aplsm", "converged_lsm", "converged_blsm",
       "iterations_aplsm", "iterations_lsm", "iterations_blsm",
       "monotone_aplsm", "monotone_lsm", "monotone_blsm", "error")
)


@dataclass(frozen=True, eq=False)
class ReplicationResult:
    """Per-replicate metric rows, ordered by replicate index.

    A failed replicate keeps its row with ``nan`` metrics and the error text.
    """

    spec: SimulationSpec
    rows: tuple

    def __len__(self):
        return len(self.rows)

    def column(self, name) -> np.ndarray:
        if name not in REPLICATION_COLUMNS:
            raise KeyError(name)
        return np.array([row[name] for row in self.rows])

    def numeric(self, name) -> np.ndarray:
        return np.asarray(self.column(name), dtype=np.float64)

    def n_failed(self) -> int:
        return sum(1 for row in self.rows if row["error"])

    def summary(self) -> dict:
        """Median of every metric and the mean of both intercept errors."""
        out = {}
        for name in REPLICATION_COLUMNS[1:]:
            if name.startswith(("aae_", "ratio_", "alpha")):
                vals = self.numeric(name)
                vals = vals[~np.isnan(vals)]
                out[f"median_{name}"] = float(np.median(vals)) if vals.size else float("nan")
        for name in ("alpha0_error", "alpha1_error"):
            vals = self.numeric(name)
            vals = vals[~np.isnan(vals)]
            out[f"mean_{name}"] = float(np.mean(vals)) if vals.size else float("nan")
        out["n_replications"] = len(self.rows)
        out["n_failed"] = self.n_failed()
        return out


def _is_monotone(result, slack=1e-3):
    trace = (result.initial_objective,) + tuple(result.objective_trace)
    return bool(np.all(np.diff(trace) >= -slack))


def _failed_row(index, message):
    row = {name: float("nan") for name in REPLICATION_COLUMNS}
    row.update(replicate=index, error=message)
    for name in REPLICATION_COLUMNS:
        if name.startswith(("converged_", "monotone_")):
            row[name] = False
        elif name.startswith("iterations_"):
            row[name] = 0
    return row


def run_replicate(spec: SimulationSpec, replicate_index: int,
                  fit_options: FitOptions = FitOptions()) -> dict:
    """Fit APLSM, LSM and BLSM to one replicate and compute its metric row."""
    try:
        rep = generate_replicate(spec, replicate_index)
        opts = replace(fit_options, seed=_fit_seed(spec, replicate_index))
        cfg = spec.config
        joint = fit_aplsm(rep.sampled_yi, rep.sampled_yia, cfg, opts)
        social = fit_lsm(rep.sampled_yi, cfg, opts)
        bipartite = fit_blsm(rep.sampled_yia, cfg, opts)
    except (NumericalError, ValueError, np.linalg.LinAlgError) as exc:
        logger.warning("replicate %d failed: %s", replicate_index, exc)
        return _failed_row(replicate_index, f"{type(exc).__name__}: {exc}")

    ps_joint, pa_joint = posterior_link_probabilities(joint)
    ps_lsm, _ = posterior_link_probabilities(social)
    _, pa_blsm = posterior_link_probabilities(bipartite)
    truth = rep.true_positions
    row = dict(
        replicate=int(replicate_index),
        aae_social_aplsm=average_absolute_error(ps_joint, rep.true_prob_social, True),
        aae_social_lsm=average_absolute_error(ps_lsm, rep.true_prob_social, True),
        aae_attr_aplsm=average_absolute_error(pa_joint, rep.true_prob_attr),
        aae_attr_blsm=average_absolute_error(pa_blsm, rep.true_prob_attr),
        alpha0_error=joint.state.alpha0 - spec.alpha0,
        alpha1_error=joint.state.alpha1 - spec.alpha1,
    )
    qp = ratio_quantiles(pairwise_distance_ratios(joint.state.mean_persons,
                                                  truth.persons))
    qa = ratio_quantiles(pairwise_distance_ratios(joint.state.mean_attributes,
                                                  truth.attributes))
    for tag, a, b in zip(_QUANTILE_TAGS, qp, qa):
        row[f"ratio_person_{tag}"] = float(a)
        row[f"ratio_attr_{tag}"] = float(b)
    for kind, res in (("aplsm", joint), ("lsm", social), ("blsm", bipartite)):
        row[f"converged_{kind}"] = bool(res.converged)
        row[f"iterations_{kind}"] = int(res.iterations_run)
        row[f"monotone_{kind}"] = _is_monotone(res)
    row["error"] = ""
    return {name: row[name] for name in REPLICATION_COLUMNS}


def _fit_seed(spec, replicate_index):
    ss = np.random.SeedSequence((spec.seed, int(replicate_index), 1))
    return int(ss.generate_state(1)[0])


def run_replication_study(spec: SimulationSpec,
                          fit_options: FitOptions = FitOptions(),
                          n_jobs=None) -> ReplicationResult:
    """Simulate ``spec.n_replications`` data sets and fit all three models.

    Only the Bernoulli family can be fitted. ``n_jobs`` is capped by the
    ``JLS_THREADS`` environment variable.
    """
    if LinkFamily(spec.link_family) is not LinkFamily.BERNOULLI_LOGISTIC:
        raise ValueError("replication studies need the bernoulli_logistic family")
    n_workers = min(resolve_n_jobs(n_jobs), spec.n_replications)
    indices = range(spec.n_replications)
    if n_workers > 1:
        rows = Parallel(n_jobs=n_workers)(
            delayed(run_replicate)(spec, i, fit_options) for i in indices)
    else:
        rows = [run_replicate(spec, i, fit_options) for i in indices]
    rows = sorted(rows, key=lambda r: r["replicate"])
    return ReplicationResult(spec=spec, rows=tuple(rows))
