"""Data containers, link functions and the exact joint log-likelihood.

Matrices are stored as float arrays with ``nan`` marking missing entries.
The diagonal of a social network is never read.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit, log_expit

__all__ = [
    "LinkFamily",
    "SocialNetwork",
    "AttributeMatrix",
    "LatentConfig",
    "LatentPositions",
    "Intercepts",
    "squared_distance",
    "link_probability",
    "social_logits",
    "attribute_logits",
    "joint_log_likelihood",
]


class LinkFamily(str, Enum):
    BERNOULLI_LOGISTIC = "bernoulli_logistic"
    POISSON_LOG = "poisson_log"
    ZERO_INFLATED_POISSON = "zero_inflated_poisson"


def _as_float_matrix(values, name):
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-d matrix, got shape {arr.shape}")
    if np.isinf(arr).any():
        raise ValueError(f"{name} contains infinite entries")
    return arr


def _check_binary(arr, name, ignore=None):
    present = ~np.isnan(arr)
    if ignore is not None:
        present &= ~ignore
    bad = present & (arr != 0.0) & (arr != 1.0)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ValueError(
            f"{name} has non-binary entry {arr[i, j]!r} at ({i}, {j})")


@dataclass(frozen=True, eq=False)
class SocialNetwork:
    """Person-by-person binary adjacency matrix.

    Parameters
    ----------
    entries : array-like of shape (n_persons, n_persons)
        0/1 values, ``nan`` for missing dyads. The diagonal is ignored.
    directed : bool, default=False
        When False the matrix must be symmetric on every pair where both
        directions are observed.
    """

    entries: np.ndarray
    directed: bool = False

    def __post_init__(self):
        arr = _as_float_matrix(self.entries, "social network")
        n, m = arr.shape
        if n != m:
            raise ValueError(f"social network must be square, got {arr.shape}")
        if n < 2:
            raise ValueError("social network needs at least two persons")
        diag = np.eye(n, dtype=bool)
        _check_binary(arr, "social network", ignore=diag)
        arr[diag] = np.nan
        if not self.directed:
            both = ~np.isnan(arr) & ~np.isnan(arr.T)
            if np.any(arr[both] != arr.T[both]):
                raise ValueError(
                    "undirected social network must be symmetric")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def n_persons(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def mask(self) -> np.ndarray:
        """1.0 on observed off-diagonal dyads, 0.0 elsewhere."""
        return (~np.isnan(self.entries)).astype(np.float64)

    @cached_property
    def filled(self) -> np.ndarray:
        """Entries with missing dyads and the diagonal set to zero."""
        return np.nan_to_num(self.entries, nan=0.0)

    def degrees(self) -> np.ndarray:
        """Observed ties per person (in + out for directed networks)."""
        if self.directed:
            return self.filled.sum(axis=0) + self.filled.sum(axis=1)
        return self.filled.sum(axis=1)

    def density(self) -> float:
        n_obs = self.mask.sum()
        return float(self.filled.sum() / n_obs) if n_obs else 0.0


@dataclass(frozen=True, eq=False)
class AttributeMatrix:
    """Person-by-attribute binary incidence matrix.

    Parameters
    ----------
    entries : array-like of shape (n_persons, n_attributes)
        0/1 values, ``nan`` for missing responses. Count data are accepted
        only when ``binary=False`` (generators for Poisson families).
    names : sequence of str, optional
        Attribute labels carried through to reports.
    """

    entries: np.ndarray
    names: Optional[Sequence[str]] = None
    binary: bool = True

    def __post_init__(self):
        arr = _as_float_matrix(self.entries, "attribute matrix")
        if self.binary:
            _check_binary(arr, "attribute matrix")
        elif np.any(arr[~np.isnan(arr)] < 0):
            raise ValueError("attribute counts must be non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)
        if self.names is not None:
            names = tuple(str(s) for s in self.names)
            if len(names) != arr.shape[1]:
                raise ValueError(
                    f"{len(names)} attribute names for {arr.shape[1]} columns")
            object.__setattr__(self, "names", names)

    @property
    def n_persons(self) -> int:
        return self.entries.shape[0]

    @property
    def n_attributes(self) -> int:
        return self.entries.shape[1]

    @cached_property
    def mask(self) -> np.ndarray:
        return (~np.isnan(self.entries)).astype(np.float64)

    @cached_property
    def filled(self) -> np.ndarray:
        return np.nan_to_num(self.entries, nan=0.0)

    def density(self) -> float:
        n_obs = self.mask.sum()
        return float(self.filled.sum() / n_obs) if n_obs else 0.0


@dataclass(frozen=True)
class LatentConfig:
    """Latent dimension and the (fixed) prior variances of both node sets."""

    dim: int = 2
    prior_var_person: float = 1.0
    prior_var_attribute: float = 1.0

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if not self.prior_var_person > 0 or not np.isfinite(self.prior_var_person):
            raise ValueError("prior_var_person must be finite and > 0")
        if not self.prior_var_attribute > 0 or not np.isfinite(self.prior_var_attribute):
            raise ValueError("prior_var_attribute must be finite and > 0")
        object.__setattr__(self, "dim", int(self.dim))


@dataclass(frozen=True, eq=False)
class LatentPositions:
    persons: np.ndarray
    attributes: Optional[np.ndarray] = None

    def __post_init__(self):
        u = np.array(self.persons, dtype=np.float64)
        if u.ndim != 2 or not np.all(np.isfinite(u)):
            raise ValueError("person positions must be a finite 2-d array")
        object.__setattr__(self, "persons", u)
        if self.attributes is not None:
            v = np.array(self.attributes, dtype=np.float64)
            if v.ndim != 2 or v.shape[1] != u.shape[1] or not np.all(np.isfinite(v)):
                raise ValueError(
                    "attribute positions must be finite with the persons' dimension")
            object.__setattr__(self, "attributes", v)

    @property
    def dim(self) -> int:
        return self.persons.shape[1]


@dataclass(frozen=True)
class Intercepts:
    alpha0: float = 0.0
    alpha1: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.alpha0) and np.isfinite(self.alpha1)):
            raise ValueError("intercepts must be finite")


def squared_distance(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    diff = x - y
    return float(diff @ diff)


def link_probability(theta, family=LinkFamily.BERNOULLI_LOGISTIC):
    """Map a linear predictor to the mean of the response.

    Bernoulli returns the logistic probability, Poisson the rate, and the
    zero-inflated Poisson the pair ``(kappa, gamma)`` of non-structural-zero
    probability and Poisson rate, both driven by the same ``theta``.
    """
    family = LinkFamily(family)
    theta = np.asarray(theta, dtype=np.float64)
    if family is LinkFamily.BERNOULLI_LOGISTIC:
        out = expit(theta)
    elif family is LinkFamily.POISSON_LOG:
        out = np.exp(theta)
    else:
        return _maybe_scalar(expit(theta)), _maybe_scalar(np.exp(theta))
    return _maybe_scalar(out)


def _maybe_scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def social_logits(persons, alpha0):
    """Matrix of ``alpha0 - |u_i - u_j|^2`` (diagonal included, equal to alpha0)."""
    u = np.asarray(persons, dtype=np.float64)
    sq = np.sum(u * u, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * u @ u.T
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return alpha0 - d2


def attribute_logits(persons, attributes, alpha1):
    u = np.asarray(persons, dtype=np.float64)
    v = np.asarray(attributes, dtype=np.float64)
    d2 = (np.sum(u * u, axis=1)[:, None] + np.sum(v * v, axis=1)[None, :]
          - 2.0 * u @ v.T)
    np.maximum(d2, 0.0, out=d2)
    return alpha1 - d2


def _bernoulli_loglik(y, mask, theta):
    # y*log(sigma) + (1-y)*log(1-sigma), only where observed
    terms = y * log_expit(theta) + (1.0 - y) * log_expit(-theta)
    return float(np.sum(terms * mask))


def joint_log_likelihood(yi: Optional[SocialNetwork],
                         yia: Optional[AttributeMatrix],
                         pos: LatentPositions,
                         icpt: Intercepts) -> float:
    """Bernoulli-logistic log-likelihood of both matrices given positions.

    Either matrix may be None, in which case its block is omitted.
    """
    if yi is None and yia is None:
        raise ValueError("at least one data matrix is required")
    total = 0.0
    if yi is not None:
        if pos.persons.shape[0] != yi.n_persons:
            raise ValueError("person positions do not match social network")
        theta = social_logits(pos.persons, icpt.alpha0)
        total += _bernoulli_loglik(yi.filled, yi.mask, theta)
    if yia is not None:
        if not yia.binary:
            raise ValueError("likelihood is only defined for binary attributes")
        if pos.attributes is None:
            raise ValueError("attribute positions are required")
        if (pos.persons.shape[0] != yia.n_persons
                or pos.attributes.shape[0] != yia.n_attributes):
            raise ValueError("positions do not match attribute matrix")
        theta = attribute_logits(pos.persons, pos.attributes, icpt.alpha1)
        total += _bernoulli_loglik(yia.filled, yia.mask, theta)
    return total
