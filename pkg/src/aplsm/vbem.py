"""Variational Bayesian EM for the LSM, BLSM and joint (APLSM) models.

The variational family is ``q(u_i) = N(u~_i, L0)`` and ``q(v_a) = N(v~_a, L1)``
with one covariance shared by all persons and one by all attributes.  The
objective maximised is the evidence lower bound in which every
``E_q[log(1 + exp(theta))]`` is replaced by its Jensen upper bound
``log(1 + E_q[exp(theta)])``; the expectation has the closed form given by
:func:`gaussian_expectation_exp_negdist`.

Two log-sum functions drive all closed-form updates::

    F_I  = sum_{i != j} log(1 + exp(a0) det(I + 4 L0)^{-1/2}
                              exp(-d_ij' (I + 4 L0)^{-1} d_ij))
    F_IA = sum_{i, a}   log(1 + exp(a1) det(I + 2 L0 + 2 L1)^{-1/2}
                              exp(-d_ia' (I + 2 L0 + 2 L1)^{-1} d_ia))

``objective_gradients`` returns their first and second derivatives.  For the
social block the per-person derivatives are those of the row sum
``sum_{j != i}`` (half the derivative of the symmetric ``F_I``), which is the
convention under which the person update is an exact Newton step.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import expit

from .model import (AttributeMatrix, Intercepts, LatentConfig,
                    LatentPositions, SocialNetwork, attribute_logits,
                    social_logits)

logger = logging.getLogger(__name__)

__all__ = [
    "NumericalError",
    "VariationalState",
    "FitOptions",
    "FitResult",
    "ObjectiveGradients",
    "gaussian_expectation_exp_negdist",
    "elbo_surrogate",
    "kl_prior_terms",
    "expected_loglik_bound",
    "objective_gradients",
    "ve_update_persons",
    "ve_update_attributes",
    "ve_update_covariances",
    "m_update_intercepts",
    "initial_state",
    "fit_lsm",
    "fit_blsm",
    "fit_aplsm",
    "posterior_link_probabilities",
]

MODEL_KINDS = ("lsm", "blsm", "aplsm")
MAX_INTERCEPT_STEP = 5.0
_TINY_CURVATURE = 1e-12


class NumericalError(RuntimeError):
    """Raised when the objective becomes non-finite during a fit."""


@dataclass(frozen=True, eq=False)
class VariationalState:
    """Variational parameters.

    Attributes are ``None`` for the blocks a model does not have: LSM has no
    attribute means/covariance/``alpha1``, BLSM has no ``alpha0``.
    """

    mean_persons: np.ndarray
    cov_persons: np.ndarray
    mean_attributes: Optional[np.ndarray] = None
    cov_attributes: Optional[np.ndarray] = None
    alpha0: Optional[float] = None
    alpha1: Optional[float] = None

    def __post_init__(self):
        u = np.array(self.mean_persons, dtype=np.float64)
        dim = u.shape[1]
        object.__setattr__(self, "mean_persons", u)
        object.__setattr__(self, "cov_persons",
                           _check_cov(self.cov_persons, dim, "cov_persons"))
        if self.mean_attributes is not None:
            v = np.array(self.mean_attributes, dtype=np.float64)
            if v.ndim != 2 or v.shape[1] != dim:
                raise ValueError("attribute means must share the latent dimension")
            object.__setattr__(self, "mean_attributes", v)
            object.__setattr__(self, "cov_attributes",
                               _check_cov(self.cov_attributes, dim, "cov_attributes"))
        for name in ("alpha0", "alpha1"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, float(val))
        if not all(np.all(np.isfinite(a)) for a in self._arrays()):
            raise ValueError("variational state has non-finite entries")

    def _arrays(self):
        out = [self.mean_persons, self.cov_persons]
        if self.mean_attributes is not None:
            out += [self.mean_attributes, self.cov_attributes]
        out += [np.float64(a) for a in (self.alpha0, self.alpha1) if a is not None]
        return out

    @property
    def dim(self) -> int:
        return self.mean_persons.shape[1]

    @property
    def n_persons(self) -> int:
        return self.mean_persons.shape[0]

    @property
    def n_attributes(self) -> int:
        return 0 if self.mean_attributes is None else self.mean_attributes.shape[0]

    def positions(self) -> LatentPositions:
        return LatentPositions(self.mean_persons, self.mean_attributes)

    def intercepts(self) -> Intercepts:
        return Intercepts(self.alpha0 or 0.0, self.alpha1 or 0.0)


def _check_cov(cov, dim, name):
    if cov is None:
        raise ValueError(f"{name} is required")
    c = np.array(cov, dtype=np.float64)
    if c.shape != (dim, dim):
        raise ValueError(f"{name} must be {dim}x{dim}, got {c.shape}")
    return c


@dataclass(frozen=True)
class FitOptions:
    """Controls for the VBEM loop.

    ``attribute_update`` selects the attribute-mean step: ``"newton"`` uses the
    same second-order step as the person update, ``"printed"`` the variant
    with the negated Hessian and no Hessian-times-current-mean term.
    """

    max_iterations: int = 500
    convergence_ratio: float = 0.999999
    abs_tolerance: float = 1e-6
    ridge: float = 1e-6
    seed: int = 0
    init_scale: float = 0.1
    init_cov: float = 0.1
    max_halvings: int = 5
    attribute_update: str = "newton"

    def __post_init__(self):
        if int(self.max_iterations) < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0.0 < self.convergence_ratio < 1.0:
            raise ValueError("convergence_ratio must lie in (0, 1)")
        if self.ridge < 0 or self.abs_tolerance < 0:
            raise ValueError("ridge and abs_tolerance must be >= 0")
        if self.init_scale < 0 or self.init_cov <= 0:
            raise ValueError("init_scale must be >= 0 and init_cov > 0")
        if self.attribute_update not in ("newton", "printed"):
            raise ValueError("attribute_update must be 'newton' or 'printed'")


@dataclass(frozen=True, eq=False)
class FitResult:
    state: VariationalState
    objective_trace: tuple
    iterations_run: int
    converged: bool
    model_kind: str
    initial_objective: float = float("nan")
    diagnostics: dict = field(default_factory=dict)
    options: Optional[FitOptions] = None
    config: Optional[LatentConfig] = None

    @property
    def final_objective(self) -> float:
        return self.objective_trace[-1] if self.objective_trace else self.initial_objective


# --------------------------------------------------------------------------
# data bundle

@dataclass(frozen=True, eq=False)
class _Data:
    yi: Optional[np.ndarray]
    wi: Optional[np.ndarray]
    yia: Optional[np.ndarray]
    wia: Optional[np.ndarray]

    @classmethod
    def build(cls, yi, yia):
        if yi is None and yia is None:
            raise ValueError("at least one data matrix is required")
        yi_f = wi = yia_f = wia = None
        if yi is not None:
            if not isinstance(yi, SocialNetwork):
                yi = SocialNetwork(yi)
            yi_f, wi = yi.filled, yi.mask
        if yia is not None:
            if not isinstance(yia, AttributeMatrix):
                yia = AttributeMatrix(yia)
            if not yia.binary:
                raise ValueError("estimation supports binary attributes only")
            yia_f, wia = yia.filled, yia.mask
        if yi is not None and yia is not None and yi.n_persons != yia.n_persons:
            raise ValueError(
                f"social network has {yi.n_persons} persons, attribute "
                f"matrix has {yia.n_persons}")
        return cls(yi_f, wi, yia_f, wia)

    @property
    def has_social(self):
        return self.yi is not None

    @property
    def has_attributes(self):
        return self.yia is not None

    @property
    def n_persons(self):
        return (self.yi if self.yi is not None else self.yia).shape[0]

    def check_state(self, state):
        if state.n_persons != self.n_persons:
            raise ValueError(
                f"state has {state.n_persons} persons, data has {self.n_persons}")
        if self.has_social and state.alpha0 is None:
            raise ValueError("state lacks alpha0 for the social block")
        if self.has_attributes:
            if state.mean_attributes is None or state.alpha1 is None:
                raise ValueError("state lacks the attribute block")
            if state.n_attributes != self.yia.shape[1]:
                raise ValueError(
                    f"state has {state.n_attributes} attributes, data has "
                    f"{self.yia.shape[1]}")


# --------------------------------------------------------------------------
# Gaussian expectation and the surrogate objective

def log_gaussian_expectation_exp_negdist(mean_diff, cov_sum):
    """Log of ``E[exp(-|X|^2)]`` for ``X ~ N(m, C / 2)``; see the linear form."""
    m = np.atleast_1d(np.asarray(mean_diff, dtype=np.float64))
    c = np.atleast_2d(np.asarray(cov_sum, dtype=np.float64))
    if c.shape != (m.size, m.size):
        raise ValueError(f"cov_sum must be {m.size}x{m.size}, got {c.shape}")
    if not np.allclose(c, c.T, atol=1e-12 * max(1.0, np.abs(c).max())):
        raise ValueError("cov_sum must be symmetric")
    eig = np.linalg.eigvalsh(c)
    if eig.min() < -1e-12 * max(1.0, np.abs(eig).max()):
        raise ValueError("cov_sum must be positive semidefinite")
    s = np.eye(m.size) + c
    _, logdet = np.linalg.slogdet(s)
    return float(-m @ np.linalg.solve(s, m) - 0.5 * logdet)


def gaussian_expectation_exp_negdist(mean_diff, cov_sum) -> float:
    """Closed form of ``E[exp(-|X|^2)]`` with ``X ~ N(m, C / 2)``.

    Equals ``exp(-m' (I + C)^{-1} m) det(I + C)^{-1/2}``.  For two independent
    Gaussian positions the difference has covariance ``C / 2``, so ``C`` is
    ``4 L0`` for person pairs and ``2 L0 + 2 L1`` for person-attribute pairs.
    """
    return math.exp(log_gaussian_expectation_exp_negdist(mean_diff, cov_sum))


def _inv_logdet(s):
    sign, logdet = np.linalg.slogdet(s)
    if sign <= 0:
        raise NumericalError("covariance sum is not positive definite")
    return np.linalg.inv(s), logdet


def _softplus(x):
    return np.logaddexp(0.0, x)


def kl_prior_terms(state: VariationalState, config: LatentConfig) -> float:
    """Negative KL divergences of the variational factors from their priors.

    Returned as the contribution to the objective (i.e. ``-sum KL``),
    including the ``+ D/2`` per node constant.
    """
    total = _neg_kl(state.mean_persons, state.cov_persons, config.prior_var_person)
    if state.mean_attributes is not None:
        total += _neg_kl(state.mean_attributes, state.cov_attributes,
                         config.prior_var_attribute)
    return total


def _neg_kl(means, cov, prior_var):
    n, dim = means.shape
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise NumericalError("variational covariance is not positive definite")
    return (-0.5 * (dim * n * math.log(prior_var) - n * logdet)
            - n * np.trace(cov) / (2.0 * prior_var)
            - np.sum(means * means) / (2.0 * prior_var)
            + 0.5 * n * dim)


def _social_eta(u, cov0, alpha0):
    dim = u.shape[1]
    sinv, logdet = _inv_logdet(np.eye(dim) + 4.0 * cov0)
    diff = u[:, None, :] - u[None, :, :]
    q = np.einsum("ijd,de,ije->ij", diff, sinv, diff)
    return alpha0 - 0.5 * logdet - q, diff, sinv


def _attr_eta(u, v, cov0, cov1, alpha1):
    dim = u.shape[1]
    sinv, logdet = _inv_logdet(np.eye(dim) + 2.0 * cov0 + 2.0 * cov1)
    diff = u[:, None, :] - v[None, :, :]
    q = np.einsum("iad,de,iae->ia", diff, sinv, diff)
    return alpha1 - 0.5 * logdet - q, diff, sinv


def _sqdist(diff):
    return np.sum(diff * diff, axis=-1)


def _expected_bound(state, data):
    total = 0.0
    u = state.mean_persons
    if data.has_social:
        eta, diff, _ = _social_eta(u, state.cov_persons, state.alpha0)
        lin = state.alpha0 - 2.0 * np.trace(state.cov_persons) - _sqdist(diff)
        total += np.sum(data.wi * (data.yi * lin - _softplus(eta)))
    if data.has_attributes:
        eta, diff, _ = _attr_eta(u, state.mean_attributes, state.cov_persons,
                                 state.cov_attributes, state.alpha1)
        lin = (state.alpha1 - np.trace(state.cov_persons)
               - np.trace(state.cov_attributes) - _sqdist(diff))
        total += np.sum(data.wia * (data.yia * lin - _softplus(eta)))
    return float(total)


def expected_loglik_bound(state: VariationalState,
                          yi: Optional[SocialNetwork] = None,
                          yia: Optional[AttributeMatrix] = None) -> float:
    """Jensen lower bound on ``E_q[log p(Y | U, V)]``."""
    data = _Data.build(yi, yia)
    data.check_state(state)
    return _expected_bound(state, data)


def _objective(state, data, config):
    return kl_prior_terms(state, config) + _expected_bound(state, data)


def elbo_surrogate(state: VariationalState,
                   yi: Optional[SocialNetwork] = None,
                   yia: Optional[AttributeMatrix] = None,
                   config: LatentConfig = LatentConfig()) -> float:
    """Surrogate ELBO: prior KL terms plus the Jensen bound on the likelihood.

    Pass ``yi`` only for LSM, ``yia`` only for BLSM and both for APLSM.
    """
    data = _Data.build(yi, yia)
    data.check_state(state)
    if state.dim != config.dim:
        raise ValueError(f"state dimension {state.dim} != config.dim {config.dim}")
    return _objective(state, data, config)


# --------------------------------------------------------------------------
# gradients

@dataclass(frozen=True, eq=False)
class ObjectiveGradients:
    """First and second derivatives of ``F_I`` and ``F_IA``.

    Blocks that do not apply to the model are ``None``.  Per-node gradients
    are stacked row-wise, per-node Hessians along the first axis.
    """

    G_I_u: Optional[np.ndarray] = None
    H_I_u: Optional[np.ndarray] = None
    G_I_cov0: Optional[np.ndarray] = None
    g_I_alpha0: Optional[float] = None
    h_I_alpha0: Optional[float] = None
    G_IA_u: Optional[np.ndarray] = None
    H_IA_u: Optional[np.ndarray] = None
    G_IA_v: Optional[np.ndarray] = None
    H_IA_v: Optional[np.ndarray] = None
    G_IA_cov0: Optional[np.ndarray] = None
    G_IA_cov1: Optional[np.ndarray] = None
    g_IA_alpha1: Optional[float] = None
    h_IA_alpha1: Optional[float] = None


def _social_derivatives(state, data):
    eta, diff, sinv = _social_eta(state.mean_persons, state.cov_persons,
                                  state.alpha0)
    p = expit(eta)
    w = data.wi
    wp = w * p
    wpq = w * p * (1.0 - p)
    # F_I is symmetric in (i, j); row-wise derivative = half the full one
    ws_p = wp + wp.T
    ws_pq = wpq + wpq.T
    G_u = -np.einsum("ij,ijd->id", ws_p, diff) @ sinv
    outer = np.einsum("ij,ijd,ije->ide", ws_pq, diff, diff)
    H_u = (-ws_p.sum(axis=1)[:, None, None] * sinv
           + 2.0 * sinv @ outer @ sinv)
    pair_outer = np.einsum("ij,ijd,ije->de", wp, diff, diff)
    G_cov = 4.0 * sinv @ pair_outer @ sinv - 2.0 * wp.sum() * sinv
    return dict(G_I_u=G_u, H_I_u=H_u, G_I_cov0=G_cov,
                g_I_alpha0=float(wp.sum()), h_I_alpha0=float(wpq.sum()))


def _attr_derivatives(state, data):
    eta, diff, sinv = _attr_eta(state.mean_persons, state.mean_attributes,
                                state.cov_persons, state.cov_attributes,
                                state.alpha1)
    p = expit(eta)
    wp = data.wia * p
    wpq = data.wia * p * (1.0 - p)
    G_u = -2.0 * np.einsum("ia,iad->id", wp, diff) @ sinv
    G_v = 2.0 * np.einsum("ia,iad->ad", wp, diff) @ sinv
    outer_u = np.einsum("ia,iad,iae->ide", wpq, diff, diff)
    outer_v = np.einsum("ia,iad,iae->ade", wpq, diff, diff)
    H_u = -2.0 * wp.sum(axis=1)[:, None, None] * sinv + 4.0 * sinv @ outer_u @ sinv
    H_v = -2.0 * wp.sum(axis=0)[:, None, None] * sinv + 4.0 * sinv @ outer_v @ sinv
    pair_outer = np.einsum("ia,iad,iae->de", wp, diff, diff)
    G_cov = 2.0 * sinv @ pair_outer @ sinv - wp.sum() * sinv
    return dict(G_IA_u=G_u, H_IA_u=H_u, G_IA_v=G_v, H_IA_v=H_v,
                G_IA_cov0=G_cov, G_IA_cov1=G_cov.copy(),
                g_IA_alpha1=float(wp.sum()), h_IA_alpha1=float(wpq.sum()))


def _gradients(state, data):
    parts = {}
    if data.has_social:
        parts.update(_social_derivatives(state, data))
    if data.has_attributes:
        parts.update(_attr_derivatives(state, data))
    return ObjectiveGradients(**parts)


def objective_gradients(state: VariationalState,
                        yi: Optional[SocialNetwork] = None,
                        yia: Optional[AttributeMatrix] = None) -> ObjectiveGradients:
    """Closed-form gradients and Hessians of ``F_I`` and ``F_IA``."""
    data = _Data.build(yi, yia)
    data.check_state(state)
    return _gradients(state, data)


# --------------------------------------------------------------------------
# closed-form updates

def _solve_floored(brackets, rhs, ridge):
    """Solve ``B x = r`` per node with ``B`` symmetrised and eigen-floored."""
    sym = 0.5 * (brackets + np.swapaxes(brackets, -1, -2))
    evals, evecs = np.linalg.eigh(sym)
    n_floored = int(np.sum(np.any(evals < ridge, axis=-1)))
    evals = np.maximum(evals, max(ridge, np.finfo(float).tiny))
    coef = np.einsum("nde,nd->ne", evecs, rhs) / evals
    return np.einsum("nde,ne->nd", evecs, coef), n_floored


def _person_system(state, data, grads, config):
    """Bracket matrices and right-hand sides of the person-mean update."""
    u = state.mean_persons
    n, dim = u.shape
    eye = np.eye(dim)
    c = np.full(n, 1.0 / (2.0 * config.prior_var_person))
    rhs = np.zeros_like(u)
    hess = np.zeros((n, dim, dim))
    grad = np.zeros_like(u)
    if data.has_social:
        sym_y = data.yi + data.yi.T
        c += sym_y.sum(axis=1)
        rhs += sym_y @ u
        hess += grads.H_I_u
        grad += grads.G_I_u
    if data.has_attributes:
        c += data.yia.sum(axis=1)
        rhs += data.yia @ state.mean_attributes
        hess += 0.5 * grads.H_IA_u
        grad += 0.5 * grads.G_IA_u
    brackets = c[:, None, None] * eye + hess
    rhs = rhs - grad + np.einsum("nde,ne->nd", hess, u)
    return brackets, rhs, c, grad


def ve_update_persons(state: VariationalState, yi=None, yia=None,
                      config: LatentConfig = LatentConfig(),
                      ridge: float = 1e-6) -> np.ndarray:
    """One Jacobi sweep of the person-mean update; returns the new ``N x D`` means.

    Social terms are dropped when ``yi`` is None (BLSM) and attribute terms
    when ``yia`` is None (LSM).
    """
    data = _Data.build(yi, yia)
    data.check_state(state)
    return _person_step(state, data, _gradients(state, data), config, ridge)[0]


def _person_step(state, data, grads, config, ridge):
    brackets, rhs, _, _ = _person_system(state, data, grads, config)
    return _solve_floored(brackets, rhs, ridge)


def _person_fallback(state, data, grads, config):
    # Newton step with the Hessian dropped: a diagonally scaled gradient step
    _, _, c, grad = _person_system(state, data, grads, config)
    u = state.mean_persons
    rhs = -grad
    if data.has_social:
        rhs = rhs + (data.yi + data.yi.T) @ u
    if data.has_attributes:
        rhs = rhs + data.yia @ state.mean_attributes
    return rhs / c[:, None]


def _attribute_system(state, data, grads, config, variant):
    v = state.mean_attributes
    m, dim = v.shape
    c = 1.0 / (2.0 * config.prior_var_attribute) + data.yia.sum(axis=0)
    half_h = 0.5 * grads.H_IA_v
    rhs = data.yia.T @ state.mean_persons - 0.5 * grads.G_IA_v
    if variant == "printed":
        brackets = c[:, None, None] * np.eye(dim) - half_h
    else:
        brackets = c[:, None, None] * np.eye(dim) + half_h
        rhs = rhs + np.einsum("nde,ne->nd", half_h, v)
    return brackets, rhs, c


def ve_update_attributes(state: VariationalState, yia=None,
                         config: LatentConfig = LatentConfig(),
                         ridge: float = 1e-6,
                         variant: str = "newton") -> np.ndarray:
    """Attribute-mean update; returns the new ``M x D`` means.

    Only ``F_IA`` involves attribute positions, so the social network never
    enters this step.
    """
    data = _Data.build(None, yia)
    data.check_state(state)
    return _attribute_step(state, data, _gradients(state, data), config,
                           ridge, variant)[0]


def _attribute_step(state, data, grads, config, ridge, variant):
    brackets, rhs, _ = _attribute_system(state, data, grads, config, variant)
    return _solve_floored(brackets, rhs, ridge)


def _attribute_fallback(state, data, grads, config):
    c = 1.0 / (2.0 * config.prior_var_attribute) + data.yia.sum(axis=0)
    rhs = data.yia.T @ state.mean_persons - 0.5 * grads.G_IA_v
    return rhs / c[:, None]


def _floor_cov(mat, ridge):
    sym = 0.5 * (mat + mat.T)
    evals, evecs = np.linalg.eigh(sym)
    floored = bool(np.any(evals < ridge))
    evals = np.maximum(evals, max(ridge, np.finfo(float).tiny))
    return (evecs * evals) @ evecs.T, floored


def _covariance_step(state, data, grads, config, ridge):
    dim = state.dim
    eye = np.eye(dim)
    n = state.n_persons
    repairs = 0
    scal = n / (2.0 * config.prior_var_person)
    bracket0 = np.zeros((dim, dim))
    if data.has_social:
        scal += 2.0 * np.sum(data.yi)
        bracket0 = bracket0 + grads.G_I_cov0
    if data.has_attributes:
        scal += np.sum(data.yia)
        bracket0 = bracket0 + grads.G_IA_cov0
    b0, fl = _floor_cov(scal * eye + bracket0, ridge)
    repairs += fl
    cov0, fl = _floor_cov(0.5 * n * np.linalg.inv(b0), ridge)
    repairs += fl
    cov1 = None
    if data.has_attributes:
        m = state.n_attributes
        scal1 = m / (2.0 * config.prior_var_attribute) + np.sum(data.yia)
        b1, fl = _floor_cov(scal1 * eye + grads.G_IA_cov1, ridge)
        repairs += fl
        cov1, fl = _floor_cov(0.5 * m * np.linalg.inv(b1), ridge)
        repairs += fl
    return cov0, cov1, repairs


def ve_update_covariances(state: VariationalState, yi=None, yia=None,
                          config: LatentConfig = LatentConfig(),
                          ridge: float = 1e-6):
    """Shared-covariance update; returns ``(L0, L1)`` (``L1`` is None for LSM).

    Both results are symmetrised and eigenvalue-floored at ``ridge``.
    """
    data = _Data.build(yi, yia)
    data.check_state(state)
    cov0, cov1, _ = _covariance_step(state, data, _gradients(state, data),
                                     config, ridge)
    return cov0, cov1


def _newton_intercept(alpha, total, g, h):
    """Newton step ``(sum y - g + alpha h) / h`` with the step clamped."""
    if h <= _TINY_CURVATURE:
        return alpha, False
    new = (total - g + alpha * h) / h
    step = float(np.clip(new - alpha, -MAX_INTERCEPT_STEP, MAX_INTERCEPT_STEP))
    return alpha + step, True


def _intercept_step(state, data, grads):
    a0, a1 = state.alpha0, state.alpha1
    skipped = 0
    if data.has_social:
        a0, ok = _newton_intercept(a0, float(np.sum(data.yi)),
                                   grads.g_I_alpha0, grads.h_I_alpha0)
        skipped += not ok
    if data.has_attributes:
        a1, ok = _newton_intercept(a1, float(np.sum(data.yia)),
                                   grads.g_IA_alpha1, grads.h_IA_alpha1)
        skipped += not ok
    return a0, a1, skipped


def m_update_intercepts(state: VariationalState, yi=None, yia=None):
    """Newton-form intercept update; returns ``(alpha0, alpha1)``.

    A block whose curvature is numerically zero keeps its current value.
    """
    data = _Data.build(yi, yia)
    data.check_state(state)
    a0, a1, _ = _intercept_step(state, data, _gradients(state, data))
    return a0, a1


# --------------------------------------------------------------------------
# drivers

def _logit_density(values, mask):
    n_obs = mask.sum()
    dens = values.sum() / n_obs if n_obs else 0.5
    dens = min(max(dens, 1e-12), 1.0 - 1e-12)
    return float(np.clip(math.log(dens / (1.0 - dens)), -5.0, 5.0))


def initial_state(data_or_yi, yia=None, config: LatentConfig = LatentConfig(),
                  options: FitOptions = FitOptions(), model_kind=None):
    """Seeded starting point: small Gaussian means, ``init_cov * I`` covariances
    and density-matched intercepts clamped to ``[-5, 5]``."""
    data = (data_or_yi if isinstance(data_or_yi, _Data)
            else _Data.build(data_or_yi, yia))
    rng = np.random.default_rng(options.seed)
    dim = config.dim
    n = data.n_persons
    u = options.init_scale * rng.standard_normal((n, dim))
    v = cov1 = a0 = a1 = None
    if data.has_attributes:
        v = options.init_scale * rng.standard_normal((data.yia.shape[1], dim))
        cov1 = options.init_cov * np.eye(dim)
        a1 = _logit_density(data.yia, data.wia)
    if data.has_social:
        a0 = _logit_density(data.yi, data.wi)
    return VariationalState(u, options.init_cov * np.eye(dim), v, cov1, a0, a1)


class _Tracker:
    """Safeguarded block updates: accept only steps that do not lower the objective."""

    def __init__(self, data, config, options):
        self.data = data
        self.config = config
        self.options = options
        self.diag = dict(ridge_repairs=0, damped_steps=0, rejected_steps=0,
                         gradient_fallbacks=0, skipped_intercept_updates=0)

    def objective(self, state):
        val = _objective(state, self.data, self.config)
        if not np.isfinite(val):
            raise NumericalError("surrogate objective became non-finite")
        return val

    def try_step(self, state, obj, make, fallback=None):
        """Line search along ``make(t)`` for t = 1, 1/2, ..., 2^-max_halvings."""
        for candidates, is_fallback in ((make, False), (fallback, True)):
            if candidates is None:
                continue
            t = 1.0
            for k in range(self.options.max_halvings + 1):
                try:
                    cand = candidates(t)
                    val = self.objective(cand)
                except (NumericalError, ValueError, np.linalg.LinAlgError):
                    val = -np.inf
                    cand = None
                if cand is not None and val >= obj - 1e-12 * max(1.0, abs(obj)):
                    if k:
                        self.diag["damped_steps"] += 1
                    if is_fallback:
                        self.diag["gradient_fallbacks"] += 1
                    return cand, val
                t *= 0.5
        self.diag["rejected_steps"] += 1
        return state, obj


def _lerp(a, b, t):
    return a + t * (b - a)


def _iterate(state, data, config, options, tracker):
    obj = tracker.objective(state)
    ridge = options.ridge

    # M-step
    grads = _gradients(state, data)
    a0, a1, skipped = _intercept_step(state, data, grads)
    tracker.diag["skipped_intercept_updates"] += skipped
    if (a0, a1) != (state.alpha0, state.alpha1):
        s0 = state
        state, obj = tracker.try_step(state, obj, lambda t: replace(
            s0,
            alpha0=None if a0 is None else _lerp(s0.alpha0, a0, t),
            alpha1=None if a1 is None else _lerp(s0.alpha1, a1, t)))

    # covariances
    grads = _gradients(state, data)
    cov0, cov1, repairs = _covariance_step(state, data, grads, config, ridge)
    tracker.diag["ridge_repairs"] += repairs
    s0 = state
    state, obj = tracker.try_step(state, obj, lambda t: replace(
        s0,
        cov_persons=_lerp(s0.cov_persons, cov0, t),
        cov_attributes=None if cov1 is None else _lerp(s0.cov_attributes, cov1, t)))

    # means, both from the current state (Jacobi)
    grads = _gradients(state, data)
    u_new, rep_u = _person_step(state, data, grads, config, ridge)
    u_fb = _person_fallback(state, data, grads, config)
    v_new = v_fb = None
    rep_v = 0
    if data.has_attributes:
        v_new, rep_v = _attribute_step(state, data, grads, config, ridge,
                                       options.attribute_update)
        v_fb = _attribute_fallback(state, data, grads, config)
    tracker.diag["ridge_repairs"] += rep_u + rep_v
    s0 = state

    def means_at(u_target, v_target):
        def make(t):
            return replace(
                s0,
                mean_persons=_lerp(s0.mean_persons, u_target, t),
                mean_attributes=(None if v_target is None
                                 else _lerp(s0.mean_attributes, v_target, t)))
        return make

    state, obj = tracker.try_step(state, obj, means_at(u_new, v_new),
                                  means_at(u_fb, v_fb))
    return state, obj


def _fit(data, config, options, model_kind, init):
    if init is None:
        state = initial_state(data, config=config, options=options)
    else:
        data.check_state(init)
        state = init
    if state.dim != config.dim:
        raise ValueError("initial state dimension does not match config.dim")
    tracker = _Tracker(data, config, options)
    prev = tracker.objective(state)
    initial = prev
    trace = []
    converged = False
    tol_ratio = 1.0 - options.convergence_ratio
    for it in range(options.max_iterations):
        state, obj = _iterate(state, data, config, options, tracker)
        trace.append(float(obj))
        ratio = obj / prev if prev != 0 else np.inf
        if abs(ratio - 1.0) <= tol_ratio or abs(obj - prev) <= options.abs_tolerance:
            converged = True
            break
        prev = obj
    logger.debug("%s fit: %d iterations, converged=%s, objective=%.6f",
                 model_kind, len(trace), converged, trace[-1])
    return FitResult(state=state, objective_trace=tuple(trace),
                     iterations_run=len(trace), converged=converged,
                     model_kind=model_kind, initial_objective=float(initial),
                     diagnostics=dict(tracker.diag), options=options,
                     config=config)


def fit_lsm(yi, config: LatentConfig = LatentConfig(),
            options: FitOptions = FitOptions(), init=None) -> FitResult:
    """Fit the latent space model to a social network alone."""
    return _fit(_Data.build(yi, None), config, options, "lsm", init)


def fit_blsm(yia, config: LatentConfig = LatentConfig(),
             options: FitOptions = FitOptions(), init=None) -> FitResult:
    """Fit the bipartite latent space model to a person-attribute matrix alone."""
    return _fit(_Data.build(None, yia), config, options, "blsm", init)


def fit_aplsm(yi, yia, config: LatentConfig = LatentConfig(),
              options: FitOptions = FitOptions(), init=None) -> FitResult:
    """Fit the joint attribute-person latent space model."""
    return _fit(_Data.build(yi, yia), config, options, "aplsm", init)


def posterior_link_probabilities(result, data=None):
    """Plug-in link probabilities at the posterior means.

    Returns ``(social, attributes)``; an entry is None when the model lacks
    that block.  The social diagonal is ``nan``.
    """
    state = result.state if isinstance(result, FitResult) else result
    social = attrs = None
    if state.alpha0 is not None:
        social = expit(social_logits(state.mean_persons, state.alpha0))
        np.fill_diagonal(social, np.nan)
    if state.mean_attributes is not None and state.alpha1 is not None:
        attrs = expit(attribute_logits(state.mean_persons,
                                       state.mean_attributes, state.alpha1))
    return social, attrs
