"""Scikit-learn style estimators over the VBEM fitters.

The models are transductive: ``fit`` embeds the nodes of the given matrices
and ``transform`` returns those embeddings. ``predict_proba`` returns the
plug-in link probabilities of the fitted nodes.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .model import AttributeMatrix, LatentConfig, SocialNetwork
from .vbem import (FitOptions, fit_aplsm, fit_blsm, fit_lsm,
                   posterior_link_probabilities)

__all__ = [
    "LatentSpaceModel",
    "BipartiteLatentSpaceModel",
    "JointLatentSpaceModel",
]


def _check_matrix(X, name):
    # nan marks a missing entry, so only infinities are rejected here
    return check_array(X, dtype=np.float64, ensure_all_finite="allow-nan",
                       ensure_min_samples=1, input_name=name)


class _BaseLatentSpace(TransformerMixin, BaseEstimator):
    """Shared hyper-parameters and fitted attributes."""

    def __init__(self, dim=2, prior_var_person=1.0, prior_var_attribute=1.0,
                 max_iterations=500, convergence_ratio=0.999999,
                 abs_tolerance=1e-6, ridge=1e-6, init_scale=0.1,
                 attribute_update="newton", random_state=0):
        self.dim = dim
        self.prior_var_person = prior_var_person
        self.prior_var_attribute = prior_var_attribute
        self.max_iterations = max_iterations
        self.convergence_ratio = convergence_ratio
        self.abs_tolerance = abs_tolerance
        self.ridge = ridge
        self.init_scale = init_scale
        self.attribute_update = attribute_update
        self.random_state = random_state

    def _config(self):
        return LatentConfig(self.dim, self.prior_var_person, self.prior_var_attribute)

    def _options(self):
        if not isinstance(self.random_state, (int, np.integer)):
            raise ValueError("random_state must be an integer seed")
        return FitOptions(max_iterations=self.max_iterations,
                          convergence_ratio=self.convergence_ratio,
                          abs_tolerance=self.abs_tolerance, ridge=self.ridge,
                          seed=int(self.random_state), init_scale=self.init_scale,
                          attribute_update=self.attribute_update)

    def _store(self, result):
        state = result.state
        self.result_ = result
        self.embedding_ = state.mean_persons
        self.covariance_ = state.cov_persons
        self.attribute_embedding_ = state.mean_attributes
        self.attribute_covariance_ = state.cov_attributes
        self.alpha0_ = state.alpha0
        self.alpha1_ = state.alpha1
        self.objective_trace_ = np.asarray(result.objective_trace)
        self.n_iter_ = result.iterations_run
        self.converged_ = result.converged
        return self

    def transform(self, X):
        """Person embedding of the fitted nodes.

        ``X`` must be the matrix the model was fitted on (its row count is
        checked); new nodes cannot be embedded.
        """
        check_is_fitted(self, "result_")
        X = _check_matrix(X, "X")
        if X.shape[0] != self.embedding_.shape[0]:
            raise ValueError("transform only embeds the fitted persons")
        return self.embedding_

    def predict_proba(self, X=None):
        """Fitted link probabilities, see :func:`posterior_link_probabilities`."""
        check_is_fitted(self, "result_")
        social, attrs = posterior_link_probabilities(self.result_)
        return self._pick(social, attrs)

    def predict(self, X=None, threshold=0.5):
        probs = self.predict_proba(X)
        if isinstance(probs, tuple):
            return tuple(None if p is None else (p >= threshold).astype(float)
                         for p in probs)
        return (probs >= threshold).astype(float)


class LatentSpaceModel(_BaseLatentSpace):
    """Latent space model of a social network.

    ``fit(X)`` takes the ``N x N`` adjacency matrix (``nan`` for missing
    dyads); ``predict_proba`` returns the ``N x N`` link probabilities with a
    ``nan`` diagonal.
    """

    def __init__(self, dim=2, prior_var_person=1.0, max_iterations=500,
                 convergence_ratio=0.999999, abs_tolerance=1e-6, ridge=1e-6,
                 init_scale=0.1, directed=False, random_state=0):
        super().__init__(dim=dim, prior_var_person=prior_var_person,
                         max_iterations=max_iterations,
                         convergence_ratio=convergence_ratio,
                         abs_tolerance=abs_tolerance, ridge=ridge,
                         init_scale=init_scale, random_state=random_state)
        self.directed = directed

    def fit(self, X, y=None):
        net = SocialNetwork(_check_matrix(X, "X"), directed=self.directed)
        self.n_features_in_ = net.n_persons
        return self._store(fit_lsm(net, self._config(), self._options()))

    def _pick(self, social, attrs):
        return social


class BipartiteLatentSpaceModel(_BaseLatentSpace):
    """Bipartite latent space model of a person-attribute matrix.

    ``fit(X)`` takes the ``N x M`` binary matrix; ``predict_proba`` returns
    the ``N x M`` probabilities.
    """

    def fit(self, X, y=None):
        mat = AttributeMatrix(_check_matrix(X, "X"))
        self.n_features_in_ = mat.n_attributes
        return self._store(fit_blsm(mat, self._config(), self._options()))

    def _pick(self, social, attrs):
        return attrs


class JointLatentSpaceModel(_BaseLatentSpace):
    """Joint model of a social network and person attributes.

    ``fit(X, y)`` takes the ``N x N`` adjacency matrix as ``X`` and the
    ``N x M`` attribute matrix as ``y``. ``predict_proba`` returns the pair
    ``(social, attributes)``.
    """

    def __init__(self, dim=2, prior_var_person=1.0, prior_var_attribute=1.0,
                 max_iterations=500, convergence_ratio=0.999999,
                 abs_tolerance=1e-6, ridge=1e-6, init_scale=0.1,
                 attribute_update="newton", directed=False, random_state=0):
        super().__init__(dim=dim, prior_var_person=prior_var_person,
                         prior_var_attribute=prior_var_attribute,
                         max_iterations=max_iterations,
                         convergence_ratio=convergence_ratio,
                         abs_tolerance=abs_tolerance, ridge=ridge,
                         init_scale=init_scale,
                         attribute_update=attribute_update,
                         random_state=random_state)
        self.directed = directed

    def fit(self, X, y):
        if y is None:
            raise ValueError("the joint model needs the attribute matrix as y")
        net = SocialNetwork(_check_matrix(X, "X"), directed=self.directed)
        mat = AttributeMatrix(_check_matrix(y, "y"))
        self.n_features_in_ = net.n_persons
        return self._store(fit_aplsm(net, mat, self._config(), self._options()))

    def _pick(self, social, attrs):
        return social, attrs
