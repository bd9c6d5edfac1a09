"""Joint latent space embedding of a social network and person attributes.

Persons and binary attributes share one Euclidean latent space; the model is
fitted by variational Bayesian EM with closed-form updates. Baseline fitters
for the network alone (LSM) and the person-attribute matrix alone (BLSM) are
included, along with a simulation harness, evaluation metrics and joint
k-means clustering.
"""
__version__ = "0.1.0"

from .model import (AttributeMatrix, Intercepts, LatentConfig, LatentPositions,
                    LinkFamily, SocialNetwork, joint_log_likelihood,
                    link_probability, squared_distance)
from .vbem import (FitOptions, FitResult, NumericalError, VariationalState,
                   elbo_surrogate, fit_aplsm, fit_blsm, fit_lsm,
                   gaussian_expectation_exp_negdist, objective_gradients,
                   posterior_link_probabilities)
from .estimators import (BipartiteLatentSpaceModel, JointLatentSpaceModel,
                         LatentSpaceModel)

__all__ = [
    "AttributeMatrix",
    "BipartiteLatentSpaceModel",
    "FitOptions",
    "FitResult",
    "Intercepts",
    "JointLatentSpaceModel",
    "LatentConfig",
    "LatentPositions",
    "LatentSpaceModel",
    "LinkFamily",
    "NumericalError",
    "SocialNetwork",
    "VariationalState",
    "elbo_surrogate",
    "fit_aplsm",
    "fit_blsm",
    "fit_lsm",
    "gaussian_expectation_exp_negdist",
    "joint_log_likelihood",
    "link_probability",
    "objective_gradients",
    "posterior_link_probabilities",
    "squared_distance",
]
