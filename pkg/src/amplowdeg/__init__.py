"""Bayes AMP, tree-structured message passing and low-degree estimators for the spiked Wigner model."""

__version__ = "0.1.0"

from .prior import (DiscretePrior, InvalidParameter, bayes_denoiser, denoiser_derivative,  # noqa: E402
                    gauss_quadrature, make_three_point, moment, prior_from_spec)
from .scalar_theory import info, psi, q_bayes, se_map, se_trajectory  # noqa: E402
from .model import Diagonal, Observation, sample_goe, sample_observation  # noqa: E402
from .amp import bayes_amp, vector_se  # noqa: E402
from .trees import RootedTree, enumerate_rooted_trees  # noqa: E402

__all__ = [
    "DiscretePrior", "InvalidParameter", "bayes_denoiser", "denoiser_derivative", "gauss_quadrature",
    "make_three_point", "moment", "prior_from_spec", "info", "psi", "q_bayes", "se_map", "se_trajectory",
    "Diagonal", "Observation", "sample_goe", "sample_observation", "bayes_amp", "vector_se",
    "RootedTree", "enumerate_rooted_trees",
]
