"""Convex Tikhonov regularization with measured regularity conditions and KL fits."""

from .index_calculus import (
    DegenerateTransformError,
    IndexFunction,
    KLDescription,
    a_priori_alpha,
    companion,
    kl_alpha_choice,
    kl_from_psi,
    phi3_from_phi4,
    phi3_from_psi2,
    phi4_from_phi3,
    psi2_from_phi3,
    psi_from_kl,
)
from .model import DenseOperator, DiagonalOperator, NormWeights, make_noisy, polynomial_operator, x_norm
from .penalty import PowerNorm, QuadraticNorm, penalty_from_spec
from .solver import Solution, TikhonovProblem, dual_objective, objective_gap, solve

__version__ = "0.1.0"
