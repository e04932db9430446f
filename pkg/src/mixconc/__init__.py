"""Concentration inequalities for suprema of empirical processes under beta-mixing."""
from .bounds import (
    BoundInputs,
    BoundResult,
    effective_sample_size,
    nn_bound,
    oracle_inequality_bound,
    simplified_bound,
    theorem_bound,
)
from .chaining import FiniteMetricSpace, gamma_exact_small, gamma_value, greedy_admissible_sequence
from .coupling import BlockingInfeasible, block_layout, maximal_coupling
from .erm import PerceptronParams, PerceptronSpec, train_erm
from .mixing import MarkovChainSpec, beta_coefficient_exact, simulate_markov_chain
from .subweibull import SubWeibullParams, estimate_psi_norm, tail_bound

__version__ = "0.1.0"

__all__ = [
    "BlockingInfeasible", "BoundInputs", "BoundResult", "FiniteMetricSpace", "MarkovChainSpec",
    "PerceptronParams", "PerceptronSpec", "SubWeibullParams", "beta_coefficient_exact",
    "block_layout", "effective_sample_size", "estimate_psi_norm", "gamma_exact_small",
    "gamma_value", "greedy_admissible_sequence", "maximal_coupling", "nn_bound",
    "oracle_inequality_bound", "simplified_bound", "simulate_markov_chain", "tail_bound",
    "theorem_bound", "train_erm",
]
