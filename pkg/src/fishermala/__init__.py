"""Fisher-adaptive MALA for Bayesian inverse problems.

Submodules
----------
linalg       rank-one square-root preconditioner kernels
targets      priors, likelihoods, posteriors and Gaussian reference targets
adapt        Fisher, covariance and step-size adaptation
samplers     MALA variants, pCN and the chain driver
forward      heat-source and Neumann forward models
diagnostics  ACF, ESS, ESJD, accuracy and rate metrics
experiments  experiment configs, orchestration and run artifacts
io           chain, dataset and report file formats
cli          command-line entry point (``python -m fishermala``)
"""

from . import adapt, diagnostics, forward, linalg, samplers, targets
from .samplers import ChainRecord, SamplerConfig, run_chain

__version__ = "0.1.0"

__all__ = [
    "adapt",
    "diagnostics",
    "forward",
    "linalg",
    "samplers",
    "targets",
    "ChainRecord",
    "SamplerConfig",
    "run_chain",
]
