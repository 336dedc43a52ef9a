"""Generalized latent space stochastic blockmodel for directed networks."""

from .model import (ModelConfig, ParamState, edge_probability,
                    edge_probability_matrix, generate_network,
                    log_likelihood, sample_from_prior)
from .network import DirectedNetwork, DyadMask
from .sampler import SamplerConfig, TraceStore, run_chain

__version__ = '0.1.0'
