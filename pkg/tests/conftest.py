import numpy as np
import pytest

from glssbm import ModelConfig, generate_network, sample_from_prior


def planted_state(seed, n=120, K=3, d=2, beta=3.0, tau_range=(0.02, 0.15)):
    """Balanced K-block state with fixed intercepts, prior positions and
    small between-block probabilities."""
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(K=K, d=d)
    state = sample_from_prior(cfg, n, rng)
    state.gamma = np.repeat(np.arange(K), n // K)
    state.Z = rng.standard_normal((n, d)) * np.sqrt(5.0)
    state.beta[:] = beta
    state.tau[~np.eye(K, dtype=bool)] = rng.uniform(*tau_range, K * (K - 1))
    state.pi[:] = 1.0 / K
    return state, generate_network(state, rng)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_state(rng, n, K, d, cfg=None):
    cfg = cfg or ModelConfig(K=K, d=d)
    return sample_from_prior(cfg, n, rng)


def random_network(rng, n, p=0.3):
    from glssbm import DirectedNetwork
    A = (rng.random((n, n)) < p).astype(np.int8)
    np.fill_diagonal(A, 0)
    return DirectedNetwork.from_adjacency(A)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section('acceptance criteria')
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
