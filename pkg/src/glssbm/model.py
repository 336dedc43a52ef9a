"""Generalized latent space stochastic blockmodel: parameters, edge
probabilities, likelihood and forward simulation.

Within a block k the logit of an edge is ``beta[k] - ||Z_i - Z_j||``;
between blocks k != l the edge probability is ``tau[k, l]`` (row is the
follower's block). Labels are 0-based in memory and 1-based in every file
this package writes.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from .network import DirectedNetwork

__all__ = [
    'ModelConfig', 'ParamState', 'edge_probability', 'edge_probability_matrix',
    'pairwise_distances', 'dyad_loglik', 'log_likelihood', 'sample_from_prior',
    'generate_network', 'check_separation_bounds', 'BoundReport',
]


@dataclass(frozen=True)
class ModelConfig:
    K: int = 1
    d: int = 2
    T: float = 10.0
    E0: float = 1.0
    E1: float = 1.0
    mu_beta: float = 0.0
    sigma_beta: float = 5.0
    sigma: tuple = None

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f'K must be an integer >= 1, got {self.K}')
        if int(self.d) != self.d or self.d < 0:
            raise ValueError(f'd must be an integer >= 0, got {self.d}')
        object.__setattr__(self, 'K', int(self.K))
        object.__setattr__(self, 'd', int(self.d))
        sigma = self.sigma
        if sigma is None:
            sigma = (np.sqrt(5.0),) * self.K
        elif np.isscalar(sigma):
            sigma = (float(sigma),) * self.K
        sigma = tuple(float(s) for s in sigma)
        if len(sigma) != self.K:
            raise ValueError(f'sigma needs {self.K} entries, got {len(sigma)}')
        object.__setattr__(self, 'sigma', sigma)
        for name in ('T', 'E0', 'E1', 'sigma_beta'):
            if not getattr(self, name) > 0:
                raise ValueError(f'{name} must be > 0')
        if not all(s > 0 for s in sigma):
            raise ValueError('all sigma entries must be > 0')

    @property
    def sigma_array(self):
        return np.asarray(self.sigma, dtype=float)

    def to_dict(self):
        return {'K': self.K, 'd': self.d, 'T': self.T, 'E0': self.E0,
                'E1': self.E1, 'mu_beta': self.mu_beta,
                'sigma_beta': self.sigma_beta, 'sigma': list(self.sigma)}


@dataclass
class ParamState:
    """One realization (gamma, Z, pi, tau, beta).

    ``tau`` is K x K with NaN on the (unused) diagonal.
    """

    gamma: np.ndarray
    Z: np.ndarray
    pi: np.ndarray
    tau: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=np.int64)
        self.pi = np.asarray(self.pi, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        K = self.pi.shape[0]
        self.Z = np.asarray(self.Z, dtype=float).reshape(self.gamma.shape[0], -1)
        self.tau = np.array(self.tau, dtype=float).reshape(K, K)
        np.fill_diagonal(self.tau, np.nan)

    @property
    def K(self):
        return self.pi.shape[0]

    @property
    def n(self):
        return self.gamma.shape[0]

    @property
    def d(self):
        return self.Z.shape[1]

    def copy(self):
        return ParamState(self.gamma.copy(), self.Z.copy(), self.pi.copy(),
                          self.tau.copy(), self.beta.copy())

    def validate(self):
        K = self.K
        if self.beta.shape != (K,):
            raise ValueError('beta must have K entries')
        if np.any(self.gamma < 0) or np.any(self.gamma >= K):
            raise ValueError('gamma labels out of range')
        if np.any(self.pi < 0) or abs(self.pi.sum() - 1) > 1e-12:
            raise ValueError('pi must lie on the probability simplex')
        off = self.tau[~np.eye(K, dtype=bool)]
        if np.any(off < 0) or np.any(off > 1):
            raise ValueError('tau off-diagonal entries must lie in [0, 1]')
        return self

    def permute(self, perm):
        """Rename block ``k`` to ``perm[k]``."""
        perm = np.asarray(perm)
        inv = np.argsort(perm)
        return ParamState(perm[self.gamma], self.Z.copy(), self.pi[inv],
                          self.tau[np.ix_(inv, inv)], self.beta[inv])

    def to_json(self):
        """JSON-compatible dict. Labels are written 1-based, the tau
        diagonal as null."""
        tau = [[None if k == l else float(self.tau[k, l])
                for l in range(self.K)] for k in range(self.K)]
        return {'gamma': (self.gamma + 1).tolist(), 'Z': self.Z.tolist(),
                'pi': self.pi.tolist(), 'tau': tau,
                'beta': self.beta.tolist()}

    @classmethod
    def from_json(cls, doc):
        if isinstance(doc, str):
            doc = json.loads(doc)
        K = len(doc['pi'])
        tau = np.array([[np.nan if v is None else v for v in row]
                        for row in doc['tau']], dtype=float).reshape(K, K)
        gamma = np.asarray(doc['gamma'], dtype=np.int64) - 1
        Z = np.asarray(doc['Z'], dtype=float).reshape(len(gamma), -1)
        return cls(gamma, Z, doc['pi'], tau, doc['beta'])


def pairwise_distances(Z):
    Z = np.asarray(Z, dtype=float)
    if Z.shape[1] == 0:
        return np.zeros((Z.shape[0], Z.shape[0]))
    diff = Z[:, None, :] - Z[None, :, :]
    return np.sqrt(np.einsum('ijk,ijk->ij', diff, diff))


def edge_probability(state, i, j):
    if i == j:
        raise ValueError('edge probability is undefined for i == j')
    k, l = state.gamma[i], state.gamma[j]
    if k == l:
        dist = np.linalg.norm(state.Z[i] - state.Z[j]) if state.d else 0.0
        return float(expit(state.beta[k] - dist))
    return float(state.tau[k, l])


def edge_probability_matrix(state):
    """All ordered-dyad edge probabilities; the diagonal is NaN."""
    g = state.gamma
    same = g[:, None] == g[None, :]
    within = expit(state.beta[g][:, None] - pairwise_distances(state.Z))
    P = np.where(same, within, state.tau[g[:, None], g[None, :]])
    np.fill_diagonal(P, np.nan)
    return P


def dyad_loglik(state, net):
    """Per-dyad log-likelihood matrix (diagonal 0).

    Entries are -inf where a probability of exactly 0 or 1 contradicts the
    observed value.
    """
    Y = np.asarray(net.adjacency if isinstance(net, DirectedNetwork) else net)
    g = state.gamma
    same = g[:, None] == g[None, :]
    eta = state.beta[g][:, None] - pairwise_distances(state.Z)
    within = np.where(Y == 1, log_expit(eta), log_expit(-eta))
    tau = state.tau[g[:, None], g[None, :]]
    with np.errstate(divide='ignore', invalid='ignore'):
        between = np.where(Y == 1, np.log(tau), np.log1p(-tau))
    L = np.where(same, within, between)
    np.fill_diagonal(L, 0.0)
    return L


def log_likelihood(state, net, mask=None):
    """Log-likelihood over all observed ordered dyads.

    Both directions of a within-block dyad are counted, and every ordered
    block pair (k, l) has its own tau.
    """
    L = dyad_loglik(state, net)
    if mask is None:
        obs = ~np.eye(L.shape[0], dtype=bool)
    else:
        mask.check(net)
        obs = mask.observed
    # One summation path, so a full mask reproduces the unmasked value
    # bit for bit.
    return float(L[obs].sum()) if obs.any() else 0.0


def sample_from_prior(cfg, n, random_state=None):
    """Draw a full parameter state of ``n`` nodes from the prior."""
    rng = np.random.default_rng(random_state)
    K, d = cfg.K, cfg.d
    pi = rng.dirichlet(np.full(K, cfg.T)) if K > 1 else np.ones(1)
    gamma = rng.choice(K, size=n, p=pi) if K > 1 else np.zeros(n, int)
    sigma = cfg.sigma_array[gamma]
    Z = rng.standard_normal((n, d)) * sigma[:, None]
    tau = np.full((K, K), np.nan)
    off = ~np.eye(K, dtype=bool)
    tau[off] = rng.beta(cfg.E0, cfg.E1, size=K * (K - 1))
    beta = cfg.mu_beta + cfg.sigma_beta * rng.standard_normal(K)
    return ParamState(gamma, Z, pi, tau, beta)


def generate_network(state, random_state=None, node_ids=None):
    """Independent Bernoulli draw for every ordered dyad."""
    rng = np.random.default_rng(random_state)
    P = edge_probability_matrix(state)
    np.fill_diagonal(P, 0.0)
    A = (rng.random(P.shape) < P).astype(np.int8)
    return DirectedNetwork.from_adjacency(A, node_ids)


@dataclass
class PairBound:
    k: int
    l: int
    diam_k: float
    diam_l: float
    dist_min: float
    dist_max: float
    p_lower: float
    p_upper: float
    holds: bool


@dataclass
class BoundReport:
    pairs: list
    diameters: dict
    cap_violations: int
    triangle_violations: int
    empty_blocks: list

    @property
    def ok(self):
        return self.cap_violations == 0 and self.triangle_violations == 0


def check_separation_bounds(state, intercept=None, rtol=1e-12):
    """Check the cross-block distance bound and within-block cap.

    For every ordered pair of nonempty blocks (k, l) the largest cross
    distance cannot exceed ``diam_k + diam_l + min cross distance``. The
    probability sandwich uses ``intercept`` (default ``beta[k]``). Every
    within-block dyad must have probability at most ``expit(beta[k])``.
    """
    K = state.K
    D = pairwise_distances(state.Z)
    members = [np.flatnonzero(state.gamma == k) for k in range(K)]
    empty = [k for k in range(K) if members[k].size == 0]

    diam = {}
    cap_violations = 0
    for k in range(K):
        idx = members[k]
        if idx.size == 0:
            continue
        sub = D[np.ix_(idx, idx)]
        diam[k] = float(sub.max()) if idx.size > 1 else 0.0
        if idx.size > 1:
            off = ~np.eye(idx.size, dtype=bool)
            p = expit(state.beta[k] - sub[off])
            cap_violations += int(np.sum(p > expit(state.beta[k])))

    pairs = []
    triangle_violations = 0
    for k in range(K):
        for l in range(K):
            if k == l or members[k].size == 0 or members[l].size == 0:
                continue
            cross = D[np.ix_(members[k], members[l])]
            dmin, dmax = float(cross.min()), float(cross.max())
            rhs = diam[k] + diam[l] + dmin
            holds = dmax <= rhs + rtol * max(1.0, rhs)
            triangle_violations += not holds
            b = state.beta[k] if intercept is None else intercept
            pairs.append(PairBound(k, l, diam[k], diam[l], dmin, dmax,
                                   float(expit(b - dmax)),
                                   float(expit(b - dmin)), bool(holds)))
    return BoundReport(pairs, diam, cap_violations, triangle_violations,
                       empty)
