"""Metropolis-within-Gibbs posterior sampling.

Each sweep performs, in order:

1. a joint (label, position) Metropolis-Hastings move for every node;
2. a random-walk Metropolis-Hastings move for every block intercept;
3. conjugate draws of the block weights ``pi`` and the between-block
   probabilities ``tau``.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.sparse.csgraph import shortest_path
from scipy.special import log_expit
from scipy.stats import norm
from sklearn.cluster import KMeans

from . import _kernels, postprocess
from .model import (ModelConfig, ParamState, log_likelihood,
                    pairwise_distances, sample_from_prior)
from .network import DyadMask

logger = logging.getLogger(__name__)

CENTRE_MODES = {'block': 0, 'neighbours': 1}
INIT_STRATEGIES = ('prior', 'spectral')

__all__ = [
    'SamplerConfig', 'TraceStore', 'NodeProposal', 'update_pi', 'update_tau',
    'tau_posterior_params', 'update_beta', 'beta_log_accept_ratio',
    'propose_node', 'update_node', 'initial_state', 'run_chain',
]


@dataclass(frozen=True)
class SamplerConfig:
    """Chain settings.

    ``delta`` is the covariance scale of the position proposals
    (``delta * I``); ``delta_beta`` is the standard deviation of the
    intercept random walk. ``paper_literal_tau`` swaps the two beta
    parameters of the tau update (non-edges feed the first one).

    ``init`` selects the starting state: ``'prior'`` (a prior draw) or
    ``'spectral'`` (see :func:`initial_state`). ``centre`` chooses where a
    label-changing position proposal is centred: ``'block'`` uses the
    mean of the new block's members, ``'neighbours'`` the mean of the
    node's observed neighbours inside that block.
    """

    iterations: int = 20000
    burn_in: int = 5000
    thin: int = 10
    delta: float = 1.0
    delta_beta: float = 0.5
    seed: int = 0
    paper_literal_tau: bool = False
    init: str = 'prior'
    centre: str = 'block'

    def __post_init__(self):
        if not self.iterations >= self.burn_in >= 0:
            raise ValueError('need iterations >= burn_in >= 0')
        if self.thin < 1:
            raise ValueError('thin must be >= 1')
        if not (self.delta > 0 and self.delta_beta > 0):
            raise ValueError('delta and delta_beta must be > 0')
        if self.init not in INIT_STRATEGIES:
            raise ValueError(f'init must be one of {INIT_STRATEGIES}')
        if self.centre not in CENTRE_MODES:
            raise ValueError(f'centre must be one of {tuple(CENTRE_MODES)}')

    @property
    def n_samples(self):
        return len(range(self.burn_in + self.thin - 1, self.iterations,
                         self.thin))


@dataclass
class TraceStore:
    samples: list
    loglik: np.ndarray
    acceptance: dict = field(default_factory=dict)
    model_cfg: ModelConfig = None
    sampler_cfg: SamplerConfig = None

    def __len__(self):
        return len(self.samples)

    @property
    def gamma(self):
        return np.array([s.gamma for s in self.samples])

    @property
    def beta(self):
        return np.array([s.beta for s in self.samples])

    @property
    def pi(self):
        return np.array([s.pi for s in self.samples])

    @property
    def tau(self):
        return np.array([s.tau for s in self.samples])

    def replace(self, samples):
        return TraceStore(list(samples), self.loglik.copy(),
                          dict(self.acceptance), self.model_cfg,
                          self.sampler_cfg)

    def export(self, path):
        """Write gamma/beta/tau/pi/loglik CSVs, Z as JSON lines and the
        config snapshot. Labels are 1-based."""
        os.makedirs(path, exist_ok=True)
        S = len(self)
        K = self.samples[0].K if S else (self.model_cfg.K if self.model_cfg
                                         else 0)
        n = self.samples[0].n if S else 0
        off = [(k, l) for k in range(K) for l in range(K) if k != l]

        def write(name, header, rows):
            with open(os.path.join(path, name), 'w', encoding='utf-8',
                      newline='') as fh:
                fh.write(','.join(header) + '\n')
                for r in rows:
                    fh.write(','.join(repr(float(v)) if isinstance(
                        v, (float, np.floating)) else str(v) for v in r)
                        + '\n')

        write('gamma.csv', [f'node{i + 1}' for i in range(n)],
              [(s.gamma + 1).tolist() for s in self.samples])
        write('beta.csv', [f'beta{k + 1}' for k in range(K)],
              [s.beta.tolist() for s in self.samples])
        write('pi.csv', [f'pi{k + 1}' for k in range(K)],
              [s.pi.tolist() for s in self.samples])
        write('tau.csv', [f'tau{k + 1}_{l + 1}' for k, l in off],
              [[float(s.tau[k, l]) for k, l in off] for s in self.samples])
        write('loglik.csv', ['loglik'], [[float(v)] for v in self.loglik])
        with open(os.path.join(path, 'Z.jsonl'), 'w', encoding='utf-8') as fh:
            for s in self.samples:
                fh.write(json.dumps(s.Z.tolist()) + '\n')
        meta = {'acceptance': self.acceptance,
                'model': self.model_cfg.to_dict() if self.model_cfg else None,
                'sampler': asdict(self.sampler_cfg) if self.sampler_cfg
                else None}
        with open(os.path.join(path, 'config.json'), 'w',
                  encoding='utf-8') as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write('\n')

    @classmethod
    def load(cls, path):
        def read(name):
            with open(os.path.join(path, name), encoding='utf-8') as fh:
                lines = fh.read().splitlines()
            return [[float(v) for v in ln.split(',')] for ln in lines[1:]
                    if ln.strip()]

        with open(os.path.join(path, 'config.json'), encoding='utf-8') as fh:
            meta = json.load(fh)
        model_cfg = ModelConfig(**meta['model']) if meta['model'] else None
        sampler_cfg = (SamplerConfig(**meta['sampler']) if meta['sampler']
                       else None)
        gamma = read('gamma.csv')
        beta = read('beta.csv')
        pi = read('pi.csv')
        tau = read('tau.csv')
        loglik = np.array([r[0] for r in read('loglik.csv')])
        with open(os.path.join(path, 'Z.jsonl'), encoding='utf-8') as fh:
            Zs = [json.loads(ln) for ln in fh if ln.strip()]
        samples = []
        for g, b, p, t, z in zip(gamma, beta, pi, tau, Zs):
            K = len(p)
            T = np.full((K, K), np.nan)
            T[~np.eye(K, dtype=bool)] = t
            g = np.asarray(g, dtype=np.int64) - 1
            samples.append(ParamState(g, np.asarray(z, float).reshape(
                len(g), -1), p, T, b))
        return cls(samples, loglik, meta['acceptance'], model_cfg,
                   sampler_cfg)


def _arrays(net, mask):
    Y = np.ascontiguousarray(net.adjacency, dtype=np.int8)
    if mask is None:
        mask = DyadMask.full(net.n)
    mask.check(net)
    return Y, np.ascontiguousarray(mask.observed)


def update_pi(state, cfg, rng):
    """Draw block weights from Dirichlet(T + n_1, ..., T + n_K)."""
    counts = np.bincount(state.gamma, minlength=state.K)
    if state.K == 1:
        return np.ones(1)
    return rng.dirichlet(cfg.T + counts)


def tau_posterior_params(state, net, mask, cfg, paper_literal=False):
    """Beta parameters (a, b) of every tau[k, l] full conditional.

    Only observed ordered dyads are counted. Diagonal entries are NaN.
    """
    Y, obs = _arrays(net, mask)
    e, n = _kernels.block_counts(state.gamma, Y, obs, state.K)
    if paper_literal:
        a, b = cfg.E0 + n - e, cfg.E1 + e
    else:
        a, b = cfg.E0 + e, cfg.E1 + n - e
    a, b = a.astype(float), b.astype(float)
    np.fill_diagonal(a, np.nan)
    np.fill_diagonal(b, np.nan)
    return a, b


def update_tau(state, net, mask, cfg, rng, paper_literal=False):
    """Draw every off-diagonal tau[k, l] from its beta full conditional."""
    K = state.K
    tau = np.full((K, K), np.nan)
    if K == 1:
        return tau
    a, b = tau_posterior_params(state, net, mask, cfg, paper_literal)
    off = ~np.eye(K, dtype=bool)
    tau[off] = rng.beta(a[off], b[off])
    return tau


def beta_log_accept_ratio(state, k, proposal, net, mask, cfg):
    Y, obs = _arrays(net, mask)
    b = state.beta[k]
    return (_kernels.block_loglik(k, proposal, state.gamma, state.Z, Y, obs)
            - _kernels.block_loglik(k, b, state.gamma, state.Z, Y, obs)
            + norm.logpdf(proposal, cfg.mu_beta, cfg.sigma_beta)
            - norm.logpdf(b, cfg.mu_beta, cfg.sigma_beta))


def update_beta(state, net, mask, cfg, rng, delta_beta=0.5):
    """One random-walk MH step per block intercept.

    Returns the new intercepts and a boolean array of acceptances.
    """
    Y, obs = _arrays(net, mask)
    beta = state.beta.copy()
    _kernels.sweep_beta(beta, state.gamma, state.Z, Y, obs, cfg.mu_beta,
                        cfg.sigma_beta, delta_beta,
                        rng.standard_normal(state.K), rng.random(state.K))
    return beta, beta != state.beta


@dataclass
class NodeProposal:
    label: int
    position: np.ndarray
    log_q_forward: float
    log_q_reverse: float
    loglik_new: float
    loglik_old: float
    log_prior_new: float
    log_prior_old: float

    @property
    def log_accept_ratio(self):
        return (self.loglik_new - self.loglik_old + self.log_q_reverse
                - self.log_q_forward + self.log_prior_new
                - self.log_prior_old)


def _propose(state, i, Y, obs, cfg, delta, u_label, eps):
    log_tau, log1m_tau, log_pi = _kernels.log_tables(state.tau, state.pi)
    z_new = np.empty(state.d)
    out = _kernels.propose_node(
        i, state.gamma, state.Z, Y, obs, log_tau, log1m_tau, state.beta,
        log_pi, cfg.sigma_array, float(delta), float(u_label),
        np.asarray(eps, dtype=float), z_new)
    return NodeProposal(int(out[0]), z_new, *map(float, out[1:]))


def propose_node(state, i, net, mask, cfg, rng, delta=1.0):
    """Propose a new (label, position) for node i.

    The label is drawn from its full conditional given the current
    position. The position is a random walk around the current one if the
    label is unchanged, centred on the other members' mean position if the
    new block is occupied, and drawn from the prior otherwise. The reverse
    label probability is evaluated with node i at the proposed position.
    """
    Y, obs = _arrays(net, mask)
    u = rng.random()
    eps = rng.standard_normal(state.d)
    return _propose(state, i, Y, obs, cfg, delta, u, eps)


def update_node(state, i, net, mask, cfg, rng, delta=1.0):
    """MH update of node i's label and position, in place.

    Returns True if the proposal was accepted.
    """
    prop = propose_node(state, i, net, mask, cfg, rng, delta)
    if np.log(rng.random()) < prop.log_accept_ratio:
        state.gamma[i] = prop.label
        state.Z[i] = prop.position
        return True
    return False


def _spectral_labels(A, K, rng):
    U, S, Vt = np.linalg.svd(A)
    X = np.hstack([U[:, :K] * S[:K], Vt[:K].T * S[:K]])
    seed = int(rng.integers(2 ** 31 - 1))
    return KMeans(K, n_init=10, random_state=seed).fit_predict(X)


def _block_positions(A, idx, d):
    """Classical scaling of within-block hop distances (unreachable pairs
    are placed one hop beyond the largest finite distance)."""
    sub = A[np.ix_(idx, idx)]
    G = shortest_path(np.maximum(sub, sub.T), unweighted=True,
                      directed=False)
    finite = np.isfinite(G)
    G[~finite] = G[finite].max() + 1
    return postprocess.cmdscale(G, d)


def _intercept_mle(Y, obs, D, cfg):
    """Posterior mode of one block intercept given positions."""
    def nlp(b):
        eta = b - D
        ll = np.where(Y == 1, log_expit(eta), log_expit(-eta))[obs]
        return -ll.sum() + 0.5 * ((b - cfg.mu_beta) / cfg.sigma_beta) ** 2
    return minimize_scalar(nlp, bounds=(-20, 20), method='bounded').x


def initial_state(net, mask, cfg, rng, strategy='prior', warmup=300):
    """Starting state for a chain.

    ``'prior'`` draws every parameter from the prior. ``'spectral'``
    clusters the leading singular vectors of the observed adjacency,
    refines those labels with ``warmup`` sweeps of the zero-dimensional
    (blockmodel) sampler, then places each block by classical scaling of
    its hop distances and sets the intercepts, between-block
    probabilities and weights to values consistent with that placement.
    """
    if strategy == 'prior':
        return sample_from_prior(cfg, net.n, rng)
    if strategy not in INIT_STRATEGIES:
        raise ValueError(f'unknown init strategy {strategy!r}')
    Y, obs = _arrays(net, mask)
    K, d, n = cfg.K, cfg.d, net.n
    A = np.where(obs, Y, 0).astype(float)
    off = ~np.eye(K, dtype=bool)

    # Label refinement under the blockmodel special case.
    gamma = (_spectral_labels(A, K, rng) if 1 < K < n
             else np.zeros(n, dtype=np.int64) if K == 1
             else rng.permutation(n) % K).astype(np.int64)
    beta = np.zeros(K)
    if K > 1:
        sbm = ModelConfig(**{**cfg.to_dict(), 'd': 0})
        s = sample_from_prior(sbm, n, rng)
        s.gamma = gamma
        e, c = _kernels.block_counts(gamma, Y, obs, K)
        s.tau[off] = ((1 + e) / (2 + c))[off]
        s.beta = np.log((1 + np.diag(e)) / (1 + np.diag(c) - np.diag(e)))
        empty = np.zeros((n, 0))
        for _ in range(warmup):
            lt, l1, lp = _kernels.log_tables(s.tau, s.pi)
            _kernels.sweep_nodes(s.gamma, empty, Y, obs, lt, l1, s.beta,
                                 lp, sbm.sigma_array, 1.0,
                                 rng.random(n), empty, rng.random(n), 0)
            _kernels.sweep_beta(s.beta, s.gamma, empty, Y, obs, cfg.mu_beta,
                                cfg.sigma_beta, 0.5, rng.standard_normal(K),
                                rng.random(K))
            s.pi = rng.dirichlet(cfg.T + np.bincount(s.gamma, minlength=K))
            e, c = _kernels.block_counts(s.gamma, Y, obs, K)
            s.tau[off] = rng.beta(cfg.E0 + e[off], cfg.E1 + c[off] - e[off])
        gamma = s.gamma

    Z = np.zeros((n, d))
    for k in range(K):
        idx = np.flatnonzero(gamma == k)
        if idx.size == 0:
            beta[k] = rng.normal(cfg.mu_beta, cfg.sigma_beta)
            continue
        if d > 0 and idx.size > 1:
            Z[idx] = _block_positions(A, idx, d)
        if idx.size > 1:
            sub = np.ix_(idx, idx)
            keep = obs[sub] & ~np.eye(idx.size, dtype=bool)
            beta[k] = _intercept_mle(Y[sub], keep,
                                     pairwise_distances(Z[idx]), cfg)
    counts = np.bincount(gamma, minlength=K)
    pi = (cfg.T + counts) / (cfg.T * K + n)
    tau = np.full((K, K), np.nan)
    if K > 1:
        e, c = _kernels.block_counts(gamma, Y, obs, K)
        tau[off] = ((cfg.E0 + e) / (cfg.E0 + cfg.E1 + c))[off]
    return ParamState(gamma, Z, pi, tau, beta)


def run_chain(net, mask, model_cfg, sampler_cfg, init=None, callback=None):
    """Run one chain and return the thinned post-burn-in trace.

    The starting state is ``init`` if given, otherwise chosen by
    ``sampler_cfg.init``. All randomness comes from
    ``numpy.random.default_rng(sampler_cfg.seed)``.
    """
    rng = np.random.default_rng(sampler_cfg.seed)
    Y, obs = _arrays(net, mask)
    if mask is None:
        mask = DyadMask(obs)
    K, d, n = model_cfg.K, model_cfg.d, net.n
    if init is None:
        state = initial_state(net, mask, model_cfg, rng, sampler_cfg.init)
    else:
        state = init.copy()
    if state.K != K or state.d != d or state.n != n:
        raise ValueError('initial state does not match config / network')
    sigma = model_cfg.sigma_array
    off = ~np.eye(K, dtype=bool)
    move_nodes = K > 1 or d > 0

    samples, loglik = [], []
    n_node = n_switch = n_beta = 0
    for it in range(sampler_cfg.iterations):
        log_tau, log1m_tau, log_pi = _kernels.log_tables(state.tau, state.pi)
        if move_nodes:
            u_label = rng.random(n)
            eps = rng.standard_normal((n, d))
            u_acc = rng.random(n)
            a, s = _kernels.sweep_nodes(
                state.gamma, state.Z, Y, obs, log_tau, log1m_tau, state.beta,
                log_pi, sigma, sampler_cfg.delta, u_label, eps,
                u_acc, CENTRE_MODES[sampler_cfg.centre])
            n_node += a
            n_switch += s
        n_beta += _kernels.sweep_beta(
            state.beta, state.gamma, state.Z, Y, obs, model_cfg.mu_beta,
            model_cfg.sigma_beta, sampler_cfg.delta_beta,
            rng.standard_normal(K), rng.random(K))
        if K > 1:
            counts = np.bincount(state.gamma, minlength=K)
            state.pi = rng.dirichlet(model_cfg.T + counts)
            e, cnt = _kernels.block_counts(state.gamma, Y, obs, K)
            if sampler_cfg.paper_literal_tau:
                a_, b_ = model_cfg.E0 + cnt - e, model_cfg.E1 + e
            else:
                a_, b_ = model_cfg.E0 + e, model_cfg.E1 + cnt - e
            state.tau[off] = rng.beta(a_[off], b_[off])

        if it >= sampler_cfg.burn_in and \
                (it - sampler_cfg.burn_in + 1) % sampler_cfg.thin == 0:
            snap = state.copy()
            samples.append(snap)
            loglik.append(log_likelihood(snap, net, mask))
            if callback is not None:
                callback(it, snap)

    sweeps = max(sampler_cfg.iterations, 1)
    acceptance = {
        'node': n_node / (sweeps * n) if move_nodes else None,
        'label_change': n_switch / (sweeps * n) if move_nodes else None,
        'beta': n_beta / (sweeps * K),
    }
    return TraceStore(samples, np.array(loglik), acceptance, model_cfg,
                      sampler_cfg)
