"""WAIC model selection over (latent dimension, number of blocks)."""

import csv
import dataclasses
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .model import ModelConfig, dyad_loglik
from .sampler import run_chain

logger = logging.getLogger(__name__)

__all__ = ['WaicResult', 'GridRow', 'GridResult', 'waic', 'pointwise_waic',
           'cell_seed', 'fit_grid']


@dataclass(frozen=True)
class WaicResult:
    """``waic = pred - penalty``; higher is better."""

    pred: float
    penalty: float
    waic: float

    @classmethod
    def from_parts(cls, pred, penalty):
        return cls(pred, penalty, pred - penalty)


def waic(trace):
    """Whole-network WAIC from the stored per-sample log-likelihoods.

    ``pred`` is the log of the sample-averaged likelihood, ``penalty`` the
    sample variance (S - 1 denominator) of the log-likelihood.
    """
    ll = np.asarray(getattr(trace, 'loglik', trace), dtype=float)
    S = ll.shape[0]
    if S < 2:
        raise ValueError(f'WAIC needs at least 2 samples, got {S}')
    pred = float(logsumexp(ll) - np.log(S))
    penalty = float(np.var(ll, ddof=1))
    return WaicResult.from_parts(pred, penalty)


def pointwise_waic(trace, net, mask=None):
    """Standard per-dyad WAIC on the same higher-is-better scale:
    lppd minus the summed per-dyad log-likelihood variances."""
    S = len(trace)
    if S < 2:
        raise ValueError(f'WAIC needs at least 2 samples, got {S}')
    obs = (mask.observed if mask is not None
           else ~np.eye(net.n, dtype=bool))
    L = np.array([dyad_loglik(s, net)[obs] for s in trace.samples])
    lppd = float(np.sum(logsumexp(L, axis=0) - np.log(S)))
    p = float(np.sum(np.var(L, axis=0, ddof=1)))
    return WaicResult.from_parts(lppd, p)


@dataclass(frozen=True)
class GridRow:
    d: int
    K: int
    pred: float
    penalty: float
    waic: float


@dataclass
class GridResult:
    rows: list

    @property
    def best(self):
        row = max(self.rows, key=lambda r: (r.waic, -r.K, -r.d))
        return row.d, row.K

    def to_csv(self, path):
        with open(path, 'w', encoding='utf-8', newline='') as fh:
            w = csv.writer(fh, lineterminator='\n')
            w.writerow(['dimension', 'k', 'pred', 'penalty', 'waic'])
            for r in self.rows:
                w.writerow([r.d, r.K, repr(r.pred), repr(r.penalty),
                            repr(r.waic)])


def cell_seed(seed, d, K):
    """Per-cell seed derived from the base seed and the cell coordinates."""
    return int(np.random.SeedSequence([seed, d, K]).generate_state(1)[0])


def fit_grid(net, mask, dims, blocks, model_defaults=None, sampler_cfg=None,
             **chain_kw):
    """Run one chain per (d, K) cell and score it by WAIC.

    ``model_defaults`` is a ModelConfig (or dict of its fields) whose K, d
    and per-block sigma are replaced for each cell.
    """
    if not dims or not blocks:
        raise ValueError('dims and blocks must be non-empty')
    if model_defaults is None:
        model_defaults = {}
    elif isinstance(model_defaults, ModelConfig):
        model_defaults = model_defaults.to_dict()
    base = {k: v for k, v in model_defaults.items() if k not in ('K', 'd')}
    sigma = base.pop('sigma', None)
    if sigma is not None and not np.isscalar(sigma):
        if len(set(sigma)) > 1:
            raise ValueError('per-block sigma cannot be reused across K')
        sigma = sigma[0]

    rows = []
    for d in sorted(dims):
        for K in sorted(blocks):
            cfg = ModelConfig(K=K, d=d, sigma=sigma, **base)
            scfg = dataclasses.replace(sampler_cfg,
                                       seed=cell_seed(sampler_cfg.seed, d, K))
            try:
                trace = run_chain(net, mask, cfg, scfg, **chain_kw)
                w = waic(trace)
            except Exception as exc:
                raise RuntimeError(f'grid cell d={d}, K={K} failed: {exc}') \
                    from exc
            logger.info('cell d=%d K=%d: pred=%.1f penalty=%.1f waic=%.1f',
                        d, K, w.pred, w.penalty, w.waic)
            rows.append(GridRow(d, K, w.pred, w.penalty, w.waic))
    return GridResult(rows)
