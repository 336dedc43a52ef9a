import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glssbm.model import ModelConfig
from glssbm.sampler import SamplerConfig, run_chain
from glssbm.selection import (GridResult, GridRow, cell_seed, fit_grid,
                              pointwise_waic, waic)

from conftest import random_network


def test_constant_loglik():
    r = waic(np.full(7, -123.5))
    assert (r.pred, r.penalty, r.waic) == (-123.5, 0.0, -123.5)


def test_two_sample_hand_value():
    r = waic([-10.0, -12.0])
    pred = math.log((math.exp(-10) + math.exp(-12)) / 2)
    assert r.pred == pytest.approx(pred, abs=1e-12)
    assert r.pred == pytest.approx(-10.5662, abs=1e-4)
    assert r.penalty == 2.0
    assert r.waic == pytest.approx(-12.5662, abs=1e-4)


def test_needs_two_samples():
    with pytest.raises(ValueError):
        waic([-1.0])


def test_no_underflow_for_very_low_logliks():
    r = waic([-1e6, -1e6 - 1, -1e6 + 2])
    assert np.isfinite(r.pred) and -1e6 - 1 < r.pred < -1e6 + 2


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e5, 0), min_size=2, max_size=30),
       st.integers(0, 29))
def test_waic_invariants(ll, k):
    r = waic(ll)
    assert r.penalty >= 0
    assert r.waic == r.pred - r.penalty
    dup = waic(ll + [ll[k % len(ll)]])
    assert dup.penalty >= 0 and np.isfinite(dup.penalty)


def test_grid_best_and_ties(tmp_path):
    rows = [GridRow(0, 1, -5.0, 1.0, -6.0), GridRow(1, 2, -3.0, 1.0, -4.0),
            GridRow(0, 2, -3.5, 0.5, -4.0), GridRow(0, 3, -2.0, 2.0, -4.0)]
    assert GridResult(rows).best == (0, 2)
    GridResult(rows).to_csv(tmp_path / 'g.csv')
    lines = (tmp_path / 'g.csv').read_text().splitlines()
    assert lines[0] == 'dimension,k,pred,penalty,waic'
    assert len(lines) == 5 and lines[1].startswith('0,1,')


def test_cell_seeds_distinct():
    seeds = {cell_seed(3, d, K) for d in range(3) for K in range(1, 6)}
    assert len(seeds) == 15
    assert cell_seed(3, 1, 2) == cell_seed(3, 1, 2) != cell_seed(4, 1, 2)


def test_fit_grid_small():
    rng = np.random.default_rng(0)
    net = random_network(rng, 10)
    scfg = SamplerConfig(iterations=200, burn_in=100, thin=5)
    res = fit_grid(net, None, [0, 1], [1, 2], ModelConfig(), scfg)
    assert [(r.d, r.K) for r in res.rows] == [(0, 1), (0, 2), (1, 1), (1, 2)]
    assert all(np.isfinite(r.waic) for r in res.rows)
    best = max(res.rows, key=lambda r: r.waic)
    assert res.best == (best.d, best.K)
    # A cell reproduces a stand-alone chain run with the derived seed.
    import dataclasses
    tr = run_chain(net, None, ModelConfig(K=2, d=1),
                   dataclasses.replace(scfg, seed=cell_seed(0, 1, 2)))
    assert waic(tr).waic == res.rows[3].waic


def test_fit_grid_errors():
    rng = np.random.default_rng(1)
    net = random_network(rng, 5)
    with pytest.raises(ValueError):
        fit_grid(net, None, [], [1], None, SamplerConfig())
    with pytest.raises(RuntimeError, match='d=0, K=1'):
        fit_grid(net, None, [0], [1], None,
                 SamplerConfig(iterations=5, burn_in=5))


def test_waic_unchanged_by_relabel_and_alignment():
    from glssbm.postprocess import align_trace, classical_mds, relabel_trace
    rng = np.random.default_rng(2)
    net = random_network(rng, 10)
    tr = run_chain(net, None, ModelConfig(K=2, d=2),
                   SamplerConfig(iterations=200, burn_in=100, thin=5))
    out = align_trace(relabel_trace(tr), classical_mds(net, 2))
    assert waic(out) == waic(tr)


def test_pointwise_waic_runs():
    rng = np.random.default_rng(3)
    net = random_network(rng, 8)
    tr = run_chain(net, None, ModelConfig(K=2, d=1),
                   SamplerConfig(iterations=200, burn_in=100, thin=5))
    r = pointwise_waic(tr, net)
    assert r.penalty >= 0 and np.isfinite(r.waic)
    assert r.pred >= waic(tr).pred - 1e-9   # Jensen: lppd >= whole-network
