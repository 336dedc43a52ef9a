import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import ortho_group

from glssbm.model import (ModelConfig, ParamState, edge_probability,
                          log_likelihood, pairwise_distances)
from glssbm.network import DirectedNetwork
from glssbm.postprocess import (ReferenceConfiguration, align_trace,
                                best_permutation, classical_mds, cmdscale,
                                procrustes_align, relabel_trace, summarize)
from glssbm.sampler import TraceStore

from conftest import random_network, random_state


def trace_of(samples, net=None, loglik=None):
    if loglik is None:
        loglik = [log_likelihood(s, net) for s in samples]
    return TraceStore(list(samples), np.asarray(loglik, float))


def test_mds_mutual_dyad_collapses():
    net = DirectedNetwork.from_adjacency([[0, 1], [1, 0]])
    X = classical_mds(net, 1).positions
    assert np.allclose(X[0], X[1])


def test_mds_no_edges_is_equilateral():
    net = DirectedNetwork.from_adjacency(np.zeros((3, 3)))
    X = classical_mds(net, 2).positions
    D = pairwise_distances(X)[~np.eye(3, dtype=bool)]
    assert np.ptp(D) < 1e-9
    assert np.abs(X.mean(axis=0)).max() < 1e-12


def test_mds_d_zero_and_errors(rng):
    net = random_network(rng, 5)
    assert classical_mds(net, 0).positions.shape == (5, 0)
    with pytest.raises(ValueError):
        classical_mds(net, 6)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 4))
def test_mds_recovers_planted_configuration(seed, d):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(12, d)) * 3
    D = pairwise_distances(X)
    Y = cmdscale(D, d)
    np.testing.assert_allclose(pairwise_distances(Y), D, atol=1e-8)
    np.testing.assert_allclose(Y.mean(axis=0), 0, atol=1e-12)


def test_procrustes_examples(rng):
    R = rng.normal(size=(10, 2))
    R -= R.mean(axis=0)
    ref = ReferenceConfiguration(R)
    g = np.zeros(10, int)
    np.testing.assert_allclose(procrustes_align(R, g, ref), R, atol=1e-12)
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    moved = R @ rot + [3.0, -1.0]
    np.testing.assert_allclose(procrustes_align(moved, g, ref), R,
                               atol=1e-10)
    mirrored = R * [1.0, -1.0]
    np.testing.assert_allclose(procrustes_align(mirrored, g, ref), R,
                               atol=1e-10)


def test_procrustes_per_block_vs_global(rng):
    R = rng.normal(size=(12, 2))
    g = np.repeat([0, 1, 2], 4)
    Z = R.copy()
    for k in range(3):
        Q = ortho_group.rvs(2, random_state=rng)
        Z[g == k] = R[g == k] @ Q + rng.normal(size=2) * 5
    np.testing.assert_allclose(procrustes_align(Z, g, R), R, atol=1e-10)
    glob = procrustes_align(Z, g, R, per_block=False)
    assert np.abs(glob - R).max() > 1e-3


def test_procrustes_singleton_translates(rng):
    R = rng.normal(size=(3, 2))
    Z = R + [[1.0, 1.0], [0.0, 0.0], [0.0, 0.0]]
    out = procrustes_align(Z, np.array([0, 1, 1]), R)
    np.testing.assert_allclose(out[0], R[0])
    with pytest.raises(ValueError):
        procrustes_align(Z[:2], np.array([0, 1]), R)


def test_procrustes_preserves_likelihood(rng):
    for _ in range(200):
        K, d, n = int(rng.integers(1, 4)), int(rng.integers(1, 4)), 10
        s = random_state(rng, n, K, d)
        net = random_network(rng, n)
        ref = ReferenceConfiguration(rng.normal(size=(n, d)))
        a = s.copy()
        a.Z = procrustes_align(s.Z, s.gamma, ref)
        for k in range(K):
            idx = s.gamma == k
            np.testing.assert_allclose(pairwise_distances(a.Z[idx]),
                                       pairwise_distances(s.Z[idx]),
                                       atol=1e-10)
        assert log_likelihood(a, net) == pytest.approx(
            log_likelihood(s, net), abs=1e-10)


def brute_best_permutation(labels, ref, K):
    best, best_score = None, -1
    for perm in itertools.permutations(range(K)):
        score = int(np.sum(np.asarray(perm)[labels] == ref))
        if score > best_score:
            best, best_score = perm, score
    return np.array(best)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 4), st.integers(1, 9))
def test_best_permutation_matches_enumeration(seed, K, n):
    rng = np.random.default_rng(seed)
    labels = rng.integers(K, size=n)
    ref = rng.integers(K, size=n)
    np.testing.assert_array_equal(best_permutation(labels, ref, K),
                                  brute_best_permutation(labels, ref, K))


def test_relabel_identical_samples_unchanged(rng):
    net = random_network(rng, 8)
    s = random_state(rng, 8, 3, 2)
    tr = relabel_trace(trace_of([s, s.copy(), s.copy()], net))
    for t in tr.samples:
        np.testing.assert_array_equal(t.gamma, s.gamma)
        np.testing.assert_array_equal(t.beta, s.beta)


def test_relabel_undoes_permutations(rng):
    net = random_network(rng, 9)
    s = random_state(rng, 9, 3, 2)
    s.gamma[:] = [0, 0, 0, 1, 1, 1, 2, 2, 2]
    perms = [np.array(p) for p in ([1, 2, 0], [2, 0, 1], [0, 2, 1])]
    samples = [s] + [s.permute(p) for p in perms]
    ll = [10.0, 1.0, 2.0, 3.0]
    tr = relabel_trace(trace_of(samples, loglik=ll))
    for t in tr.samples:
        for f in ('gamma', 'pi', 'beta'):
            np.testing.assert_array_equal(getattr(t, f), getattr(s, f))
        np.testing.assert_array_equal(t.tau, s.tau)


def test_relabel_preserves_loglik_and_is_deterministic(rng):
    for _ in range(200):
        K = int(rng.integers(1, 5))
        net = random_network(rng, 8)
        samples = [random_state(rng, 8, K, 1) for _ in range(4)]
        tr = trace_of(samples, net)
        out = relabel_trace(tr)
        again = relabel_trace(tr)
        for a, b, ll in zip(out.samples, again.samples, tr.loglik):
            assert log_likelihood(a, net) == ll
            np.testing.assert_array_equal(a.gamma, b.gamma)


def test_relabel_empty_trace_errors():
    with pytest.raises(ValueError):
        relabel_trace(TraceStore([], np.zeros(0)))


def test_summary_of_single_sample(rng):
    net = random_network(rng, 6)
    s = random_state(rng, 6, 2, 2)
    summ = summarize(trace_of([s], net), net)
    np.testing.assert_array_equal(summ.map_labels, s.gamma)
    np.testing.assert_allclose(summ.mean_positions, s.Z)
    np.testing.assert_allclose(summ.allocation, s.pi)
    np.testing.assert_array_equal(summ.tau_mean, s.tau)
    assert summ.allocation.sum() == pytest.approx(1, abs=1e-10)
    assert np.isnan(np.diag(summ.edge_prob)).all()


def test_summary_edge_prob_by_hand():
    tau = np.array([[np.nan, 0.2], [0.6, np.nan]])
    a = ParamState([0, 0, 1], [[0.0], [1.0], [5.0]], [0.5, 0.5], tau,
                   [1.0, 0.0])
    b = ParamState([0, 1, 1], [[0.0], [2.0], [4.0]], [0.4, 0.6],
                   tau * 0.5, [0.0, 2.0])
    summ = summarize(trace_of([a, b], loglik=[0.0, 0.0]))
    for i in range(3):
        for j in range(3):
            if i != j:
                want = 0.5 * (edge_probability(a, i, j)
                              + edge_probability(b, i, j))
                assert summ.edge_prob[i, j] == pytest.approx(want, abs=1e-15)
    np.testing.assert_allclose(summ.allocation, [0.45, 0.55])
    assert summ.tau_mean[0, 1] == pytest.approx(0.15)
    # MAP labels: node 1 is tied 1-1 and resolves to the smaller block.
    np.testing.assert_array_equal(summ.map_labels, [0, 0, 1])
    # Node 1's mean position only uses the sample where it has label 0.
    assert summ.mean_positions[1, 0] == 1.0
    assert summ.mean_positions[2, 0] == 4.5
    lo, hi = summ.within_range[0]
    # (0, 1) averages 0.5 and tau_01 = 0.1; (1, 0) averages 0.5 and 0.3.
    assert (lo, hi) == pytest.approx((0.3, 0.4))
    assert np.isnan(summ.within_range[1]).all()


def test_summary_probabilities_in_unit_interval(rng):
    net = random_network(rng, 10)
    samples = [random_state(rng, 10, 3, 2) for _ in range(5)]
    summ = summarize(trace_of(samples, net))
    off = ~np.eye(10, dtype=bool)
    assert np.all((summ.edge_prob[off] >= 0) & (summ.edge_prob[off] <= 1))
    with pytest.raises(ValueError):
        summarize(TraceStore([], np.zeros(0)))


def test_align_trace_keeps_loglik(rng):
    net = random_network(rng, 8)
    samples = [random_state(rng, 8, 2, 2) for _ in range(3)]
    tr = trace_of(samples, net)
    ref = classical_mds(net, 2)
    out = align_trace(tr, ref)
    for s, ll in zip(out.samples, tr.loglik):
        assert log_likelihood(s, net) == pytest.approx(ll, abs=1e-10)


def test_summary_export(tmp_path, rng):
    from glssbm.network import NodeMeta
    net = random_network(rng, 4)
    samples = [random_state(rng, 4, 2, 2) for _ in range(3)]
    summ = summarize(trace_of(samples, net))
    meta = [NodeMeta('n0', 'A', 'Red'), NodeMeta('n1', 'B', 'Blue')]
    summ.export(tmp_path, net.node_ids, meta)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ['allocation.csv', 'edge_prob.csv', 'map_labels.csv',
                     'party_block.csv', 'positions.csv', 'tau_mean.csv',
                     'within_range.csv']
    pos = (tmp_path / 'positions.csv').read_text().splitlines()
    assert pos[0] == 'node,block,x1,x2' and len(pos) == 5
    labels = [int(r.split(',')[1]) for r in pos[1:]]
    assert set(labels) <= {1, 2}
    assert len((tmp_path / 'edge_prob.csv').read_text().splitlines()) == 13
