"""Identifiability post-processing and posterior summaries.

Latent positions are only defined up to a rigid motion within each block,
and block labels only up to permutation. Stored samples are aligned to a
classical MDS reference and relabelled against the highest-likelihood
sample before summarising.
"""

import csv
import os
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import edge_probability_matrix

__all__ = [
    'ReferenceConfiguration', 'PosteriorSummary', 'cmdscale', 'classical_mds',
    'orthogonal_procrustes_fit', 'procrustes_align', 'align_trace',
    'best_permutation', 'relabel_trace', 'summarize',
]


@dataclass(frozen=True)
class ReferenceConfiguration:
    positions: np.ndarray

    @property
    def d(self):
        return self.positions.shape[1]


def cmdscale(D, d):
    """Classical (Torgerson) scaling of a symmetric dissimilarity matrix.

    Negative eigenvalues are clamped to zero, so fewer than ``d``
    informative columns may come back as zeros.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    if d == 0:
        return np.zeros((n, 0))
    J = np.eye(n) - 1.0 / n
    B = -0.5 * J @ (D ** 2) @ J
    B = 0.5 * (B + B.T)
    evals, evecs = np.linalg.eigh(B)
    order = np.argsort(evals)[::-1][:d]
    X = evecs[:, order] * np.sqrt(np.clip(evals[order], 0.0, None))
    if X.shape[1] < d:
        X = np.hstack([X, np.zeros((n, d - X.shape[1]))])
    return X - X.mean(axis=0)


def classical_mds(net, d):
    """Reference positions from MDS on one minus the symmetrised adjacency."""
    if d < 0:
        raise ValueError('d must be >= 0')
    if d > net.n:
        raise ValueError(f'cannot embed {net.n} nodes in {d} dimensions')
    A = np.asarray(net.adjacency, dtype=float)
    D = 1.0 - 0.5 * (A + A.T)
    np.fill_diagonal(D, 0.0)
    return ReferenceConfiguration(cmdscale(D, d))


def orthogonal_procrustes_fit(X, R):
    """Rigid map (rotation or reflection plus translation) of X onto R.

    Returns the transformed X.
    """
    X = np.asarray(X, dtype=float)
    R = np.asarray(R, dtype=float)
    mx, mr = X.mean(axis=0), R.mean(axis=0)
    if X.shape[0] < 2:
        return X - mx + mr
    U, _, Vt = np.linalg.svd((X - mx).T @ (R - mr))
    return (X - mx) @ (U @ Vt) + mr


def procrustes_align(Z, gamma, ref, per_block=True):
    """Align positions to the reference, block by block by default.

    Blocks with a single member are translated onto the reference.
    """
    Z = np.asarray(Z, dtype=float)
    R = ref.positions if isinstance(ref, ReferenceConfiguration) else ref
    if Z.shape != R.shape:
        raise ValueError(f'shape mismatch {Z.shape} vs {R.shape}')
    if Z.shape[1] == 0:
        return Z.copy()
    if not per_block:
        return orthogonal_procrustes_fit(Z, R)
    out = np.empty_like(Z)
    for k in np.unique(gamma):
        idx = np.flatnonzero(gamma == k)
        out[idx] = orthogonal_procrustes_fit(Z[idx], R[idx])
    return out


def align_trace(trace, ref, per_block=True):
    samples = []
    for s in trace.samples:
        s = s.copy()
        s.Z = procrustes_align(s.Z, s.gamma, ref, per_block)
        samples.append(s)
    return trace.replace(samples)


def best_permutation(labels, ref_labels, K):
    """Permutation ``perm`` (sample label k -> ``perm[k]``) maximising
    agreement with ``ref_labels``; lexicographically smallest on ties."""
    C = np.zeros((K, K), dtype=np.int64)
    np.add.at(C, (labels, ref_labels), 1)
    rows, cols = linear_sum_assignment(-C)
    best = C[rows, cols].sum()

    perm = []
    used = []
    gained = 0
    for k in range(K):
        for l in range(K):
            if l in used:
                continue
            rest_r = [r for r in range(k + 1, K)]
            rest_c = [c for c in range(K) if c not in used and c != l]
            tail = 0
            if rest_r:
                sub = C[np.ix_(rest_r, rest_c)]
                rr, cc = linear_sum_assignment(-sub)
                tail = sub[rr, cc].sum()
            if gained + C[k, l] + tail == best:
                perm.append(l)
                used.append(l)
                gained += C[k, l]
                break
    return np.array(perm)


def relabel_trace(trace):
    """Relabel every sample against the highest-loglik sample."""
    if len(trace) == 0:
        raise ValueError('cannot relabel an empty trace')
    K = trace.samples[0].K
    if K == 1:
        return trace.replace([s.copy() for s in trace.samples])
    ref = trace.samples[int(np.argmax(trace.loglik))].gamma
    samples = [s.permute(best_permutation(s.gamma, ref, K))
               for s in trace.samples]
    return trace.replace(samples)


@dataclass
class PosteriorSummary:
    tau_mean: np.ndarray
    within_range: np.ndarray
    allocation: np.ndarray
    map_labels: np.ndarray
    mean_positions: np.ndarray
    edge_prob: np.ndarray

    @property
    def K(self):
        return self.allocation.shape[0]

    def export(self, path, node_ids, meta=None):
        """Write the summary tables (labels 1-based)."""
        os.makedirs(path, exist_ok=True)
        K = self.K

        def write(name, header, rows):
            with open(os.path.join(path, name), 'w', encoding='utf-8',
                      newline='') as fh:
                w = csv.writer(fh, lineterminator='\n')
                w.writerow(header)
                w.writerows(rows)

        write('tau_mean.csv', ['from', 'to', 'tau'],
              [(k + 1, l + 1, repr(float(self.tau_mean[k, l])))
               for k in range(K) for l in range(K) if k != l])
        write('within_range.csv', ['block', 'min', 'max'],
              [(k + 1, repr(float(lo)), repr(float(hi)))
               for k, (lo, hi) in enumerate(self.within_range)])
        write('allocation.csv', ['block', 'allocation'],
              [(k + 1, repr(float(a))) for k, a in enumerate(self.allocation)])
        party = {m.id: m.party for m in meta} if meta else {}
        write('map_labels.csv', ['node', 'block', 'party'],
              [(v, int(self.map_labels[i]) + 1, party.get(v, 'Unknown'))
               for i, v in enumerate(node_ids)])
        d = self.mean_positions.shape[1]
        write('positions.csv',
              ['node', 'block'] + [f'x{c + 1}' for c in range(d)],
              [[v, int(self.map_labels[i]) + 1]
               + [repr(float(x)) for x in self.mean_positions[i]]
               for i, v in enumerate(node_ids)])
        n = len(node_ids)
        write('edge_prob.csv', ['src', 'dst', 'prob'],
              [(node_ids[i], node_ids[j], repr(float(self.edge_prob[i, j])))
               for i in range(n) for j in range(n) if i != j])
        parties = sorted(set(party.get(v, 'Unknown') for v in node_ids))
        table = {p: [0] * K for p in parties}
        for i, v in enumerate(node_ids):
            table[party.get(v, 'Unknown')][self.map_labels[i]] += 1
        write('party_block.csv', ['party'] + [str(k + 1) for k in range(K)],
              [[p] + table[p] for p in parties])


def summarize(trace, net=None):
    """Posterior means of a relabelled, aligned trace.

    ``within_range[k]`` is the (min, max) posterior-mean edge probability
    over ordered dyads whose MAP labels are both k (NaN if fewer than two
    members). Mean positions average only the samples in which the node
    carries its MAP label.
    """
    S = len(trace)
    if S == 0:
        raise ValueError('cannot summarise an empty trace')
    first = trace.samples[0]
    K, n, d = first.K, first.n, first.d

    tau_mean = trace.tau.mean(axis=0)
    allocation = trace.pi.mean(axis=0)
    G = trace.gamma
    counts = np.stack([(G == k).sum(axis=0) for k in range(K)], axis=1)
    map_labels = counts.argmax(axis=1)

    edge_prob = np.mean([edge_probability_matrix(s) for s in trace.samples],
                        axis=0)

    within = np.full((K, 2), np.nan)
    for k in range(K):
        idx = np.flatnonzero(map_labels == k)
        if idx.size < 2:
            continue
        sub = edge_prob[np.ix_(idx, idx)]
        vals = sub[~np.eye(idx.size, dtype=bool)]
        within[k] = vals.min(), vals.max()

    Zs = np.array([s.Z for s in trace.samples])
    hit = G == map_labels[None, :]
    mean_positions = (np.einsum('sn,snd->nd', hit, Zs)
                      / hit.sum(axis=0)[:, None]) if d else np.zeros((n, 0))
    return PosteriorSummary(tau_mean, within, allocation, map_labels,
                            mean_positions, edge_prob)
