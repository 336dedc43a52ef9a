"""Cross-validated link prediction and vote-agreement density analysis."""

import csv
import dataclasses
import enum
import logging
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .model import edge_probability_matrix
from .network import DyadMask, Vote
from .sampler import run_chain

logger = logging.getLogger(__name__)

__all__ = [
    'RocCurve', 'KdeCurve', 'Agreement', 'GroupDensity', 'VoteDensity',
    'CVResult', 'roc', 'dyad_folds', 'posterior_edge_prob', 'kfold_dyad_cv',
    'agreement_matrix', 'vote_agreement_groups', 'silverman_bandwidth', 'kde',
    'vote_density_report', 'write_roc', 'write_vote_densities',
]


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def roc(scores, labels):
    """ROC curve from a descending threshold sweep.

    Tied scores form a single step, so the area equals the rank-sum AUC
    with ties counted one half.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.size == 0:
        raise ValueError('scores and labels must be non-empty and aligned')
    if not np.isin(labels, (0, 1)).all():
        raise ValueError('labels must be 0 or 1')
    P = int(labels.sum())
    N = labels.size - P
    if P == 0 or N == 0:
        raise ValueError('labels must contain both classes')
    order = np.argsort(-scores, kind='mergesort')
    s, y = scores[order], labels[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    tpr = np.r_[0.0, tp / P]
    fpr = np.r_[0.0, fp / N]
    return RocCurve(fpr, tpr, float(trapezoid(tpr, fpr)))


def dyad_folds(n, folds, random_state=None):
    """Split the ordered off-diagonal dyads into ``folds`` random parts of
    near-equal size. Returns a list of (rows, cols) index arrays."""
    if folds < 2:
        raise ValueError('need at least 2 folds')
    if n * (n - 1) < folds:
        raise ValueError(f'{n * (n - 1)} dyads cannot fill {folds} folds')
    rng = np.random.default_rng(random_state)
    rows, cols = np.nonzero(~np.eye(n, dtype=bool))
    perm = rng.permutation(rows.size)
    return [(rows[p], cols[p]) for p in np.array_split(perm, folds)]


def posterior_edge_prob(trace):
    """Posterior mean edge-probability matrix (diagonal NaN)."""
    return np.mean([edge_probability_matrix(s) for s in trace.samples],
                   axis=0)


@dataclass
class CVResult:
    roc: RocCurve
    fold_aucs: list
    scores: np.ndarray
    labels: np.ndarray
    fold: np.ndarray


def kfold_dyad_cv(net, model_cfg, sampler_cfg, folds=10, seed=0, **chain_kw):
    """Dyad-level k-fold cross-validation.

    Each fold's dyads are dropped from the likelihood, a chain is run, and
    each held-out dyad is scored by its posterior mean edge probability.
    """
    parts = dyad_folds(net.n, folds, seed)
    Y = net.adjacency
    scores, labels, fold_id, fold_aucs = [], [], [], []
    for f, (r, c) in enumerate(parts):
        mask = DyadMask.from_dyads(net.n, r, c, observed=False)
        scfg = dataclasses.replace(
            sampler_cfg,
            seed=int(np.random.SeedSequence(
                [sampler_cfg.seed, seed, f]).generate_state(1)[0]))
        try:
            trace = run_chain(net, mask, model_cfg, scfg, **chain_kw)
        except Exception as exc:
            raise RuntimeError(f'cross-validation fold {f} failed: {exc}') \
                from exc
        P = posterior_edge_prob(trace)
        s, y = P[r, c], Y[r, c].astype(int)
        try:
            fold_aucs.append(roc(s, y).auc)
        except ValueError:
            fold_aucs.append(float('nan'))
        scores.append(s)
        labels.append(y)
        fold_id.append(np.full(s.size, f))
        logger.info('fold %d: auc=%.4f', f, fold_aucs[-1])
    scores = np.concatenate(scores)
    labels = np.concatenate(labels)
    return CVResult(roc(scores, labels), fold_aucs, scores, labels,
                    np.concatenate(fold_id))


class Agreement(enum.Enum):
    AGREE = 'AGREE'
    DISAGREE = 'DISAGREE'
    ABSENT = 'ABSENT'


def _agreement(a, b):
    if a is Vote.ABSENT or b is Vote.ABSENT:
        return Agreement.ABSENT
    return Agreement.AGREE if a is b else Agreement.DISAGREE


def agreement_matrix(votes, vote_id):
    """N x N object array of Agreement values (diagonal None)."""
    col = votes.column(vote_id)
    n = len(col)
    M = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            M[i, j] = None if i == j else _agreement(col[i], col[j])
    return M


def vote_agreement_groups(votes, vote_id):
    """Map ordered node-id pair -> Agreement for one vote."""
    M = agreement_matrix(votes, vote_id)
    ids = votes.node_ids
    return {(ids[i], ids[j]): M[i, j]
            for i in range(len(ids)) for j in range(len(ids)) if i != j}


@dataclass(frozen=True)
class KdeCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    values: np.ndarray
    group: Agreement = None
    vote_id: str = None

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        u = (x[..., None] - self.values) / self.bandwidth
        return np.exp(-0.5 * u * u).sum(axis=-1) / (
            self.values.size * self.bandwidth * np.sqrt(2 * np.pi))

    def extended_grid(self, size=2049):
        h = self.bandwidth
        return np.linspace(self.values.min() - 5 * h,
                           self.values.max() + 5 * h, size)


def silverman_bandwidth(values):
    x = np.asarray(values, dtype=float)
    sd = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    if spread <= 0:
        spread = sd
    return 0.9 * spread * x.size ** (-0.2)


def kde(values, grid_size=512, window=(0.0, 1.0), group=None, vote_id=None):
    """Gaussian KDE with Silverman's bandwidth, evaluated on the part of
    ``[min - 5h, max + 5h]`` inside ``window``."""
    x = np.asarray(values, dtype=float)
    if x.size < 2 or np.ptp(x) == 0:
        raise ValueError('KDE needs at least two distinct values; '
                         'report a point mass instead')
    h = silverman_bandwidth(x)
    lo, hi = x.min() - 5 * h, x.max() + 5 * h
    if window is not None:
        lo, hi = max(lo, window[0]), min(hi, window[1])
    grid = np.linspace(lo, hi, grid_size)
    curve = KdeCurve(grid, None, h, x, group, vote_id)
    return dataclasses.replace(curve, density=curve.evaluate(grid))


@dataclass(frozen=True)
class GroupDensity:
    group: Agreement
    n: int
    mean: float
    curve: KdeCurve = None
    point_mass: float = None

    @property
    def empty(self):
        return self.n == 0


@dataclass(frozen=True)
class VoteDensity:
    vote_id: str
    groups: dict


def vote_density_report(summary, votes, grid_size=512):
    """Per vote, KDEs of posterior-mean edge probabilities of the ordered
    dyads in each agreement group. Groups with fewer than two values or no
    spread are reported as point masses (or as empty)."""
    P = summary.edge_prob
    report = []
    for vote_id in votes.vote_ids:
        M = agreement_matrix(votes, vote_id)
        groups = {}
        for g in Agreement:
            sel = M == g
            vals = P[sel].astype(float)
            if vals.size == 0:
                groups[g] = GroupDensity(g, 0, float('nan'))
            elif vals.size < 2 or np.ptp(vals) == 0:
                groups[g] = GroupDensity(g, vals.size, float(vals.mean()),
                                         point_mass=float(vals[0]))
            else:
                groups[g] = GroupDensity(
                    g, vals.size, float(vals.mean()),
                    kde(vals, grid_size, group=g, vote_id=vote_id))
        report.append(VoteDensity(vote_id, groups))
    return report


def write_roc(curve, path, auc_path=None):
    with open(path, 'w', encoding='utf-8', newline='') as fh:
        w = csv.writer(fh, lineterminator='\n')
        w.writerow(['fpr', 'tpr'])
        for f, t in curve.points:
            w.writerow([repr(f), repr(t)])
    if auc_path is not None:
        with open(auc_path, 'w', encoding='utf-8') as fh:
            fh.write(f'auc={curve.auc!r}\n')


def write_vote_densities(report, path, summary_path=None):
    with open(path, 'w', encoding='utf-8', newline='') as fh:
        w = csv.writer(fh, lineterminator='\n')
        w.writerow(['vote_id', 'group', 'x', 'density'])
        for vd in report:
            for g, gd in vd.groups.items():
                if gd.curve is None:
                    continue
                for x, y in zip(gd.curve.grid, gd.curve.density):
                    w.writerow([vd.vote_id, g.value, repr(float(x)),
                                repr(float(y))])
    if summary_path is not None:
        with open(summary_path, 'w', encoding='utf-8', newline='') as fh:
            w = csv.writer(fh, lineterminator='\n')
            w.writerow(['vote_id', 'group', 'n', 'mean', 'kind'])
            for vd in report:
                for g, gd in vd.groups.items():
                    kind = ('empty' if gd.empty else
                            'kde' if gd.curve is not None else 'point_mass')
                    w.writerow([vd.vote_id, g.value, gd.n, repr(gd.mean),
                                kind])
