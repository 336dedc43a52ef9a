"""Directed binary networks, dyad masks, node metadata and vote records."""

import csv
import enum
import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    'DirectedNetwork', 'DyadMask', 'NodeMeta', 'Vote', 'VoteTable',
    'NetworkFormatError', 'load_edge_list', 'load_metadata', 'load_votes',
    'export_graph', 'write_edge_list', 'write_node_list',
]


class NetworkFormatError(ValueError):
    """Malformed input file; message carries the path and line number."""


def _freeze(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DirectedNetwork:
    """N x N binary adjacency; ``adjacency[i, j] == 1`` iff i follows j."""

    node_ids: tuple
    adjacency: np.ndarray

    def __post_init__(self):
        ids = tuple(str(v) for v in self.node_ids)
        if len(set(ids)) != len(ids):
            raise ValueError('node_ids must be unique')
        A = np.asarray(self.adjacency)
        n = len(ids)
        if A.shape != (n, n):
            raise ValueError(
                f'adjacency shape {A.shape} does not match {n} node ids')
        if not np.isin(A, (0, 1)).all():
            raise ValueError('adjacency entries must be 0 or 1')
        if np.any(np.diag(A) != 0):
            raise ValueError('adjacency diagonal must be zero (no self-loops)')
        object.__setattr__(self, 'node_ids', ids)
        object.__setattr__(self, 'adjacency', _freeze(A.astype(np.int8)))

    @property
    def n(self):
        return len(self.node_ids)

    @property
    def n_edges(self):
        return int(self.adjacency.sum())

    def index(self, node_id):
        return self.node_ids.index(node_id)

    @classmethod
    def from_adjacency(cls, adjacency, node_ids=None):
        A = np.asarray(adjacency)
        if node_ids is None:
            node_ids = [f'n{i}' for i in range(A.shape[0])]
        return cls(tuple(node_ids), A)

    def edges(self):
        """Yield ``(src_id, dst_id)`` in row-major order."""
        for i, j in zip(*np.nonzero(self.adjacency)):
            yield self.node_ids[i], self.node_ids[j]


@dataclass(frozen=True)
class DyadMask:
    """Boolean matrix of ordered dyads that contribute to the likelihood."""

    observed: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.observed, dtype=bool)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError('mask must be square')
        if M.diagonal().any():
            raise ValueError('mask diagonal must be False')
        object.__setattr__(self, 'observed', _freeze(M))

    @property
    def n(self):
        return self.observed.shape[0]

    @classmethod
    def full(cls, n):
        M = np.ones((n, n), dtype=bool)
        np.fill_diagonal(M, False)
        return cls(M)

    @classmethod
    def empty(cls, n):
        return cls(np.zeros((n, n), dtype=bool))

    @classmethod
    def from_dyads(cls, n, rows, cols, observed=True):
        """Mask with only the listed dyads observed (or, if ``observed`` is
        False, everything except the listed dyads)."""
        if observed:
            M = np.zeros((n, n), dtype=bool)
            M[rows, cols] = True
        else:
            M = cls.full(n).observed.copy()
            M[rows, cols] = False
        np.fill_diagonal(M, False)
        return cls(M)

    def complement(self):
        M = ~self.observed
        np.fill_diagonal(M, False)
        return DyadMask(M)

    def check(self, net):
        if self.n != net.n:
            raise ValueError(
                f'mask is {self.n}x{self.n} but network has {net.n} nodes')


@dataclass(frozen=True)
class NodeMeta:
    id: str
    display_name: str
    party: str


class Vote(enum.Enum):
    YES = 'TA'
    NO = 'NIL'
    ABSENT = 'ABSENT'


@dataclass(frozen=True)
class VoteTable:
    """Complete (node x vote) table; cells missing from the file are ABSENT."""

    node_ids: tuple
    vote_ids: tuple
    records: dict = field(repr=False)

    def get(self, node_id, vote_id):
        return self.records.get((node_id, vote_id), Vote.ABSENT)

    def column(self, vote_id):
        """Votes for ``vote_id`` in node order."""
        if vote_id not in self.vote_ids:
            raise KeyError(f'unknown vote id {vote_id!r}')
        return [self.get(v, vote_id) for v in self.node_ids]


def _read_lines(path):
    with open(path, encoding='utf-8') as fh:
        return fh.read().splitlines()


def load_edge_list(path, nodes_path):
    """Build a network from a node list file and a ``src,dst`` edge CSV.

    Node order follows the node file. Duplicate edges collapse with a
    warning; self-loops and unknown ids are rejected with the line number.
    """
    node_ids = []
    for lineno, line in enumerate(_read_lines(nodes_path), start=1):
        line = line.strip()
        if not line:
            continue
        if line in node_ids:
            raise NetworkFormatError(
                f'{nodes_path}:{lineno}: duplicate node id {line!r}')
        node_ids.append(line)
    index = {v: i for i, v in enumerate(node_ids)}

    n = len(node_ids)
    A = np.zeros((n, n), dtype=np.int8)
    n_dup = 0
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split(',')]
        if len(parts) != 2:
            raise NetworkFormatError(
                f'{path}:{lineno}: expected "src,dst", got {line!r}')
        src, dst = parts
        for v in (src, dst):
            if v not in index:
                raise NetworkFormatError(
                    f'{path}:{lineno}: unknown node id {v!r}')
        if src == dst:
            raise NetworkFormatError(
                f'{path}:{lineno}: self-loop {src!r} -> {dst!r}')
        i, j = index[src], index[dst]
        if A[i, j]:
            n_dup += 1
        A[i, j] = 1
    if n_dup:
        logger.warning('%s: collapsed %d duplicate edge line(s)', path, n_dup)
    return DirectedNetwork(tuple(node_ids), A)


def write_node_list(net, path):
    with open(path, 'w', encoding='utf-8', newline='') as fh:
        for v in net.node_ids:
            fh.write(f'{v}\n')


def write_edge_list(net, path):
    with open(path, 'w', encoding='utf-8', newline='') as fh:
        for src, dst in net.edges():
            fh.write(f'{src},{dst}\n')


def _dict_rows(path, header):
    with open(path, encoding='utf-8', newline='') as fh:
        lines = fh.read().splitlines()
    lines = [(k, ln) for k, ln in enumerate(lines, start=1) if ln.strip()]
    if not lines:
        return
    first_no, first = lines[0]
    got = [h.strip() for h in first.split(',')]
    if got != list(header):
        raise NetworkFormatError(
            f'{path}:{first_no}: expected header {",".join(header)!r}, '
            f'got {first!r}')
    for lineno, line in lines[1:]:
        row = next(csv.reader([line]))
        if len(row) != len(header):
            raise NetworkFormatError(
                f'{path}:{lineno}: expected {len(header)} fields, '
                f'got {len(row)}')
        yield lineno, [c.strip() for c in row]


def load_metadata(path, net):
    """Read ``id,name,party`` rows; nodes absent from the file get party
    ``"Unknown"`` and their id as display name."""
    known = set(net.node_ids)
    found = {}
    for lineno, (node_id, name, party) in _dict_rows(
            path, ('id', 'name', 'party')):
        if node_id not in known:
            raise NetworkFormatError(
                f'{path}:{lineno}: node id {node_id!r} not in network')
        found[node_id] = NodeMeta(node_id, name, party)
    return [found.get(v, NodeMeta(v, v, 'Unknown')) for v in net.node_ids]


def load_votes(path, net):
    """Read ``id,vote_id,value`` rows, value one of TA/NIL/ABSENT."""
    known = set(net.node_ids)
    tokens = {v.value: v for v in Vote}
    vote_ids = []
    records = {}
    for lineno, (node_id, vote_id, value) in _dict_rows(
            path, ('id', 'vote_id', 'value')):
        if node_id not in known:
            raise NetworkFormatError(
                f'{path}:{lineno}: node id {node_id!r} not in network')
        token = value.upper()
        if token not in tokens:
            raise NetworkFormatError(
                f'{path}:{lineno}: vote value {value!r} not one of '
                'TA, NIL, ABSENT')
        if vote_id not in vote_ids:
            vote_ids.append(vote_id)
        records[node_id, vote_id] = tokens[token]
    return VoteTable(net.node_ids, tuple(vote_ids), records)


def export_graph(net, meta, path):
    """Write GraphML with a ``party`` (and ``name``) attribute per node."""
    import networkx as nx

    by_id = {m.id: m for m in meta}
    G = nx.DiGraph()
    for v in net.node_ids:
        m = by_id.get(v)
        G.add_node(v, party=m.party if m else 'Unknown',
                   name=m.display_name if m else v)
    G.add_edges_from(net.edges())
    nx.write_graphml(G, path)
