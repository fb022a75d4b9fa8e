"""Graph data model, dataset loading, synthetic generation, and normalization.

Graphs are undirected and simple: the stored adjacency is a symmetric 0/1
sparse matrix with an empty diagonal.  Self-loops enter only through the
normalization step, which always works on A + I.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable node-classification graph.

    adjacency : (n, n) symmetric CSR matrix of 0/1 floats, zero diagonal
    features  : (n, d) float64 matrix (0/1 at load time, fractional after
                repair-time feature averaging)
    labels    : (n,) int64, each in [0, num_classes)
    masks     : three pairwise-disjoint boolean vectors
    node_ids  : original string identifiers, kept for reporting
    """

    adjacency: sp.csr_matrix
    features: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    num_classes: int
    node_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        adj = self.adjacency.tocsr().astype(np.float64)
        adj.sum_duplicates()
        adj.sort_indices()
        adj.eliminate_zeros()
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "features", _frozen(self.features.astype(np.float64)))
        object.__setattr__(self, "labels", _frozen(self.labels.astype(np.int64)))
        for name in ("train_mask", "val_mask", "test_mask"):
            object.__setattr__(self, name, _frozen(getattr(self, name).astype(bool)))
        if not self.node_ids:
            object.__setattr__(self, "node_ids", tuple(str(i) for i in range(self.n)))
        self._check()

    def _check(self):
        n = self.adjacency.shape[0]
        if self.adjacency.shape != (n, n):
            raise ValueError("adjacency must be square")
        if (self.adjacency != self.adjacency.T).nnz != 0:
            raise ValueError("adjacency must be symmetric")
        if self.adjacency.diagonal().any():
            raise ValueError("stored adjacency must not contain self-loops")
        if self.features.shape[0] != n:
            raise ValueError(f"feature rows {self.features.shape[0]} != node count {n}")
        if self.labels.shape != (n,):
            raise ValueError("labels must have one entry per node")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        for name in ("train_mask", "val_mask", "test_mask"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have one entry per node")
        overlap = (
            (self.train_mask & self.val_mask)
            | (self.train_mask & self.test_mask)
            | (self.val_mask & self.test_mask)
        )
        if overlap.any():
            raise ValueError("train/val/test masks must be pairwise disjoint")
        if len(self.node_ids) != n:
            raise ValueError("node_ids must have one entry per node")

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return self.adjacency.nnz // 2

    def neighbors(self, v: int) -> np.ndarray:
        """Sorted 1-hop neighbor ids of ``v``."""
        if not 0 <= v < self.n:
            raise ValueError(f"node id {v} out of range [0, {self.n})")
        return self.adjacency.indices[self.adjacency.indptr[v]:self.adjacency.indptr[v + 1]].copy()

    def edge_set(self) -> list[tuple[int, int]]:
        """All undirected edges as sorted (u, v) pairs with u < v."""
        coo = self.adjacency.tocoo()
        return sorted((int(u), int(v)) for u, v in zip(coo.row, coo.col) if u < v)

    def replace(self, **kwargs) -> "Graph":
        """New Graph sharing every field not overridden."""
        fields = dict(
            adjacency=self.adjacency,
            features=self.features,
            labels=self.labels,
            train_mask=self.train_mask,
            val_mask=self.val_mask,
            test_mask=self.test_mask,
            num_classes=self.num_classes,
            node_ids=self.node_ids,
        )
        fields.update(kwargs)
        return Graph(**fields)


def adjacency_from_edges(n: int, edges) -> sp.csr_matrix:
    """Symmetric 0/1 CSR matrix from an iterable of undirected (u, v) pairs."""
    pairs = {(min(u, v), max(u, v)) for u, v in edges if u != v}
    if not pairs:
        return sp.csr_matrix((n, n), dtype=np.float64)
    rows, cols = [], []
    for u, v in pairs:
        if not (0 <= u < n and 0 <= v < n):
            raise ValueError(f"edge ({u}, {v}) out of range for n={n}")
        rows += [u, v]
        cols += [v, u]
    data = np.ones(len(rows), dtype=np.float64)
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    """Propagation matrix D̃^{-1/2} (A + I) D̃^{-1/2} and the degrees D̃ᵢᵢ."""

    matrix: sp.csr_matrix
    degree: np.ndarray


@dataclass(frozen=True, eq=False)
class Laplacian:
    """I minus the self-loop-normalized adjacency; eigenvalues lie in [0, 2]."""

    matrix: sp.csr_matrix


def normalize(g: Graph) -> NormalizedAdjacency:
    """Symmetric normalization with self-loops added on the fly."""
    if g.n == 0:
        raise ValueError("cannot normalize an empty graph")
    a_tilde = (g.adjacency + sp.identity(g.n, format="csr", dtype=np.float64)).tocoo()
    degree = np.asarray(a_tilde.sum(axis=1)).ravel()
    # one rounding per entry (and exact for perfect-square degree products),
    # symmetric by construction since d_i * d_j commutes
    data = 1.0 / np.sqrt(degree[a_tilde.row] * degree[a_tilde.col])
    a_hat = sp.csr_matrix((data, (a_tilde.row, a_tilde.col)), shape=a_tilde.shape)
    a_hat.sort_indices()
    return NormalizedAdjacency(matrix=a_hat, degree=degree)


def laplacian(g: Graph) -> Laplacian:
    a_hat = normalize(g).matrix
    lap = (sp.identity(g.n, format="csr", dtype=np.float64) - a_hat).tocsr()
    lap.sort_indices()
    return Laplacian(matrix=lap)


def k_hop_neighbors(g: Graph, v: int, k: int) -> set[int]:
    """Nodes at BFS distance 1..k from ``v``; ``v`` itself is excluded."""
    if not 0 <= v < g.n:
        raise ValueError(f"node id {v} out of range [0, {g.n})")
    if k < 1:
        raise ValueError("hop count must be >= 1")
    indptr, indices = g.adjacency.indptr, g.adjacency.indices
    seen = {v}
    frontier = deque([(v, 0)])
    result: set[int] = set()
    while frontier:
        node, dist = frontier.popleft()
        if dist == k:
            continue
        for u in indices[indptr[node]:indptr[node + 1]]:
            u = int(u)
            if u not in seen:
                seen.add(u)
                result.add(u)
                frontier.append((u, dist + 1))
    return result


def load_cora_format(
    content_path,
    cites_path,
    train_per_class: int = 20,
    val_count: int = 500,
    test_count: int = 1000,
) -> Graph:
    """Load a citation graph from raw ``.content`` / ``.cites`` text files.

    ``.content`` lines are ``node_id <tab> feat_1 .. feat_d <tab> label``;
    ``.cites`` lines are ``cited <tab> citing``.  Citations become undirected
    edges with duplicates merged and self-citations dropped.  Node ids are
    remapped to [0, n) in file order; the original ids are kept as a side
    table.  Splits follow the conventional public counts (train_per_class
    nodes per class in file order, then the next ``val_count`` nodes, then
    the last ``test_count`` nodes), capped by availability.
    """
    ids: list[str] = []
    rows: list[list[float]] = []
    raw_labels: list[str] = []
    width = None
    with open(content_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.strip().split()
            if not parts:
                continue
            if len(parts) < 3:
                raise ValueError(f"{content_path}: line {lineno}: expected id, features, label")
            node_id, feats, label = parts[0], parts[1:-1], parts[-1]
            if width is None:
                width = len(feats)
            elif len(feats) != width:
                raise ValueError(
                    f"{content_path}: line {lineno}: feature width {len(feats)} != {width}"
                )
            ids.append(node_id)
            rows.append([float(x) for x in feats])
            raw_labels.append(label)
    if not ids:
        raise ValueError(f"{content_path}: no nodes")
    if len(set(ids)) != len(ids):
        raise ValueError(f"{content_path}: duplicate node ids")

    index = {node_id: i for i, node_id in enumerate(ids)}
    classes = sorted(set(raw_labels))
    labels = np.array([classes.index(lbl) for lbl in raw_labels], dtype=np.int64)

    edges = set()
    with open(cites_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.strip().split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ValueError(f"{cites_path}: line {lineno}: expected two node ids")
            for node_id in parts:
                if node_id not in index:
                    raise ValueError(f"{cites_path}: line {lineno}: unknown node id {node_id!r}")
            u, v = index[parts[0]], index[parts[1]]
            if u != v:
                edges.add((min(u, v), max(u, v)))

    n = len(ids)
    train = np.zeros(n, dtype=bool)
    taken = {c: 0 for c in range(len(classes))}
    for i in range(n):
        if taken[int(labels[i])] < train_per_class:
            train[i] = True
            taken[int(labels[i])] += 1
    val = np.zeros(n, dtype=bool)
    budget = val_count
    for i in range(n):
        if budget == 0:
            break
        if not train[i]:
            val[i] = True
            budget -= 1
    test = np.zeros(n, dtype=bool)
    budget = test_count
    for i in range(n - 1, -1, -1):
        if budget == 0:
            break
        if not train[i] and not val[i]:
            test[i] = True
            budget -= 1

    return Graph(
        adjacency=adjacency_from_edges(n, edges),
        features=np.array(rows, dtype=np.float64),
        labels=labels,
        train_mask=train,
        val_mask=val,
        test_mask=test,
        num_classes=len(classes),
        node_ids=tuple(ids),
    )


def generate_sbm(
    blocks: int,
    per_block: int,
    p_in: float,
    p_out: float,
    d: int,
    seed: int,
    noise: float = 0.05,
) -> Graph:
    """Stochastic block model with class-prototype bit features.

    Each class owns a contiguous segment of the d feature bits; node features
    are the class prototype with every bit independently flipped with
    probability ``noise``.  Masks are a deterministic 10/10/80 per-class
    split drawn from the same seed.
    """
    if not (0.0 <= p_out <= 1.0 and 0.0 <= p_in <= 1.0):
        raise ValueError("edge probabilities must lie in [0, 1]")
    if p_in <= p_out:
        raise ValueError("p_in must exceed p_out")
    if per_block < 2:
        raise ValueError("per_block must be >= 2")
    if blocks < 2:
        raise ValueError("need at least two blocks")

    rng = np.random.default_rng(seed)
    n = blocks * per_block
    labels = np.repeat(np.arange(blocks), per_block).astype(np.int64)

    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(iu.size) < prob
    adjacency = adjacency_from_edges(n, zip(iu[keep], ju[keep]))

    bounds = np.linspace(0, d, blocks + 1).astype(int)
    prototypes = np.zeros((blocks, d), dtype=np.float64)
    for c in range(blocks):
        prototypes[c, bounds[c]:bounds[c + 1]] = 1.0
    features = prototypes[labels].copy()
    flips = rng.random((n, d)) < noise
    features[flips] = 1.0 - features[flips]

    train = np.zeros(n, dtype=bool)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    n_train = max(1, round(0.1 * per_block))
    n_val = max(1, round(0.1 * per_block))
    for c in range(blocks):
        members = np.where(labels == c)[0]
        order = rng.permutation(members)
        train[order[:n_train]] = True
        val[order[n_train:n_train + n_val]] = True
        test[order[n_train + n_val:]] = True

    return Graph(
        adjacency=adjacency,
        features=features,
        labels=labels,
        train_mask=train,
        val_mask=val,
        test_mask=test,
        num_classes=blocks,
    )
