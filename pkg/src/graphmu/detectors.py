"""Anomaly detectors: beta-wavelet spectral scoring, Jaccard dissimilarity,
and SimRank, each producing a DetectionReport.

The spectral detector flags injected nodes by their high-frequency energy
under a bank of beta-wavelet band-pass filters of the normalized Laplacian.
Jaccard flags feature-modified nodes whose 1-hop neighbors are mostly
dissimilar.  SimRank flags structurally implausible edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .graphs import Graph, Laplacian, laplacian

Edge = tuple[int, int]


@dataclass
class DetectionReport:
    kind: str
    node_scores: dict[int, float] = field(default_factory=dict)
    edge_scores: dict[Edge, float] = field(default_factory=dict)
    selected_nodes: list[int] = field(default_factory=list)
    selected_edges: list[Edge] = field(default_factory=list)
    thresholds: dict[str, float] = field(default_factory=dict)


@dataclass
class BetaFilterBank:
    """Filters W(p, q) = (L/2)^p (I - L/2)^q / (2 B(p+1, q+1)) for p + q = order."""

    order: int
    filters: list[sp.csr_matrix]


def beta_constant(p: int, q: int) -> float:
    """Beta function B(p+1, q+1) for nonnegative integers, via factorials."""
    return math.factorial(p) * math.factorial(q) / math.factorial(p + q + 1)


def beta_wavelet(lap: Laplacian | sp.spmatrix, p: int, q: int) -> sp.csr_matrix:
    mat = lap.matrix if isinstance(lap, Laplacian) else lap
    n = mat.shape[0]
    half = (mat * 0.5).tocsr()
    comp = (sp.identity(n, format="csr") - half).tocsr()
    out = sp.identity(n, format="csr") * (1.0 / (2.0 * beta_constant(p, q)))
    for _ in range(p):
        out = (out @ half).tocsr()
    for _ in range(q):
        out = (out @ comp).tocsr()
    return out.tocsr()


def build_filter_bank(lap: Laplacian | sp.spmatrix, order: int) -> BetaFilterBank:
    if order < 1:
        raise ValueError("filter bank order must be >= 1")
    filters = [beta_wavelet(lap, p, order - p) for p in range(order + 1)]
    return BetaFilterBank(order=order, filters=filters)


def sigmoid(x):
    from scipy.special import expit

    return expit(x)


def spectral_features(g: Graph, bank: BetaFilterBank) -> np.ndarray:
    """Per-node feature: Euclidean norm of each filtered feature row,
    giving order+1 scalars per node ordered from low to high frequency."""
    cols = [np.linalg.norm(w @ g.features, axis=1) for w in bank.filters]
    return np.stack(cols, axis=1)


class _ScorerMlp:
    """One-hidden-layer scorer mapping spectral features to a raw score."""

    def __init__(self, dim: int, hidden: int, seed: int):
        rng = np.random.default_rng(seed)
        self.w0 = rng.uniform(-1, 1, size=(dim, hidden)) / np.sqrt(dim)
        self.b0 = np.zeros(hidden)
        self.w1 = rng.uniform(-1, 1, size=(hidden, 1)) / np.sqrt(hidden)
        self.b1 = np.zeros(1)

    def score(self, z: np.ndarray) -> np.ndarray:
        h = np.tanh(z @ self.w0 + self.b0)
        return (h @ self.w1 + self.b1).ravel()

    def fit(self, z: np.ndarray, y: np.ndarray, epochs: int = 300, lr: float = 0.1):
        for _ in range(epochs):
            a = z @ self.w0 + self.b0
            h = np.tanh(a)
            s = (h @ self.w1 + self.b1).ravel()
            p = sigmoid(s)
            g_s = (p - y) / len(y)
            g_w1 = h.T @ g_s[:, None]
            g_h = g_s[:, None] @ self.w1.T
            g_a = g_h * (1.0 - h * h)
            self.w1 -= lr * g_w1
            self.b1 -= lr * g_s.sum()
            self.w0 -= lr * (z.T @ g_a)
            self.b0 -= lr * g_a.sum(axis=0)


def _standardize(s: np.ndarray) -> np.ndarray:
    std = s.std()
    if std == 0.0:
        return np.zeros_like(s)
    return (s - s.mean()) / std


def bwgnn_score(
    g: Graph,
    bank: BetaFilterBank,
    mode: str = "unsupervised",
    seed: int = 0,
    cutoff: float = 0.5,
) -> DetectionReport:
    """Spectral anomaly probabilities per node; a sigmoid is applied last.

    Unsupervised mode weights the per-filter energies by a linear ramp toward
    the high-frequency end and standardizes before the sigmoid.  Supervised
    mode trains the scorer on self-generated synthetic injections whose
    labels are known by construction.
    """
    z = spectral_features(g, bank)
    if mode == "unsupervised":
        ramp = np.arange(bank.order + 1) / bank.order
        s = _standardize(z @ ramp)
    elif mode == "supervised":
        from .attacks import AttackSpec, poison

        count = max(2, round(0.05 * g.n))
        synthetic, record = poison(
            g, AttackSpec(kind="node_injection", budget=3 * count,
                          inject_count=count, seed=seed + 1),
        )
        synth_bank = build_filter_bank(laplacian(synthetic), bank.order)
        z_train = spectral_features(synthetic, synth_bank)
        y = np.zeros(synthetic.n)
        y[record.injected_nodes] = 1.0
        mlp = _ScorerMlp(dim=z.shape[1], hidden=8, seed=seed)
        mlp.fit(_standardize_cols(z_train), y)
        s = mlp.score(_standardize_cols(z))
    else:
        raise ValueError(f"unknown scoring mode {mode!r}")

    probs = sigmoid(s)
    node_scores = {v: float(probs[v]) for v in range(g.n)}
    selected = [v for v in range(g.n) if probs[v] > cutoff]
    return DetectionReport(
        kind="bwgnn",
        node_scores=node_scores,
        selected_nodes=selected,
        thresholds={"cutoff": cutoff},
    )


def _standardize_cols(z: np.ndarray) -> np.ndarray:
    std = z.std(axis=0)
    std[std == 0.0] = 1.0
    return (z - z.mean(axis=0)) / std


def jaccard_similarity(x_v: np.ndarray, x_u: np.ndarray) -> float:
    """Intersection over union of the nonzero feature index sets; two empty
    sets count as 0 (dissimilar)."""
    a = set(np.flatnonzero(x_v))
    b = set(np.flatnonzero(x_u))
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def jaccard_score(g: Graph, r: float = 0.01, p: float = 0.5) -> DetectionReport:
    """Flag nodes whose dissimilar-neighbor count k_v exceeds p * |N1(v)|.

    k_v counts 1-hop neighbors u with J(v, u) < r.  Isolated nodes are never
    flagged.
    """
    if not 0 < r < 1:
        raise ValueError("similarity threshold r must lie in (0, 1)")
    if not 0 < p < 1:
        raise ValueError("dissimilar fraction p must lie in (0, 1)")
    sims: dict[Edge, float] = {}
    for u, v in g.edge_set():
        sims[(u, v)] = jaccard_similarity(g.features[u], g.features[v])
    k = np.zeros(g.n, dtype=np.int64)
    deg = np.zeros(g.n, dtype=np.int64)
    for (u, v), s in sims.items():
        deg[u] += 1
        deg[v] += 1
        if s < r:
            k[u] += 1
            k[v] += 1
    selected = [v for v in range(g.n) if deg[v] > 0 and k[v] > p * deg[v]]
    return DetectionReport(
        kind="jaccard",
        node_scores={v: float(k[v]) for v in range(g.n)},
        selected_nodes=selected,
        thresholds={"r": r, "p": p},
    )


def simrank(g: Graph, iterations: int = 20, tol: float = 1e-6) -> np.ndarray:
    """Pairwise SimRank matrix with the printed 1/2 coefficient.

    The diagonal is pinned to 1 every sweep; nodes with no neighbors keep
    similarity 0 to all others.  With tol = 0 the solver runs exactly
    ``iterations`` sweeps, which keeps it comparable to a brute-force
    expansion at equal iteration counts.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if g.n == 0:
        return np.zeros((0, 0))
    deg = np.asarray(g.adjacency.sum(axis=1)).ravel()
    inv = np.zeros_like(deg)
    inv[deg > 0] = 1.0 / deg[deg > 0]
    q = g.adjacency.multiply(inv[:, None]).tocsr()  # row-normalized adjacency

    s = np.eye(g.n)
    for _ in range(iterations):
        t = q @ s
        s_new = 0.5 * (q @ t.T)
        s_new = 0.5 * (s_new + s_new.T)  # remove last-ulp asymmetry
        np.fill_diagonal(s_new, 1.0)
        delta = np.abs(s_new - s).max()
        s = s_new
        if delta < tol:
            break
    return s


def simrank_edge_score(g: Graph, sim: np.ndarray, tau: float | None = None) -> DetectionReport:
    """Select existing edges whose SimRank falls below tau.

    When tau is None it defaults to the 5th percentile of the edge scores
    observed on the input graph.
    """
    edges = g.edge_set()
    scores = {e: float(sim[e[0], e[1]]) for e in edges}
    if tau is None:
        tau = float(np.percentile(list(scores.values()), 5.0)) if scores else 0.0
    selected = [e for e in edges if scores[e] < tau]
    return DetectionReport(
        kind="simrank",
        edge_scores=scores,
        selected_edges=selected,
        thresholds={"tau": tau},
    )


def select_by_ratio(report: DetectionReport, ratio: float, universe_size: int) -> DetectionReport:
    """Cap the selected set at ceil(ratio * universe_size) entries.

    Nodes are kept highest-score first, edges lowest-SimRank first, with ties
    broken by id so the result is independent of input ordering.
    """
    if not 0 < ratio <= 1:
        raise ValueError("ratio must lie in (0, 1]")
    keep = math.ceil(ratio * universe_size)
    nodes = sorted(report.selected_nodes, key=lambda v: (-report.node_scores.get(v, 0.0), v))
    edges = sorted(report.selected_edges, key=lambda e: (report.edge_scores.get(e, 0.0), e))
    return replace(
        report,
        selected_nodes=sorted(nodes[:keep]),
        selected_edges=sorted(edges[:keep]),
        thresholds={**report.thresholds, "ratio": ratio},
    )
