"""Two-layer GCN: forward pass, loss, analytic backprop, training, metrics.

The forward pass is H1 = ReLU(Â X W0), logits H2 = Â H1 W1, output
probabilities O = row-softmax(H2).  The loss is the per-class binary
cross-entropy summed over classes against one-hot targets, averaged over the
masked nodes.  The optimizer is plain full-batch gradient descent; training
is deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import Graph, NormalizedAdjacency, normalize


@dataclass(eq=False)
class GcnModel:
    """Weights of a two-layer GCN; activation is ReLU on the hidden layer."""

    w0: np.ndarray  # (d, h)
    w1: np.ndarray  # (h, c)

    @property
    def hidden_dim(self) -> int:
        return self.w0.shape[1]

    def copy(self) -> "GcnModel":
        return GcnModel(w0=self.w0.copy(), w1=self.w1.copy())


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 200
    seed: int = 0
    weight_init_scale: float = 0.5
    hidden_dim: int = 16

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")


@dataclass
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float

    def as_dict(self) -> dict[str, float]:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def _propagation(a_hat) -> "np.ndarray | object":
    return a_hat.matrix if isinstance(a_hat, NormalizedAdjacency) else a_hat


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilized by subtracting the row maximum."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(model: GcnModel, a_hat, features: np.ndarray):
    """Hidden activations, logits, and softmax probabilities.

    Returns (h1, h2, probs); ReLU on the hidden layer only, softmax on the
    output layer.
    """
    mat = _propagation(a_hat)
    if features.shape[1] != model.w0.shape[0]:
        raise ValueError(
            f"feature width {features.shape[1]} does not match w0 rows {model.w0.shape[0]}"
        )
    if mat.shape[0] != features.shape[0]:
        raise ValueError(
            f"propagation matrix size {mat.shape[0]} does not match node count {features.shape[0]}"
        )
    if model.w0.shape[1] != model.w1.shape[0]:
        raise ValueError(
            f"w0 columns {model.w0.shape[1]} do not match w1 rows {model.w1.shape[0]}"
        )
    pre = mat @ (features @ model.w0)
    h1 = np.maximum(pre, 0.0)
    h2 = mat @ (h1 @ model.w1)
    return h1, h2, softmax_rows(h2)


def loss(probs: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    """Mean per-node sum of binary cross-entropy terms over all classes."""
    from scipy.special import xlog1py, xlogy

    if not mask.any():
        raise ValueError("loss requires a nonempty mask")
    p = probs[mask]
    y = np.eye(probs.shape[1], dtype=np.float64)[labels[mask]]
    term = -(xlogy(y, p) + xlog1py(1.0 - y, -p))  # 0 * log(0) counts as 0
    return float(term.sum() / p.shape[0])


def _logit_gradient(h2: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """d(loss)/d(logits), stable via per-class leave-one-out log-sum-exp."""
    n, c = h2.shape
    shifted = h2 - h2.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    total = e.sum(axis=1, keepdims=True)
    probs = e / total
    # odds O/(1-O) = exp(h2_k - logsumexp of the other classes)
    odds = e / (total - e)
    y = np.eye(c, dtype=np.float64)[labels]
    anti = (1.0 - y) * odds
    grad = probs - y + anti - probs * anti.sum(axis=1, keepdims=True)
    grad[~mask] = 0.0
    return grad / mask.sum()


def backward(model: GcnModel, a_hat, features: np.ndarray, labels: np.ndarray, mask: np.ndarray):
    """Analytic gradients of the loss w.r.t. w0 and w1.

    ReLU uses the subgradient 0 at exactly 0.
    """
    if not mask.any():
        raise ValueError("backward requires a nonempty mask")
    mat = _propagation(a_hat)
    pre = mat @ (features @ model.w0)
    h1 = np.maximum(pre, 0.0)
    h2 = mat @ (h1 @ model.w1)
    g2 = _logit_gradient(h2, labels, mask)
    back2 = mat @ g2  # Â is symmetric
    grad_w1 = h1.T @ back2
    grad_h1 = back2 @ model.w1.T
    grad_pre = grad_h1 * (pre > 0.0)
    grad_w0 = features.T @ (mat @ grad_pre)
    return grad_w0, grad_w1


def init_model(d: int, c: int, cfg: TrainConfig) -> GcnModel:
    """Seeded symmetric uniform init, scaled by 1/sqrt(fan-in)."""
    rng = np.random.default_rng(cfg.seed)
    s0 = cfg.weight_init_scale / np.sqrt(d)
    s1 = cfg.weight_init_scale / np.sqrt(cfg.hidden_dim)
    w0 = rng.uniform(-s0, s0, size=(d, cfg.hidden_dim))
    w1 = rng.uniform(-s1, s1, size=(cfg.hidden_dim, c))
    return GcnModel(w0=w0, w1=w1)


def train(g: Graph, cfg: TrainConfig) -> GcnModel:
    """Full-batch gradient descent on the training mask."""
    if not g.train_mask.any():
        raise ValueError("graph has an empty train mask")
    model = init_model(g.d, g.num_classes, cfg)
    a_hat = normalize(g)
    for _ in range(cfg.epochs):
        grad_w0, grad_w1 = backward(model, a_hat, g.features, g.labels, g.train_mask)
        model.w0 = model.w0 - cfg.learning_rate * grad_w0
        model.w1 = model.w1 - cfg.learning_rate * grad_w1
    return model


def precision_recall_f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Single-class precision/recall/F1 with the 0/0 -> 0 convention."""
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def evaluate(model: GcnModel, g: Graph, mask: np.ndarray) -> Metrics:
    """Micro accuracy plus macro precision/recall/F1 over classes in the mask."""
    if not mask.any():
        raise ValueError("evaluate requires a nonempty mask")
    _, _, probs = forward(model, normalize(g), g.features)
    preds = probs.argmax(axis=1)[mask]
    truth = g.labels[mask]
    accuracy = float((preds == truth).mean())
    precisions, recalls, f1s = [], [], []
    for c in np.unique(truth):
        tp = int(((preds == c) & (truth == c)).sum())
        fp = int(((preds == c) & (truth != c)).sum())
        fn = int(((preds != c) & (truth == c)).sum())
        p, r, f = precision_recall_f1(tp, fp, fn)
        precisions.append(p)
        recalls.append(r)
        f1s.append(f)
    return Metrics(
        accuracy=accuracy,
        precision=float(np.mean(precisions)),
        recall=float(np.mean(recalls)),
        f1=float(np.mean(f1s)),
    )
