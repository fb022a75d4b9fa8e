"""Unlearning fine-tuning: continue gradient descent on the poisoned model's
parameters using only the fine-tuned subgraph, plus the retrain reference.

The poisoned parameters are used as-is (no re-initialization, no frozen
layers); each round is one full-batch epoch over the subgraph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attacks import PerturbationRecord, unpoison
from .gcn import GcnModel, TrainConfig, backward, forward, loss, train
from .graphs import Graph, normalize
from .subgraphs import FineTunedSubgraph


@dataclass
class RepairConfig:
    rounds: int = 5
    learning_rate: float = 0.05
    max_iterations: int | None = None  # safeguard; defaults to 10 * rounds
    tolerance: float = 1e-6

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")

    @property
    def iteration_cap(self) -> int:
        cap = self.max_iterations if self.max_iterations is not None else 10 * self.rounds
        return min(self.rounds, cap)


def repair(model: GcnModel, sub: FineTunedSubgraph, cfg: RepairConfig) -> GcnModel:
    """Fine-tune the poisoned parameters on the subgraph for up to
    ``cfg.rounds`` rounds, stopping early once the loss delta falls below the
    convergence tolerance.  The input model is never mutated."""
    g = sub.graph
    if model.w0.shape[0] != g.d:
        raise ValueError(
            f"model expects feature width {model.w0.shape[0]}, subgraph has {g.d}"
        )
    if model.w1.shape[1] != g.num_classes:
        raise ValueError(
            f"model expects {model.w1.shape[1]} classes, subgraph has {g.num_classes}"
        )
    tuned = model.copy()
    a_hat = normalize(g)
    previous = None
    for round_index in range(cfg.iteration_cap):
        _, _, probs = forward(tuned, a_hat, g.features)
        current = loss(probs, g.labels, g.train_mask)
        if not math.isfinite(current):
            raise ValueError(f"non-finite loss at round {round_index}")
        grad_w0, grad_w1 = backward(tuned, a_hat, g.features, g.labels, g.train_mask)
        tuned.w0 = tuned.w0 - cfg.learning_rate * grad_w0
        tuned.w1 = tuned.w1 - cfg.learning_rate * grad_w1
        if previous is not None and abs(previous - current) < cfg.tolerance:
            break
        previous = current
    return tuned


def retrain_baseline(
    g_poisoned: Graph, record: PerturbationRecord, cfg: TrainConfig
) -> GcnModel:
    """Retrain reference point: fresh random init, full training on the
    poisoned graph with the recorded perturbations removed."""
    return train(unpoison(g_poisoned, record), cfg)
