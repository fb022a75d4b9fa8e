"""Unlearning validation: compare pre- and post-repair softmax distributions
on the neighbors of each poisoned node.

Both models are evaluated on the same poisoned graph so the probability
deltas isolate the parameter change.  A same-class neighbor certifies the
unlearning when its probability of the shared class strictly drops; a
different-class neighbor certifies it when its own-class probability did not
drop or the poisoned class's probability did.  A neighbor whose relevant
probabilities did not move at all certifies nothing, so identical models
always yield zero effectiveness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gcn import GcnModel, forward
from .graphs import Graph, normalize


@dataclass(eq=False)
class NeighborCheck:
    neighbor: int
    predicted: int        # neighbor's predicted class under the poisoned model
    same_class: bool
    effective: bool
    delta: np.ndarray     # full row of probability differences, poisoned - repaired


@dataclass
class NodeValidation:
    node: int
    predicted: int        # k1: poisoned node's predicted class
    effective: bool       # majority vote over this node's neighbor checks
    neighbors: list[NeighborCheck]


@dataclass
class ValidationReport:
    nodes: list[NodeValidation]
    effective_fraction: float
    num_classes: int


def validate(
    poisoned_model: GcnModel,
    repaired_model: GcnModel,
    g_poisoned: Graph,
    anomalous_nodes=(),
    anomalous_edges=(),
) -> ValidationReport:
    """Per-poisoned-node influence-reduction verdicts.

    Anomalous edges contribute both endpoints as poisoned nodes.  Predicted
    classes come from the poisoned model, so the criterion regime (same vs
    different class) is fixed before repair.
    """
    poisoned_set = {int(v) for v in anomalous_nodes}
    for u, v in anomalous_edges:
        poisoned_set.add(int(u))
        poisoned_set.add(int(v))
    if not poisoned_set:
        raise ValueError("validation requires at least one anomalous node or edge")
    for v in poisoned_set:
        if not 0 <= v < g_poisoned.n:
            raise ValueError(f"anomalous id {v} out of range [0, {g_poisoned.n})")

    a_hat = normalize(g_poisoned)
    _, _, probs_before = forward(poisoned_model, a_hat, g_poisoned.features)
    _, _, probs_after = forward(repaired_model, a_hat, g_poisoned.features)
    predictions = probs_before.argmax(axis=1)

    nodes = []
    for v_i in sorted(poisoned_set):
        k1 = int(predictions[v_i])
        checks = []
        for v_j in sorted(int(u) for u in g_poisoned.neighbors(v_i)):
            y_j = int(predictions[v_j])
            delta = probs_before[v_j] - probs_after[v_j]
            if y_j == k1:
                effective = probs_before[v_j, k1] > probs_after[v_j, k1]
            else:
                k2 = y_j
                if delta[k1] == 0.0 and delta[k2] == 0.0:
                    effective = False  # nothing moved: no influence was reduced
                else:
                    effective = (
                        probs_before[v_j, k2] <= probs_after[v_j, k2]
                        or probs_before[v_j, k1] > probs_after[v_j, k1]
                    )
            checks.append(
                NeighborCheck(
                    neighbor=v_j,
                    predicted=y_j,
                    same_class=y_j == k1,
                    effective=effective,
                    delta=delta,
                )
            )
        node_effective = sum(c.effective for c in checks) > len(checks) / 2
        nodes.append(
            NodeValidation(node=v_i, predicted=k1, effective=node_effective, neighbors=checks)
        )

    fraction = float(np.mean([node.effective for node in nodes]))
    return ValidationReport(
        nodes=nodes, effective_fraction=fraction, num_classes=g_poisoned.num_classes
    )


@dataclass(eq=False)
class HeatmapTable:
    """Probability-delta table: one row per (poisoned node, neighbor) pair,
    one column per class."""

    poisoned: np.ndarray   # row's poisoned node id
    neighbors: np.ndarray  # row's neighbor id
    deltas: np.ndarray     # (rows, num_classes)


def influence_heatmap(report: ValidationReport) -> HeatmapTable:
    """Flatten a validation report into a rectangular delta table, ordered by
    (poisoned id, neighbor id).  Rows are differences of two probability
    distributions, so each row sums to ~0."""
    poisoned, neighbors, rows = [], [], []
    for node in report.nodes:
        for check in node.neighbors:
            poisoned.append(node.node)
            neighbors.append(check.neighbor)
            rows.append(check.delta)
    deltas = np.array(rows) if rows else np.zeros((0, report.num_classes))
    return HeatmapTable(
        poisoned=np.array(poisoned, dtype=np.int64),
        neighbors=np.array(neighbors, dtype=np.int64),
        deltas=deltas.reshape(len(rows), report.num_classes),
    )


def heatmap_to_text(table: HeatmapTable) -> str:
    """Tab-separated export of the delta table for external plotting."""
    c = table.deltas.shape[1]
    lines = ["\t".join(["poisoned", "neighbor"] + [f"class_{k}" for k in range(c)])]
    for i in range(len(table.poisoned)):
        cells = [str(int(table.poisoned[i])), str(int(table.neighbors[i]))]
        cells += [repr(float(x)) for x in table.deltas[i]]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
