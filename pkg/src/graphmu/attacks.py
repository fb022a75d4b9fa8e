"""Seeded poisoning generators with exact ground-truth records.

Three perturbation channels are supported — node injection, feature-bit
flips, and cross-class edge additions — plus an even mixed split.  Every
generator is a pure function of (graph, spec): the clean graph is never
mutated, and the returned record describes the perturbation exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graphs import Graph, adjacency_from_edges

ATTACK_KINDS = ("node_injection", "feature_modification", "structure_perturbation", "mixed")
TARGETINGS = ("random", "high-degree", "cross-class")


@dataclass
class PerturbationRecord:
    """Ground-truth ledger of one poisoning run."""

    injected_nodes: list[int] = field(default_factory=list)
    feature_modified: dict[int, list[int]] = field(default_factory=dict)
    added_edges: list[tuple[int, int]] = field(default_factory=list)
    removed_edges: list[tuple[int, int]] = field(default_factory=list)
    budget_used: int = 0

    def is_empty(self) -> bool:
        return not (
            self.injected_nodes or self.feature_modified
            or self.added_edges or self.removed_edges
        )

    def anomalous_nodes(self) -> list[int]:
        return sorted(set(self.injected_nodes) | set(self.feature_modified))


@dataclass
class AttackSpec:
    kind: str
    budget: int
    targeting: str = "random"
    seed: int = 0
    inject_count: int | None = None  # injected node count k; default budget // 5

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.targeting not in TARGETINGS:
            raise ValueError(f"unknown targeting {self.targeting!r}")
        if self.budget < 0:
            raise ValueError("budget must be >= 0")


def _pick(rng: np.random.Generator, candidates: np.ndarray, count: int,
          targeting: str, degrees: np.ndarray) -> np.ndarray:
    """Choose ``count`` distinct nodes from candidates under a targeting policy."""
    if targeting == "high-degree":
        order = np.lexsort((candidates, -degrees[candidates]))
        return candidates[order[:count]]
    return rng.choice(candidates, size=count, replace=False)


def _poison_injection(g: Graph, spec: AttackSpec, rng: np.random.Generator):
    k = spec.inject_count if spec.inject_count is not None else max(1, spec.budget // 5)
    if k < 1:
        raise ValueError("node injection needs at least one node")
    if spec.budget < k:
        raise ValueError(f"budget {spec.budget} cannot wire {k} injected nodes")
    degrees = np.asarray(g.adjacency.sum(axis=1)).ravel().astype(np.int64)
    per_node = [spec.budget // k + (1 if i < spec.budget % k else 0) for i in range(k)]

    new_edges: list[tuple[int, int]] = []
    new_features = []
    new_labels = []
    for i in range(k):
        source = int(rng.integers(g.n))
        label = int(g.labels[source])
        # wiring prefers cross-class training nodes: poisoning works through
        # the training signal, so that is where the budget hurts most
        candidates = np.where((g.labels != label) & g.train_mask)[0]
        if candidates.size < per_node[i]:
            candidates = np.where(g.labels != label)[0]
        if candidates.size < per_node[i]:
            raise ValueError("not enough cross-class targets for injection wiring")
        targets = _pick(rng, candidates, per_node[i], spec.targeting, degrees)
        new_id = g.n + i
        new_edges += [(int(t), new_id) for t in targets]
        new_features.append(g.features[source].copy())
        new_labels.append(label)

    n = g.n + k
    edges = g.edge_set() + [(min(u, v), max(u, v)) for u, v in new_edges]
    poisoned = Graph(
        adjacency=adjacency_from_edges(n, edges),
        features=np.vstack([g.features, np.array(new_features)]),
        labels=np.concatenate([g.labels, np.array(new_labels, dtype=np.int64)]),
        train_mask=np.concatenate([g.train_mask, np.zeros(k, dtype=bool)]),
        val_mask=np.concatenate([g.val_mask, np.zeros(k, dtype=bool)]),
        test_mask=np.concatenate([g.test_mask, np.zeros(k, dtype=bool)]),
        num_classes=g.num_classes,
        node_ids=g.node_ids + tuple(f"injected_{i}" for i in range(k)),
    )
    record = PerturbationRecord(
        injected_nodes=list(range(g.n, g.n + k)),
        budget_used=len(new_edges),
    )
    return poisoned, record


def _flip_plan(g: Graph, victims: np.ndarray, budget: int) -> dict[int, list[int]]:
    """Distribute ``budget`` bit flips over the victims, preferring bits
    common in other classes that the victim does not carry."""
    per_victim = [budget // len(victims) + (1 if i < budget % len(victims) else 0)
                  for i in range(len(victims))]
    class_freq = np.zeros((g.num_classes, g.d))
    for c in range(g.num_classes):
        members = g.labels == c
        if members.any():
            class_freq[c] = g.features[members].mean(axis=0)
    plan: dict[int, list[int]] = {}
    for v, quota in zip(victims, per_victim):
        if quota == 0:
            continue
        label = int(g.labels[v])
        other = np.delete(np.arange(g.num_classes), label)
        attract = class_freq[other].mean(axis=0)
        row = g.features[v]
        # zero bits ranked by how common they are elsewhere; one bits are a
        # fallback ranked by how distinctive they are for the victim's class
        zero_bits = np.where(row == 0)[0]
        one_bits = np.where(row != 0)[0]
        zero_order = zero_bits[np.lexsort((zero_bits, -attract[zero_bits]))]
        one_order = one_bits[np.lexsort((one_bits, attract[one_bits]))]
        chosen = list(zero_order[:quota])
        if len(chosen) < quota:
            chosen += list(one_order[:quota - len(chosen)])
        plan[int(v)] = sorted(int(j) for j in chosen)
    return plan


def _poison_features(g: Graph, spec: AttackSpec, rng: np.random.Generator, budget: int):
    train_nodes = np.where(g.train_mask)[0]
    pool = train_nodes if train_nodes.size else np.arange(g.n)
    victims_wanted = max(1, -(-budget // 3))  # concentrate ~3 flips per victim
    count = min(victims_wanted, pool.size)
    degrees = np.asarray(g.adjacency.sum(axis=1)).ravel().astype(np.int64)
    victims = np.sort(_pick(rng, pool, count, spec.targeting, degrees))

    plan = _flip_plan(g, victims, budget)
    features = np.array(g.features, copy=True)
    for v, bits in plan.items():
        features[v, bits] = 1.0 - features[v, bits]
    poisoned = g.replace(features=features)
    record = PerturbationRecord(
        feature_modified=plan,
        budget_used=sum(len(bits) for bits in plan.values()),
    )
    return poisoned, record


def _poison_structure(g: Graph, spec: AttackSpec, rng: np.random.Generator, budget: int):
    existing = set(g.edge_set())
    labels = g.labels
    candidates = []
    fallback = []
    iu, ju = np.triu_indices(g.n, k=1)
    cross = labels[iu] != labels[ju]
    for u, v in zip(iu[cross], ju[cross]):
        u, v = int(u), int(v)
        if (u, v) in existing:
            continue
        # pairs touching a training node corrupt the learned weights; keep
        # the rest as a fallback when the budget exceeds them
        if g.train_mask[u] or g.train_mask[v]:
            candidates.append((u, v))
        else:
            fallback.append((u, v))
    if len(candidates) < budget:
        candidates += fallback
    if len(candidates) < budget:
        raise ValueError(
            f"budget {budget} exceeds the {len(candidates)} available cross-class non-edges"
        )
    candidates = np.array(candidates, dtype=np.int64)
    if spec.targeting == "high-degree":
        degrees = np.asarray(g.adjacency.sum(axis=1)).ravel()
        weight = degrees[candidates[:, 0]] + degrees[candidates[:, 1]]
        order = np.lexsort((candidates[:, 1], candidates[:, 0], -weight))
        chosen = candidates[order[:budget]]
    else:
        idx = rng.choice(len(candidates), size=budget, replace=False)
        chosen = candidates[idx]
    added = sorted((int(u), int(v)) for u, v in chosen)

    poisoned = g.replace(adjacency=adjacency_from_edges(g.n, g.edge_set() + added))
    record = PerturbationRecord(added_edges=added, budget_used=len(added))
    return poisoned, record


def poison(g: Graph, spec: AttackSpec) -> tuple[Graph, PerturbationRecord]:
    """Apply the attack described by ``spec``; returns the poisoned graph and
    the exact ground-truth record.  Deterministic per seed.

    node_injection adds k new nodes (features copied from a random node of a
    different class) wired to cross-class targets; feature_modification flips
    budget bits concentrated on training victims, preferring bits common in
    other classes; structure_perturbation adds cross-class edges; mixed splits
    the budget evenly between flips and edge additions.
    """
    if spec.budget == 0:
        return g, PerturbationRecord()
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "node_injection":
        return _poison_injection(g, spec, rng)
    if spec.kind == "feature_modification":
        return _poison_features(g, spec, rng, spec.budget)
    if spec.kind == "structure_perturbation":
        return _poison_structure(g, spec, rng, spec.budget)

    # mixed: feature flips take budget // 2, edge additions take the rest
    feat_budget = spec.budget // 2
    edge_budget = spec.budget - feat_budget
    poisoned, feat_record = _poison_features(g, spec, rng, feat_budget)
    poisoned, edge_record = _poison_structure(poisoned, spec, rng, edge_budget)
    record = PerturbationRecord(
        feature_modified=feat_record.feature_modified,
        added_edges=edge_record.added_edges,
        budget_used=feat_record.budget_used + edge_record.budget_used,
    )
    return poisoned, record


def unpoison(g_poisoned: Graph, record: PerturbationRecord) -> Graph:
    """Invert a recorded perturbation, recovering the clean graph exactly."""
    injected = set(record.injected_nodes)
    keep = np.array([v for v in range(g_poisoned.n) if v not in injected], dtype=np.int64)
    if injected and keep.size and keep.max() >= g_poisoned.n - len(injected):
        raise ValueError("injected node ids must be the trailing ids of the poisoned graph")
    n = keep.size

    features = np.array(g_poisoned.features[keep], copy=True)
    for v, bits in record.feature_modified.items():
        features[v, bits] = 1.0 - features[v, bits]

    added = {(min(u, v), max(u, v)) for u, v in record.added_edges}
    edges = [e for e in g_poisoned.edge_set()
             if e not in added and e[0] not in injected and e[1] not in injected]
    edges += [(min(u, v), max(u, v)) for u, v in record.removed_edges]

    return Graph(
        adjacency=adjacency_from_edges(n, edges),
        features=features,
        labels=g_poisoned.labels[keep],
        train_mask=g_poisoned.train_mask[keep],
        val_mask=g_poisoned.val_mask[keep],
        test_mask=g_poisoned.test_mask[keep],
        num_classes=g_poisoned.num_classes,
        node_ids=tuple(g_poisoned.node_ids[int(v)] for v in keep),
    )


class BudgetCheck:
    """Truthy verification result carrying a diff report on failure."""

    def __init__(self, ok: bool, problems: list[str]):
        self.ok = ok
        self.problems = problems

    def __bool__(self) -> bool:
        return self.ok


def verify_budget(clean: Graph, poisoned: Graph, record: PerturbationRecord,
                  budget: int) -> BudgetCheck:
    """Recount the perturbation from the raw matrices over the shared id space
    and check the budget bound plus agreement with the record."""
    problems: list[str] = []
    n = clean.n

    clean_edges = set(clean.edge_set())
    poisoned_edges = set(poisoned.edge_set())
    shared_poisoned = {e for e in poisoned_edges if e[0] < n and e[1] < n}
    actual_added = sorted(shared_poisoned - clean_edges)
    actual_removed = sorted(clean_edges - shared_poisoned)

    diff = clean.features != poisoned.features[:n]
    actual_flips = {int(v): sorted(int(j) for j in np.where(diff[v])[0])
                    for v in np.where(diff.any(axis=1))[0]}

    # undirected edge modifications count once toward the budget
    structural = len(actual_added) + len(actual_removed)
    feature_changes = int(diff.sum())
    if structural + feature_changes > budget:
        problems.append(
            f"shared-space perturbation count {structural + feature_changes} exceeds budget {budget}"
        )

    if sorted(set(record.added_edges)) != actual_added:
        for e in sorted(set(record.added_edges) - set(actual_added)):
            problems.append(f"recorded added edge {e} not present in the poisoned graph")
        for e in sorted(set(actual_added) - set(record.added_edges)):
            problems.append(f"poisoned graph adds edge {e} missing from the record")
    if sorted(set(record.removed_edges)) != actual_removed:
        problems.append("removed-edge record does not match the graphs")
    if {v: sorted(b) for v, b in record.feature_modified.items()} != actual_flips:
        problems.append("feature-flip record does not match the feature matrices")

    expected_injected = list(range(n, poisoned.n))
    if sorted(record.injected_nodes) != expected_injected:
        problems.append(
            f"record lists injected nodes {sorted(record.injected_nodes)}, "
            f"graphs imply {expected_injected}"
        )
    injection_edges = sum(
        1 for e in poisoned_edges if e[0] >= n or e[1] >= n
    )

    recount = injection_edges + feature_changes + len(actual_added) + len(actual_removed)
    if recount != record.budget_used:
        problems.append(f"recounted budget {recount} != recorded budget_used {record.budget_used}")
    if record.budget_used > budget:
        problems.append(f"recorded budget_used {record.budget_used} exceeds budget {budget}")

    return BudgetCheck(not problems, problems)
