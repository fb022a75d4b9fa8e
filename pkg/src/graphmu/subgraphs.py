"""Construction of fine-tuned subgraphs from detected or known perturbations.

Each anomaly contributes the K-hop ball around it; injected nodes are removed
from the result, anomalous edges are dropped even when both endpoints stay,
and feature-modified nodes are kept with their feature row replaced by the
mean of their 1-hop neighbors.  The union of overlapping neighborhoods is
taken on original node ids, then surviving edges are induced.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .attacks import PerturbationRecord
from .detectors import DetectionReport, select_by_ratio
from .graphs import Graph, adjacency_from_edges, k_hop_neighbors


class Scenario(Enum):
    K_UNLEARN = "K"    # complete knowledge: ground-truth record
    KN_UNLEARN = "KN"  # known ratios: detector reports capped by ratio
    UK_UNLEARN = "UK"  # no knowledge: full detector reports

    @classmethod
    def parse(cls, text: str) -> "Scenario":
        for member in cls:
            if text.upper() in (member.value, member.name):
                return member
        raise ValueError(f"unknown scenario {text!r}")


@dataclass(frozen=True, eq=False)
class FineTunedSubgraph:
    """Induced repair subgraph plus the id remapping and build provenance."""

    graph: Graph
    node_map: np.ndarray  # subgraph index -> original node id
    provenance: dict

    @property
    def original_ids(self) -> list[int]:
        return [int(v) for v in self.node_map]


def _assemble(
    g: Graph,
    keep: set[int],
    excluded_nodes: set[int],
    excluded_edges: set[tuple[int, int]],
    replacements: dict[int, np.ndarray],
    provenance: dict,
) -> FineTunedSubgraph:
    keep = set(keep) - set(excluded_nodes)
    if not keep:
        raise ValueError("subgraph empty")
    node_map = np.array(sorted(keep), dtype=np.int64)
    inverse = {int(v): i for i, v in enumerate(node_map)}

    edges = []
    for u, v in g.edge_set():
        if u in inverse and v in inverse and (u, v) not in excluded_edges:
            edges.append((inverse[u], inverse[v]))

    features = np.array(g.features[node_map], copy=True)
    for v, row in replacements.items():
        if int(v) in inverse:
            features[inverse[int(v)]] = row

    train = g.train_mask[node_map].copy()
    if not train.any():
        # Fine-tuning needs labeled nodes; fall back to treating every
        # subgraph node as training data with its dataset label.
        train = np.ones(len(node_map), dtype=bool)
        val = np.zeros(len(node_map), dtype=bool)
        test = np.zeros(len(node_map), dtype=bool)
        provenance = {**provenance, "train_mask_fallback": True}
    else:
        val = g.val_mask[node_map].copy()
        test = g.test_mask[node_map].copy()

    graph = Graph(
        adjacency=adjacency_from_edges(len(node_map), edges),
        features=features,
        labels=g.labels[node_map],
        train_mask=train,
        val_mask=val,
        test_mask=test,
        num_classes=g.num_classes,
        node_ids=tuple(g.node_ids[int(v)] for v in node_map),
    )
    return FineTunedSubgraph(graph=graph, node_map=node_map, provenance=provenance)


def _ball_union(g: Graph, centers, hops: int) -> set[int]:
    out: set[int] = set()
    for v in centers:
        out |= k_hop_neighbors(g, int(v), hops)
    return out


def _neighbor_average(g: Graph, nodes) -> tuple[dict[int, np.ndarray], list[int]]:
    replacements: dict[int, np.ndarray] = {}
    warnings: list[int] = []
    for v in nodes:
        nbrs = g.neighbors(int(v))
        if nbrs.size == 0:
            replacements[int(v)] = np.zeros(g.d)
            warnings.append(int(v))
        else:
            replacements[int(v)] = g.features[nbrs].mean(axis=0)
    return replacements, warnings


def build_node_injection(g: Graph, anomalous_nodes, hops: int = 2) -> FineTunedSubgraph:
    """K-hop balls around each anomalous node, with the anomalous nodes
    themselves excluded."""
    nodes = _validated(g, anomalous_nodes)
    keep = _ball_union(g, nodes, hops)
    return _assemble(
        g,
        keep=keep,
        excluded_nodes=set(nodes),
        excluded_edges=set(),
        replacements={},
        provenance={"builder": "node_injection", "anomalous_nodes": nodes, "hops": hops},
    )


def build_feature_modification(g: Graph, anomalous_nodes, hops: int = 2) -> FineTunedSubgraph:
    """K-hop balls around each anomalous node; the nodes stay (removal would
    break the surrounding structure) but their feature rows are replaced by
    the mean of their 1-hop neighbors."""
    nodes = _validated(g, anomalous_nodes)
    keep = _ball_union(g, nodes, hops) | set(nodes)
    replacements, warnings = _neighbor_average(g, nodes)
    provenance = {"builder": "feature_modification", "anomalous_nodes": nodes, "hops": hops}
    if warnings:
        provenance["zeroed_feature_nodes"] = warnings
    return _assemble(
        g,
        keep=keep,
        excluded_nodes=set(),
        excluded_edges=set(),
        replacements=replacements,
        provenance=provenance,
    )


def build_structure_perturbation(g: Graph, anomalous_edges, hops: int = 2) -> FineTunedSubgraph:
    """K-hop balls around both endpoints of each anomalous edge, with every
    anomalous edge excluded from the induced adjacency."""
    edges = sorted({(min(u, v), max(u, v)) for u, v in anomalous_edges})
    if not edges:
        raise ValueError("no anomalous edges supplied")
    present = set(g.edge_set())
    for e in edges:
        if e not in present:
            raise ValueError(f"anomalous edge {e} is not an edge of the graph")
    keep = _ball_union(g, [u for e in edges for u in e], hops)
    return _assemble(
        g,
        keep=keep,
        excluded_nodes=set(),
        excluded_edges=set(edges),
        replacements={},
        provenance={"builder": "structure_perturbation",
                    "anomalous_edges": [list(e) for e in edges], "hops": hops},
    )


def _validated(g: Graph, anomalous_nodes) -> list[int]:
    nodes = sorted({int(v) for v in anomalous_nodes})
    if not nodes:
        raise ValueError("no anomalous nodes supplied")
    for v in nodes:
        if not 0 <= v < g.n:
            raise ValueError(f"anomalous node {v} out of range [0, {g.n})")
    return nodes


def _merge_parts(g: Graph, parts: list[dict], provenance: dict) -> FineTunedSubgraph:
    keep: set[int] = set()
    excluded_nodes: set[int] = set()
    excluded_edges: set[tuple[int, int]] = set()
    replacements: dict[int, np.ndarray] = {}
    for part in parts:
        keep |= part["keep"]
        excluded_nodes |= part["excluded_nodes"]
        excluded_edges |= part["excluded_edges"]
        replacements.update(part["replacements"])
    provenance = {
        **provenance,
        "injected_excluded": sorted(excluded_nodes),
        "feature_replaced": sorted(int(v) for v in replacements),
        "edges_excluded": [list(e) for e in sorted(excluded_edges)],
    }
    return _assemble(g, keep, excluded_nodes, excluded_edges, replacements, provenance)


def _record_parts(g: Graph, record: PerturbationRecord, hops: int) -> list[dict]:
    parts = []
    if record.injected_nodes:
        nodes = _validated(g, record.injected_nodes)
        parts.append({
            "keep": _ball_union(g, nodes, hops),
            "excluded_nodes": set(nodes),
            "excluded_edges": set(),
            "replacements": {},
        })
    if record.feature_modified:
        nodes = _validated(g, record.feature_modified.keys())
        replacements, _ = _neighbor_average(g, nodes)
        parts.append({
            "keep": _ball_union(g, nodes, hops) | set(nodes),
            "excluded_nodes": set(),
            "excluded_edges": set(),
            "replacements": replacements,
        })
    if record.added_edges:
        edges = {(min(u, v), max(u, v)) for u, v in record.added_edges}
        parts.append({
            "keep": _ball_union(g, [u for e in edges for u in e], hops),
            "excluded_nodes": set(),
            "excluded_edges": edges,
            "replacements": {},
        })
    return parts


_REPORT_RATIO_KEY = {"bwgnn": "zeta", "jaccard": "vartheta", "simrank": "kappa"}


def _report_parts(g: Graph, reports: list[DetectionReport], hops: int) -> list[dict]:
    parts = []
    for report in reports:
        if report.kind == "bwgnn":
            if report.selected_nodes:
                nodes = _validated(g, report.selected_nodes)
                parts.append({
                    "keep": _ball_union(g, nodes, hops),
                    "excluded_nodes": set(nodes),
                    "excluded_edges": set(),
                    "replacements": {},
                })
        elif report.kind == "jaccard":
            if report.selected_nodes:
                nodes = _validated(g, report.selected_nodes)
                replacements, _ = _neighbor_average(g, nodes)
                parts.append({
                    "keep": _ball_union(g, nodes, hops) | set(nodes),
                    "excluded_nodes": set(),
                    "excluded_edges": set(),
                    "replacements": replacements,
                })
        elif report.kind == "simrank":
            if report.selected_edges:
                edges = {(min(u, v), max(u, v)) for u, v in report.selected_edges}
                parts.append({
                    "keep": _ball_union(g, [u for e in edges for u in e], hops),
                    "excluded_nodes": set(),
                    "excluded_edges": edges,
                    "replacements": {},
                })
        else:
            raise ValueError(f"no subgraph rule for detector kind {report.kind!r}")
    return parts


def sanitize_graph(
    g: Graph,
    excluded_nodes=(),
    excluded_edges=(),
    replaced_nodes=(),
) -> Graph:
    """Apply the subgraph builder's exclusion and replacement rules to the
    whole graph: this is the deployment graph after repair.

    Known or detected injected nodes are removed, anomalous edges dropped,
    and feature-modified nodes get the neighbor-average replacement.  Masks
    and labels restrict to the surviving nodes.
    """
    excluded_nodes = {int(v) for v in excluded_nodes}
    excluded_edges = {(min(u, v), max(u, v)) for u, v in excluded_edges}
    keep = np.array([v for v in range(g.n) if v not in excluded_nodes], dtype=np.int64)
    if keep.size == 0:
        raise ValueError("sanitized graph would be empty")
    inverse = {int(v): i for i, v in enumerate(keep)}
    edges = [(inverse[u], inverse[v]) for u, v in g.edge_set()
             if u in inverse and v in inverse and (u, v) not in excluded_edges]
    replacements, _ = _neighbor_average(g, [v for v in replaced_nodes if int(v) in inverse])
    features = np.array(g.features[keep], copy=True)
    for v, row in replacements.items():
        features[inverse[int(v)]] = row
    return Graph(
        adjacency=adjacency_from_edges(keep.size, edges),
        features=features,
        labels=g.labels[keep],
        train_mask=g.train_mask[keep],
        val_mask=g.val_mask[keep],
        test_mask=g.test_mask[keep],
        num_classes=g.num_classes,
        node_ids=tuple(g.node_ids[int(v)] for v in keep),
    )


def build(
    g: Graph,
    scenario: Scenario,
    attack_kind: str,
    record: PerturbationRecord | None = None,
    reports: DetectionReport | list[DetectionReport] | None = None,
    ratios: dict[str, float] | float | None = None,
    hops: int = 2,
) -> FineTunedSubgraph:
    """Route the scenario inputs to the three builders and merge on ids.

    K_UNLEARN consumes the ground-truth record directly.  KN_UNLEARN caps
    each detector report by its perturbation ratio (zeta for nodes detected
    spectrally, vartheta for feature anomalies, kappa for edges) before
    building.  UK_UNLEARN uses the full detected sets.
    """
    if hops < 1:
        raise ValueError("hops must be >= 1")
    provenance = {"scenario": scenario.value, "attack_kind": attack_kind, "hops": hops}

    if scenario is Scenario.K_UNLEARN:
        if record is None:
            raise ValueError("K_UNLEARN requires the ground-truth record")
        if record.is_empty():
            raise ValueError("nothing to unlearn")
        parts = _record_parts(g, record, hops)
        return _merge_parts(g, parts, provenance)

    if reports is None:
        raise ValueError(f"{scenario.name} requires detector reports")
    report_list = [reports] if isinstance(reports, DetectionReport) else list(reports)

    if scenario is Scenario.KN_UNLEARN:
        if ratios is None:
            raise ValueError("KN_UNLEARN requires perturbation ratios")
        capped = []
        for report in report_list:
            key = _REPORT_RATIO_KEY.get(report.kind)
            ratio = ratios if isinstance(ratios, float) else ratios.get(key)
            if ratio is None:
                raise ValueError(f"no ratio supplied for detector kind {report.kind!r}")
            universe = g.num_edges if report.kind == "simrank" else g.n
            capped.append(select_by_ratio(report, ratio, universe))
        report_list = capped
        provenance["ratios"] = ratios if isinstance(ratios, dict) else {"all": ratios}

    parts = _report_parts(g, report_list, hops)
    if not parts:
        raise ValueError("nothing to unlearn: detectors selected no anomalies")
    return _merge_parts(g, parts, provenance)
