"""Portable on-disk snapshot format for graphs, models, and reports.

Byte layout (everything little-endian):

    file   := magic | version | kind | body
    magic  := 8 bytes  b"GMUSNAP\\0"
    version:= u32     (currently 1)
    kind   := u32     1 graph, 2 model, 3 perturbation record,
                      4 detection report, 5 fine-tuned subgraph,
                      6 validation report
    string := u32 byte length | that many UTF-8 bytes
    u64/i64 are 8-byte integers, f64 is IEEE-754 binary64.

    graph body:
        n u64 | d u64 | num_classes u64 | nnz u64
        indptr   (n+1) x u64           adjacency in CSR form
        indices  nnz x u64
        features n*d x f64, row-major
        labels   n x i64
        train/val/test masks, each n x u8
        node_ids n x string

    model body:
        d u64 | h u64 | c u64
        w0 d*h x f64, row-major | w1 h*c x f64, row-major

    record body:
        injected: u64 count | count x u64
        modified: u64 count | per entry: node u64, k u64, k x u64 indices
        added edges:   u64 count | per edge: u u64, v u64
        removed edges: u64 count | per edge: u u64, v u64
        budget_used u64

    detection report body:
        kind string
        node_scores: u64 count | per entry: node u64, score f64
        edge_scores: u64 count | per entry: u u64, v u64, score f64
        selected_nodes: u64 count | count x u64
        selected_edges: u64 count | per edge: u u64, v u64
        thresholds: u64 count | per entry: name string, value f64

    subgraph body:
        graph body | node_map: u64 count | count x u64 | provenance string (JSON)

    validation report body:
        num_classes u64 | effective_fraction f64 | u64 node count
        per node: id u64, predicted u64, effective u8, u64 neighbor count
          per neighbor: id u64, predicted u64, same_class u8, effective u8,
                        num_classes x f64 probability deltas
"""

from __future__ import annotations

import json
import struct
from io import BytesIO

import numpy as np
import scipy.sparse as sp

MAGIC = b"GMUSNAP\0"
VERSION = 1

KIND_GRAPH = 1
KIND_MODEL = 2
KIND_RECORD = 3
KIND_REPORT = 4
KIND_SUBGRAPH = 5
KIND_VALIDATION = 6


def _w_u32(fh, x):
    fh.write(struct.pack("<I", x))


def _w_u64(fh, x):
    fh.write(struct.pack("<Q", x))


def _w_f64(fh, x):
    fh.write(struct.pack("<d", x))


def _w_str(fh, s: str):
    raw = s.encode("utf-8")
    _w_u32(fh, len(raw))
    fh.write(raw)


def _w_array(fh, a: np.ndarray, dtype: str):
    fh.write(np.ascontiguousarray(a, dtype=dtype).tobytes())


def _r_u32(fh) -> int:
    return struct.unpack("<I", fh.read(4))[0]


def _r_u64(fh) -> int:
    return struct.unpack("<Q", fh.read(8))[0]


def _r_f64(fh) -> float:
    return struct.unpack("<d", fh.read(8))[0]


def _r_str(fh) -> str:
    return fh.read(_r_u32(fh)).decode("utf-8")


def _r_array(fh, count: int, dtype: str) -> np.ndarray:
    return np.frombuffer(fh.read(count * np.dtype(dtype).itemsize), dtype=dtype).copy()


def _write_graph_body(fh, g):
    adj = g.adjacency
    _w_u64(fh, g.n)
    _w_u64(fh, g.d)
    _w_u64(fh, g.num_classes)
    _w_u64(fh, adj.nnz)
    _w_array(fh, adj.indptr, "<u8")
    _w_array(fh, adj.indices, "<u8")
    _w_array(fh, g.features, "<f8")
    _w_array(fh, g.labels, "<i8")
    for mask in (g.train_mask, g.val_mask, g.test_mask):
        _w_array(fh, mask, "<u1")
    for node_id in g.node_ids:
        _w_str(fh, node_id)


def _read_graph_body(fh):
    from .graphs import Graph

    n = _r_u64(fh)
    d = _r_u64(fh)
    c = _r_u64(fh)
    nnz = _r_u64(fh)
    indptr = _r_array(fh, n + 1, "<u8").astype(np.int64)
    indices = _r_array(fh, nnz, "<u8").astype(np.int64)
    features = _r_array(fh, n * d, "<f8").reshape(n, d)
    labels = _r_array(fh, n, "<i8")
    masks = [_r_array(fh, n, "<u1").astype(bool) for _ in range(3)]
    node_ids = tuple(_r_str(fh) for _ in range(n))
    adj = sp.csr_matrix((np.ones(nnz, dtype=np.float64), indices, indptr), shape=(n, n))
    return Graph(
        adjacency=adj,
        features=features,
        labels=labels,
        train_mask=masks[0],
        val_mask=masks[1],
        test_mask=masks[2],
        num_classes=c,
        node_ids=node_ids,
    )


def _write_model_body(fh, model):
    d, h = model.w0.shape
    c = model.w1.shape[1]
    _w_u64(fh, d)
    _w_u64(fh, h)
    _w_u64(fh, c)
    _w_array(fh, model.w0, "<f8")
    _w_array(fh, model.w1, "<f8")


def _read_model_body(fh):
    from .gcn import GcnModel

    d = _r_u64(fh)
    h = _r_u64(fh)
    c = _r_u64(fh)
    w0 = _r_array(fh, d * h, "<f8").reshape(d, h)
    w1 = _r_array(fh, h * c, "<f8").reshape(h, c)
    return GcnModel(w0=w0, w1=w1)


def _write_record_body(fh, record):
    _w_u64(fh, len(record.injected_nodes))
    for v in record.injected_nodes:
        _w_u64(fh, v)
    _w_u64(fh, len(record.feature_modified))
    for v in sorted(record.feature_modified):
        bits = record.feature_modified[v]
        _w_u64(fh, v)
        _w_u64(fh, len(bits))
        for j in bits:
            _w_u64(fh, j)
    for edges in (record.added_edges, record.removed_edges):
        _w_u64(fh, len(edges))
        for u, v in edges:
            _w_u64(fh, u)
            _w_u64(fh, v)
    _w_u64(fh, record.budget_used)


def _read_record_body(fh):
    from .attacks import PerturbationRecord

    injected = [_r_u64(fh) for _ in range(_r_u64(fh))]
    modified = {}
    for _ in range(_r_u64(fh)):
        v = _r_u64(fh)
        modified[v] = [_r_u64(fh) for _ in range(_r_u64(fh))]
    added = [(_r_u64(fh), _r_u64(fh)) for _ in range(_r_u64(fh))]
    removed = [(_r_u64(fh), _r_u64(fh)) for _ in range(_r_u64(fh))]
    budget = _r_u64(fh)
    return PerturbationRecord(
        injected_nodes=injected,
        feature_modified=modified,
        added_edges=added,
        removed_edges=removed,
        budget_used=budget,
    )


def _write_report_body(fh, report):
    _w_str(fh, report.kind)
    _w_u64(fh, len(report.node_scores))
    for v in sorted(report.node_scores):
        _w_u64(fh, v)
        _w_f64(fh, report.node_scores[v])
    _w_u64(fh, len(report.edge_scores))
    for (u, v) in sorted(report.edge_scores):
        _w_u64(fh, u)
        _w_u64(fh, v)
        _w_f64(fh, report.edge_scores[(u, v)])
    _w_u64(fh, len(report.selected_nodes))
    for v in report.selected_nodes:
        _w_u64(fh, v)
    _w_u64(fh, len(report.selected_edges))
    for u, v in report.selected_edges:
        _w_u64(fh, u)
        _w_u64(fh, v)
    _w_u64(fh, len(report.thresholds))
    for name in sorted(report.thresholds):
        _w_str(fh, name)
        _w_f64(fh, report.thresholds[name])


def _read_report_body(fh):
    from .detectors import DetectionReport

    kind = _r_str(fh)
    node_scores = {}
    for _ in range(_r_u64(fh)):
        v = _r_u64(fh)
        node_scores[v] = _r_f64(fh)
    edge_scores = {}
    for _ in range(_r_u64(fh)):
        u = _r_u64(fh)
        v = _r_u64(fh)
        edge_scores[(u, v)] = _r_f64(fh)
    selected_nodes = [_r_u64(fh) for _ in range(_r_u64(fh))]
    selected_edges = [(_r_u64(fh), _r_u64(fh)) for _ in range(_r_u64(fh))]
    thresholds = {}
    for _ in range(_r_u64(fh)):
        name = _r_str(fh)
        thresholds[name] = _r_f64(fh)
    return DetectionReport(
        kind=kind,
        node_scores=node_scores,
        edge_scores=edge_scores,
        selected_nodes=selected_nodes,
        selected_edges=selected_edges,
        thresholds=thresholds,
    )


def _write_subgraph_body(fh, sub):
    _write_graph_body(fh, sub.graph)
    _w_u64(fh, len(sub.node_map))
    for v in sub.node_map:
        _w_u64(fh, int(v))
    _w_str(fh, json.dumps(sub.provenance, sort_keys=True))


def _read_subgraph_body(fh):
    from .subgraphs import FineTunedSubgraph

    graph = _read_graph_body(fh)
    node_map = np.array([_r_u64(fh) for _ in range(_r_u64(fh))], dtype=np.int64)
    provenance = json.loads(_r_str(fh))
    return FineTunedSubgraph(graph=graph, node_map=node_map, provenance=provenance)


def _write_validation_body(fh, report):
    _w_u64(fh, report.num_classes)
    _w_f64(fh, report.effective_fraction)
    _w_u64(fh, len(report.nodes))
    for node in report.nodes:
        _w_u64(fh, node.node)
        _w_u64(fh, node.predicted)
        fh.write(struct.pack("<B", int(node.effective)))
        _w_u64(fh, len(node.neighbors))
        for nb in node.neighbors:
            _w_u64(fh, nb.neighbor)
            _w_u64(fh, nb.predicted)
            fh.write(struct.pack("<B", int(nb.same_class)))
            fh.write(struct.pack("<B", int(nb.effective)))
            _w_array(fh, nb.delta, "<f8")


def _read_validation_body(fh):
    from .validation import NeighborCheck, NodeValidation, ValidationReport

    c = _r_u64(fh)
    fraction = _r_f64(fh)
    nodes = []
    for _ in range(_r_u64(fh)):
        node = _r_u64(fh)
        predicted = _r_u64(fh)
        effective = bool(fh.read(1)[0])
        neighbors = []
        for _ in range(_r_u64(fh)):
            nb = _r_u64(fh)
            nb_pred = _r_u64(fh)
            same = bool(fh.read(1)[0])
            nb_eff = bool(fh.read(1)[0])
            delta = _r_array(fh, c, "<f8")
            neighbors.append(
                NeighborCheck(
                    neighbor=nb, predicted=nb_pred, same_class=same,
                    effective=nb_eff, delta=delta,
                )
            )
        nodes.append(
            NodeValidation(node=node, predicted=predicted, effective=effective,
                           neighbors=neighbors)
        )
    return ValidationReport(nodes=nodes, effective_fraction=fraction, num_classes=c)


_WRITERS = {
    KIND_GRAPH: _write_graph_body,
    KIND_MODEL: _write_model_body,
    KIND_RECORD: _write_record_body,
    KIND_REPORT: _write_report_body,
    KIND_SUBGRAPH: _write_subgraph_body,
    KIND_VALIDATION: _write_validation_body,
}

_READERS = {
    KIND_GRAPH: _read_graph_body,
    KIND_MODEL: _read_model_body,
    KIND_RECORD: _read_record_body,
    KIND_REPORT: _read_report_body,
    KIND_SUBGRAPH: _read_subgraph_body,
    KIND_VALIDATION: _read_validation_body,
}


def _kind_of(obj) -> int:
    from .attacks import PerturbationRecord
    from .detectors import DetectionReport
    from .gcn import GcnModel
    from .graphs import Graph
    from .subgraphs import FineTunedSubgraph
    from .validation import ValidationReport

    for cls, kind in (
        (Graph, KIND_GRAPH),
        (GcnModel, KIND_MODEL),
        (PerturbationRecord, KIND_RECORD),
        (DetectionReport, KIND_REPORT),
        (FineTunedSubgraph, KIND_SUBGRAPH),
        (ValidationReport, KIND_VALIDATION),
    ):
        if isinstance(obj, cls):
            return kind
    raise TypeError(f"no snapshot encoding for {type(obj).__name__}")


def dump_bytes(obj) -> bytes:
    kind = _kind_of(obj)
    fh = BytesIO()
    fh.write(MAGIC)
    _w_u32(fh, VERSION)
    _w_u32(fh, kind)
    _WRITERS[kind](fh, obj)
    return fh.getvalue()


def save_snapshot(path, obj) -> None:
    with open(path, "wb") as fh:
        fh.write(dump_bytes(obj))


def load_snapshot(path):
    with open(path, "rb") as fh:
        data = fh.read()
    fh = BytesIO(data)
    magic = fh.read(8)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a snapshot file (bad magic)")
    version = _r_u32(fh)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    kind = _r_u32(fh)
    if kind not in _READERS:
        raise ValueError(f"{path}: unknown snapshot kind {kind}")
    return _READERS[kind](fh)
