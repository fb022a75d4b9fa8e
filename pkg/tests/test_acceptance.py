"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest -v -s tests/test_acceptance.py`` to see the per-criterion
report.  Statistical criteria use the calibrated SBM fixture (c=3, n=150,
budget 5% of edges) over seeds 0..9; all expected margins were measured once
and frozen here.
"""

import itertools
import time

import numpy as np
import pytest

from graphmu.attacks import AttackSpec, poison
from graphmu.detectors import (
    beta_wavelet,
    build_filter_bank,
    bwgnn_score,
    simrank,
)
from graphmu.gcn import GcnModel, TrainConfig, backward, evaluate, forward, init_model, loss, train
from graphmu.graphs import Graph, adjacency_from_edges, generate_sbm, laplacian, normalize
from graphmu.pipeline import ExperimentConfig, run_pipeline
from graphmu.repair import RepairConfig, repair
from graphmu.subgraphs import Scenario, build, sanitize_graph

from conftest import SBM_FIXTURE, random_graph
from test_detectors import simrank_bruteforce
from test_validation import check_fixture

ALL_KINDS = ("node_injection", "feature_modification", "structure_perturbation", "mixed")

REPAIR_CONFIG = RepairConfig(rounds=5, learning_rate=0.3)


def report(criterion, detail):
    print(f"\n[acceptance] criterion {criterion}: PASS — {detail}")


def bare_graph(n, edges):
    return Graph(
        adjacency=adjacency_from_edges(n, edges),
        features=np.zeros((n, 1)),
        labels=np.zeros(n, dtype=np.int64),
        train_mask=np.ones(n, dtype=bool),
        val_mask=np.zeros(n, dtype=bool),
        test_mask=np.zeros(n, dtype=bool),
        num_classes=1,
    )


def attack_spec(kind, budget, seed):
    return AttackSpec(kind=kind, budget=budget, seed=seed,
                      inject_count=5 if kind == "node_injection" else None)


def repaired_system(g, kind, seed, scenario=Scenario.K_UNLEARN, detect_seed=None):
    """One fixture run: returns (clean acc, poisoned acc, repaired acc)."""
    tc = TrainConfig(seed=seed)
    clean_acc = evaluate(train(g, tc), g, g.test_mask).accuracy
    budget = max(1, round(0.05 * g.num_edges))
    poisoned, record = poison(g, attack_spec(kind, budget, seed))
    pm = train(poisoned, tc)
    poisoned_acc = evaluate(pm, poisoned, poisoned.test_mask).accuracy

    if scenario is Scenario.K_UNLEARN:
        sub = build(poisoned, scenario, kind, record=record)
        excluded = record.injected_nodes
        edges = record.added_edges
        replaced = sorted(record.feature_modified)
    else:
        bank = build_filter_bank(laplacian(poisoned), 2)
        rep = bwgnn_score(poisoned, bank, seed=detect_seed if detect_seed is not None else seed)
        ratios = None
        if scenario is Scenario.KN_UNLEARN:
            ratios = {"zeta": (len(record.injected_nodes) - 0.5) / poisoned.n}
        sub = build(poisoned, scenario, kind, reports=rep, ratios=ratios)
        excluded = sub.provenance["injected_excluded"]
        edges = [tuple(e) for e in sub.provenance["edges_excluded"]]
        replaced = sub.provenance["feature_replaced"]

    rm = repair(pm, sub, REPAIR_CONFIG)
    sanitized = sanitize_graph(poisoned, excluded, edges, replaced)
    repaired_acc = evaluate(rm, sanitized, sanitized.test_mask).accuracy
    return clean_acc, poisoned_acc, repaired_acc


def test_criterion_1_gradient_correctness():
    started = time.perf_counter()
    rng = np.random.default_rng(1)
    checked = 0
    for instance in range(20):
        n = int(rng.integers(4, 11))
        d = int(rng.integers(2, 9))
        c = int(rng.integers(2, 5))
        h = int(rng.integers(2, 6))
        g = random_graph(n, 0.4, seed=instance, d=d, num_classes=c)
        model = init_model(d, c, TrainConfig(seed=instance, hidden_dim=h))
        a_hat = normalize(g)
        analytic = backward(model, a_hat, g.features, g.labels, g.train_mask)

        def objective(m):
            _, _, probs = forward(m, a_hat, g.features)
            return loss(probs, g.labels, g.train_mask)

        eps = 1e-5
        for which, grad in zip(("w0", "w1"), analytic):
            w = getattr(model, which)
            numeric = np.zeros_like(w)
            for i in range(w.shape[0]):
                for j in range(w.shape[1]):
                    plus = GcnModel(model.w0.copy(), model.w1.copy())
                    minus = GcnModel(model.w0.copy(), model.w1.copy())
                    getattr(plus, which)[i, j] += eps
                    getattr(minus, which)[i, j] -= eps
                    numeric[i, j] = (objective(plus) - objective(minus)) / (2 * eps)
            rel = np.abs(grad - numeric) / np.maximum(np.abs(numeric), 1e-8)
            assert rel.max() < 1e-4, f"instance {instance} {which}: rel err {rel.max():.2e}"
        checked += 1
    elapsed = time.perf_counter() - started
    assert checked >= 20
    assert elapsed < 5.0, f"gradient check took {elapsed:.1f}s"
    report(1, f"{checked} random instances, finite-difference rel err < 1e-4, {elapsed:.1f}s")


def connected(n, edges):
    if n <= 1:
        return True
    adjacency = {v: [] for v in range(n)}
    for u, v in edges:
        adjacency[u].append(v)
        adjacency[v].append(u)
    seen = {0}
    stack = [0]
    while stack:
        for u in adjacency[stack.pop()]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return len(seen) == n


def test_criterion_2_simrank_oracle_equivalence():
    started = time.perf_counter()
    iterations = 3
    worst = 0.0
    count = 0
    for n in range(1, 7):
        pairs = list(itertools.combinations(range(n), 2))
        for bits in range(1 << len(pairs)):
            edges = [pairs[i] for i in range(len(pairs)) if bits >> i & 1]
            if not connected(n, edges):
                continue
            g = bare_graph(n, edges)
            fast = simrank(g, iterations=iterations, tol=0.0)
            slow = simrank_bruteforce(g, iterations=iterations)
            worst = max(worst, float(np.abs(fast - slow).max()))
            count += 1
    for seed in range(50):
        g = random_graph(8, 0.35, seed=seed)
        fast = simrank(g, iterations=iterations, tol=0.0)
        slow = simrank_bruteforce(g, iterations=iterations)
        worst = max(worst, float(np.abs(fast - slow).max()))
    elapsed = time.perf_counter() - started
    assert worst < 1e-12
    assert elapsed < 30.0, f"simrank oracle sweep took {elapsed:.1f}s"
    report(2, f"{count} connected graphs (n<=6) + 50 random 8-node graphs, "
              f"max |diff| {worst:.1e}, {elapsed:.1f}s")


def test_criterion_3_filter_bank_identities():
    g = random_graph(10, 0.3, seed=0)
    w00 = beta_wavelet(laplacian(g), 0, 0).toarray()
    assert np.array_equal(w00, np.eye(g.n) * 0.5)

    worst = 0.0
    for order in (1, 2, 3):
        for seed in range(10):
            graph = random_graph(12, 0.3, seed=seed)
            bank = build_filter_bank(laplacian(graph), order)
            ones = np.ones(graph.n)
            total = sum(w @ ones for w in bank.filters) * (2.0 / (order + 1))
            worst = max(worst, float(np.abs(total - ones).max()))
    assert worst < 1e-10
    report(3, f"W(0,0) = I/2 exact; binomial partition identity off by {worst:.1e} "
              "for orders 1..3 on 10 random graphs")


def test_criterion_4_subgraph_builder_oracle():
    rng = np.random.default_rng(4)
    checked = 0
    case = -1
    while checked < 100:
        case += 1
        assert case < 300, "too many infeasible random instances"
        kind = ALL_KINDS[case % 4]
        n = int(rng.integers(12, 51))
        g = random_graph(n, 0.15, seed=1000 + case, num_classes=3)
        if not g.train_mask.any() or g.num_edges < 8:
            g = random_graph(n, 0.3, seed=2000 + case, num_classes=3)
        budget = min(6, max(2, g.num_edges // 10))
        try:
            poisoned, record = poison(g, attack_spec(kind, budget, seed=case))
        except ValueError:
            continue  # infeasible tiny instance
        if record.is_empty():
            continue
        sub = build(poisoned, Scenario.K_UNLEARN, kind, record=record)

        kept = set(sub.original_ids)
        excluded_edges = {(min(u, v), max(u, v)) for u, v in record.added_edges}
        oracle = sorted(
            (u, v) for u, v in poisoned.edge_set()
            if u in kept and v in kept and (u, v) not in excluded_edges
        )
        node_map = sub.node_map
        got = sorted(
            (min(int(node_map[u]), int(node_map[v])), max(int(node_map[u]), int(node_map[v])))
            for u, v in sub.graph.edge_set()
        )
        assert got == oracle, f"case {case} ({kind}): induced adjacency mismatch"
        assert not (set(record.injected_nodes) & kept)
        for v in record.feature_modified:
            if v in kept:
                nbrs = poisoned.neighbors(v)
                expected = poisoned.features[nbrs].mean(axis=0) if nbrs.size else np.zeros(poisoned.d)
                assert np.array_equal(
                    sub.graph.features[sub.original_ids.index(v)], expected
                )
        checked += 1
    report(4, f"{checked} random instances (<=50 nodes, all attack kinds): exact match")


def test_criterion_5_repair_efficacy():
    started = time.perf_counter()
    lines = []
    for kind in ALL_KINDS:
        rows = np.array([
            repaired_system(generate_sbm(seed=seed, **SBM_FIXTURE), kind, seed)
            for seed in range(10)
        ])
        clean, poisoned, repaired = rows.mean(axis=0)
        gap = clean - poisoned
        assert repaired > poisoned, f"{kind}: repaired {repaired:.4f} <= poisoned {poisoned:.4f}"
        assert gap > 0, f"{kind}: attack did not degrade accuracy"
        recovery = (repaired - poisoned) / gap
        assert recovery >= 0.5, f"{kind}: recovered only {recovery:.0%} of the gap"
        lines.append(f"{kind} gap {gap:.3f} recovery {recovery:.0%}")
    elapsed = time.perf_counter() - started
    assert elapsed < 120.0, f"repair efficacy suite took {elapsed:.1f}s"
    report(5, "; ".join(lines) + f"; {elapsed:.1f}s")


def test_criterion_6_scenario_ordering():
    k_accs, kn_accs = [], []
    for seed in range(10):
        g = generate_sbm(seed=seed, **SBM_FIXTURE)
        k_accs.append(repaired_system(g, "node_injection", seed)[2])
        kn_accs.append(
            repaired_system(g, "node_injection", seed, scenario=Scenario.KN_UNLEARN)[2]
        )
    k_mean, kn_mean = float(np.mean(k_accs)), float(np.mean(kn_accs))
    diff = np.array(k_accs) - np.array(kn_accs)
    stderr = float(diff.std(ddof=1) / np.sqrt(len(diff)))
    if k_mean >= kn_mean:
        report(6, f"K {k_mean:.4f} >= KN {kn_mean:.4f} (paired SE {stderr:.4f})")
    else:
        assert kn_mean - k_mean <= stderr, (
            f"K {k_mean:.4f} < KN {kn_mean:.4f} by more than one SE ({stderr:.4f})"
        )
        report(6, f"waiver: K {k_mean:.4f} < KN {kn_mean:.4f} within one SE ({stderr:.4f})")


def test_criterion_7_timing_trend():
    g = generate_sbm(4, 250, 0.08, 0.01, 16, seed=1, noise=0.2)
    budget = max(1, round(0.05 * g.num_edges))
    poisoned, record = poison(g, attack_spec("node_injection", budget, seed=1))
    tc = TrainConfig(seed=1)
    pm = train(poisoned, tc)

    bank = build_filter_bank(laplacian(poisoned), 2)
    det = bwgnn_score(poisoned, bank, seed=1)
    subgraphs = {
        "K": build(poisoned, Scenario.K_UNLEARN, "node_injection", record=record),
        "KN": build(poisoned, Scenario.KN_UNLEARN, "node_injection", reports=det,
                    ratios={"zeta": (len(record.injected_nodes) - 0.5) / poisoned.n}),
        "UK": build(poisoned, Scenario.UK_UNLEARN, "node_injection", reports=det),
    }
    from graphmu.attacks import unpoison

    cleaned = unpoison(poisoned, record)
    lines = []
    for scenario, sub in subgraphs.items():
        repair_times, retrain_times = [], []
        for _ in range(5):
            start = time.perf_counter()
            repair(pm, sub, REPAIR_CONFIG)
            repair_times.append(time.perf_counter() - start)
            start = time.perf_counter()
            train(cleaned, tc)
            retrain_times.append(time.perf_counter() - start)
        med_repair = float(np.median(repair_times))
        med_retrain = float(np.median(retrain_times))
        assert med_repair < med_retrain, (
            f"{scenario}: repair {med_repair:.3f}s !< retrain {med_retrain:.3f}s"
        )
        lines.append(f"{scenario} repair {med_repair * 1e3:.0f}ms vs retrain "
                     f"{med_retrain * 1e3:.0f}ms")
    report(7, f"n={g.n}: " + "; ".join(lines))


def test_criterion_8_validation_coverage():
    # the five-fixture family, each mapping to its dictated verdict
    same_drop = check_fixture(
        [[0.7, 0.2, 0.1], [0.7, 0.2, 0.1], [0.7, 0.2, 0.1]],
        [[0.5, 0.3, 0.2], [0.7, 0.2, 0.1], [0.5, 0.3, 0.2]],
    )
    assert same_drop.effective_fraction == 1.0
    same_rise = check_fixture(
        [[0.6, 0.3, 0.1], [0.7, 0.2, 0.1], [0.6, 0.3, 0.1]],
        [[0.8, 0.1, 0.1], [0.7, 0.2, 0.1], [0.8, 0.1, 0.1]],
    )
    assert same_rise.effective_fraction == 0.0
    diff_k2_rise = check_fixture(
        [[0.1, 0.6, 0.3], [0.8, 0.1, 0.1], [0.1, 0.6, 0.3]],
        [[0.1, 0.8, 0.1], [0.8, 0.1, 0.1], [0.1, 0.8, 0.1]],
    )
    assert diff_k2_rise.effective_fraction == 1.0
    diff_k1_drop = check_fixture(
        [[0.3, 0.5, 0.2], [0.8, 0.1, 0.1], [0.3, 0.5, 0.2]],
        [[0.1, 0.4, 0.5], [0.8, 0.1, 0.1], [0.1, 0.4, 0.5]],
    )
    assert diff_k1_drop.effective_fraction == 1.0
    frozen = [[0.2, 0.5, 0.3], [0.8, 0.1, 0.1], [0.2, 0.5, 0.3]]
    no_change = check_fixture(frozen, frozen)
    assert no_change.effective_fraction == 0.0

    # identical models on a trained fixture: zero effectiveness
    g = generate_sbm(seed=2, **SBM_FIXTURE)
    model = train(g, TrainConfig(seed=2, epochs=30))
    from graphmu.validation import validate

    identical = validate(model, model, g, anomalous_nodes=[0, 1, 2])
    assert identical.effective_fraction == 0.0
    report(8, "five fixture verdicts as dictated; identical models -> 0% effective")


def test_criterion_9_pipeline_determinism(tmp_path):
    results = []
    for tag in ("first", "second"):
        cfg = ExperimentConfig()
        cfg.seed = 7
        cfg.out_dir = str(tmp_path / tag)
        cfg.attack.kind = "node_injection"
        cfg.attack.inject_count = 5
        cfg.repair.learning_rate = 0.3
        results.append(run_pipeline(cfg))
    text_a = (tmp_path / "first" / "runresult.txt").read_bytes()
    text_b = (tmp_path / "second" / "runresult.txt").read_bytes()
    assert text_a == text_b
    assert results[0].to_text() == results[1].to_text()
    report(9, "repeated pipeline run reproduces the result record bitwise")


def regular_graph(n, degree, seed):
    """Random regular graph: union of degree/2 circulant layers with distinct
    random offsets, so the layers are edge-disjoint by construction."""
    assert degree % 2 == 0
    rng = np.random.default_rng(seed)
    offsets = rng.choice(np.arange(1, n // 2), size=degree // 2, replace=False)
    edges = [
        (min(i, (i + int(o)) % n), max(i, (i + int(o)) % n))
        for o in offsets
        for i in range(n)
    ]
    return bare_graph(n, edges)


def test_criterion_10_simrank_scaling():
    degree = 8
    iterations = 8

    def per_iteration_seconds(n):
        g = regular_graph(n, degree, seed=n)
        best = float("inf")
        for _ in range(5):
            start = time.perf_counter()
            simrank(g, iterations=iterations, tol=0.0)
            best = min(best, (time.perf_counter() - start) / iterations)
        return best

    small = per_iteration_seconds(256)
    large = per_iteration_seconds(512)
    factor = large / small
    assert 3.0 <= factor <= 6.0, f"doubling n scaled per-iteration time by {factor:.2f}"
    report(10, f"per-iteration time factor {factor:.2f} when doubling n (256 -> 512)")
