"""End-to-end orchestration: config parsing, pipeline stages, persistence,
and the repair-vs-retrain timing comparison.

Stages communicate only through snapshot files in the configured output
directory, so any prefix of the pipeline can be run as separate CLI
invocations.  Every run is deterministic given (config, seed); wall-clock
timings are the one exception and are kept out of the deterministic result
record.
"""

from __future__ import annotations

import configparser
import time
from dataclasses import dataclass, field
from io import StringIO
from pathlib import Path

import numpy as np

from .attacks import AttackSpec, PerturbationRecord, poison, unpoison, verify_budget
from .detectors import (
    DetectionReport,
    build_filter_bank,
    bwgnn_score,
    jaccard_score,
    select_by_ratio,
    simrank,
    simrank_edge_score,
)
from .gcn import Metrics, TrainConfig, evaluate, train
from .graphs import Graph, generate_sbm, laplacian, load_cora_format
from .repair import RepairConfig, repair
from .snapshot import load_snapshot, save_snapshot
from .subgraphs import _REPORT_RATIO_KEY, FineTunedSubgraph, Scenario, build, sanitize_graph
from .validation import heatmap_to_text, influence_heatmap, validate


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


@dataclass
class DatasetConfig:
    kind: str = "sbm"  # "sbm" or "cora-format"
    blocks: int = 3
    per_block: int = 50
    p_in: float = 0.15
    p_out: float = 0.02
    d: int = 16
    noise: float = 0.25
    content: str | None = None
    cites: str | None = None
    train_per_class: int = 20
    val_count: int = 500
    test_count: int = 1000

    @property
    def name(self) -> str:
        if self.kind == "sbm":
            return f"sbm_{self.blocks}x{self.per_block}"
        return Path(self.content).stem if self.content else "cora-format"


@dataclass
class AttackConfig:
    kind: str = "structure_perturbation"
    budget: int | None = None          # absolute; None -> budget_fraction of |E|
    budget_fraction: float = 0.05
    targeting: str = "random"
    inject_count: int | None = None


@dataclass
class DetectConfig:
    order: int = 2
    bwgnn_mode: str = "unsupervised"
    bwgnn_cutoff: float = 0.5
    jaccard_r: float = 0.01
    jaccard_p: float = 0.5
    simrank_iterations: int = 20
    simrank_tol: float = 1e-6
    simrank_tau: float | None = None   # None -> 5th percentile of edge scores


@dataclass
class BuildConfig:
    scenario: str = "K"
    hops: int = 2
    zeta: float | None = None          # None -> derived from the record
    vartheta: float | None = None
    kappa: float | None = None


@dataclass
class TrainSection:
    learning_rate: float = 0.05
    epochs: int = 200
    hidden_dim: int = 16
    weight_init_scale: float = 0.5


@dataclass
class RepairSection:
    rounds: int = 5
    learning_rate: float | None = None  # None -> train learning rate
    tolerance: float = 1e-6


@dataclass
class ExperimentConfig:
    seed: int = 0
    out_dir: str = "runs/experiment"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    train: TrainSection = field(default_factory=TrainSection)
    detect: DetectConfig = field(default_factory=DetectConfig)
    build: BuildConfig = field(default_factory=BuildConfig)
    repair: RepairSection = field(default_factory=RepairSection)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.train.learning_rate,
            epochs=self.train.epochs,
            seed=self.seed,
            weight_init_scale=self.train.weight_init_scale,
            hidden_dim=self.train.hidden_dim,
        )

    def repair_config(self) -> RepairConfig:
        lr = self.repair.learning_rate
        return RepairConfig(
            rounds=self.repair.rounds,
            learning_rate=self.train.learning_rate if lr is None else lr,
            tolerance=self.repair.tolerance,
        )


_OPTIONAL_FIELDS = {
    ("dataset", "content"), ("dataset", "cites"),
    ("attack", "budget"), ("attack", "inject_count"),
    ("detect", "simrank_tau"),
    ("build", "zeta"), ("build", "vartheta"), ("build", "kappa"),
    ("repair", "learning_rate"),
}


def _convert(value: str, kind):
    if kind is int:
        return int(value)
    if kind is float:
        return float(value)
    return value


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string(text)
    cfg = ExperimentConfig()
    if parser.has_section("experiment"):
        if parser.has_option("experiment", "seed"):
            cfg.seed = parser.getint("experiment", "seed")
        if parser.has_option("experiment", "out_dir"):
            cfg.out_dir = parser.get("experiment", "out_dir")
    for section_name, section in (
        ("dataset", cfg.dataset), ("attack", cfg.attack), ("train", cfg.train),
        ("detect", cfg.detect), ("build", cfg.build), ("repair", cfg.repair),
    ):
        if not parser.has_section(section_name):
            continue
        for key, raw in parser.items(section_name):
            if not hasattr(section, key):
                raise ValueError(f"unknown config key [{section_name}] {key}")
            raw = raw.strip()
            if raw == "":
                if (section_name, key) in _OPTIONAL_FIELDS:
                    setattr(section, key, None)
                    continue
                raise ValueError(f"config key [{section_name}] {key} must not be blank")
            default = getattr(type(section)(), key)
            if (section_name, key) in _OPTIONAL_FIELDS:
                kind = int if key in ("budget", "inject_count") else float
                if key in ("content", "cites"):
                    kind = str
            else:
                kind = type(default)
            setattr(section, key, _convert(raw, kind))
    return cfg


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def config_to_text(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser["experiment"] = {"seed": str(cfg.seed), "out_dir": cfg.out_dir}
    for name, section in (
        ("dataset", cfg.dataset), ("attack", cfg.attack), ("train", cfg.train),
        ("detect", cfg.detect), ("build", cfg.build), ("repair", cfg.repair),
    ):
        parser[name] = {
            key: ("" if value is None else str(value))
            for key, value in vars(section).items()
        }
    out = StringIO()
    parser.write(out)
    return out.getvalue()


@dataclass
class RunResult:
    dataset: str
    attack: str
    scenario: str
    metrics: dict[str, Metrics]                    # clean/poisoned/repaired/retrained
    detection: dict[str, tuple[float, float]]      # detector kind -> (precision, recall)
    validation_fraction: float
    timings: dict[str, float]                      # seconds; excluded from to_text()

    MODEL_ORDER = ("clean", "poisoned", "repaired", "retrained")

    def to_text(self) -> str:
        """Deterministic flat key-value record (timings are kept separate
        because wall-clock is not reproducible)."""
        lines = [
            f"dataset\t{self.dataset}",
            f"attack\t{self.attack}",
            f"scenario\t{self.scenario}",
        ]
        for model in self.MODEL_ORDER:
            for key, value in self.metrics[model].as_dict().items():
                lines.append(f"metrics.{model}.{key}\t{value!r}")
        for kind in sorted(self.detection):
            precision, recall = self.detection[kind]
            lines.append(f"detection.{kind}.precision\t{precision!r}")
            lines.append(f"detection.{kind}.recall\t{recall!r}")
        lines.append(f"validation.effective_fraction\t{self.validation_fraction!r}")
        return "\n".join(lines) + "\n"

    def timings_text(self) -> str:
        return "".join(f"timing.{k}\t{self.timings[k]!r}\n" for k in sorted(self.timings))


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_artifact(cfg: ExperimentConfig, name: str, stage: str, produced_by: str):
    path = Path(cfg.out_dir) / name
    if not path.exists():
        raise StageError(stage, f"missing artifact {name}; run the {produced_by} stage first")
    return load_snapshot(path)


def _resolve_budget(cfg: ExperimentConfig, g: Graph) -> int:
    if cfg.attack.budget is not None:
        return cfg.attack.budget
    return max(1, round(cfg.attack.budget_fraction * g.num_edges))


def stage_train(cfg: ExperimentConfig) -> dict:
    """Build (or load) the clean graph and pre-train the clean model."""
    out = _out_dir(cfg)
    try:
        ds = cfg.dataset
        if ds.kind == "sbm":
            g = generate_sbm(ds.blocks, ds.per_block, ds.p_in, ds.p_out, ds.d,
                             seed=cfg.seed, noise=ds.noise)
        elif ds.kind == "cora-format":
            if not ds.content or not ds.cites:
                raise ValueError("cora-format dataset needs content and cites paths")
            g = load_cora_format(ds.content, ds.cites, ds.train_per_class,
                                 ds.val_count, ds.test_count)
        else:
            raise ValueError(f"unknown dataset kind {ds.kind!r}")
        save_snapshot(out / "clean_graph.snap", g)
        started = time.perf_counter()
        model = train(g, cfg.train_config())
        elapsed = time.perf_counter() - started
        save_snapshot(out / "clean_model.snap", model)
    except StageError:
        raise
    except Exception as exc:
        raise StageError("train", str(exc)) from exc
    return {"graph": g, "model": model, "pretrain_seconds": elapsed}


def stage_attack(cfg: ExperimentConfig) -> dict:
    """Poison the clean graph and train the poisoned model."""
    out = _out_dir(cfg)
    g = _load_artifact(cfg, "clean_graph.snap", "attack", "train")
    try:
        spec = AttackSpec(
            kind=cfg.attack.kind,
            budget=_resolve_budget(cfg, g),
            targeting=cfg.attack.targeting,
            seed=cfg.seed,
            inject_count=cfg.attack.inject_count,
        )
        poisoned, record = poison(g, spec)
        check = verify_budget(g, poisoned, record, spec.budget)
        if not check:
            raise ValueError("generated perturbation failed verification: "
                             + "; ".join(check.problems))
        save_snapshot(out / "poisoned_graph.snap", poisoned)
        save_snapshot(out / "record.snap", record)
        started = time.perf_counter()
        model = train(poisoned, cfg.train_config())
        elapsed = time.perf_counter() - started
        save_snapshot(out / "poisoned_model.snap", model)
    except StageError:
        raise
    except Exception as exc:
        raise StageError("attack", str(exc)) from exc
    return {"poisoned": poisoned, "record": record, "model": model,
            "poison_train_seconds": elapsed}


DETECTORS_FOR_KIND = {
    "node_injection": ("bwgnn",),
    "feature_modification": ("jaccard",),
    "structure_perturbation": ("simrank",),
    "mixed": ("jaccard", "simrank"),
}


def stage_detect(cfg: ExperimentConfig) -> dict:
    """Run the detectors matching the attack kind on the poisoned graph."""
    out = _out_dir(cfg)
    poisoned = _load_artifact(cfg, "poisoned_graph.snap", "detect", "attack")
    try:
        reports: dict[str, DetectionReport] = {}
        for kind in DETECTORS_FOR_KIND[cfg.attack.kind]:
            if kind == "bwgnn":
                bank = build_filter_bank(laplacian(poisoned), cfg.detect.order)
                report = bwgnn_score(poisoned, bank, mode=cfg.detect.bwgnn_mode,
                                     seed=cfg.seed, cutoff=cfg.detect.bwgnn_cutoff)
            elif kind == "jaccard":
                report = jaccard_score(poisoned, r=cfg.detect.jaccard_r,
                                       p=cfg.detect.jaccard_p)
            else:
                sim = simrank(poisoned, iterations=cfg.detect.simrank_iterations,
                              tol=cfg.detect.simrank_tol)
                report = simrank_edge_score(poisoned, sim, tau=cfg.detect.simrank_tau)
            reports[kind] = report
            save_snapshot(out / f"report_{kind}.snap", report)
    except StageError:
        raise
    except Exception as exc:
        raise StageError("detect", str(exc)) from exc
    return {"reports": reports}


def _derived_ratios(record: PerturbationRecord, poisoned: Graph) -> dict[str, float]:
    """Known-ratio scenario: turn ground-truth counts into selection ratios.
    The half-count offset keeps ceil(ratio * universe) at the true count."""
    ratios = {}
    if record.injected_nodes:
        ratios["zeta"] = (len(record.injected_nodes) - 0.5) / poisoned.n
    if record.feature_modified:
        ratios["vartheta"] = (len(record.feature_modified) - 0.5) / poisoned.n
    if record.added_edges:
        ratios["kappa"] = (len(record.added_edges) - 0.5) / poisoned.num_edges
    return ratios


def stage_build(cfg: ExperimentConfig) -> dict:
    """Construct the fine-tuned subgraph for the configured scenario."""
    out = _out_dir(cfg)
    poisoned = _load_artifact(cfg, "poisoned_graph.snap", "build", "attack")
    scenario = Scenario.parse(cfg.build.scenario)
    try:
        record = None
        reports = None
        ratios = None
        if scenario is Scenario.K_UNLEARN:
            record = _load_artifact(cfg, "record.snap", "build", "attack")
        else:
            reports = []
            for kind in DETECTORS_FOR_KIND[cfg.attack.kind]:
                reports.append(_load_artifact(cfg, f"report_{kind}.snap", "build", "detect"))
            if scenario is Scenario.KN_UNLEARN:
                ratios = {
                    "zeta": cfg.build.zeta,
                    "vartheta": cfg.build.vartheta,
                    "kappa": cfg.build.kappa,
                }
                if any(v is None for v in ratios.values()):
                    truth = _load_artifact(cfg, "record.snap", "build", "attack")
                    derived = _derived_ratios(truth, poisoned)
                    for key in ratios:
                        if ratios[key] is None:
                            ratios[key] = derived.get(key, 1.0)
        sub = build(poisoned, scenario, cfg.attack.kind, record=record,
                    reports=reports, ratios=ratios, hops=cfg.build.hops)
        save_snapshot(out / "subgraph.snap", sub)
        effective_reports = reports
        if scenario is Scenario.KN_UNLEARN:
            effective_reports = []
            for report in reports:
                key = _REPORT_RATIO_KEY[report.kind]
                universe = poisoned.num_edges if report.kind == "simrank" else poisoned.n
                effective_reports.append(select_by_ratio(report, ratios[key], universe))
    except StageError:
        raise
    except Exception as exc:
        raise StageError("build", str(exc)) from exc
    return {"subgraph": sub, "effective_reports": effective_reports}


def stage_repair(cfg: ExperimentConfig) -> dict:
    """Fine-tune the poisoned model on the subgraph; retrain for reference."""
    out = _out_dir(cfg)
    poisoned_model = _load_artifact(cfg, "poisoned_model.snap", "repair", "attack")
    sub = _load_artifact(cfg, "subgraph.snap", "repair", "build")
    poisoned = _load_artifact(cfg, "poisoned_graph.snap", "repair", "attack")
    record = _load_artifact(cfg, "record.snap", "repair", "attack")
    try:
        started = time.perf_counter()
        repaired = repair(poisoned_model, sub, cfg.repair_config())
        repair_seconds = time.perf_counter() - started
        save_snapshot(out / "repaired_model.snap", repaired)

        cleaned = unpoison(poisoned, record)
        started = time.perf_counter()
        retrained = train(cleaned, cfg.train_config())
        retrain_seconds = time.perf_counter() - started
        save_snapshot(out / "retrained_model.snap", retrained)
    except StageError:
        raise
    except Exception as exc:
        raise StageError("repair", str(exc)) from exc
    return {"repaired": repaired, "retrained": retrained,
            "repair_seconds": repair_seconds, "retrain_seconds": retrain_seconds}


def _anomaly_sets(cfg: ExperimentConfig, sub: FineTunedSubgraph,
                  record: PerturbationRecord):
    """Excluded nodes, excluded edges, and feature-replaced nodes that drove
    the repair: ground truth under K, detector selections otherwise."""
    scenario = Scenario.parse(cfg.build.scenario)
    if scenario is Scenario.K_UNLEARN:
        return (list(record.injected_nodes), [tuple(e) for e in record.added_edges],
                sorted(record.feature_modified))
    prov = sub.provenance
    return (list(prov.get("injected_excluded", [])),
            [tuple(e) for e in prov.get("edges_excluded", [])],
            list(prov.get("feature_replaced", [])))


def stage_validate(cfg: ExperimentConfig) -> dict:
    """Check influence reduction on neighbors of the poisoned nodes and
    export the probability-delta heatmap (delimited text plus a rendered
    figure)."""
    out = _out_dir(cfg)
    poisoned_model = _load_artifact(cfg, "poisoned_model.snap", "validate", "attack")
    repaired_model = _load_artifact(cfg, "repaired_model.snap", "validate", "repair")
    poisoned = _load_artifact(cfg, "poisoned_graph.snap", "validate", "attack")
    sub = _load_artifact(cfg, "subgraph.snap", "validate", "build")
    record = _load_artifact(cfg, "record.snap", "validate", "attack")
    try:
        excluded, edges, replaced = _anomaly_sets(cfg, sub, record)
        nodes = sorted(set(excluded) | set(replaced))
        report = validate(poisoned_model, repaired_model, poisoned,
                          anomalous_nodes=nodes, anomalous_edges=edges)
        save_snapshot(out / "validation.snap", report)
        table = influence_heatmap(report)
        (out / "heatmap.tsv").write_text(heatmap_to_text(table))
        from .plots import save_heatmap_figure

        save_heatmap_figure(table, out / "heatmap.png")
    except StageError:
        raise
    except Exception as exc:
        raise StageError("validate", str(exc)) from exc
    return {"validation": report}


def detection_quality(report: DetectionReport, record: PerturbationRecord
                      ) -> tuple[float, float]:
    """Precision and recall of the selected anomalies against ground truth."""
    if report.kind == "bwgnn":
        truth = {int(v) for v in record.injected_nodes}
        selected = {int(v) for v in report.selected_nodes}
    elif report.kind == "jaccard":
        truth = {int(v) for v in record.feature_modified}
        selected = {int(v) for v in report.selected_nodes}
    elif report.kind == "simrank":
        truth = {(min(u, v), max(u, v)) for u, v in record.added_edges}
        selected = {(min(u, v), max(u, v)) for u, v in report.selected_edges}
    else:
        raise ValueError(f"unknown detector kind {report.kind!r}")
    hits = len(truth & selected)
    precision = hits / len(selected) if selected else 0.0
    recall = hits / len(truth) if truth else 0.0
    return precision, recall


def _metrics_table(metrics: dict[str, Metrics]) -> str:
    lines = ["model\taccuracy\tprecision\trecall\tf1"]
    for model in RunResult.MODEL_ORDER:
        m = metrics[model]
        lines.append(f"{model}\t{m.accuracy!r}\t{m.precision!r}\t{m.recall!r}\t{m.f1!r}")
    return "\n".join(lines) + "\n"


def summary_table(result: RunResult) -> str:
    header = f"{'model':<10} {'accuracy':>9} {'precision':>10} {'recall':>8} {'f1':>8}"
    rows = [header, "-" * len(header)]
    for model in RunResult.MODEL_ORDER:
        m = result.metrics[model]
        rows.append(f"{model:<10} {m.accuracy:>9.4f} {m.precision:>10.4f} "
                    f"{m.recall:>8.4f} {m.f1:>8.4f}")
    rows.append(f"validation effective fraction: {result.validation_fraction:.4f}")
    for kind in sorted(result.detection):
        p, r = result.detection[kind]
        rows.append(f"detection[{kind}]: precision {p:.4f} recall {r:.4f}")
    for key in sorted(result.timings):
        rows.append(f"timing[{key}]: {result.timings[key]:.4f} s")
    return "\n".join(rows)


def run_pipeline(cfg: ExperimentConfig) -> RunResult:
    """Execute train -> attack -> detect -> build -> repair -> validate ->
    evaluate, persisting every intermediate artifact."""
    out = _out_dir(cfg)
    scenario = Scenario.parse(cfg.build.scenario)

    trained = stage_train(cfg)
    attacked = stage_attack(cfg)
    if scenario is not Scenario.K_UNLEARN:
        stage_detect(cfg)
    built = stage_build(cfg)
    detection: dict[str, tuple[float, float]] = {}
    if built["effective_reports"]:
        for report in built["effective_reports"]:
            detection[report.kind] = detection_quality(report, attacked["record"])
    repaired = stage_repair(cfg)
    validated = stage_validate(cfg)

    try:
        g_clean = trained["graph"]
        g_poisoned = attacked["poisoned"]
        g_cleaned = unpoison(g_poisoned, attacked["record"])
        # The repaired system is (repaired parameters, sanitized graph): the
        # same exclusions and feature replacements that built the subgraph,
        # applied at deployment scope.
        excluded, edges, replaced = _anomaly_sets(cfg, built["subgraph"], attacked["record"])
        g_sanitized = sanitize_graph(g_poisoned, excluded, edges, replaced)
        metrics = {
            "clean": evaluate(trained["model"], g_clean, g_clean.test_mask),
            "poisoned": evaluate(attacked["model"], g_poisoned, g_poisoned.test_mask),
            "repaired": evaluate(repaired["repaired"], g_sanitized, g_sanitized.test_mask),
            "retrained": evaluate(repaired["retrained"], g_cleaned, g_cleaned.test_mask),
        }
        result = RunResult(
            dataset=cfg.dataset.name,
            attack=cfg.attack.kind,
            scenario=scenario.value,
            metrics=metrics,
            detection=detection,
            validation_fraction=validated["validation"].effective_fraction,
            timings={
                "pretrain": trained["pretrain_seconds"],
                "poison_train": attacked["poison_train_seconds"],
                "repair": repaired["repair_seconds"],
                "retrain": repaired["retrain_seconds"],
            },
        )
        (out / "runresult.txt").write_text(result.to_text())
        (out / "timings.txt").write_text(result.timings_text())
        (out / "metrics.tsv").write_text(_metrics_table(metrics))
        from .plots import save_metrics_figure

        save_metrics_figure(metrics, out / "metrics.png")
    except StageError:
        raise
    except Exception as exc:
        raise StageError("evaluate", str(exc)) from exc
    return result


def timing_report(results: list[RunResult]) -> str:
    """Tabulate repair vs retrain wall-clock per dataset/attack/scenario."""
    if not results:
        return ""
    lines = ["dataset\tattack\tscenario\trepair_s\tretrain_s"]
    for r in results:
        lines.append(
            f"{r.dataset}\t{r.attack}\t{r.scenario}"
            f"\t{r.timings.get('repair', float('nan')):.6f}"
            f"\t{r.timings.get('retrain', float('nan')):.6f}"
        )
    return "\n".join(lines) + "\n"
