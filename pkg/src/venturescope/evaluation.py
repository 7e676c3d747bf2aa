"""Metrics, seeded experiments and feature-group ablations."""
from __future__ import annotations

import datetime as dt
import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from .features import FEATURES, FeatureTable, feature_set, scaled_mask
from .ingest import EntityStore
from .models.forest import rf_predict_proba, rf_train
from .models.gcn import build_bipartite_graph, gcn_forward, gcn_train, normalize_adjacency, union_graphs
from .scaling import ScalerModel

log = logging.getLogger(__name__)

METRICS = ("roc_auc", "macro_precision", "macro_recall", "macro_f1")


class EvaluationError(ValueError):
    pass


# -- metrics -------------------------------------------------------------------

def roc_auc(scores, labels) -> float:
    """Area under the ROC curve from midranks (ties count one half)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("ROC-AUC is undefined when only one class is present")
    ranks = rankdata(scores, method="average")
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def macro_prf(pred, labels) -> tuple[float, float, float]:
    """Unweighted mean over both classes of precision, recall and F1."""
    pred = np.asarray(pred).astype(bool)
    labels = np.asarray(labels).astype(bool)
    ps, rs, fs = [], [], []
    for cls in (False, True):
        tp = np.sum((pred == cls) & (labels == cls))
        n_pred = np.sum(pred == cls)
        n_true = np.sum(labels == cls)
        p = tp / n_pred if n_pred else 0.0
        r = tp / n_true if n_true else 0.0
        ps.append(p)
        rs.append(r)
        fs.append(2 * p * r / (p + r) if p + r else 0.0)
    return float(np.mean(ps)), float(np.mean(rs)), float(np.mean(fs))


def precision_at(scores, labels, n: int) -> float:
    """Share of positives among the ``n`` highest scores (stable on ties)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.float64)
    if n > len(scores):
        warnings.warn(f"P@{n} requested with only {len(scores)} samples; using all", stacklevel=2)
        n = len(scores)
    if n <= 0:
        raise EvaluationError("P@n needs n >= 1 and a non-empty sample")
    top = np.argsort(-scores, kind="stable")[:n]
    return float(labels[top].mean())


@dataclass
class RunMetrics:
    roc_auc: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    p_at: dict[int, float] = field(default_factory=dict)

    def as_dict(self) -> dict[str, float]:
        out = {m: getattr(self, m) for m in METRICS}
        out.update({f"p@{n}": v for n, v in sorted(self.p_at.items())})
        return out


def compute_metrics(scores, labels, ns: Sequence[int] = (50, 100), threshold: float = 0.5) -> RunMetrics:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if len(scores) != len(labels) or len(scores) < 2:
        raise EvaluationError("scores and labels must have equal length >= 2")
    p, r, f = macro_prf(scores >= threshold, labels)
    return RunMetrics(roc_auc(scores, labels), p, r, f, {n: precision_at(scores, labels, n) for n in ns})


@dataclass
class MetricsReport:
    runs: list[RunMetrics]
    seeds: list[int]

    @property
    def run_count(self) -> int:
        return len(self.runs)

    def per_run(self) -> list[dict[str, float]]:
        return [r.as_dict() for r in self.runs]

    def mean(self) -> dict[str, float]:
        rows = self.per_run()
        return {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}

    def std(self) -> dict[str, float]:
        rows = self.per_run()
        return {k: float(np.std([r[k] for r in rows])) for k in rows[0]}


# -- experiments ---------------------------------------------------------------

@dataclass
class ExperimentConfig:
    cohort: str = "all"
    features: str | tuple[str, ...] = "full"
    model: str = "rf"
    split: str = "temporal"
    cutoff: dt.date = dt.date(2014, 1, 1)
    test_fraction: float = 0.2
    split_seed: int = 0
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    p_at: tuple[int, ...] = (50, 100)
    n_trees: int = 500
    max_depth: int = 12
    max_features: int | None = None
    hidden: int = 64
    epochs: int = 300
    lr: float = 0.01
    weight_decay: float = 5e-4
    threads: int = 1

    @property
    def feature_names(self) -> tuple[str, ...]:
        return feature_set(self.features)

    @property
    def feature_label(self) -> str:
        return self.features if isinstance(self.features, str) else "custom"

    @property
    def name(self) -> str:
        return f"{self.model}/{self.cohort}/{self.feature_label}"


@dataclass
class ExperimentData:
    """Feature table plus what the graph model needs beyond it.

    ``node_features(company_id, as_of)`` returns the raw :data:`FEATURES`
    vector of any startup at a snapshot date (only used by the GCN).
    """

    table: FeatureTable
    store: EntityStore | None = None
    node_features: Callable[[str, dt.date], np.ndarray] | None = None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    report: MetricsReport
    n_train: int
    n_test: int
    positive_rate_test: float

    def to_dict(self) -> dict:
        c = self.config
        return {
            "name": c.name,
            "model": c.model,
            "cohort": c.cohort,
            "feature_set": c.feature_label,
            "features": list(c.feature_names),
            "split": c.split,
            "cutoff": c.cutoff.isoformat(),
            "seeds": list(self.report.seeds),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "positive_rate_test": self.positive_rate_test,
            "runs": self.report.per_run(),
            "mean": self.report.mean(),
            "std": self.report.std(),
        }


def split_masks(table: FeatureTable, config: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    """Train/test masks: temporal (as_of < cutoff <= as_of) or stratified random."""
    if config.split == "temporal":
        cutoff = np.datetime64(config.cutoff, "D")
        train = table.as_of < cutoff
        return train, ~train
    if config.split == "random":
        rng = np.random.default_rng(config.split_seed)
        y = table.labels
        test = np.zeros(len(y), dtype=bool)
        for cls in (0, 1):
            members = np.flatnonzero(y == cls)
            k = int(round(config.test_fraction * len(members)))
            test[rng.permutation(members)[:k]] = True
        return ~test, test
    raise EvaluationError(f"unknown split policy {config.split!r}")


def _check_split(config, y_train, y_test):
    if len(y_train) == 0 or len(y_test) == 0:
        raise EvaluationError(f"cohort {config.cohort!r} is empty after the {config.split} split")
    if len(np.unique(y_train)) < 2 or len(np.unique(y_test)) < 2:
        raise EvaluationError(f"cohort {config.cohort!r} has a single class on one side of the split")


def fit_forest(config: ExperimentConfig, X_train, y_train, names, seed: int):
    """Scaler fitted on the training rows plus a forest trained on the scaled rows."""
    scaler = ScalerModel.fit(X_train, scaled_mask(names), names)
    model = rf_train(
        scaler.transform(X_train), y_train, config.n_trees, config.max_depth, config.max_features, seed,
        threads=config.threads, feature_names=names,
    )
    return scaler, model


def _rf_scores(config, X_train, y_train, X_test, names, seed):
    scaler, model = fit_forest(config, X_train, y_train, names, seed)
    return rf_predict_proba(model, scaler.transform(X_test))


def gcn_inputs(data: ExperimentData, table: FeatureTable, train: np.ndarray, names):
    """Union of per-date bipartite snapshots, startup features scaled on training rows.

    Returns the graph and the node index of every sample in ``table``.
    """
    if data.store is None or data.node_features is None:
        raise EvaluationError("the graph model needs the entity store and a node feature function")
    cols = [FEATURES.index(n) for n in names]
    scaler = ScalerModel.fit(table.select(names)[train], scaled_mask(names), names)
    dates = sorted({s.as_of for s in table.samples})
    graphs = []
    for as_of in dates:
        snap = [s for s in table.samples if s.as_of == as_of]
        g = build_bipartite_graph(
            data.store, snap, as_of, lambda cid, d=as_of: data.node_features(cid, d)[cols], len(cols)
        )
        startup = g.X[:, len(cols)] == 1.0
        g.X[startup, :len(cols)] = scaler.transform(g.X[startup, :len(cols)])
        graphs.append(g)
    graph = union_graphs(graphs)
    node = np.array([graph.sample_index[(s.company_id, s.as_of)] for s in table.samples])
    return graph, node, scaler


def run_experiment(config: ExperimentConfig, data: ExperimentData | FeatureTable) -> ExperimentResult:
    """Train and evaluate one configuration once per seed on a fixed split."""
    if isinstance(data, FeatureTable):
        data = ExperimentData(data)
    table = data.table if config.cohort is None else data.table.cohort(config.cohort)
    if len(table) == 0:
        raise EvaluationError(f"cohort {config.cohort!r} has no samples")
    names = config.feature_names
    train, test = split_masks(table, config)
    y = table.labels
    _check_split(config, y[train], y[test])
    runs = []
    if config.model == "rf":
        X = table.select(names)
        for seed in config.seeds:
            scores = _rf_scores(config, X[train], y[train], X[test], names, seed)
            runs.append(compute_metrics(scores, y[test], config.p_at))
    elif config.model == "gcn":
        graph, node, _ = gcn_inputs(data, table, train, names)
        A_hat = normalize_adjacency(graph)
        train_mask = np.zeros(graph.n_nodes, dtype=bool)
        train_mask[node[train]] = True
        for seed in config.seeds:
            result = gcn_train(graph, config.hidden, config.epochs, config.lr, seed,
                               weight_decay=config.weight_decay, train_mask=train_mask, A_hat=A_hat)
            Z = gcn_forward(result.model, A_hat, graph.X)
            runs.append(compute_metrics(Z[node[test], 1], y[test], config.p_at))
    else:
        raise EvaluationError(f"unknown model {config.model!r}")
    log.info("%s: mean %s", config.name, {k: round(v, 4) for k, v in MetricsReport(runs, list(config.seeds)).mean().items()})
    return ExperimentResult(config, MetricsReport(runs, list(config.seeds)), int(train.sum()), int(test.sum()),
                            float(y[test].mean()))


@dataclass
class AblationResult:
    full: ExperimentResult
    ablated: ExperimentResult
    removed: tuple[str, ...]

    @property
    def delta(self) -> dict[str, float]:
        a, b = self.full.report.mean(), self.ablated.report.mean()
        return {k: a[k] - b[k] for k in a}

    @property
    def run_deltas(self) -> list[dict[str, float]]:
        return [{k: fa[k] - fb[k] for k in fa}
                for fa, fb in zip(self.full.report.per_run(), self.ablated.report.per_run())]

    def to_dict(self) -> dict:
        return {
            "model": self.full.config.model,
            "cohort": self.full.config.cohort,
            "full": self.full.config.name,
            "ablated": self.ablated.config.name,
            "removed": list(self.removed),
            "delta": self.delta,
            "run_deltas": self.run_deltas,
        }


def ablation(config: ExperimentConfig, data, without: str | Sequence[str] = "without-competition",
             base: str | Sequence[str] | None = None) -> AblationResult:
    """Paired runs with and without a feature group, on identical splits and seeds."""
    full_cfg = replace(config, features=base if base is not None else config.features)
    ablated_cfg = replace(config, features=without)
    full = run_experiment(full_cfg, data)
    ablated = run_experiment(ablated_cfg, data)
    removed = tuple(n for n in full_cfg.feature_names if n not in ablated_cfg.feature_names)
    return AblationResult(full, ablated, removed)


# -- reports -------------------------------------------------------------------

def flatten_report(report: dict) -> list[dict]:
    """Table-shaped rows (model x cohort x feature set x metric) from a report dict."""
    rows = []
    for exp in report.get("experiments", []):
        for metric, value in exp["mean"].items():
            row = {
                "model": exp["model"], "cohort": exp["cohort"], "feature_set": exp["feature_set"],
                "metric": metric, "mean": value, "std": exp.get("std", {}).get(metric, 0.0),
            }
            for i, run in enumerate(exp["runs"]):
                row[f"run{i}"] = run[metric]
            rows.append(row)
    for ab in report.get("ablations", []):
        for metric, value in ab["delta"].items():
            rows.append({
                "model": ab["model"], "cohort": ab["cohort"], "feature_set": "delta:" + ab["ablated"].split("/")[-1],
                "metric": metric, "mean": value, "std": float(np.std([r[metric] for r in ab["run_deltas"]])),
                **{f"run{i}": r[metric] for i, r in enumerate(ab["run_deltas"])},
            })
    return rows
