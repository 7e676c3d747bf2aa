"""Staged end-to-end run with content-hash caching and a manifest.

Each stage writes into ``<out_dir>/<stage>/``. A stage's cache key hashes its
configuration section(s) together with the recorded hashes of every upstream
artifact, so a stage is recomputed exactly when something it reads changed.
"""
from __future__ import annotations

import contextvars
import csv
import datetime as dt
import hashlib
import json
import logging
import time
import traceback
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .evaluation import (
    AblationResult, EvaluationError, ExperimentConfig, ExperimentData, fit_forest, flatten_report, gcn_inputs,
    run_experiment, split_masks,
)
from .features import FeatureBuilder, FeatureTable, read_features, write_features
from .ingest import EntityStore, Sample, build_samples, entity_paths, load_entities, read_samples, write_samples
from .models.forest import load_forest, rf_predict_proba, save_forest
from .models.gcn import gcn_train, save_gcn
from .models.shapley import shapley_attribution
from .network import CentralityCache, build_coinvestment_graph, centrality_at, read_centrality, write_centrality, write_edges
from .scaling import ScalerModel
from .text.competition import CompetitionConfig, CompetitorSet, DocUniverse, find_competitors, similarity_decay
from .text.preprocess import learn_bigrams, preprocess
from .text.sif import DocVector, sif_embed
from .text.word2vec import load_space, read_vectors, save_space, train_word2vec, write_vectors

log = logging.getLogger("venturescope.pipeline")
current_stage: contextvars.ContextVar[str] = contextvars.ContextVar("stage", default="-")

STAGES = ("ingest", "embed", "competitors", "network", "features", "train", "evaluate", "report")
DEPENDS = {
    "ingest": (),
    "embed": ("ingest",),
    "competitors": ("ingest", "embed"),
    "network": ("ingest",),
    "features": ("ingest", "competitors", "network"),
    "train": ("features",),
    "evaluate": ("features", "train"),
    "report": ("ingest", "competitors", "features", "evaluate"),
}
SECTIONS = {
    "ingest": ("samples",),
    "embed": ("embed",),
    "competitors": ("competitors",),
    "network": ("network",),
    "features": (),
    "train": ("samples", "train", "evaluate"),
    "evaluate": ("samples", "train", "evaluate"),
    "report": ("evaluate",),
}
MANIFEST = "manifest.json"
_DECAY_COMPANIES = 5


class PipelineError(RuntimeError):
    pass


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass
class StageOutcome:
    name: str
    status: str = "not-run"  # ok | failed | not-run
    cached: bool = False
    key: str | None = None
    artifacts: list[dict] = field(default_factory=list)
    error: str | None = None
    seconds: float = 0.0

    def manifest_entry(self) -> dict:
        entry = {"name": self.name, "status": self.status, "key": self.key, "artifacts": self.artifacts}
        if self.error is not None:
            entry["error"] = self.error
        return entry


@dataclass
class PipelineResult:
    out_dir: Path
    stages: list[StageOutcome]
    requested: tuple[str, ...] = STAGES

    @property
    def ok(self) -> bool:
        return all(s.status == "ok" for s in self.stages if s.name in self.requested)

    @property
    def exit_code(self) -> int:
        return 0 if self.ok else 1

    def stage(self, name: str) -> StageOutcome:
        return next(s for s in self.stages if s.name == name)


class _Context:
    """Lazily loaded inputs shared by the stages of one run."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.out = Path(config.out_dir)
        self.data_dir = Path(config.data_dir)
        self._store: EntityStore | None = None
        self._cache: dict = {}

    def path(self, stage: str, name: str) -> Path:
        p = self.out / stage / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def need(self, stage: str, name: str) -> Path:
        p = self.out / stage / name
        if not p.exists():
            raise PipelineError(f"missing artifact {stage}/{name}; run the {stage} stage first")
        return p

    @property
    def store(self) -> EntityStore:
        if self._store is None:
            self._store = load_entities(self.data_dir)
        return self._store

    def samples(self):
        if "samples" not in self._cache:
            self._cache["samples"] = read_samples(self.need("ingest", "samples.csv"))
        return self._cache["samples"]

    def documents(self) -> dict[str, list[str]]:
        if "docs" not in self._cache:
            docs = {}
            with open(self.need("embed", "documents.tsv"), encoding="utf-8") as fh:
                for line in fh:
                    cid, _, text = line.rstrip("\n").partition("\t")
                    docs[cid] = text.split(" ") if text else []
            self._cache["docs"] = docs
        return self._cache["docs"]

    def universe(self) -> DocUniverse:
        if "universe" not in self._cache:
            ids, vectors = read_vectors(self.need("competitors", "docvectors.bin"))
            docs = [DocVector(cid, v.astype(np.float64), 0) for cid, v in zip(ids, vectors)]
            founded = {cid: self.store.companies[cid].founded_on for cid in ids}
            cfg = CompetitionConfig(self.config.min_sim, self.config.sif_a)
            self._cache["universe"] = DocUniverse(docs, founded, cfg)
        return self._cache["universe"]

    def competitor_sets(self) -> dict:
        if "competitors" not in self._cache:
            sets = {}
            with open(self.need("competitors", "competitors.csv"), newline="", encoding="utf-8") as fh:
                for row in csv.DictReader(fh):
                    pairs = []
                    for item in filter(None, row["competitors"].split("|")):
                        cid, _, sim = item.rpartition(":")
                        pairs.append((cid, float(sim)))
                    sets[(row["company_id"], dt.date.fromisoformat(row["as_of"]))] = CompetitorSet(
                        row["company_id"], tuple(pairs))
            self._cache["competitors"] = sets
        return self._cache["competitors"]

    def centrality(self) -> CentralityCache:
        if "centrality" not in self._cache:
            cache = CentralityCache(self.store)
            for table in read_centrality(self.need("network", "centrality.csv")).values():
                cache.put(table)
            self._cache["centrality"] = cache
        return self._cache["centrality"]

    def builder(self) -> FeatureBuilder:
        if "builder" not in self._cache:
            self._cache["builder"] = FeatureBuilder(
                self.store, self.universe(), self.centrality(),
                CompetitionConfig(self.config.min_sim, self.config.sif_a), self.competitor_sets(),
            )
        return self._cache["builder"]

    def features(self) -> FeatureTable:
        if "features" not in self._cache:
            self._cache["features"] = read_features(self.need("features", "features.csv"))
        return self._cache["features"]

    def experiment_data(self) -> ExperimentData:
        builder = self.builder()
        memo: dict = {}

        def node_features(cid, as_of):
            key = (cid, as_of)
            if key not in memo:
                memo[key] = builder.vector(Sample(cid, as_of, "all", False, self.config.horizon_years))
            return memo[key]

        return ExperimentData(self.features(), self.store, node_features)

    def experiment(self, model: str, cohort: str, features: str) -> ExperimentConfig:
        return experiment_config(self.config, model, cohort, features)


def experiment_config(c: RunConfig, model: str, cohort: str, features: str) -> ExperimentConfig:
    """The experiment settings a run config implies for one model, cohort and feature set."""
    return ExperimentConfig(
        cohort=cohort, features=features, model=model, split=c.split, cutoff=c.cutoff,
        test_fraction=c.test_fraction, split_seed=c.split_seed, seeds=c.seeds, p_at=c.p_at,
        n_trees=c.n_trees, max_depth=c.max_depth, max_features=c.max_features, hidden=c.hidden,
        epochs=c.gcn_epochs, lr=c.lr, weight_decay=c.weight_decay, threads=c.threads,
    )


def load_experiment_data(config: RunConfig) -> ExperimentData:
    """Experiment inputs rebuilt from the artifacts of a finished run."""
    return _Context(config).experiment_data()


# -- stages --------------------------------------------------------------------

def _stage_ingest(ctx: _Context) -> list[Path]:
    c = ctx.config
    store = ctx.store
    samples = []
    summary = {"entities": {"companies": len(store.companies), "rounds": len(store.rounds),
                            "people": len(store.people), "news": len(store.news)},
               "dropped": dict(sorted(store.dropped.items())), "samples": {}}
    for cohort in c.cohorts:
        part = build_samples(store, c.start, c.end, c.horizon_years, cohort)
        samples += part
        summary["samples"][cohort] = {
            "n": len(part), "positive_rate": float(np.mean([s.label for s in part])) if part else 0.0,
        }
        log.info("cohort %s: %d samples", cohort, len(part))
    out = [ctx.path("ingest", "samples.csv"), ctx.path("ingest", "summary.json")]
    write_samples(samples, out[0])
    _dump_json(summary, out[1])
    return out


def _stage_embed(ctx: _Context) -> list[Path]:
    c = ctx.config
    raw = {}
    for cid in sorted(ctx.store.companies):
        tokens = preprocess(ctx.store.companies[cid].description)
        if tokens is not None:
            raw[cid] = tokens
    log.info("%d of %d descriptions usable", len(raw), len(ctx.store.companies))
    bigrams = learn_bigrams(raw.values())
    docs = {cid: bigrams.apply(t) for cid, t in raw.items()}
    space = train_word2vec(list(docs.values()), c.dim, c.embed_seed, window=c.window, negative=c.negative,
                           epochs=c.embed_epochs, min_count=c.min_count)
    log.info("trained %d word vectors of dimension %d", len(space.vocabulary), space.dimension)
    out = [ctx.path("embed", "vectors.bin"), ctx.path("embed", "documents.tsv"), ctx.path("embed", "bigrams.csv")]
    save_space(space, out[0])
    with open(out[1], "w", encoding="utf-8") as fh:
        for cid, toks in docs.items():
            fh.write(f"{cid}\t{' '.join(toks)}\n")
    with open(out[2], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["first", "second", "score"])
        for (a, b), s in sorted(bigrams.scores.items()):
            w.writerow([a, b, repr(float(s))])
    return out


def _stage_competitors(ctx: _Context) -> list[Path]:
    c = ctx.config
    docs = ctx.documents()
    space = load_space(ctx.need("embed", "vectors.bin"), list(docs.values()))
    # stored as float32; round-trip here so fresh and cached runs see identical vectors
    vecs = [DocVector(d.company_id, d.vector.astype(np.float32).astype(np.float64), d.token_count)
            for d in sif_embed(space, docs, a=c.sif_a)]
    out = [ctx.path("competitors", n) for n in ("docvectors.bin", "competitors.csv", "similarity_decay.csv")]
    write_vectors(out[0], [d.company_id for d in vecs], np.array([d.vector for d in vecs]).reshape(len(vecs), -1))
    founded = {cid: ctx.store.companies[cid].founded_on for cid in docs}
    cfg = CompetitionConfig(c.min_sim, c.sif_a)
    universe = DocUniverse(vecs, founded, cfg)
    ctx._cache["universe"] = universe
    keys = sorted({(s.company_id, s.as_of) for s in ctx.samples()})
    n_sets = 0
    with open(out[1], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["company_id", "as_of", "count", "competitors"])
        for cid, as_of in keys:
            if cid not in universe:
                continue
            cs = find_competitors(cid, universe, cfg, as_of)
            w.writerow([cid, as_of.isoformat(), len(cs), "|".join(f"{k}:{s!r}" for k, s in cs.competitors)])
            n_sets += 1
    log.info("competitor sets for %d samples", n_sets)
    picked = sorted({cid for cid, _ in keys if cid in universe})[:_DECAY_COMPANIES]
    with open(out[2], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["company_id", "rank", "similarity"])
        for cid, curve in similarity_decay(universe, picked).items():
            for rank, s in enumerate(curve, 1):
                w.writerow([cid, rank, repr(float(s))])
    return out


def _stage_network(ctx: _Context) -> list[Path]:
    dates = sorted({s.as_of for s in ctx.samples()})
    out = [ctx.path("network", "centrality.csv"), ctx.path("network", "edges.csv")]
    out[0].unlink(missing_ok=True)
    cache = CentralityCache(ctx.store)
    for i, as_of in enumerate(dates):
        table = centrality_at(ctx.store, as_of)
        cache.put(table)
        write_centrality(table, out[0], with_date=True, mode="w" if i == 0 else "a")
        log.info("centrality at %s over %d investors", as_of, len(table.betweenness))
    if not dates:
        with open(out[0], "w", encoding="utf-8") as fh:
            fh.write("as_of,investor_id,betweenness,portfolio_size\n")
    ctx._cache["centrality"] = cache
    write_edges(build_coinvestment_graph(ctx.store, dates[-1] if dates else ctx.config.end), out[1])
    return out


def _stage_features(ctx: _Context) -> list[Path]:
    builder = ctx.builder()
    table = builder.build(ctx.samples())
    out = [ctx.path("features", "features.csv"), ctx.path("features", "summary.json")]
    write_features(table, out[0])
    ctx._cache["features"] = table
    cohorts = {}
    for s in table.samples:
        n, pos = cohorts.get(s.cohort, (0, 0))
        cohorts[s.cohort] = (n + 1, pos + int(s.label))
    _dump_json({
        "rows": len(table), "columns": list(table.columns),
        "dropped_no_description": builder.dropped_no_description, "missing_founders": builder.missing_founders,
        "cohorts": {k: {"n": n, "positive_rate": pos / n} for k, (n, pos) in sorted(cohorts.items())},
    }, out[1])
    return out


def _stage_train(ctx: _Context) -> list[Path]:
    c = ctx.config
    out, skipped = [], []
    for model in c.models:
        for cohort in c.cohorts:
            cfg = ctx.experiment(model, cohort, c.feature_set)
            table = ctx.features().cohort(cohort)
            train, _ = split_masks(table, cfg) if len(table) else (np.zeros(0, dtype=bool), None)
            y = table.labels[train] if len(table) else np.zeros(0)
            if len(y) == 0 or len(np.unique(y)) < 2:
                log.warning("skipping %s/%s: training split empty or single-class", model, cohort)
                skipped.append({"model": model, "cohort": cohort, "reason": "training split empty or single-class"})
                continue
            names = cfg.feature_names
            if model == "rf":
                scaler, forest = fit_forest(cfg, table.select(names)[train], y, names, c.seeds[0])
                path = ctx.path("train", f"rf_{cohort}.vsrf")
                save_forest(forest, path)
            else:
                graph, node, scaler = gcn_inputs(ctx.experiment_data(), table, train, names)
                mask = np.zeros(graph.n_nodes, dtype=bool)
                mask[node[train]] = True
                result = gcn_train(graph, c.hidden, c.gcn_epochs, c.lr, c.seeds[0],
                                   weight_decay=c.weight_decay, train_mask=mask)
                path = ctx.path("train", f"gcn_{cohort}.vsgc")
                save_gcn(result.model, path)
            scaler_path = ctx.path("train", f"{model}_{cohort}.scaler.json")
            _dump_json(scaler.to_dict(), scaler_path)
            out += [path, scaler_path]
            log.info("trained %s/%s on %d rows", model, cohort, int(train.sum()))
    summary = ctx.path("train", "summary.json")
    _dump_json({"seed": c.seeds[0], "feature_set": c.feature_set, "skipped": skipped}, summary)
    return out + [summary]


def _attributions(ctx: _Context, cohort: str) -> list[dict]:
    c = ctx.config
    model_path = ctx.out / "train" / f"rf_{cohort}.vsrf"
    if not model_path.exists() or c.shap_rows <= 0:
        return []
    forest = load_forest(model_path)
    scaler = ScalerModel.from_dict(json.loads((ctx.out / "train" / f"rf_{cohort}.scaler.json").read_text()))
    cfg = ctx.experiment("rf", cohort, c.feature_set)
    table = ctx.features().cohort(cohort)
    train, test = split_masks(table, cfg)
    X = scaler.transform(table.select(cfg.feature_names))
    rng = np.random.default_rng(c.seeds[0])
    bg_idx = np.flatnonzero(train)
    background = X[rng.permutation(bg_idx)[:100]]
    test_idx = np.flatnonzero(test)
    scores = rf_predict_proba(forest, X[test_idx])
    rows = test_idx[np.argsort(-scores, kind="stable")[:c.shap_rows]]
    values = np.array([
        shapley_attribution(forest, background, X[r], c.shap_permutations, int(c.seeds[0]) + k).values
        for k, r in enumerate(rows)
    ]).reshape(len(rows), -1)
    return [
        {"model": "rf", "cohort": cohort, "feature": name,
         "mean_abs": float(np.abs(values[:, j]).mean()) if len(rows) else 0.0,
         "mean": float(values[:, j].mean()) if len(rows) else 0.0}
        for j, name in enumerate(cfg.feature_names)
    ]


def _stage_evaluate(ctx: _Context) -> list[Path]:
    c = ctx.config
    report = {"experiments": [], "ablations": [], "skipped": []}
    attributions = []
    data = None
    for model in c.models:
        if model == "gcn" and data is None:
            data = ctx.experiment_data()
        for cohort in c.cohorts:
            source = data if model == "gcn" else ctx.features()
            try:
                full = run_experiment(ctx.experiment(model, cohort, c.feature_set), source)
            except EvaluationError as exc:
                log.warning("skipping %s/%s: %s", model, cohort, exc)
                report["skipped"].append({"model": model, "cohort": cohort, "reason": str(exc)})
                continue
            report["experiments"].append(full.to_dict())
            for name in c.ablations:
                ablated = run_experiment(ctx.experiment(model, cohort, name), source)
                removed = tuple(n for n in full.config.feature_names if n not in ablated.config.feature_names)
                report["experiments"].append(ablated.to_dict())
                report["ablations"].append(AblationResult(full, ablated, removed).to_dict())
            if model == "rf":
                attributions += _attributions(ctx, cohort)
    out = [ctx.path("evaluate", "metrics.json"), ctx.path("evaluate", "attributions.csv")]
    _dump_json(report, out[0])
    with open(out[1], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "cohort", "feature", "mean_abs", "mean"])
        for a in attributions:
            w.writerow([a["model"], a["cohort"], a["feature"], repr(a["mean_abs"]), repr(a["mean"])])
    return out


def _stage_report(ctx: _Context) -> list[Path]:
    from .plotting import plot_ablation_deltas, plot_attributions, plot_metrics

    metrics = json.loads(ctx.need("evaluate", "metrics.json").read_text())
    with open(ctx.need("evaluate", "attributions.csv"), newline="", encoding="utf-8") as fh:
        attributions = list(csv.DictReader(fh))
    report = {
        "version": __version__,
        "config": {k: v for k, v in ctx.config.to_dict().items() if k not in ("data_dir", "out_dir", "threads")},
        "ingest": json.loads(ctx.need("ingest", "summary.json").read_text()),
        "features": json.loads(ctx.need("features", "summary.json").read_text()),
        **metrics,
        "attributions": [{**a, "mean_abs": float(a["mean_abs"]), "mean": float(a["mean"])} for a in attributions],
    }
    out = [ctx.path("report", "report.json"), ctx.path("report", "report.csv")]
    _dump_json(report, out[0])
    rows = flatten_report(report)
    run_cols = sorted({k for r in rows for k in r if k.startswith("run")}, key=lambda k: int(k[3:]))
    cols = ["model", "cohort", "feature_set", "metric", "mean", "std"] + run_cols
    with open(out[1], "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, cols, lineterminator="\n", restval="")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    if report["ablations"]:
        out.append(plot_ablation_deltas(report["ablations"], ctx.path("report", "ablation_f1.png")))
    if report["experiments"]:
        out.append(plot_metrics(report["experiments"], ctx.path("report", "metrics.png")))
    for cohort in dict.fromkeys(a["cohort"] for a in attributions):
        part = [a for a in attributions if a["cohort"] == cohort]
        out.append(plot_attributions([a["feature"] for a in part], [float(a["mean_abs"]) for a in part],
                                     ctx.path("report", f"attribution_rf_{cohort}.png"), f"rf / {cohort}"))
    return out


_RUNNERS = {
    "ingest": _stage_ingest, "embed": _stage_embed, "competitors": _stage_competitors, "network": _stage_network,
    "features": _stage_features, "train": _stage_train, "evaluate": _stage_evaluate, "report": _stage_report,
}


# -- orchestration -------------------------------------------------------------

def _log_warnings(caught) -> None:
    counts: dict[str, int] = {}
    for w in caught:
        msg = str(w.message)
        counts[msg] = counts.get(msg, 0) + 1
    for msg, k in counts.items():
        log.warning("%s%s", msg, f" (x{k})" if k > 1 else "")


def _records(ctx: _Context, paths) -> list[dict]:
    out = []
    for p in paths:
        p = Path(p)
        out.append({"path": p.relative_to(ctx.out).as_posix(), "sha256": sha256_file(p), "bytes": p.stat().st_size})
    return sorted(out, key=lambda r: r["path"])


def _input_records(ctx: _Context) -> list[dict]:
    out = []
    for kind, p in sorted(entity_paths(ctx.data_dir).items()):
        if not p.exists():
            raise PipelineError(f"missing input file {p}")
        out.append({"path": p.name, "sha256": sha256_file(p)})
    return out


def _stage_key(ctx: _Context, name: str, upstream: list[dict]) -> str:
    payload = {
        "stage": name,
        "version": __version__,
        "config": {s: ctx.config.section(s) for s in SECTIONS[name]},
        "inputs": upstream,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


def _cached(ctx: _Context, name: str, key: str) -> list[dict] | None:
    record = ctx.out / ".cache" / f"{name}.json"
    if not record.exists():
        return None
    try:
        data = json.loads(record.read_text())
    except json.JSONDecodeError:
        return None
    if data.get("key") != key:
        return None
    for a in data.get("artifacts", []):
        p = ctx.out / a["path"]
        if not p.exists() or sha256_file(p) != a["sha256"]:
            return None
    return data["artifacts"]


def _reuse(ctx: _Context, name: str) -> tuple[list[dict], str | None]:
    """Artifacts of a stage taken as they are on disk (for ``--from`` and single-stage runs)."""
    record = ctx.out / ".cache" / f"{name}.json"
    if not record.exists():
        raise PipelineError(f"stage {name} has not been run in {ctx.out}")
    data = json.loads(record.read_text())
    out = []
    for a in data["artifacts"]:
        p = ctx.out / a["path"]
        if not p.exists():
            raise PipelineError(f"missing artifact {a['path']}; re-run stage {name}")
        out.append({**a, "sha256": sha256_file(p), "bytes": p.stat().st_size})
    return out, data.get("key")


def write_manifest(ctx: _Context, outcomes: list[StageOutcome], inputs: list[dict],
                   requested: tuple[str, ...] = STAGES) -> Path:
    manifest = {
        "format": "venturescope-manifest/1",
        "version": __version__,
        "config": {k: v for k, v in ctx.config.to_dict().items() if k not in ("data_dir", "out_dir", "threads")},
        "inputs": inputs,
        "status": "ok" if all(o.status == "ok" for o in outcomes if o.name in requested) else "failed",
        "stages": [o.manifest_entry() for o in outcomes],
    }
    path = ctx.out / MANIFEST
    _dump_json(manifest, path)
    return path


def run_pipeline(config: RunConfig, from_stage: str | None = None, only: str | None = None,
                 force: bool = False) -> PipelineResult:
    """Run the stages in order, reusing cached outputs whose inputs are unchanged.

    ``from_stage`` recomputes that stage and everything after it while taking
    earlier outputs as they are on disk; ``only`` runs a single stage. The
    manifest is rewritten on every exit path.
    """
    for s in (from_stage, only):
        if s is not None and s not in STAGES:
            raise PipelineError(f"unknown stage {s!r}; expected one of {', '.join(STAGES)}")
    ctx = _Context(config)
    ctx.out.mkdir(parents=True, exist_ok=True)
    (ctx.out / ".cache").mkdir(exist_ok=True)
    outcomes = [StageOutcome(n) for n in STAGES]
    by_name = {o.name: o for o in outcomes}
    first = STAGES.index(only or from_stage) if (only or from_stage) else 0
    last = STAGES.index(only) if only else len(STAGES) - 1
    requested = STAGES[first:last + 1]
    inputs: list[dict] = []
    try:
        inputs = _input_records(ctx)
    except PipelineError as exc:
        by_name["ingest"].status = "failed"
        by_name["ingest"].error = str(exc)
        log.error("%s", exc)
        write_manifest(ctx, outcomes, inputs, requested)
        return PipelineResult(ctx.out, outcomes, requested)

    for i, name in enumerate(STAGES):
        outcome = by_name[name]
        token = current_stage.set(name)
        try:
            if i < first:
                try:
                    outcome.artifacts, outcome.key = _reuse(ctx, name)
                    outcome.status = "ok"
                except PipelineError:
                    outcome.status = "not-run"
                continue
            if i > last:
                continue
            upstream = list(inputs) if name == "ingest" else []
            blocked = [d for d in DEPENDS[name] if by_name[d].status != "ok"]
            if blocked:
                outcome.status = "not-run"
                outcome.error = f"upstream stage(s) not available: {', '.join(blocked)}"
                log.error("%s", outcome.error)
                break
            for d in DEPENDS[name]:
                upstream += by_name[d].artifacts
            outcome.key = _stage_key(ctx, name, upstream)
            hit = None if (force or (from_stage and i >= first) or only) else _cached(ctx, name, outcome.key)
            if hit is not None:
                outcome.artifacts, outcome.status, outcome.cached = hit, "ok", True
                log.info("cache hit")
                continue
            t0 = time.perf_counter()
            log.info("running")
            try:
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always")
                    try:
                        paths = _RUNNERS[name](ctx)
                    finally:
                        _log_warnings(caught)
            except Exception as exc:  # a failing stage is recorded, not raised
                outcome.status = "failed"
                outcome.error = f"{type(exc).__name__}: {exc}"
                outcome.seconds = time.perf_counter() - t0
                log.error("failed: %s", outcome.error)
                log.debug("%s", traceback.format_exc())
                (ctx.out / ".cache" / f"{name}.json").unlink(missing_ok=True)
                break
            outcome.seconds = time.perf_counter() - t0
            outcome.artifacts = _records(ctx, paths)
            outcome.status = "ok"
            _dump_json({"key": outcome.key, "artifacts": outcome.artifacts}, ctx.out / ".cache" / f"{name}.json")
            log.info("done in %.1fs (%d artifacts)", outcome.seconds, len(outcome.artifacts))
        finally:
            current_stage.reset(token)
    write_manifest(ctx, outcomes, inputs, requested)
    return PipelineResult(ctx.out, outcomes, requested)
