"""Run configuration: defaults, TOML file loading and command-line overrides.

The file is TOML (``#`` comments allowed). Top-level keys and per-stage tables:

    data_dir = "data"            # directory holding the entity CSVs
    out_dir = "runs/default"
    threads = 1

    [samples]    start, end, horizon_years, cohorts
    [embed]      dim, seed, window, negative, epochs, min_count
    [competitors] min_sim, sif_a
    [network]    (no options; kept for symmetry)
    [train]      models, n_trees, max_depth, max_features, hidden, epochs, lr, weight_decay
    [evaluate]   feature_set, ablations, seeds, split, cutoff, test_fraction, split_seed,
                 p_at, shap_rows, shap_permutations

Precedence is flags > file > defaults; a flag ``--set section.key=value`` reaches any key.
"""
from __future__ import annotations

import datetime as dt
import json
import os
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .features import FEATURE_SETS
from .ingest import COHORTS


class ConfigError(ValueError):
    pass


def _default_threads() -> int:
    return os.cpu_count() or 1


@dataclass(frozen=True)
class RunConfig:
    data_dir: str = "data"
    out_dir: str = "runs/default"
    threads: int = field(default_factory=_default_threads)
    # samples
    start: dt.date = dt.date(2010, 1, 1)
    end: dt.date = dt.date(2015, 12, 31)
    horizon_years: int = 2
    cohorts: tuple[str, ...] = COHORTS
    # embed
    dim: int = 300
    embed_seed: int = 17
    window: int = 5
    negative: int = 5
    embed_epochs: int = 5
    min_count: int = 5
    # competitors
    min_sim: float = 0.5
    sif_a: float = 1e-3
    # train
    models: tuple[str, ...] = ("rf",)
    n_trees: int = 500
    max_depth: int = 12
    max_features: int | None = None
    hidden: int = 64
    gcn_epochs: int = 300
    lr: float = 0.01
    weight_decay: float = 5e-4
    # evaluate
    feature_set: str = "full"
    ablations: tuple[str, ...] = ("without-competition", "without-network")
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    split: str = "temporal"
    cutoff: dt.date = dt.date(2014, 1, 1)
    test_fraction: float = 0.2
    split_seed: int = 0
    p_at: tuple[int, ...] = (50, 100)
    shap_rows: int = 20
    shap_permutations: int = 200

    def validate(self) -> "RunConfig":
        if self.start > self.end:
            raise ConfigError(f"samples.start {self.start} is after samples.end {self.end}")
        if self.horizon_years < 1:
            raise ConfigError("samples.horizon_years must be >= 1")
        for c in self.cohorts:
            if c not in COHORTS:
                raise ConfigError(f"unknown cohort {c!r}; expected one of {', '.join(COHORTS)}")
        for m in self.models:
            if m not in ("rf", "gcn"):
                raise ConfigError(f"unknown model {m!r}; expected rf or gcn")
        for name in (self.feature_set, *self.ablations):
            if name not in FEATURE_SETS:
                raise ConfigError(f"unknown feature set {name!r}; expected one of {', '.join(FEATURE_SETS)}")
        if not 0.0 <= self.min_sim <= 1.0:
            raise ConfigError("competitors.min_sim must lie in [0, 1]")
        if self.split not in ("temporal", "random"):
            raise ConfigError("evaluate.split must be 'temporal' or 'random'")
        if not self.seeds:
            raise ConfigError("evaluate.seeds must not be empty")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        return self

    def section(self, name: str) -> dict:
        """The resolved keys of one stage section, JSON-ready (used for cache keys)."""
        return {k: _jsonable(getattr(self, f)) for k, f in SECTIONS[name].items()}

    def to_dict(self) -> dict:
        out = {"data_dir": self.data_dir, "out_dir": self.out_dir, "threads": self.threads}
        for name in SECTIONS:
            out[name] = self.section(name)
        return out


# section -> {file key: dataclass field}
SECTIONS: dict[str, dict[str, str]] = {
    "samples": {"start": "start", "end": "end", "horizon_years": "horizon_years", "cohorts": "cohorts"},
    "embed": {"dim": "dim", "seed": "embed_seed", "window": "window", "negative": "negative",
              "epochs": "embed_epochs", "min_count": "min_count"},
    "competitors": {"min_sim": "min_sim", "sif_a": "sif_a"},
    "network": {},
    "train": {"models": "models", "n_trees": "n_trees", "max_depth": "max_depth", "max_features": "max_features",
              "hidden": "hidden", "epochs": "gcn_epochs", "lr": "lr", "weight_decay": "weight_decay"},
    "evaluate": {"feature_set": "feature_set", "ablations": "ablations", "seeds": "seeds", "split": "split",
                 "cutoff": "cutoff", "test_fraction": "test_fraction", "split_seed": "split_seed",
                 "p_at": "p_at", "shap_rows": "shap_rows", "shap_permutations": "shap_permutations"},
}
_TOP = ("data_dir", "out_dir", "threads")


def _jsonable(v):
    if isinstance(v, dt.date):
        return v.isoformat()
    if isinstance(v, tuple):
        return list(v)
    return v


def _coerce(name: str, value):
    """Convert a file or flag value to the type of field ``name``."""
    default = getattr(RunConfig(threads=1), name)
    try:
        if isinstance(default, dt.date):
            return value if isinstance(value, dt.date) else dt.date.fromisoformat(str(value))
        if isinstance(default, tuple):
            if isinstance(value, str):
                items = value.strip().removeprefix("[").removesuffix("]").split(",")
                value = [v.strip().strip("\"'") for v in items if v.strip()]
            kind = type(default[0]) if default else str
            return tuple(kind(v) for v in value)
        if name == "max_features":
            return None if value in (None, "", "none", "None") else int(value)
        if isinstance(default, bool):
            return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
        return type(default)(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value {value!r} for {name}: {exc}") from None


def _field_for(key: str) -> str:
    if key in _TOP:
        return key
    if "." in key:
        section, sub = key.split(".", 1)
        if section in SECTIONS and sub in SECTIONS[section]:
            return SECTIONS[section][sub]
    raise ConfigError(f"unknown config key {key!r}")


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the TOML file at ``path``, then ``overrides`` (dotted keys)."""
    values: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        for key, value in doc.items():
            if isinstance(value, dict):
                for sub, v in value.items():
                    values[_field_for(f"{key}.{sub}")] = v
            else:
                values[_field_for(key)] = value
        base = Path(path).parent
        for key in ("data_dir", "out_dir"):
            if key in values and not Path(values[key]).is_absolute():
                values[key] = str(base / values[key])
    for key, value in (overrides or {}).items():
        if value is not None:
            values[_field_for(key)] = value
    known = {f.name for f in fields(RunConfig)}
    coerced = {k: _coerce(k, v) for k, v in values.items() if k in known}
    return replace(RunConfig(), **coerced).validate()


def parse_assignments(items) -> dict:
    """``["train.n_trees=100", ...]`` to ``{"train.n_trees": "100"}``."""
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"expected KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def dump_config(config: RunConfig) -> str:
    return json.dumps(config.to_dict(), indent=2, sort_keys=True)
