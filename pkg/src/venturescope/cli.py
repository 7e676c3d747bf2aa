"""``vs`` command-line entry point."""
from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .config import ConfigError, load_config, parse_assignments
from .pipeline import STAGES, PipelineError, current_stage, run_pipeline

log = logging.getLogger("venturescope")


class _StageFilter(logging.Filter):
    def filter(self, record):
        record.stage = current_stage.get()
        return True


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        return json.dumps({
            "time": self.formatTime(record, "%Y-%m-%dT%H:%M:%S"),
            "level": record.levelname.lower(),
            "stage": getattr(record, "stage", "-"),
            "logger": record.name,
            "message": record.getMessage(),
        }, sort_keys=True)


def setup_logging(quiet: bool = False, json_logs: bool = False) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.addFilter(_StageFilter())
    handler.setFormatter(_JsonFormatter() if json_logs else logging.Formatter("%(levelname)s [%(stage)s] %(message)s"))
    root = logging.getLogger("venturescope")
    root.handlers[:] = [handler]
    root.setLevel(logging.WARNING if quiet else logging.INFO)
    root.propagate = False
    logging.captureWarnings(True)
    warn_log = logging.getLogger("py.warnings")
    warn_log.handlers[:] = [handler]
    warn_log.propagate = False


def _globals() -> argparse.ArgumentParser:
    # Accepted before or after the subcommand; SUPPRESS keeps the later one from
    # clobbering the earlier with a default.
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="only warnings and errors")
    p.add_argument("--json-logs", action="store_true", default=argparse.SUPPRESS, help="one JSON object per log line")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads (default: all CPUs)")
    return p


def _run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML run configuration")
    p.add_argument("--data-dir", help="directory with companies/rounds/people/news CSV files")
    p.add_argument("--out-dir", help="artifact directory")
    p.add_argument("--cohort", dest="cohorts", help="comma-separated cohorts (all, seed, series_a, series_b)")
    p.add_argument("--model", dest="models", help="comma-separated models (rf, gcn)")
    p.add_argument("--features", dest="feature_set", help="feature set of the main experiments")
    p.add_argument("--seeds", help="comma-separated experiment seeds")
    p.add_argument("--cutoff", help="temporal split date (YYYY-MM-DD)")
    p.add_argument("--min-sim", help="competitor similarity threshold")
    p.add_argument("--dim", help="word vector dimension")
    p.add_argument("--n-trees", help="trees per forest")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override any config key (repeatable)")


_FLAG_KEYS = {
    "data_dir": "data_dir", "out_dir": "out_dir", "threads": "threads", "cohorts": "samples.cohorts",
    "models": "train.models", "feature_set": "evaluate.feature_set", "seeds": "evaluate.seeds",
    "cutoff": "evaluate.cutoff", "min_sim": "competitors.min_sim", "dim": "embed.dim", "n_trees": "train.n_trees",
}


def build_parser() -> argparse.ArgumentParser:
    common = _globals()
    parser = argparse.ArgumentParser(prog="vs", parents=[common],
                                     description="Follow-on fundraising prediction with competition and network features.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", parents=[common], help="generate a synthetic ecosystem")
    synth.add_argument("--spec", type=Path, help="TOML scenario file (keys of ScenarioSpec)")
    synth.add_argument("--out-dir", required=True, type=Path)
    synth.add_argument("--seed", type=int, help="override the scenario seed")

    for stage in STAGES:
        sp = sub.add_parser(stage, parents=[common], help=f"run the {stage} stage only")
        _run_options(sp)
        if stage == "evaluate":
            sp.add_argument("--out", type=Path, help="also copy the metrics JSON to this path")
        if stage == "report":
            sp.add_argument("--format", choices=("json", "csv"), help="write the report to stdout in this format")
    pipe = sub.add_parser("pipeline", parents=[common], help="run every stage with caching")
    _run_options(pipe)
    pipe.add_argument("--from", dest="from_stage", choices=STAGES, help="recompute from this stage on")
    pipe.add_argument("--force", action="store_true", help="ignore cached stage outputs")
    return parser


def _synth(args) -> int:
    from .synthetic import ScenarioSpec, generate

    values = {}
    if args.spec is not None:
        with open(args.spec, "rb") as fh:
            values = tomllib.load(fh)
        values = values.get("scenario", values)
    if args.seed is not None:
        values["seed"] = args.seed
    spec = ScenarioSpec.from_dict(values)
    scenario = generate(spec)
    paths = scenario.write(args.out_dir)
    log.info("wrote %d companies, %d rounds to %s", len(scenario.companies), len(scenario.rounds), args.out_dir)
    for kind, p in paths.items():
        print(f"{kind}\t{p}")
    return 0


def _config(args):
    overrides = {}
    for attr, key in _FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    overrides.update(parse_assignments(args.set))
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(getattr(args, "quiet", False), getattr(args, "json_logs", False))
    try:
        if args.command == "synth":
            return _synth(args)
        config = _config(args)
        if args.command == "pipeline":
            result = run_pipeline(config, from_stage=args.from_stage, force=args.force)
        else:
            result = run_pipeline(config, only=args.command)
    except (ConfigError, PipelineError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return 2
    fmt = getattr(args, "format", None)
    if not getattr(args, "quiet", False):
        status = sys.stderr if fmt else sys.stdout
        for s in result.stages:
            if s.name in result.requested:
                print(f"{s.name}\t{s.status}\t{'cached' if s.cached else 'ran'}\t{s.seconds:.1f}s", file=status)
        print(f"manifest\t{result.out_dir / 'manifest.json'}", file=status)
    if result.exit_code == 0:
        if getattr(args, "out", None) is not None:
            args.out.parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(result.out_dir / "evaluate" / "metrics.json", args.out)
        if fmt:
            sys.stdout.write((result.out_dir / "report" / f"report.{fmt}").read_text(encoding="utf-8"))
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
