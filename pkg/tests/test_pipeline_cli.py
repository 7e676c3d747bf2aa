import csv
import io
import json
import shutil

import pytest

from venturescope import cli
from venturescope.config import ConfigError, RunConfig, load_config, parse_assignments
from venturescope.pipeline import STAGES, run_pipeline, sha256_file
from venturescope.synthetic import ScenarioSpec, generate

FAST = dict(dim=16, n_trees=8, seeds=(0, 1), embed_epochs=2, shap_rows=3, shap_permutations=20,
            cohorts=("all", "seed"), threads=1)


@pytest.fixture(scope="module")
def tiny_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny") / "data"
    generate(ScenarioSpec(n_companies=500, n_investors=60, seed=11)).write(out)
    return out


@pytest.fixture(scope="module")
def tiny_run(tiny_data):
    config = RunConfig(data_dir=str(tiny_data), out_dir=str(tiny_data.parent / "run"), **FAST)
    return config, run_pipeline(config)


def manifest(out_dir):
    return (out_dir / "manifest.json").read_bytes()


def test_full_run_is_green(tiny_run):
    config, result = tiny_run
    assert result.exit_code == 0
    assert [s.status for s in result.stages] == ["ok"] * len(STAGES)
    report = json.loads((result.out_dir / "report" / "report.json").read_text())
    assert report["experiments"] and report["ablations"]
    for name in ("report.csv", "ablation_f1.png", "metrics.png"):
        assert (result.out_dir / "report" / name).exists()
    assert (result.out_dir / "competitors" / "similarity_decay.csv").exists()


def test_manifest_lists_every_artifact_with_hash(tiny_run):
    _, result = tiny_run
    m = json.loads(manifest(result.out_dir))
    assert m["status"] == "ok"
    assert {i["path"] for i in m["inputs"]} >= {"companies.csv", "rounds.csv", "people.csv", "news.csv"}
    for stage in m["stages"]:
        assert stage["artifacts"]
        for a in stage["artifacts"]:
            assert sha256_file(result.out_dir / a["path"]) == a["sha256"]


def test_second_run_hits_every_cache(tiny_run):
    config, first = tiny_run
    before = manifest(first.out_dir)
    again = run_pipeline(config)
    assert all(s.cached for s in again.stages)
    assert manifest(again.out_dir) == before


def test_fresh_run_elsewhere_has_identical_manifest(tiny_run, tmp_path):
    config, first = tiny_run
    other = run_pipeline(RunConfig(data_dir=config.data_dir, out_dir=str(tmp_path / "other"), **FAST))
    assert not any(s.cached for s in other.stages)
    assert manifest(other.out_dir) == manifest(first.out_dir)


def test_config_change_invalidates_downstream_only(tiny_run, tmp_path):
    config, first = tiny_run
    copy = tmp_path / "run"
    shutil.copytree(first.out_dir, copy)
    changed = RunConfig(data_dir=config.data_dir, out_dir=str(copy), **{**FAST, "n_trees": 5})
    result = run_pipeline(changed)
    cached = {s.name: s.cached for s in result.stages}
    assert all(cached[s] for s in ("ingest", "embed", "competitors", "network", "features"))
    assert not any(cached[s] for s in ("train", "evaluate", "report"))


def test_corrupt_vectors_fail_downstream(tiny_run, tmp_path):
    config, first = tiny_run
    copy = tmp_path / "run"
    shutil.copytree(first.out_dir, copy)
    vectors = copy / "embed" / "vectors.bin"
    vectors.write_bytes(b"JUNK!" + vectors.read_bytes()[5:])
    result = run_pipeline(RunConfig(data_dir=config.data_dir, out_dir=str(copy), **FAST), from_stage="competitors")
    assert result.exit_code != 0
    assert "magic" in result.stage("competitors").error
    m = json.loads(manifest(copy))
    status = {s["name"]: s["status"] for s in m["stages"]}
    assert m["status"] == "failed"
    assert status["competitors"] == "failed"
    assert status["embed"] == "ok"
    assert all(status[s] == "not-run" for s in ("features", "train", "evaluate", "report"))
    assert (copy / "network" / "centrality.csv").exists()  # partial artifacts kept


def test_missing_inputs_still_write_manifest(tmp_path):
    result = run_pipeline(RunConfig(data_dir=str(tmp_path / "nowhere"), out_dir=str(tmp_path / "run"), **FAST))
    assert result.exit_code != 0
    m = json.loads(manifest(tmp_path / "run"))
    assert m["stages"][0]["status"] == "failed"


def test_single_stage_needs_upstream(tmp_path, tiny_data):
    result = run_pipeline(RunConfig(data_dir=str(tiny_data), out_dir=str(tmp_path / "run"), **FAST), only="features")
    assert result.exit_code != 0
    assert result.stage("features").status == "not-run"


# -- configuration ---------------------------------------------------------------

def test_defaults_match_reference_settings():
    c = RunConfig()
    assert (c.dim, c.min_sim, c.horizon_years, len(c.seeds), c.hidden) == (300, 0.5, 2, 5, 64)


def test_precedence_flags_over_file_over_defaults(tmp_path):
    path = tmp_path / "vs.toml"
    path.write_text('# run settings\ndata_dir = "data"\n[train]\nn_trees = 7\nmax_depth = 4\n'
                    '[competitors]\nmin_sim = 0.6\n')
    c = load_config(path, {"train.n_trees": "9"})
    assert c.n_trees == 9  # flag
    assert c.max_depth == 4 and c.min_sim == 0.6  # file
    assert c.dim == 300  # default
    assert c.data_dir == str(tmp_path / "data")


def test_cli_flags_reach_config(tmp_path):
    args = cli.build_parser().parse_args(
        ["pipeline", "--data-dir", "d", "--n-trees", "3", "--seeds", "4,5", "--set", "evaluate.ablations=[]"])
    c = cli._config(args)
    assert (c.n_trees, c.seeds, c.ablations) == (3, (4, 5), ())


@pytest.mark.parametrize("text", ["[train]\nbogus = 1\n", "[train\n", "[samples]\nhorizon_years = 0\n"])
def test_bad_config_raises(tmp_path, text):
    path = tmp_path / "vs.toml"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)


def test_assignment_syntax():
    assert parse_assignments(["a.b=1", "c = x=y"]) == {"a.b": "1", "c": "x=y"}
    with pytest.raises(ConfigError):
        parse_assignments(["novalue"])


# -- command line ------------------------------------------------------------------

def test_every_subcommand_exists():
    parser = cli.build_parser()
    for name in ("ingest", "synth", "embed", "competitors", "network", "features", "train", "evaluate", "report",
                 "pipeline"):
        with pytest.raises(SystemExit) as info:
            parser.parse_args([name, "--help"])
        assert info.value.code == 0


def test_global_flags_before_or_after_subcommand():
    parser = cli.build_parser()
    a = parser.parse_args(["--quiet", "--threads", "2", "ingest"])
    b = parser.parse_args(["ingest", "--quiet", "--threads", "2"])
    assert a.quiet and b.quiet and a.threads == b.threads == 2


def test_synth_command(tmp_path, capsys):
    spec = tmp_path / "s.toml"
    spec.write_text("[scenario]\nn_companies = 50\nn_investors = 10\n")
    assert cli.main(["--quiet", "synth", "--spec", str(spec), "--out-dir", str(tmp_path / "d"), "--seed", "2"]) == 0
    with open(tmp_path / "d" / "companies.csv", newline="") as fh:
        assert len(list(csv.DictReader(fh))) == 50


def test_cli_cached_pipeline_and_report_csv(tiny_run, capsys):
    config, _ = tiny_run
    argv = ["--quiet", "report", "--data-dir", config.data_dir, "--out-dir", config.out_dir, "--format", "csv",
            *(f"--set={k}" for k in _fast_sets())]
    assert cli.main(argv) == 0
    out = capsys.readouterr().out
    rows = list(csv.DictReader(io.StringIO(out)))
    assert {"model", "cohort", "feature_set", "metric", "mean"} <= set(rows[0])


def test_cli_evaluate_out(tiny_run, tmp_path, capsys):
    config, _ = tiny_run
    target = tmp_path / "report.json"
    argv = ["evaluate", "--data-dir", config.data_dir, "--out-dir", config.out_dir, "--out", str(target),
            *(f"--set={k}" for k in _fast_sets())]
    assert cli.main(argv) == 0
    assert "experiments" in json.loads(target.read_text())
    assert "evaluate\tok" in capsys.readouterr().out


def test_quiet_and_json_logs(tiny_data, tmp_path, capsys):
    base = ["ingest", "--data-dir", str(tiny_data), "--out-dir", str(tmp_path / "r")]
    assert cli.main(["--quiet", *base]) == 0
    captured = capsys.readouterr()
    assert captured.out == "" and "INFO" not in captured.err
    assert cli.main(["--json-logs", *base]) == 0
    lines = [json.loads(line) for line in capsys.readouterr().err.splitlines() if line.strip()]
    assert lines and all({"level", "stage", "message"} <= set(rec) for rec in lines)
    assert any(rec["stage"] == "ingest" for rec in lines)


def test_plain_logs_carry_stage_prefix(tiny_data, tmp_path, capsys):
    assert cli.main(["ingest", "--data-dir", str(tiny_data), "--out-dir", str(tmp_path / "r")]) == 0
    assert "INFO [ingest]" in capsys.readouterr().err


def test_config_error_exit_code(capsys):
    assert cli.main(["pipeline", "--set", "nope.key=1"]) == 2
    assert "nope.key" in capsys.readouterr().err


def _fast_sets():
    return [
        "embed.dim=16", "train.n_trees=8", "evaluate.seeds=0,1", "embed.epochs=2", "evaluate.shap_rows=3",
        "evaluate.shap_permutations=20", "samples.cohorts=all,seed", "threads=1",
    ]
