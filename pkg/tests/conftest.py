import csv
import datetime as dt
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import pytest

from venturescope.ingest import SCHEMAS, load_entities

D = dt.date.fromisoformat

LONG_TEXT = "alpha platform connects freelance designers with retail brands through curated weekly design sprints"


def company(cid, founded="2008-01-01", region="north", description=LONG_TEXT, tags="", status="operating",
            status_date=""):
    return {"id": cid, "name": cid.upper(), "founded_on": founded, "region": region, "description": description,
            "tags": tags, "status": status, "status_date": status_date}


def round_(rid, cid, date, kind="seed", amount="1000000", investors=""):
    return {"id": rid, "company_id": cid, "announced_on": date, "round_type": kind, "amount_usd": amount,
            "investor_ids": investors}


def write_entities(directory, companies=(), rounds=(), people=(), news=()) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for kind, rows in (("companies", companies), ("rounds", rounds), ("people", people), ("news", news)):
        with open(directory / f"{kind}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, SCHEMAS[kind], lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow(r)
    return directory


def make_store(tmp_path, **tables):
    directory = write_entities(tmp_path / "data", **tables)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        return load_entities(directory)


@pytest.fixture
def store_factory(tmp_path):
    return lambda **tables: make_store(tmp_path, **tables)


@dataclass
class EndToEnd:
    data_dir: Path
    config: object
    result: object
    synth_seconds: float
    pipeline_seconds: float


@pytest.fixture(scope="session")
def default_run(tmp_path_factory):
    """The default planted scenario pushed through every pipeline stage once per session.

    Forest size is 100 trees to keep the full run inside the time budget on a
    single core; everything else is at its default.
    """
    from venturescope.config import RunConfig
    from venturescope.pipeline import run_pipeline
    from venturescope.synthetic import ScenarioSpec, generate

    root = tmp_path_factory.mktemp("default")
    t0 = time.perf_counter()
    generate(ScenarioSpec()).write(root / "data")
    t1 = time.perf_counter()
    config = RunConfig(data_dir=str(root / "data"), out_dir=str(root / "run"), n_trees=100)
    result = run_pipeline(config)
    return EndToEnd(root / "data", config, result, t1 - t0, time.perf_counter() - t1)


# -- acceptance reporting ------------------------------------------------------------

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed or rep.skipped):
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, {"title": title, "status": "PASS", "details": []})
    if rep.failed:
        entry["status"] = "FAIL"
    elif rep.skipped and entry["status"] == "PASS":
        entry["status"] = "SKIP"
    entry["details"] += [str(v) for k, v in item.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        detail = "; ".join(dict.fromkeys(e["details"]))
        terminalreporter.write_line(f"criterion {number:2d}: {e['status']}  {e['title']}" + (f"  ({detail})" if detail else ""))
