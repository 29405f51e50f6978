import csv
import json
import subprocess
import sys

import pytest

from cnumbers import measures
from cnumbers.cli import ConfigError, ExperimentConfig, main, report
from cnumbers.generators import gen_cantor4

SEGMENT = {"generator": {"kind": "segment", "params": {"length": 1.0, "spacing": 0.002}}}
ALL_TASKS = [
    {"task": "dini", "points": 5},
    {"task": "carleson", "j_max": 6},
    {"task": "coeffs", "points": 3, "ts": [0.1, 0.2]},
    {"task": "beta-energy", "j_max": 4},
    {"task": "alpha-energy", "j_max": 2},
    {"task": "cz", "nu": {"kind": "density", "seed": 1}},
    {"task": "weak11", "nu": {"kind": "density"}},
    {"task": "wavelet-lemma", "levels": [-4, 6], "depth": 10},
]


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def _run(tmp_path, name, input_, tasks, *flags):
    cfg = _write(tmp_path / f"{name}.json", {"input": input_, "tasks": tasks})
    out = tmp_path / name
    code = main(["run", cfg, "--out", str(out), *flags])
    summary = json.loads((out / "summary.json").read_text())
    return code, summary, out


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("full")
    return _run(tmp, "seg", SEGMENT, ALL_TASKS)


def test_config_roundtrip(tmp_path):
    cfg = ExperimentConfig.from_dict({"input": SEGMENT, "tasks": ALL_TASKS, "output": "x"})
    cfg.dump(tmp_path / "c.json")
    again = ExperimentConfig.load(tmp_path / "c.json")
    assert again == cfg
    assert ExperimentConfig.from_dict(again.to_dict()) == cfg
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"tasks": []})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"input": SEGMENT, "tasks": [{"task": "nope"}]})


def test_full_run(full_run):
    code, summary, out = full_run
    assert code == 0
    assert summary["schema"] == 1 and summary["generator"] == "segment"
    assert [t["task"] for t in summary["tasks"]] == [t["task"] for t in ALL_TASKS]
    for t in summary["tasks"]:
        assert t["status"] == "ok" and "error" not in t
        for f in t["files"]:
            assert (out / f).exists()
    by = {t["task"]: t["key_ratios"] for t in summary["tasks"]}
    assert by["dini"]["bounded_fraction"] == 1.0
    assert by["cz"]["passed"] == 10
    assert by["wavelet-lemma"]["interior_max"] <= 1e-6
    with open(out / "00_dini.csv") as fh:
        assert next(csv.reader(fh)) == ["point", "energy", "slope", "verdict"]


def test_rerun_is_byte_identical(full_run, tmp_path):
    _, _, first = full_run
    code, _, second = _run(tmp_path, "seg", SEGMENT, ALL_TASKS)
    assert code == 0
    names = sorted(p.name for p in first.iterdir())
    assert names == sorted(p.name for p in second.iterdir())
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_cantor_vs_segment_carleson(tmp_path):
    # an interior root keeps the segment free of endpoint effects
    _, seg, _ = _run(tmp_path, "seg", SEGMENT,
                     [{"task": "carleson", "j_max": 6, "root_point": 250, "root_level": 2}])
    cantor = {"generator": {"kind": "cantor4", "params": {"generations": 5}}}
    _, can, _ = _run(tmp_path, "can", cantor, [{"task": "carleson", "j_max": 6}])
    r_seg = seg["tasks"][0]["key_ratios"]["ratio"]
    r_can = can["tasks"][0]["key_ratios"]["ratio"]
    assert r_can >= 5 * r_seg


def test_file_input(tmp_path):
    path = tmp_path / "mu.json"
    measures.write_json(gen_cantor4(3), path)
    code, summary, _ = _run(tmp_path, "file", {"file": str(path)}, [{"task": "dini", "points": 4}])
    assert code == 0 and summary["generator"] == "mu"
    assert summary["tasks"][0]["key_ratios"]["growing_fraction"] > 0


def test_exit_codes(tmp_path):
    code, summary, _ = _run(tmp_path, "empty", {"generator": {"kind": "segment"}}, [])
    assert code == 0 and summary["tasks"] == []
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["run", str(tmp_path / "bad.json")]) == 2
    # a failing task is recorded and the run continues
    code, summary, _ = _run(tmp_path, "err", SEGMENT,
                            [{"task": "cz", "lambda": 1e-3}, {"task": "dini", "points": 2}])
    assert code == 1
    assert summary["tasks"][0]["status"] == "error"
    assert "MeasureError" in summary["tasks"][0]["error"]
    assert summary["tasks"][1]["status"] == "ok"


def test_strict(tmp_path):
    task = [{"task": "cz", "method": "dyadic", "nu": {"kind": "density", "seed": 0}}]
    code, summary, _ = _run(tmp_path, "lax", SEGMENT, task)
    assert code == 0 and summary["tasks"][0]["status"] == "failed"
    code, _, _ = _run(tmp_path, "strict", SEGMENT, task, "--strict", "--threads", "1")
    assert code == 1


def test_report(tmp_path):
    _, _, a = _run(tmp_path, "a", SEGMENT, [{"task": "dini", "points": 3}])
    cantor = {"generator": {"kind": "cantor4", "params": {"generations": 4}}}
    _, _, b = _run(tmp_path, "b", cantor, [{"task": "carleson", "j_max": 5}])
    sa, sb = str(a / "summary.json"), str(b / "summary.json")
    assert main(["report", sa, sb, "--out", str(tmp_path / "r1")]) == 0
    report([sb, sa, sa], tmp_path / "r2")
    for name in ("report.csv", "plot_data.csv"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()
    rows = list(csv.reader(open(tmp_path / "r1" / "report.csv")))
    assert rows[0] == ["generator", "task", "kind", "status", "metric", "value"]
    assert {r[0] for r in rows[1:]} == {"segment", "cantor4"}
    # union: each single report is contained in the merged one
    report([sa], tmp_path / "r3")
    single = set(map(tuple, csv.reader(open(tmp_path / "r3" / "report.csv"))))
    assert single <= set(map(tuple, rows))

    bad = json.loads((a / "summary.json").read_text())
    bad["schema"] = 99
    path = _write(tmp_path / "bad.json", bad)
    assert main(["report", path, "--out", str(tmp_path / "r4")]) == 2


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "cnumbers.cli", "--help"],
                         capture_output=True, text=True, check=True)
    assert "run" in res.stdout and "report" in res.stdout
