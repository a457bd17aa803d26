import csv
import io
import json
import subprocess
import sys

import pytest

from expanderquorum.cli import (
    AGGREGATE_FIELDS,
    ConfigParseError,
    eval_int,
    load_template,
    main,
    mix64,
    sweep_cells,
)
from expanderquorum.overlay import build_regular_expander
from expanderquorum.protocols_crash import many_crashes_round_bound


def write(path, text):
    path.write_text(text)
    return path


FEW = """# few crashes
protocol = few-crashes-consensus
n = 100
t = n // 5 - 1
adversary = crash:UniformRandom(0.01)
inputs = random
repetitions = 50
seed = 42
"""


def read_dir(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_run_smoke_writes_artifacts(tmp_path):
    cfg = write(tmp_path / "few.conf", FEW)
    assert main(["run", str(cfg), "--out-dir", str(tmp_path / "out")]) == 0
    files = read_dir(tmp_path / "out")
    assert sum(n.endswith(".json") for n in files) == 50
    assert sum(n.endswith(".csv") for n in files) == 1


def test_aggregate_recomputable_from_json(tmp_path):
    cfg = write(tmp_path / "few.conf", FEW.replace("repetitions = 50", "repetitions = 6"))
    out = tmp_path / "out"
    main(["run", str(cfg), "--out-dir", str(out)])
    recs = [json.loads(p.read_text()) for p in sorted(out.glob("*.json"))]
    row = next(csv.DictReader(io.StringIO((out / "few-aggregate.csv").read_text())))
    assert list(row) == AGGREGATE_FIELDS
    rounds = [r["metrics"]["rounds"] for r in recs]
    msgs = [r["metrics"]["messages"] for r in recs]
    assert int(row["runs"]) == len(recs)
    assert int(row["max_rounds"]) == max(rounds)
    assert float(row["mean_messages"]) == pytest.approx(sum(msgs) / len(msgs), abs=1e-3)
    assert int(row["passed"]) == sum(all(r["checks"].values()) for r in recs)


def test_same_file_twice_is_byte_identical(tmp_path):
    cfg = write(tmp_path / "few.conf", FEW.replace("repetitions = 50", "repetitions = 4"))
    main(["run", str(cfg), "--out-dir", str(tmp_path / "a")])
    main(["run", str(cfg), "--out-dir", str(tmp_path / "b"), "--jobs", "2"])
    assert read_dir(tmp_path / "a") == read_dir(tmp_path / "b")


def test_t_equal_n_is_precondition_error(tmp_path, capsys):
    cfg = write(tmp_path / "bad.conf", "protocol = gossip\nn = 10\nt = n\n")
    assert main(["run", str(cfg), "--out-dir", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "PreconditionError" in err and "t < n required" in err


@pytest.mark.parametrize("text,needle", [
    ("protocol = gossip\nn = 10\n", "missing key 't'"),
    ("protocol = paxos\nn = 10\nt = 1\n", "unknown protocol"),
    ("protocol = gossip\nn = 10\nt = 1\ncolour = red\n", "unknown key"),
    ("protocol = gossip\nn = 10\nt = __import__('os')\n", "unsupported"),
    ("protocol = gossip\nn = 10\nt = 1\nmode = dual\n", "mode"),
])
def test_config_errors_exit_2(tmp_path, capsys, text, needle):
    cfg = write(tmp_path / "x.conf", text)
    assert main(["run", str(cfg), "--out-dir", str(tmp_path)]) == 2
    assert needle in capsys.readouterr().err


def test_include_and_override(tmp_path):
    write(tmp_path / "base.conf", "protocol = gossip\nn = 50\nt = 3\n")
    cfg = write(tmp_path / "top.conf", "include = base.conf\nt = 9\n")
    tpl = load_template(cfg)
    assert tpl.base["t"] == "9" and tpl.base["protocol"] == "gossip"


def test_include_cycle_detected(tmp_path):
    write(tmp_path / "a.conf", "include = b.conf\n")
    write(tmp_path / "b.conf", "include = a.conf\n")
    with pytest.raises(ConfigParseError):
        load_template(tmp_path / "a.conf")


def test_eval_int():
    assert eval_int("n // 5 - 1", 100) == 19
    assert eval_int("3 * n / 4", 64) == 48
    assert eval_int("lg(n)", 100) == 7
    with pytest.raises(ConfigParseError):
        eval_int("n / 3", 100)
    with pytest.raises(ConfigParseError):
        eval_int("n.__class__", 5)


def test_mix64_spreads_seeds():
    seeds = {mix64(42, rep) for rep in range(1000)}
    assert len(seeds) == 1000 and all(0 <= s < 2 ** 64 for s in seeds)
    assert mix64(42, 0) != mix64(43, 0)


def test_sweep_many_crashes_rows_meet_round_bound(tmp_path):
    cfg = write(tmp_path / "many.conf", "protocol = many-crashes-consensus\nn = 64\nt = 1\n"
                "adversary = crash:UniformRandom(0.05)\nrepetitions = 3\n"
                "sweep.t = n // 4, n // 2, 3 * n // 4\n")
    assert main(["sweep", str(cfg), "--out-dir", str(tmp_path / "o")]) == 0
    rows = list(csv.DictReader(io.StringIO((tmp_path / "o" / "many-sweep.csv").read_text())))
    assert [int(r["t"]) for r in rows] == [16, 32, 48]
    assert all(int(r["max_rounds"]) <= many_crashes_round_bound(64) for r in rows)


def test_empty_axis_sweep_matches_run(tmp_path):
    cfg = write(tmp_path / "g.conf", "protocol = checkpointing\nn = 30\nt = 2\nrepetitions = 2\n")
    main(["run", str(cfg), "--out-dir", str(tmp_path / "r")])
    main(["sweep", str(cfg), "--out-dir", str(tmp_path / "s")])
    run_json = {k: v for k, v in read_dir(tmp_path / "r").items() if k.endswith(".json")}
    sweep_json = {k: v for k, v in read_dir(tmp_path / "s").items() if k.endswith(".json")}
    assert run_json == sweep_json
    run_rows = (tmp_path / "r" / "g-aggregate.csv").read_text()
    sweep_rows = (tmp_path / "s" / "g-sweep.csv").read_text()
    assert run_rows == sweep_rows


def test_sweep_cells_bind_n_before_t(tmp_path):
    cfg = write(tmp_path / "s.conf", "protocol = gossip\nn = 10\nt = 1\nsweep.t = n // 5 - 1\nsweep.n = 50, 100\n")
    cells = sweep_cells(load_template(cfg))
    assert [(c.n, c.t) for c in cells] == [(50, 9), (100, 19)]


def test_env_out_dir_and_flag_precedence(tmp_path, monkeypatch):
    cfg = write(tmp_path / "ds.conf", "protocol = dolev-strong\nn = 4\nt = 1\nvalue = 3\n")
    monkeypatch.setenv("EXPANDERQUORUM_OUT", str(tmp_path / "env"))
    assert main(["run", str(cfg)]) == 0
    assert (tmp_path / "env" / "ds-rep0000.json").exists()
    assert main(["run", str(cfg), "--out-dir", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "ds-rep0000.json").exists()


def test_replay_identical(tmp_path, capsys):
    cfg = write(tmp_path / "ab.conf", "protocol = ab-consensus\nn = 20\nt = 2\n"
                "adversary = byzantine:Equivocate,Silent\nrepetitions = 2\n")
    main(["run", str(cfg), "--out-dir", str(tmp_path)])
    capsys.readouterr()
    assert main(["replay", str(tmp_path / "ab-rep0001.json")]) == 0
    assert "identical" in capsys.readouterr().out


def test_replay_detects_tampering(tmp_path, capsys):
    cfg = write(tmp_path / "ds.conf", "protocol = dolev-strong\nn = 4\nt = 1\n")
    main(["run", str(cfg), "--out-dir", str(tmp_path)])
    rec = json.loads((tmp_path / "ds-rep0000.json").read_text())
    rec["metrics"]["messages"] += 1
    (tmp_path / "ds-rep0000.json").write_text(json.dumps(rec))
    capsys.readouterr()
    assert main(["replay", str(tmp_path / "ds-rep0000.json")]) == 1
    assert "DIVERGED" in capsys.readouterr().out


def test_verify_graph(tmp_path, capsys):
    g = build_regular_expander(40, 6, 0.1, 1)
    path = write(tmp_path / "g.txt", g.to_text())
    assert main(["verify-graph", str(path)]) == 0
    lines = g.to_text().splitlines()
    lines[0] = lines[0].replace(repr(g.lambda_), "0.5")
    write(path, "\n".join(lines) + "\n")
    assert main(["verify-graph", str(path)]) == 1
    write(path, "")
    assert main(["verify-graph", str(path)]) == 2


def test_single_mode_flag_and_unsupported_protocol(tmp_path):
    cfg = write(tmp_path / "m.conf", "protocol = many-crashes-consensus\nn = 16\nt = 4\n")
    assert main(["run", str(cfg), "--mode", "single", "--out-dir", str(tmp_path)]) == 2


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path / "ds.conf", "protocol = dolev-strong\nn = 4\nt = 1\n")
    res = subprocess.run([sys.executable, "-m", "expanderquorum", "run", str(cfg), "--out-dir", str(tmp_path / "o")],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "1/1 runs passed" in res.stdout
