import json
from fractions import Fraction

from skipgraph.cli import main


def test_bench_prints_report(capsys):
    assert main(["bench", "--threads", "2", "--duration-ms", "50", "--keyspace", "64", "--no-pin"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["config"]["threads"] == 2 and d["audit"]["ok"]


def test_bench_workload_preset_and_files(tmp_path, capsys):
    heat = tmp_path / "h.csv"
    rep = tmp_path / "r.json"
    rc = main(["bench", "--workload", "HC-RH", "--max-ops", "300", "--no-pin",
               "--emit-heatmap", str(heat), "--report", str(rep)])
    assert rc == 0
    d = json.loads(rep.read_text())
    assert d["config"]["keyspace"] == 256 and d["config"]["update_pct"] == 20
    assert heat.read_text().startswith("matrix,accessor,owner_0")


def test_bench_config_errors_exit_nonzero(capsys):
    assert main(["bench", "--threads", "0"]) == 2
    assert main(["bench", "--workload", "ZZ-WH"]) == 2
    assert main(["bench", "--faux-removal"]) == 2
    assert "error:" in capsys.readouterr().err


def test_bench_missing_topology_file(tmp_path, capsys):
    assert main(["bench", "--topology", str(tmp_path / "absent.json")]) == 2


def test_oracle_spray_csv(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["oracle", "spray", "--kind", "skiplist", "--n", "2", "--H", "1", "--L", "1", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "start_list,position,probability,float"
    probs = [Fraction(line.split(",")[2]) for line in lines[1:]]
    assert probs == [Fraction(1, 4)] * 4


def test_oracle_reach_and_sgmark(capsys):
    assert main(["oracle", "reach", "--n", "3"]) == 0
    assert capsys.readouterr().out.strip() == "24"
    assert main(["oracle", "sgmark", "--n", "2"]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[0] == "order,position,attempts"
    assert [r.split(",")[2] for r in rows[1:]] == ["2", "2", "2", "1"]


def test_oracle_coupon(capsys):
    assert main(["oracle", "coupon", "--T", "4", "--trials", "2000"]) == 0
    assert "expected=8.3333 (25/3)" in capsys.readouterr().out
