import io
import json
import os
import sys
from unittest.mock import patch

import pandas as pd
import pytest

import main
from reachback_sim import SimulationResult

pytestmark = pytest.mark.integration

FIG_SPLIT_LINKS = [
    {"from": 1, "to": 0, "capacity": 1.1},
    {"from": 1, "to": 2, "capacity": 1.0},
    {"from": 2, "to": 0, "capacity": 2.0},
]


def read_json(capsys):
    return json.loads(capsys.readouterr().out)


def read_csv(capsys):
    return pd.read_csv(io.StringIO(capsys.readouterr().out))


def write_results(tmp_path, name, rows):
    path = tmp_path / name
    pd.DataFrame(rows).to_csv(path, index=False)
    return str(path)


def test_parse_arguments_reads_sys_argv(monkeypatch):
    monkeypatch.setattr(sys, "argv", ["reachback-flow", "route", "spec.yaml", "--trees", "-vv"])

    args = main.parse_arguments()

    assert args.command == "route"
    assert args.trees is True
    assert args.verbose == 2
    assert args.output_dir is None


def test_parse_arguments_splits_lists():
    args = main.parse_arguments(["simulate", "spec.yaml", "--n-list", "8,12,16", "--converse-rates", "0.69,0.69"])

    assert args.n_list == [8, 12, 16]
    assert args.converse_rates == [0.69, 0.69]


def test_parse_arguments_rejects_bad_block_lengths():
    with pytest.raises(SystemExit) as excinfo:
        main.parse_arguments(["simulate", "spec.yaml", "--n-list", "8,0"])
    assert excinfo.value.code == 2


def test_configure_log_level():
    assert main.configure_log_level(0) == main.logging.ERROR
    assert main.configure_log_level(1) == main.logging.INFO
    assert main.configure_log_level(3) == main.logging.DEBUG


def test_check_admissible(dsbs_spec, write_spec, capsys):
    code = main.run(["check", write_spec(dsbs_spec)])

    payload = read_json(capsys)
    assert code == 0
    assert payload["verdict"] == "Admissible"
    assert payload["worst_slack"] == pytest.approx(0.1001, abs=0.001)
    assert payload["certificates"][0]["S"] == [1, 2]


def test_check_weak_link_exits_one(dsbs_spec, write_spec, capsys):
    dsbs_spec["links"][1]["capacity"] = 0.45

    code = main.run(["check", write_spec(dsbs_spec)])

    payload = read_json(capsys)
    assert code == 1
    assert payload["verdict"] == "Inadmissible"
    violated = [c for c in payload["certificates"] if c["slack"] < 0]
    assert [2] in [c["S"] for c in violated]


def test_check_delta_tightens_verdict(dsbs_spec, write_spec, capsys):
    assert main.run(["check", write_spec(dsbs_spec), "--delta", "0.2"]) == 1


def test_check_saves_results(dsbs_spec, write_spec, tmp_path, capsys):
    out_dir = tmp_path / "results"

    main.run(["check", write_spec(dsbs_spec), "--output-dir", str(out_dir)])

    assert sorted(os.listdir(out_dir)) == ["check.json", "run.yaml"]
    with open(out_dir / "check.json", encoding="utf-8") as f:
        assert json.load(f)["verdict"] == "Admissible"


def test_missing_spec_exits_two(tmp_path, capsys):
    assert main.run(["check", str(tmp_path / "absent.json")]) == 2


def test_malformed_spec_exits_two(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text('{"source": {"dsbs": ')
    assert main.run(["check", str(path)]) == 2


def test_invalid_pmf_exits_three(dsbs_spec, write_spec, capsys):
    dsbs_spec["source"] = {"alphabets": [1, 2, 2], "probs": [0.5, 0.5, 0.5, 0.5]}
    assert main.run(["check", write_spec(dsbs_spec)]) == 3


def test_route_auto_rates(dsbs_spec, write_spec, capsys):
    dsbs_spec["costs"] = [{"from": 1, "to": 0, "cost": 1.0}, {"from": 2, "to": 0, "cost": 2.0}]

    code = main.run(["route", write_spec(dsbs_spec)])

    payload = read_json(capsys)
    assert code == 0
    assert payload["feasible"] is True
    assert payload["status"] == "optimal"
    assert payload["rates"][0] == pytest.approx(0.8, abs=1e-6)
    assert payload["cost"] == pytest.approx(2.1998, abs=1e-3)


def test_route_without_costs_reports_feasibility(dsbs_spec, write_spec, capsys):
    code = main.run(["route", write_spec(dsbs_spec)])

    payload = read_json(capsys)
    assert code == 0
    assert payload["status"] == "feasible"
    assert {(e["from"], e["to"]) for e in payload["edges"]} == {(1, 0), (2, 0)}


def test_route_infeasible_rates(dsbs_spec, write_spec, capsys):
    dsbs_spec["links"][1]["capacity"] = 0.45
    dsbs_spec["rates"] = [0.75, 0.75]

    code = main.run(["route", write_spec(dsbs_spec)])

    payload = read_json(capsys)
    assert code == 1
    assert payload["feasible"] is False
    assert payload["certificate"]["S"] == [2]


def test_route_compares_trees(dsbs_spec, write_spec, capsys):
    dsbs_spec["links"] = FIG_SPLIT_LINKS
    dsbs_spec["rates"] = [1.1, 1.0]
    dsbs_spec["costs"] = [
        {"from": 1, "to": 0, "cost": 100.0},
        {"from": 1, "to": 2, "cost": 1.0},
        {"from": 2, "to": 0, "cost": 1.0},
    ]

    code = main.run(["route", write_spec(dsbs_spec), "--trees"])

    trees = read_json(capsys)["trees"]
    assert code == 0
    assert trees["best_tree"] == [[1, 0], [2, 0]]
    assert trees["tree_cost"] == pytest.approx(111.0)
    assert trees["lp_cost"] == pytest.approx(13.0, abs=1e-6)
    assert trees["ratio"] == pytest.approx(111.0 / 13.0, rel=1e-6)


def test_route_without_feasible_tree(dsbs_spec, write_spec, capsys):
    dsbs_spec["links"] = [
        {"from": 1, "to": 0, "capacity": 1.5},
        {"from": 2, "to": 0, "capacity": 0.5},
        {"from": 2, "to": 1, "capacity": 0.5},
    ]
    dsbs_spec["rates"] = [1.0, 1.0]

    code = main.run(["route", write_spec(dsbs_spec), "--trees"])

    trees = read_json(capsys)["trees"]
    assert code == 0
    assert trees["examined"] == 2
    assert trees["feasible"] == 0
    assert trees["best_tree"] is None


def test_capacity_of_single_channels(capsys):
    assert main.run(["capacity", "--bsc", "0.11"]) == 0
    assert read_json(capsys)["capacity"] == pytest.approx(0.50008, abs=1e-5)

    assert main.run(["capacity", "--gaussian", "0.5,1,1"]) == 0
    assert read_json(capsys)["capacity"] == pytest.approx(0.39624, abs=1e-5)


def test_capacity_of_spec_links(dsbs_spec, write_spec, capsys):
    dsbs_spec["links"].append({"from": 2, "to": 1, "dmc": {"transition": [[0.89, 0.11], [0.11, 0.89]]}})

    main.run(["capacity", write_spec(dsbs_spec)])

    links = read_json(capsys)["links"]
    assert [(e["from"], e["to"]) for e in links] == [(1, 0), (2, 0), (2, 1)]
    assert links[2]["capacity"] == pytest.approx(0.50008, abs=1e-5)


def test_capacity_usage_errors(capsys):
    assert main.run(["capacity", "--gaussian", "0.5,1"]) == 2
    with pytest.raises(SystemExit) as excinfo:
        main.run(["capacity"])
    assert excinfo.value.code == 2
    with pytest.raises(SystemExit):
        main.run(["capacity", "--bsc", "0.1", "--bec", "0.1"])


def test_simulate_dry_run(dsbs_spec, write_spec, capsys):
    dsbs_spec["rates"] = [0.75, 0.75]

    code = main.run(["simulate", write_spec(dsbs_spec), "--trials", "0", "--n-list", "8,16"])

    payload = read_json(capsys)
    assert code == 0
    assert payload == {"dry_run": True, "n": [8, 16], "rates": [0.75, 0.75]}


def test_simulate_writes_csv(dsbs_spec, write_spec, tmp_path, capsys):
    dsbs_spec["links"] = [{"from": 1, "to": 0, "capacity": 1.0}, {"from": 2, "to": 0, "capacity": 1.0}]
    dsbs_spec["rates"] = [1.0, 0.875]
    dsbs_spec["experiment"] = {"n": [4, 8], "trials": 20, "converse_rates": [0.69, 0.69]}
    out_dir = tmp_path / "results"

    code = main.run(["simulate", write_spec(dsbs_spec), "--seed", "1", "--output-dir", str(out_dir)])

    frame = read_csv(capsys)
    assert code == 0
    assert list(frame.columns) == main.RESULT_COLUMNS
    assert list(zip(frame["arm"], frame["n"])) == [
        ("achievability", 4), ("achievability", 8), ("converse", 4), ("converse", 8)]
    assert (frame["trials"] == 20).all()
    assert sorted(os.listdir(out_dir)) == ["run.yaml", "simulate.csv"]


def test_simulate_unroutable_rates(dsbs_spec, write_spec, capsys):
    dsbs_spec["links"][1]["capacity"] = 0.45
    dsbs_spec["rates"] = [0.75, 0.75]

    code = main.run(["simulate", write_spec(dsbs_spec), "--trials", "5", "--n-list", "8"])

    assert code == 1
    assert read_json(capsys)["certificate"]["S"] == [2]


def test_simulate_reads_environment(dsbs_spec, write_spec, monkeypatch, capsys):
    dsbs_spec["rates"] = [0.75, 0.75]
    monkeypatch.setenv("REACHBACK_WORKERS", "3")
    monkeypatch.setenv("REACHBACK_SEED", "41")
    monkeypatch.setenv("REACHBACK_SCAN_BUDGET", "1000")

    with patch.object(main, "achievability_curve", return_value=[SimulationResult(8, 10, 1)]) as curve:
        code = main.run(["simulate", write_spec(dsbs_spec), "--trials", "10", "--n-list", "8"])

    assert code == 0
    args, kwargs = curve.call_args
    assert args[3:] == ([8], 10, 41)
    assert kwargs["workers"] == 3
    assert kwargs["scan_budget"] == 1000
    assert kwargs["channel_mode"] == "ideal"
    assert read_csv(capsys).loc[0, "pe"] == pytest.approx(0.1)


def test_report_merges_and_sorts(tmp_path, capsys):
    first = write_results(tmp_path, "a.csv", [
        {"arm": "converse", "n": 8, "trials": 10, "errors": 5, "pe": 0.5, "ci_low": 0.2, "ci_high": 0.8},
        {"arm": "achievability", "n": 16, "trials": 10, "errors": 0, "pe": 0.0, "ci_low": 0.0, "ci_high": 0.3},
    ])
    second = write_results(tmp_path, "b.csv", [
        {"n": 8, "trials": 10, "errors": 1, "pe": 0.1, "ci_low": 0.0, "ci_high": 0.4},
    ])

    code = main.run(["report", first, second])

    frame = read_csv(capsys)
    assert code == 0
    assert list(zip(frame["arm"], frame["n"])) == [("achievability", 8), ("achievability", 16), ("converse", 8)]


def test_report_long_format(tmp_path, capsys):
    path = write_results(tmp_path, "a.csv", [
        {"arm": "achievability", "n": 8, "trials": 10, "errors": 1, "pe": 0.1, "ci_low": 0.0, "ci_high": 0.4},
    ])

    main.run(["report", path, "--long"])

    frame = read_csv(capsys)
    assert list(frame.columns) == ["arm", "n", "metric", "value"]
    assert sorted(frame["metric"]) == ["ci_high", "ci_low", "errors", "pe", "trials"]


def test_report_duplicate_rows_exit_two(tmp_path, capsys):
    row = {"arm": "achievability", "n": 8, "trials": 10, "errors": 1, "pe": 0.1, "ci_low": 0.0, "ci_high": 0.4}
    first = write_results(tmp_path, "a.csv", [row])
    second = write_results(tmp_path, "b.csv", [row])

    assert main.run(["report", first, second]) == 2


def test_report_needs_files():
    with pytest.raises(SystemExit) as excinfo:
        main.run(["report"])
    assert excinfo.value.code == 2


def test_main_exits_with_command_status(dsbs_spec, write_spec, monkeypatch, capsys):
    monkeypatch.setattr(sys, "argv", ["reachback-flow", "check", write_spec(dsbs_spec)])

    with pytest.raises(SystemExit) as excinfo:
        main.main()

    assert excinfo.value.code == 0
