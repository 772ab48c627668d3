import json
import pathlib
import subprocess
import sys

from bgplab.cli import main

ROOT = pathlib.Path(__file__).parent.parent
SCEN = ROOT / "scenarios"
FIX = pathlib.Path(__file__).parent / "fixtures"


def test_happy_path_exit_0(capsys):
    assert main(["run-scenario", "--scenario", str(SCEN / "happy_fast.txt")]) == 0
    assert "PASS" in capsys.readouterr().out


def test_bad_config_exit_2(capsys):
    assert main(["run-scenario", "--scenario", str(SCEN / "bad_config.txt")]) == 2
    assert "3f+1" in capsys.readouterr().err


def test_missing_file_exit_2(capsys):
    assert main(["run-scenario", "--scenario", str(SCEN / "nope.txt")]) == 2


def test_history_fixtures(capsys):
    assert main(["check", "--history", str(FIX / "consistency_violation.jsonl")]) == 1
    assert "consistency" in capsys.readouterr().out
    assert main(["check", "--history", str(FIX / "commuting_ok.jsonl")]) == 0
    assert main(["check", "--history", str(FIX / "unproposed.jsonl")]) == 1
    assert "nontriviality" in capsys.readouterr().out


def test_malformed_history_exit_2(tmp_path):
    p = tmp_path / "h.jsonl"
    p.write_text('{"learner": 5}\n')
    assert main(["check", "--history", str(p)]) == 2


def test_json_lines_report(capsys):
    main(["run-scenario", "--scenario", str(SCEN / "universal.txt"), "--seed", "2",
          "--report", "json-lines"])
    recs = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert recs[0]["record"] == "verdict" and recs[0]["ok"]
    learns = [r for r in recs if r["record"] == "learn"]
    assert learns and all(r["depth"] == 2 and r["quorum"] == 2 for r in learns)
    assert recs[-1]["record"] == "stats"


def test_trace_out_byte_identical(tmp_path):
    outs = []
    for i in range(2):
        t = tmp_path / f"t{i}.txt"
        code = main(["run-scenario", "--scenario", str(SCEN / "safety_n4.txt"), "--seed", "5",
                     "--trace-out", str(t)])
        assert code == 0
        outs.append(t.read_bytes())
    assert outs[0] == outs[1]
    assert b"# verdict pass" in outs[0]


def test_campaign_json(capsys):
    assert main(["campaign", "--scenario", str(SCEN / "happy_fast.txt"), "--seeds", "0..9",
                 "--report", "json-lines"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["runs"] == 10 and d["passed"] == 10


def test_campaign_jobs_match_serial(capsys):
    args = ["campaign", "--scenario", str(SCEN / "fast_conflict.txt"), "--seeds", "0..5"]
    main(args)
    serial = capsys.readouterr().out
    main(args + ["--jobs", "2"])
    assert capsys.readouterr().out == serial


def test_entry_point_subprocess():
    p = subprocess.run([sys.executable, "-m", "bgplab.cli", "run-scenario", "--scenario",
                        str(SCEN / "bad_config.txt")], capture_output=True, text=True)
    assert p.returncode == 2
