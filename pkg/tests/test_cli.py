import csv
import json
import subprocess
import sys

import pytest

from mcamerican.cli import main


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


DEMO = ["--kind", "vanilla-put", "--s0", "50", "--strike", "50", "--rate", "0.1", "--sigma", "0.4",
        "--expiry", "0.4166666666666667", "--steps", "50"]


def test_deterministic_european(capsys):
    code, out, _ = run(["price", "--kind", "vanilla-put", "--style", "european", "--s0", "100", "--strike", "120",
                        "--rate", "0", "--sigma", "0", "--expiry", "0.5", "--paths", "10"], capsys)
    assert code == 0
    est = json.loads(out)["estimates"]["european"]
    assert est["value"] == 20.0 and est["std_error"] == 0.0


def test_missing_strike_is_config_error(capsys, tmp_path):
    code, out, err = run(["price", "--kind", "vanilla-put", "--s0", "100", "--rate", "0.1", "--sigma", "0.2",
                          "--expiry", "0.5", "--out-dir", str(tmp_path)], capsys)
    assert code == 2 and out == ""
    assert "strike" in err


@pytest.mark.parametrize("extra", [["--sigma", "-0.2"], ["--paths", "0"], ["--params", "/nonexistent.json"]])
def test_bad_inputs_exit_2(capsys, tmp_path, extra):
    argv = ["price", *DEMO, "--out-dir", str(tmp_path), *extra]
    code, _, err = run(argv, capsys)
    assert code == 2 and err.startswith("error:")


def test_american_demo_record(capsys, tmp_path):
    code, out, _ = run(["price", *DEMO, "--style", "american", "--mode", "3b", "--flashlight", "--paths", "20000",
                        "--seed", "3", "--out-dir", str(tmp_path)], capsys)
    assert code == 0
    rec = json.loads(out)
    assert set(rec["estimates"]) == {"in_sample", "independent", "averaged"}
    assert rec["estimates"]["in_sample"]["bias_tag"] == "in-sample-up"
    with open(rec["boundary_file"]) as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 1 + 51

    code, out, _ = run(["oracle", *DEMO, "--style", "american"], capsys)
    tree = json.loads(out)["tree"]
    avg = rec["estimates"]["averaged"]
    assert abs(avg["value"] - tree) < 4 * avg["std_error"] + 0.005 * tree


def test_oracle_matches_european_mc(capsys):
    args = ["--kind", "vanilla-put", "--style", "european", "--s0", "100", "--strike", "105", "--rate", "0.05",
            "--sigma", "0.3", "--expiry", "0.5", "--steps", "10"]
    code, out, _ = run(["oracle", *args], capsys)
    assert code == 0
    closed = json.loads(out)["closed_form"]
    code, out, _ = run(["price", *args, "--paths", "50000", "--seed", "8"], capsys)
    est = json.loads(out)["estimates"]["european"]
    assert abs(est["value"] - closed) < 3 * est["std_error"]


def test_oracle_rejects_arithmetic(capsys):
    code, _, err = run(["oracle", "--kind", "arith-avg-put", "--s0", "100", "--strike", "100", "--rate", "0.1",
                        "--sigma", "0.4", "--expiry", "0.5", "--steps", "10"], capsys)
    assert code == 2 and "arithmetic" in err


def test_boundary_rows(capsys, tmp_path):
    code, out, _ = run(["boundary", *DEMO, "--paths", "5000", "--out-dir", str(tmp_path)], capsys)
    assert code == 0
    info = json.loads(out)
    with open(info["boundary_file"]) as fh:
        assert sum(1 for _ in fh) == 1 + 51
    assert info["rows"] == 51


def test_out_dir_from_environment(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("MCAMERICAN_OUT", str(tmp_path / "env"))
    code, out, _ = run(["boundary", *DEMO, "--paths", "2000"], capsys)
    assert code == 0
    assert json.loads(out)["boundary_file"].startswith(str(tmp_path / "env"))


def test_contract_file_with_flag_override(capsys, tmp_path):
    spec = tmp_path / "c.json"
    spec.write_text(json.dumps({"kind": "vanilla-put", "strike": 90.0, "expiry": 0.5, "style": "european"}))
    code, out, _ = run(["oracle", "--contract", str(spec), "--strike", "100", "--s0", "100", "--rate", "0.1",
                        "--sigma", "0.4"], capsys)
    assert code == 0
    assert json.loads(out)["contract"]["strike"] == 100.0


def test_study_rerun_is_byte_identical(capsys, tmp_path):
    cfg = tmp_path / "fig2.json"
    cfg.write_text(json.dumps({"n_options": 2, "n_paths": 2000, "n_steps": 20, "seed": 5}))
    for d in ("a", "b"):
        code, _, err = run(["study", "--config", str(cfg), "--out-dir", str(tmp_path / d)], capsys)
        assert code == 0 and "option 0" in err
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "manifest.json" in files and "hist_averaged.csv" in files
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_thread_count_does_not_change_output(capsys, tmp_path):
    base = ["price", *DEMO, "--paths", "9000", "--seed", "2"]
    outs = []
    for threads in ("1", "3"):
        code, out, _ = run([*base, "--threads", threads, "--out-dir", str(tmp_path / threads)], capsys)
        rec = json.loads(out)
        rec.pop("boundary_file")
        outs.append(rec)
    assert outs[0]["estimates"] == outs[1]["estimates"]


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mcamerican.cli", "oracle", "--kind", "vanilla-call", "--style",
                           "european", "--s0", "100", "--strike", "100", "--rate", "0.05", "--sigma", "0.2",
                           "--expiry", "1", "--steps", "50"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert abs(json.loads(proc.stdout)["closed_form"] - 10.450583572185565) < 1e-9
