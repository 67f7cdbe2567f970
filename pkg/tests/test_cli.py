import csv
import json
from pathlib import Path

import pytest

from rgd.casefile import save_case
from rgd.ccg import solve_mapping_ccg
from rgd.cli import main
from rgd.fixtures import ddu2, toy1


@pytest.fixture(scope="module")
def toy1_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cases") / "toy1.json"
    save_case(toy1(), path)
    return path


@pytest.fixture(scope="module")
def ddu2_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cases") / "ddu2.json"
    save_case(ddu2(), path)
    return path


@pytest.fixture(scope="module")
def solved_dir(tmp_path_factory, toy1_path):
    out = tmp_path_factory.mktemp("out") / "solve"
    code = main(["solve", str(toy1_path), "--out", str(out)])
    assert code == 0
    return out


class TestSolveCommand:
    def test_outputs_exist(self, solved_dir):
        for name in (
            "report.json", "trace.jsonl", "bounds.csv", "widths.csv",
            "payments.csv", "manifest.json", "timings.json",
            "bounds.png", "widths_payments.png",
        ):
            assert (solved_dir / name).exists(), name

    def test_report_matches_library_solve(self, solved_dir):
        doc = json.loads((solved_dir / "report.json").read_text())
        rep = solve_mapping_ccg(toy1())
        assert doc["objective_usd"] == pytest.approx(rep.objective, rel=1e-9)
        assert doc["termination"] == "converged"
        assert doc["manifest"] == "manifest.json"

    def test_trace_is_line_json(self, solved_dir):
        lines = (solved_dir / "trace.jsonl").read_text().splitlines()
        assert len(lines) >= 1
        for line in lines:
            rec = json.loads(line)
            assert {"k", "lb_usd", "ub_usd", "fc_slack_mw", "status"} <= rec.keys()

    def test_bounds_csv_round_trips(self, solved_dir):
        with (solved_dir / "bounds.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert rows
        assert float(rows[-1]["lower_bound_usd"]) <= float(rows[-1]["upper_bound_usd"])

    def test_deterministic_outputs(self, tmp_path, toy1_path, solved_dir):
        out2 = tmp_path / "again"
        assert main(["solve", str(toy1_path), "--out", str(out2), "--no-figures"]) == 0
        for name in ("report.json", "trace.jsonl", "bounds.csv", "widths.csv",
                     "payments.csv"):
            assert (solved_dir / name).read_bytes() == (out2 / name).read_bytes()

    def test_iter_cap_exit_code(self, tmp_path, toy1_path):
        code = main([
            "solve", str(toy1_path), "--eps", "1e-9", "--iter-cap", "1",
            "--out", str(tmp_path / "capped"), "--no-figures",
        ])
        assert code == 4

    def test_parse_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{broken")
        code = main(["solve", str(bad), "--out", str(tmp_path / "o")])
        assert code == 2
        err = capsys.readouterr().err
        assert "line 1" in err and "column" in err

    def test_freeze_tau_baseline(self, tmp_path, toy1_path):
        out = tmp_path / "frozen"
        code = main(["solve", str(toy1_path), "--freeze-tau", "0.0",
                     "--out", str(out), "--no-figures"])
        assert code == 0
        doc = json.loads((out / "report.json").read_text())
        assert doc["payments_usd"]["d1"] == 0.0


class TestSweepCommand:
    def test_sweep_rows_and_baseline(self, tmp_path, ddu2_path):
        out = tmp_path / "sweep"
        code = main([
            "sweep", str(ddu2_path), "--param", "m", "--grid", "0,2000",
            "--out", str(out), "--with-baseline", "--no-figures",
        ])
        assert code == 0
        with (out / "sweep.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert [float(r["value"]) for r in rows] == [0.0, 2000.0]
        assert all(r["termination"] == "converged" for r in rows)
        assert all(r["baseline_termination"] == "converged" for r in rows)
        assert float(rows[0]["payments_total_usd"]) == pytest.approx(0.0, abs=1e-6)

    def test_parallel_jobs_match_serial(self, tmp_path, toy1_path):
        serial = tmp_path / "serial"
        parallel = tmp_path / "parallel"
        args = ["sweep", str(toy1_path), "--param", "variance_multiplier",
                "--grid", "1.0,2.0", "--no-figures"]
        assert main(args + ["--out", str(serial)]) == 0
        assert main(args + ["--out", str(parallel), "--jobs", "2"]) == 0
        assert (serial / "sweep.csv").read_bytes() == (parallel / "sweep.csv").read_bytes()

    def test_bad_grid_rejected(self, tmp_path, toy1_path):
        code = main(["sweep", str(toy1_path), "--param", "m", "--grid", "a,b",
                     "--out", str(tmp_path / "x")])
        assert code == 2


class TestOosCommand:
    def test_end_to_end(self, tmp_path, toy1_path, solved_dir):
        out = tmp_path / "oos"
        code = main([
            "oos", str(toy1_path), str(solved_dir / "report.json"),
            "--dist", "uniform", "--mult", "1.0", "-n", "500",
            "--seed", "3", "--out", str(out), "--no-figures",
        ])
        assert code == 0
        with (out / "oos.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 500
        assert {r["feasible"] for r in rows} <= {"0", "1"}

    def test_deterministic_bytes(self, tmp_path, toy1_path, solved_dir):
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            code = main([
                "oos", str(toy1_path), str(solved_dir / "report.json"),
                "--mult", "1.0", "-n", "400", "--seed", "12",
                "--out", str(out), "--no-figures",
            ])
            assert code == 0
            outs.append(out)
        assert (outs[0] / "oos.csv").read_bytes() == (outs[1] / "oos.csv").read_bytes()

    def test_dimension_mismatch_exit(self, tmp_path, ddu2_path, solved_dir):
        code = main([
            "oos", str(ddu2_path), str(solved_dir / "report.json"),
            "--out", str(tmp_path / "x"), "--no-figures",
        ])
        assert code == 2


class TestCheckCommand:
    def test_default_distributions_pass(self, toy1_path, capsys):
        code = main(["check", str(toy1_path), "--samples", "20000"])
        assert code == 0
        out = capsys.readouterr().out
        assert "three_point_tight" in out
        assert "FAIL" not in out

    def test_adversarial_distribution_fails(self, toy1_path, capsys):
        code = main(["check", str(toy1_path), "--samples", "20000",
                     "--adversarial"])
        assert code == 1
        assert "FAIL" in capsys.readouterr().out

    def test_looser_confidence_passes(self, tmp_path):
        import dataclasses

        case = dataclasses.replace(toy1(), delta=0.5, xi=0.5)
        path = tmp_path / "loose.json"
        save_case(case, path)
        assert main(["check", str(path), "--samples", "20000"]) == 0


def test_manifest_records_run_metadata(solved_dir):
    doc = json.loads((solved_dir / "manifest.json").read_text())
    assert doc["command"] == "solve"
    assert len(doc["input_sha256"]) == 64
    assert doc["version"]
    assert "timestamp_utc" in doc
